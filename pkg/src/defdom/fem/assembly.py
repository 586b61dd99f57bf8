"""Quadrature assembly of weak forms with automatic element Jacobians.

A weak form is a list of :class:`Term` objects.  Each term integrates a
kernel over cells or over tagged boundary edges.  The kernel receives the
geometry and the fields evaluated at quadrature points and returns, per test
block, the pair ``(V, G)`` of coefficients multiplying the test function and
its gradient (its surface gradient on edges)::

    R_test = sum_q w_q (V_q psi_q + G_q . grad psi_q)

Element residuals are differentiated with ``jax.jacfwd`` so the Jacobian is
exact, including the dependence on a displacement block that moves the
integration domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np
import scipy.sparse as sp

from ..errors import AssemblyError, ConstraintError, DescriptorError, UsageError
from . import reference as ref
from .spaces import BlockLayout, BlockVector

# ----------------------------------------------------------- descriptors


@dataclass(eq=False)
class Term:
    kernel: Callable
    tests: tuple
    unknowns: tuple = ()
    params: tuple = ()
    where: str = "cells"
    tags: tuple = ()
    geometry: str | None = None
    reference_geometry: bool = False
    row_exclude: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        self.tests = tuple(self.tests)
        self.unknowns = tuple(self.unknowns)
        self.params = tuple(self.params)
        self.tags = tuple(self.tags)
        if self.where not in ("cells", "edges"):
            raise DescriptorError(f"term {self.name!r}: where must be 'cells' or 'edges'")
        if self.where == "edges" and not self.tags:
            raise DescriptorError(f"edge term {self.name!r} needs boundary tags")
        if set(self.unknowns) & set(self.params):
            raise DescriptorError(f"term {self.name!r}: a block cannot be both unknown and parameter")


@dataclass
class DirichletBC:
    block: str
    dofs: np.ndarray
    values: np.ndarray | float = 0.0


@dataclass
class PointConstraint:
    block: str
    node: int
    multiplier: str
    value: float = 0.0
    comp: int = 0


class WeakForm:
    """Complete residual descriptor over a block layout.

    ``params`` is an optional :class:`BlockVector` of fixed fields (for example
    a converged base state).  ``constants`` adds fixed numbers to residual rows
    of global blocks, ``consts`` are scalars handed to every kernel.
    """

    def __init__(self, mesh, layout: BlockLayout, terms, params: BlockVector | None = None,
                 dirichlet=(), point_constraints=(), constants=None, consts=None):
        self.mesh = mesh
        self.layout = layout
        self.terms = list(terms)
        self.params = params
        self.dirichlet = list(dirichlet)
        self.point_constraints = list(point_constraints)
        self.constants = dict(constants or {})
        self.consts = {k: float(v) for k, v in (consts or {}).items()}
        self._plans = {}
        self._check()

    def _check(self):
        pl = self.params.layout if self.params is not None else BlockLayout({})
        for t in self.terms:
            for b in t.tests + t.unknowns:
                if b not in self.layout:
                    raise DescriptorError(f"term {t.name!r} references undeclared block {b!r}")
            for b in t.params:
                if b not in pl:
                    raise DescriptorError(f"term {t.name!r} references missing parameter {b!r}")
            if t.geometry is not None and t.geometry not in t.unknowns + t.params:
                raise DescriptorError(f"term {t.name!r}: geometry block must be an unknown or parameter")
            for b in t.tests:
                sp_ = self.layout.spaces[b]
                if t.where == "cells" and sp_.on_boundary:
                    raise DescriptorError(f"boundary block {b!r} cannot be tested on cells")
        for d in self.dirichlet:
            if d.block not in self.layout:
                raise DescriptorError(f"Dirichlet condition on undeclared block {d.block!r}")
        for b in self.constants:
            if b not in self.layout:
                raise DescriptorError(f"constant residual on undeclared block {b!r}")
        seen = set()
        for pc in self.point_constraints:
            if pc.block not in self.layout or pc.multiplier not in self.layout:
                raise DescriptorError("point constraint references an undeclared block")
            key = (pc.block, pc.node, pc.comp)
            if key in seen:
                raise ConstraintError(f"two constraints on the same dof of {pc.block!r}")
            seen.add(key)

    def space_of(self, name):
        if name in self.layout:
            return self.layout.spaces[name]
        return self.params.layout.spaces[name]


@dataclass
class BlockSystem:
    """Linear system ``matrix @ x = rhs`` over ``layout``.

    When produced by :func:`assemble` at a state, ``rhs = -R(state)`` so the
    solution is the Newton correction.
    """

    matrix: sp.csr_matrix
    rhs: BlockVector
    bc_mask: np.ndarray
    layout: BlockLayout
    constrained: dict = field(default_factory=dict)

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.rhs.data))


# ------------------------------------------------------ quadrature points

class FieldEval:
    """Field values at quadrature points.  ``grad`` raises for fields that
    only live on the boundary."""

    def __init__(self, val, grad=None, sgrad=None, boundary_only=False):
        self.val = val
        self._grad = grad
        self.sgrad = sgrad
        self.boundary_only = boundary_only

    @property
    def grad(self):
        if self.boundary_only:
            raise UsageError("a boundary field has no volume gradient; use sgrad")
        return self._grad


class Geometry:
    pass


def _tri_data(quad_degree):
    pts, wts = ref.TRI_RULE(quad_degree)
    N1, dN1 = ref.p1_tri(pts)
    N2, dN2 = ref.p2_tri(pts)
    return dict(w=wts, N1=N1, dN1=dN1, N2=N2, dN2=dN2)


def _edge_data(nq):
    s, w = ref.GAUSS_1D(nq)
    out = dict(w=w, s=s)
    N1, dN1, N2, dN2, H, E = [], [], [], [], [], []
    for k in range(3):
        xi = ref.edge_to_ref(k, s)
        a, da = ref.p1_tri(xi)
        b, db = ref.p2_tri(xi)
        e = ref.edge_direction(k)
        N1.append(a); dN1.append(da); N2.append(b); dN2.append(db)
        H.append(np.einsum("i,aij,j->a", e, ref.P2_HESSIAN, e))
        E.append(e)
    out.update(N1=np.array(N1), dN1=np.array(dN1), N2=np.array(N2), dN2=np.array(dN2),
               H=np.array(H), E=np.array(E))
    out["L1"], out["dL1"] = ref.line_basis(1, s)
    out["L2"], out["dL2"] = ref.line_basis(2, s)
    return out


TRI_QUAD_DEGREE = 5
EDGE_QUAD_POINTS = 4


def _cell_geometry(x, R):
    """x: (6, 2) node positions.  Returns geo dict and shape gradients."""
    jac = jnp.einsum("ai,qaj->qij", x, R["dN2"])
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    inv = jnp.stack([
        jnp.stack([jac[:, 1, 1], -jac[:, 0, 1]], -1),
        jnp.stack([-jac[:, 1, 0], jac[:, 0, 0]], -1),
    ], -2) / det[:, None, None]
    return jac, det, inv


def _spatial(dN, inv):
    # grad_x N_a = dN_a/dxi_j * dxi_j/dx_i
    return jnp.einsum("qaj,qji->qai", dN, inv)


class _Plan:
    """Gathered index data for one term on one form."""

    def __init__(self, form: WeakForm, term: Term):
        mesh = form.mesh
        if not mesh.is_quadratic:
            raise DescriptorError("assembly needs a quadratic (isoparametric) mesh")
        self.term = term
        if term.where == "cells":
            self.cells = np.arange(mesh.n_cells)
            self.k = np.zeros(mesh.n_cells, dtype=np.int64)
            self.edge_nodes = None
        else:
            edges = mesh.edges_with_tag(*term.tags)
            if len(edges) == 0:
                raise DescriptorError(f"term {term.name!r}: no edges carry tags {term.tags}")
            ck = mesh.boundary_edge_cells[edges]
            self.cells = ck[:, 0]
            self.k = ck[:, 1]
            self.edge_nodes = mesh.boundary_edge_nodes[edges]
            self.edges = edges
        self.n = len(self.cells)
        self.cell_nodes = mesh.cell_nodes[self.cells]
        self.X = mesh.points[self.cell_nodes]

        def local_dofs(name, space, offset):
            if space.is_global:
                return np.full((self.n, 1), offset, dtype=np.int64)
            if space.on_boundary:
                if term.where == "cells":
                    raise DescriptorError(f"boundary block {name!r} used on cells")
                if not set(term.tags) <= set(space.support):
                    raise DescriptorError(f"block {name!r} is not supported on {term.tags}")
                nodes = self.edge_nodes[:, : space.degree + 1]
            else:
                nodes = self.cell_nodes[:, : 3 if space.degree == 1 else 6]
            s = space.slot[nodes]
            if np.any(s < 0):
                raise DescriptorError(f"block {name!r} lacks dofs on some entity")
            d = s[:, :, None] * space.ncomp + np.arange(space.ncomp)[None, None, :]
            return offset + d.reshape(self.n, -1)

        lay = form.layout
        self.unk_dofs = [local_dofs(b, lay.spaces[b], lay.offsets[b]) for b in term.unknowns]
        self.test_dofs = [local_dofs(b, lay.spaces[b], lay.offsets[b]) for b in term.tests]
        if term.params:
            pl = form.params.layout
            self.par_dofs = [local_dofs(b, pl.spaces[b], pl.offsets[b]) for b in term.params]
        else:
            self.par_dofs = []
        self.rows = np.hstack(self.test_dofs) if self.test_dofs else np.zeros((self.n, 0), np.int64)
        self.cols = np.hstack(self.unk_dofs) if self.unk_dofs else np.zeros((self.n, 0), np.int64)
        self.row_keep = np.ones(self.rows.shape, dtype=bool)
        col = 0
        for b, d in zip(term.tests, self.test_dofs):
            excl = term.row_exclude.get(b)
            if excl is not None and len(excl):
                off = lay.offsets[b]
                self.row_keep[:, col:col + d.shape[1]] = ~np.isin(d - off, np.asarray(excl))
            col += d.shape[1]
        self.spec = _term_spec(form, term)


def _term_spec(form, term):
    def sdesc(b):
        s = form.space_of(b)
        return (b, s.kind, s.degree, s.ncomp)

    return (
        term.kernel, term.where,
        tuple(sdesc(b) for b in term.unknowns),
        tuple(sdesc(b) for b in term.params),
        tuple(sdesc(b) for b in term.tests),
        term.geometry, term.reference_geometry,
    )


def _bucket(n):
    if n <= 16:
        return 16
    k = math.ceil(2.0 * math.log2(n))
    return int(math.ceil(2.0 ** (k / 2.0)))


_COMPILED = {}


def _compiled(spec):
    fn = _COMPILED.get(spec)
    if fn is None:
        fn = _build_local(spec)
        _COMPILED[spec] = fn
    return fn


def _build_local(spec):
    kernel, where, unk, par, tests, geom_name, ref_geom = spec
    R = {k: jnp.asarray(v) for k, v in (_tri_data(TRI_QUAD_DEGREE) if where == "cells"
                                        else _edge_data(EDGE_QUAD_POINTS)).items()}

    def nloc(kind, degree, ncomp):
        if kind == "global_scalar":
            return 1
        return (degree + 1 if kind.startswith("boundary") else (3 if degree == 1 else 6)) * ncomp

    unk_sizes = [nloc(*d[1:]) for d in unk]
    par_sizes = [nloc(*d[1:]) for d in par]

    def split(flat, descs, sizes):
        out, o = {}, 0
        for d, n in zip(descs, sizes):
            out[d[0]] = flat[o:o + n]
            o += n
        return out

    def local(u_flat, p_flat, X, D, k, consts):
        coeffs = split(u_flat, unk, unk_sizes)
        coeffs.update(split(p_flat, par, par_sizes))
        if ref_geom:
            x = X
        elif geom_name is not None:
            x = X + coeffs[geom_name].reshape(6, 2)
        else:
            x = X + D
        geo = Geometry()
        if where == "cells":
            jac, det, inv = _cell_geometry(x, R)
            N2, N1, dN2, dN1 = R["N2"], R["N1"], R["dN2"], R["dN1"]
            geo.w = R["w"] * det
            geo.x = N2 @ x
            detmin = jnp.min(det)
            g2 = _spatial(dN2, inv)
            g1 = _spatial(dN1, inv)
        else:
            N2, N1, dN2, dN1 = R["N2"][k], R["N1"][k], R["dN2"][k], R["dN1"][k]
            jac = jnp.einsum("ai,qaj->qij", x, dN2)
            det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
            inv = jnp.stack([
                jnp.stack([jac[:, 1, 1], -jac[:, 0, 1]], -1),
                jnp.stack([-jac[:, 1, 0], jac[:, 0, 0]], -1),
            ], -2) / det[:, None, None]
            xs = jac @ R["E"][k]
            J = jnp.sqrt(jnp.sum(xs * xs, axis=1))
            t = xs / J[:, None]
            n = jnp.stack([t[:, 1], -t[:, 0]], -1)
            xss = R["H"][k] @ x
            dt = (xss[None, :] - jnp.sum(t * xss[None, :], 1)[:, None] * t) / J[:, None]
            dn = jnp.stack([dt[:, 1], -dt[:, 0]], -1)
            kappa = jnp.sum(t * dn, 1) / J
            geo.w = R["w"] * J
            geo.x = N2 @ x
            geo.t, geo.n, geo.J, geo.kappa = t, n, J, kappa
            geo.grad_n = kappa[:, None, None] * t[:, :, None] * t[:, None, :]
            detmin = jnp.minimum(jnp.min(det), jnp.min(J))
            g2 = _spatial(dN2, inv)
            g1 = _spatial(dN1, inv)
            L = {1: (R["L1"], R["dL1"]), 2: (R["L2"], R["dL2"])}

        def basis(kind, degree):
            """(values, gradient used by kernels, gradient used for tests)."""
            if kind.startswith("boundary"):
                Nb, dNb = L[degree]
                sg = (dNb / J[:, None])[:, :, None] * t[:, None, :]
                return Nb, None, sg
            Nv, g = (N1, g1) if degree == 1 else (N2, g2)
            if where == "cells":
                return Nv, g, g
            sg = jnp.einsum("qai,qi->qa", g, t)[:, :, None] * t[:, None, :]
            return Nv, g, sg

        fields = {}
        for d in unk + par:
            name, kind, degree, ncomp = d
            c = coeffs[name]
            nq = geo.w.shape[0]
            if kind == "global_scalar":
                v = jnp.broadcast_to(c[0], (nq,))
                fields[name] = FieldEval(v, jnp.zeros((nq, 2)), jnp.zeros((nq, 2)))
                continue
            Nv, g, sg = basis(kind, degree)
            if ncomp == 1:
                val = Nv @ c
                gr = None if g is None else jnp.einsum("a,qai->qi", c, g)
                sgr = None if where == "cells" else jnp.einsum("a,qai->qi", c, sg)
            else:
                c2 = c.reshape(-1, 2)
                val = Nv @ c2
                gr = None if g is None else jnp.einsum("ac,qai->qci", c2, g)
                sgr = None if where == "cells" else jnp.einsum("ac,qai->qci", c2, sg)
            fields[name] = FieldEval(val, gr, sgr, boundary_only=kind.startswith("boundary"))

        out = kernel(geo, fields, consts)
        res = []
        for d in tests:
            name, kind, degree, ncomp = d
            V, G = out.get(name), None
            if isinstance(V, tuple):
                V, G = V
            if kind == "global_scalar":
                r = jnp.zeros(1)
                if V is not None:
                    r = r + jnp.sum(geo.w * V)
                res.append(r)
                continue
            Nv, _, sg = basis(kind, degree)
            if ncomp == 1:
                r = jnp.zeros(Nv.shape[1])
                if V is not None:
                    r = r + jnp.einsum("q,q,qa->a", geo.w, V, Nv)
                if G is not None:
                    r = r + jnp.einsum("q,qi,qai->a", geo.w, G, sg)
            else:
                r = jnp.zeros((Nv.shape[1], 2))
                if V is not None:
                    r = r + jnp.einsum("q,qc,qa->ac", geo.w, V, Nv)
                if G is not None:
                    r = r + jnp.einsum("q,qci,qai->ac", geo.w, G, sg)
                r = r.ravel()
            res.append(r)
        return jnp.concatenate(res), detmin

    def jac_fn(u_flat, p_flat, X, D, k, consts):
        def f(u):
            r, m = local(u, p_flat, X, D, k, consts)
            return r, (r, m)

        if u_flat.shape[0] == 0:
            r, m = local(u_flat, p_flat, X, D, k, consts)
            return r, jnp.zeros((r.shape[0], 0)), m
        J, (r, m) = jax.jacfwd(f, has_aux=True)(u_flat)
        return r, J, m

    return jax.jit(jax.vmap(jac_fn, in_axes=(0, 0, 0, 0, 0, None)))


def _pad(a, n):
    if len(a) == n:
        return a
    reps = np.repeat(a[:1], n - len(a), axis=0)
    return np.concatenate([a, reps], axis=0)


def evaluate_term(form, term, state: BlockVector, displacement=None):
    """Element residuals (E, nr), Jacobians (E, nr, nu) and the plan."""
    plan = form._plans.get(id(term))
    if plan is None:
        plan = _Plan(form, term)
        form._plans[id(term)] = plan
    E = plan.n
    nb = _bucket(E)
    u_loc = state.data[plan.cols] if plan.cols.shape[1] else np.zeros((E, 0))
    if plan.par_dofs:
        p_loc = np.hstack([form.params.data[d] for d in plan.par_dofs])
    else:
        p_loc = np.zeros((E, 0))
    if displacement is None:
        D = np.zeros_like(plan.X)
    else:
        D = np.asarray(displacement, float)[plan.cell_nodes]
    fn = _compiled(plan.spec)
    consts = {k: jnp.asarray(v) for k, v in form.consts.items()}
    r, J, m = fn(_pad(u_loc, nb), _pad(p_loc, nb), _pad(plan.X, nb), _pad(D, nb),
                 _pad(plan.k, nb), consts)
    r = np.asarray(r)[:E]
    J = np.asarray(J)[:E]
    m = np.asarray(m)[:E]
    bad = np.flatnonzero(~(m > 0.0))
    if len(bad):
        c = int(plan.cells[bad[0]])
        raise AssemblyError(
            f"term {term.name!r}: inverted or degenerate element at cell {c}", cell=c)
    return r, J, plan


def assemble(form: WeakForm, state: BlockVector, mesh=None, displacement=None,
             jacobian=True) -> BlockSystem:
    """Assemble ``J dx = -R(state)``."""
    if mesh is not None and mesh is not form.mesh:
        raise DescriptorError("form was built for a different mesh")
    if state.layout is not form.layout and state.layout.names != form.layout.names:
        raise DescriptorError("state layout does not match the form")
    n = form.layout.size
    res = np.zeros(n)
    rows, cols, vals = [], [], []
    for term in form.terms:
        r, J, plan = evaluate_term(form, term, state, displacement)
        keep = plan.row_keep
        res += np.bincount(plan.rows[keep], weights=r[keep], minlength=n)
        if jacobian and plan.cols.shape[1]:
            rr = np.broadcast_to(plan.rows[:, :, None], J.shape)
            cc = np.broadcast_to(plan.cols[:, None, :], J.shape)
            mask = np.broadcast_to(keep[:, :, None], J.shape)
            rows.append(rr[mask]); cols.append(cc[mask]); vals.append(J[mask])
    for block, value in form.constants.items():
        res[form.layout.slice(block)] += value
    x = state.data
    for pc in form.point_constraints:
        sp_ = form.layout.spaces[pc.block]
        if sp_.slot[pc.node] < 0:
            raise ConstraintError(f"node {pc.node} carries no dof of {pc.block!r}")
        dof = form.layout.offsets[pc.block] + sp_.slot[pc.node] * sp_.ncomp + pc.comp
        lam = form.layout.offsets[pc.multiplier]
        res[lam] += x[dof] - pc.value
        res[dof] += x[lam]
        rows.append(np.array([lam, dof])); cols.append(np.array([dof, lam])); vals.append(np.ones(2))
    mat = None
    if jacobian:
        if rows:
            mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                shape=(n, n)).tocsr()
        else:
            mat = sp.csr_matrix((n, n))
    bc_mask = np.zeros(n, dtype=bool)
    for bc in form.dirichlet:
        off = form.layout.offsets[bc.block]
        dofs = off + np.asarray(bc.dofs, dtype=np.int64)
        bc_mask[dofs] = True
        res[dofs] = x[dofs] - np.broadcast_to(np.asarray(bc.values, float), dofs.shape)
    if jacobian and bc_mask.any():
        mat = _identity_rows(mat, bc_mask)
    return BlockSystem(mat, BlockVector(form.layout, -res), bc_mask, form.layout)


def residual(form, state, displacement=None) -> np.ndarray:
    return -assemble(form, state, displacement=displacement, jacobian=False).rhs.data


def _identity_rows(mat, mask):
    mat = mat.tocsr()
    keep = sp.diags((~mask).astype(float))
    return (keep @ mat + sp.diags(mask.astype(float))).tocsr()


def apply_point_constraint(system: BlockSystem, block, location, value, multiplier_block, mesh,
                           comp=0, tol=1e-10) -> BlockSystem:
    """Add ``field(location) = value`` to a linear system through a multiplier dof.

    ``location`` is matched against reference node positions, so the
    constraint follows its material node when the mesh deforms.
    """
    lay = system.layout
    if block not in lay or multiplier_block not in lay:
        raise ConstraintError("constraint references an undeclared block")
    if not lay.spaces[multiplier_block].is_global:
        raise ConstraintError("multiplier block must be a global scalar")
    space = lay.spaces[block]
    d = np.hypot(*(mesh.points - np.asarray(location, float)).T)
    node = int(np.argmin(d))
    if d[node] > tol or space.slot[node] < 0:
        raise ConstraintError(f"no dof of {block!r} at {tuple(location)}")
    dof = lay.offsets[block] + space.slot[node] * space.ncomp + comp
    lam = lay.offsets[multiplier_block]
    if dof in system.constrained:
        raise ConstraintError(f"dof {dof} of {block!r} is already constrained")
    if lam in system.constrained.values() or system.bc_mask[lam]:
        raise ConstraintError(f"multiplier {multiplier_block!r} is already in use")
    A = system.matrix.tolil()
    A[lam, :] = 0.0
    A[lam, dof] = 1.0
    A[dof, lam] = 1.0
    rhs = system.rhs.copy()
    rhs.data[lam] = value
    constrained = dict(system.constrained)
    constrained[dof] = lam
    return BlockSystem(A.tocsr(), rhs, system.bc_mask, lay, constrained)
