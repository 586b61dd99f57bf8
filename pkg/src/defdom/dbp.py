"""Deformable boundary perturbation: first-order effects of moving a boundary.

A boundary displacement ``rho`` is given either as a general vector field or
in normal form ``rho = rho n``.  Every perturbed quantity has one routine per
form; the general routines only see ``rho`` and ``A = grad_S rho`` (with
``A[i, j] = d_Si rho_j``), the normal routines only see ``rho`` and
``grad_S rho``.  Terms containing ``D_S .`` are always realised weakly, so no
derivative of ``I_S`` or of the flux vector is ever needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import jax
import jax.numpy as jnp
import numpy as np

from .errors import ConfigurationError, UsageError
from .fem import reference as ref
from .fem.assembly import DirichletBC, Term, WeakForm
from .fem.solve import NewtonSettings, newton_solve
from .fem.spaces import BlockLayout, BlockVector, make_space
from .mesh import Mesh2D
from .surface import DiscreteField, edge_geometry, evaluate_on_edges

FORMS = ("general_vector", "normal_scalar")

# ------------------------------------------------------------------- data


@dataclass(frozen=True)
class PerturbationField:
    """Boundary displacement in general or normal form.

    ``rho_vec`` (general) and ``rho_n`` (normal) are callables of a point
    written with ``jax.numpy`` or :class:`~defdom.surface.DiscreteField`
    objects on boundary spaces.
    """

    form: str
    rho_vec: Any = None
    rho_n: Any = None
    h: Any = None

    def __post_init__(self):
        if self.form not in FORMS:
            raise ConfigurationError(f"form must be one of {FORMS}")
        if self.form == "general_vector" and self.rho_vec is None:
            raise ConfigurationError("general form needs rho_vec")
        if self.form == "normal_scalar" and self.rho_n is None:
            raise ConfigurationError("normal form needs rho_n")

    @classmethod
    def normal(cls, rho_n):
        return cls("normal_scalar", rho_n=rho_n)

    @classmethod
    def general(cls, rho_vec):
        return cls("general_vector", rho_vec=rho_vec)

    # -- evaluation at boundary quadrature points --------------------------
    def normal_data(self, geo, mesh, edges, s, displacement=None):
        """``rho`` (E, q) and ``grad_S rho`` (E, q, 2) of the normal form."""
        if self.form != "normal_scalar":
            raise UsageError("normal-form expressions need a normal-form perturbation")
        vals, _, sg, _ = evaluate_on_edges(self.rho_n, mesh, edges, s, displacement)
        return vals, sg

    def general_data(self, geo, mesh, edges, s, displacement=None):
        """``rho`` (E, q, 2) and ``A = grad_S rho`` (E, q, 2, 2).

        A normal-form field is lifted exactly: ``A = grad_S rho (x) n + rho grad_S n``.
        """
        t, n = geo["t"], geo["n"]
        if self.form == "normal_scalar":
            r, sg = self.normal_data(geo, mesh, edges, s, displacement)
            gn = geo["kappa"][..., None, None] * t[..., :, None] * t[..., None, :]
            A = sg[..., :, None] * n[..., None, :] + r[..., None, None] * gn
            return r[..., None] * n, A
        rv = self.rho_vec
        if callable(rv):
            pts = jnp.asarray(geo["x"].reshape(-1, 2))
            vec = np.asarray(jax.vmap(rv)(pts)).reshape(t.shape)
            jac = np.asarray(jax.vmap(jax.jacfwd(rv))(pts)).reshape(t.shape + (2,))
            # jac[..., j, k] = d rho_j / d x_k ; A_ij = t_i t_k d_k rho_j
            dt = np.einsum("eqjk,eqk->eqj", jac, t)
            return vec, t[..., :, None] * dt[..., None, :]
        if isinstance(rv, DiscreteField) and rv.space.kind == "boundary_vector":
            sp_ = rv.space
            nodes = mesh.boundary_edge_nodes[edges][:, : sp_.degree + 1]
            N, dN = ref.line_basis(sp_.degree, s)
            c = np.asarray(rv.coeffs).reshape(-1, 2)[sp_.slot[nodes]]
            vec = np.einsum("qa,eai->eqi", N, c)
            d = np.einsum("qa,eai->eqi", dN, c) / geo["J"][..., None]
            return vec, t[..., :, None] * d[..., None, :]
        raise UsageError("rho_vec must be a callable or a boundary_vector DiscreteField")


@dataclass(frozen=True)
class MixedBcData:
    """Robin data ``n . grad phi = c phi + gamma`` and source ``sigma(x, phi)``.

    ``gamma(x)`` must be defined off the boundary because the perturbation
    differentiates it along ``n``.  ``sigma_phi`` defaults to autodiff.
    """

    c: float
    gamma: Callable
    sigma: Callable = None
    sigma_phi: Callable = None

    def __post_init__(self):
        if self.c is None or self.gamma is None:
            raise ConfigurationError("mixed boundary data needs both c and gamma")
        if self.sigma is None:
            object.__setattr__(self, "sigma", lambda x, phi: 0.0 * phi)
        if self.sigma_phi is None:
            object.__setattr__(self, "sigma_phi", jax.grad(self.sigma, argnums=1))

    def check_sigma_derivative(self, x, phi, step=1e-6) -> float:
        """Relative mismatch between ``sigma_phi`` and a centred difference."""
        x = jnp.asarray(x, dtype=float)
        fd = (self.sigma(x, phi + step) - self.sigma(x, phi - step)) / (2 * step)
        an = self.sigma_phi(x, phi)
        return float(abs(fd - an) / max(abs(an), 1e-12))


# ----------------------------------------------------------------- helpers

def _edges(mesh: Mesh2D, tags=None, edges=None):
    if edges is not None:
        return np.asarray(edges, dtype=np.int64)
    if tags is None:
        return np.arange(len(mesh.boundary_edges))
    return mesh.edges_with_tag(*tags)


def contour_of_edges(mesh, edges):
    """Endpoints of an edge set: list of (node, edge, s, n_S)."""
    be = mesh.boundary_edges[edges]
    starts = {int(a): int(e) for e, (a, _) in zip(edges, be)}
    ends = {int(b): int(e) for e, (_, b) in zip(edges, be)}
    out = []
    for v, e in starts.items():
        if v not in ends:
            g = edge_geometry(mesh, [e], [0.0])
            out.append((v, e, 0.0, -g["t"][0, 0]))
    for v, e in ends.items():
        if v not in starts:
            g = edge_geometry(mesh, [e], [1.0])
            out.append((v, e, 1.0, g["t"][0, 0]))
    return out


def _quad(nq=8):
    return ref.GAUSS_1D(nq)


def _field(phi, mesh, edges, s, need_grad=True):
    vals, grad, sg, geo = evaluate_on_edges(phi, mesh, edges, s)
    if need_grad and grad is None:
        raise UsageError("this expression needs the normal derivative of phi; "
                         "supply a field defined in the domain")
    return vals, grad, sg, geo


def _point_data(rho, phi, mesh, e, sv, need_grad=True):
    """Everything at a single contour point, shaped like quadrature data."""
    s = np.array([sv])
    vals, grad, sg, geo = evaluate_on_edges(phi, mesh, [e], s)
    return vals, grad, sg, geo, s


# ------------------------------------------------------ integral perturbation

def perturbed_domain_integral(phi, rho: PerturbationField, mesh, tags=None, edges=None,
                              form=None, nq=8, tri_degree=8):
    """First-order value of the domain integral of ``phi`` after the boundary moves."""
    form = form or rho.form
    from .surface import _cell_quadrature

    x, wv = _cell_quadrature(mesh, degree=tri_degree)
    if callable(phi):
        vol = float(np.sum(wv * np.asarray(jax.vmap(phi)(jnp.asarray(x.reshape(-1, 2)))).reshape(wv.shape)))
    else:
        raise UsageError("domain integrals take phi as a callable")
    E = _edges(mesh, tags, edges)
    s, w = _quad(nq)
    vals, _, _, geo = evaluate_on_edges(phi, mesh, E, s)
    ws = w[None, :] * geo["J"]
    if form == "general_vector":
        vec, _ = rho.general_data(geo, mesh, E, s)
        rn = np.sum(vec * geo["n"], axis=2)
    else:
        rn, _ = rho.normal_data(geo, mesh, E, s)
    return vol + float(np.sum(ws * rn * vals))


def perturbed_boundary_integral(phi, rho: PerturbationField, mesh, tags=None, edges=None,
                                form=None, nq=8):
    """First-order value of the boundary integral of ``phi`` over the moved boundary."""
    form = form or rho.form
    E = _edges(mesh, tags, edges)
    s, w = _quad(nq)
    vals, grad, _, geo = _field(phi, mesh, E, s)
    ws = w[None, :] * geo["J"]
    n, kappa = geo["n"], geo["kappa"]
    dn_phi = np.sum(n * grad, axis=2)
    base = float(np.sum(ws * vals))
    if form == "general_vector":
        vec, _ = rho.general_data(geo, mesh, E, s)
        rn = np.sum(vec * n, axis=2)
        total = base + float(np.sum(ws * (vals * rn * kappa + rn * dn_phi)))
        for v, e, sv, nS in contour_of_edges(mesh, E):
            pv, _, _, pg, ps = _point_data(rho, phi, mesh, e, sv)
            pvec, _ = rho.general_data(pg, mesh, [e], ps)
            total += float(nS @ pvec[0, 0]) * float(pv[0, 0])
        return total
    r, _ = rho.normal_data(geo, mesh, E, s)
    return base + float(np.sum(ws * (r * vals * kappa + r * dn_phi)))


def perturbed_flux(phi, rho: PerturbationField, sigma, mesh, tags=None, edges=None,
                   form=None, nq=8):
    """First-order flux of ``grad phi`` through the moved boundary piece.

    ``sigma(x)`` is the Laplacian of ``phi`` in the swept region.  With a test
    function equal to one only contour terms of the ``D_S .`` part remain.
    """
    form = form or rho.form
    E = _edges(mesh, tags, edges)
    s, w = _quad(nq)
    vals, grad, _, geo = _field(phi, mesh, E, s)
    ws = w[None, :] * geo["J"]
    n = geo["n"]
    sig = np.asarray(jax.vmap(sigma)(jnp.asarray(geo["x"].reshape(-1, 2)))).reshape(ws.shape)
    if form == "general_vector":
        vec, _ = rho.general_data(geo, mesh, E, s)
        rn = np.sum(vec * n, axis=2)
    else:
        rn, _ = rho.normal_data(geo, mesh, E, s)
    total = float(np.sum(ws * (np.sum(n * grad, axis=2) + sig * rn)))
    for v, e, sv, nS in contour_of_edges(mesh, E):
        pv, pgrad, _, pg, ps = _point_data(rho, phi, mesh, e, sv)
        if form == "general_vector":
            pvec, _ = rho.general_data(pg, mesh, [e], ps)
            pvec = pvec[0, 0]
            pn = pg["n"][0, 0]
            wvec = pvec * float(pn @ pgrad[0, 0]) - float(pvec @ pn) * pgrad[0, 0]
        else:
            r, _ = rho.normal_data(pg, mesh, [e], ps)
            # rho n (n . grad phi) - rho grad phi = -rho grad_S phi
            tt = pg["t"][0, 0]
            wvec = -float(r[0, 0]) * float(tt @ pgrad[0, 0]) * tt
        total += float(nS @ wvec)
    return total


# ------------------------------------------------- mixed boundary condition

def _test_basis(test_space, mesh, E, s, geo):
    """Test values (E, q, a), surface gradients (E, q, a, 2) and dof rows (E, a)."""
    t = geo["t"]
    if test_space.on_boundary:
        nodes = mesh.boundary_edge_nodes[E][:, : test_space.degree + 1]
        N, dN = ref.line_basis(test_space.degree, s)
        B = np.broadcast_to(N, (len(E),) + N.shape)
        gB = (dN[None, :, :] / geo["J"][..., None])[..., None] * t[:, :, None, :]
        return B, gB, test_space.slot[nodes]
    ck = mesh.boundary_edge_cells[E]
    cn = mesh.cell_nodes[ck[:, 0]]
    nloc = 3 if test_space.degree == 1 else 6
    B = np.empty((len(E), len(s), nloc))
    gB = np.empty((len(E), len(s), nloc, 2))
    for i, (c, k) in enumerate(ck):
        xi = ref.edge_to_ref(int(k), s)
        _, dN2 = ref.p2_tri(xi)
        Nf, dNf = ref.tri_basis(test_space.degree, xi)
        jac = np.einsum("ai,qaj->qij", mesh.points[cn[i]], dN2)
        g = np.einsum("qaj,qji->qai", dNf, np.linalg.inv(jac))
        B[i] = Nf
        gB[i] = np.einsum("qa,qi->qai", np.einsum("qaj,qj->qa", g, t[i]), t[i])
    return B, gB, test_space.slot[cn[:, :nloc]]


def _scatter(n_slots, rows, local, extra_shape=()):
    out = np.zeros((n_slots,) + extra_shape)
    np.add.at(out, rows, local)
    return out


def _contour_test_values(test_space, mesh, e, sv):
    s = np.array([sv])
    geo = edge_geometry(mesh, [e], s)
    B, _, rows = _test_basis(test_space, mesh, np.array([e]), s, geo)
    return B[0, 0], rows[0]


def perturbed_mixed_bc_residual(phi, rho: PerturbationField, bc: MixedBcData, test_space, mesh,
                                tags=None, edges=None, form=None, nq=8):
    """Weak residual of the perturbed Robin condition, one entry per test dof.

    Sign convention: left side minus right side, so ``rho = 0`` gives the
    plain Robin residual ``n . grad phi - c phi - gamma``.
    """
    if bc is None:
        raise ConfigurationError("mixed boundary data is required")
    form = form or rho.form
    E = _edges(mesh, tags, edges)
    s, w = _quad(nq)
    vals, grad, sg, geo = _field(phi, mesh, E, s)
    ws = w[None, :] * geo["J"]
    n, t, kappa = geo["n"], geo["t"], geo["kappa"]
    pts = jnp.asarray(geo["x"].reshape(-1, 2))
    gam = np.asarray(jax.vmap(bc.gamma)(pts)).reshape(ws.shape)
    dgam = np.asarray(jax.vmap(jax.grad(bc.gamma))(pts)).reshape(n.shape)
    sig = np.asarray(jax.vmap(bc.sigma)(pts, jnp.asarray(vals.ravel()))).reshape(ws.shape)
    g = bc.c * vals + gam                       # c phi + gamma
    dn_g = bc.c * np.sum(n * grad, axis=2) + np.sum(n * dgam, axis=2)
    B, gB, rows = _test_basis(test_space, mesh, E, s, geo)
    base = np.sum(n * grad, axis=2) - g
    if form == "general_vector":
        vec, _ = rho.general_data(geo, mesh, E, s)
        rn = np.sum(vec * n, axis=2)
        flux = vec * np.sum(n * grad, axis=2)[..., None] - rn[..., None] * grad
        wg = vec * g[..., None]                  # grad_S . (rho g), weakly
        V = base + sig * rn - kappa * np.sum(n * wg, axis=2) - rn * dn_g
        Gv = -flux + wg                          # multiplies grad_S psi
        contour_fields = ("general", flux, wg)
    else:
        r, _ = rho.normal_data(geo, mesh, E, s)
        flux = -r[..., None] * grad              # - D_S . (rho grad phi)
        V = base + r * sig - r * kappa * g - r * dn_g
        Gv = -(-r[..., None] * grad)
        contour_fields = ("normal",)
    local = np.einsum("eq,eq,eqa->ea", ws, V, B) + np.einsum("eq,eqi,eqai->ea", ws, Gv, gB)
    out = _scatter(test_space.n_slots, rows, local)
    for v, e, sv, nS in contour_of_edges(mesh, E):
        Bc, rc = _contour_test_values(test_space, mesh, e, sv)
        pv, pgrad, _, pg, ps = _point_data(rho, phi, mesh, e, sv)
        pn = pg["n"][0, 0]
        pgam = float(bc.gamma(jnp.asarray(pg["x"][0, 0])))
        pgv = bc.c * float(pv[0, 0]) + pgam
        if contour_fields[0] == "general":
            pvec, _ = rho.general_data(pg, mesh, [e], ps)
            pvec = pvec[0, 0]
            fl = pvec * float(pn @ pgrad[0, 0]) - float(pvec @ pn) * pgrad[0, 0]
            c_val = float(nS @ fl) - float(nS @ pvec) * pgv
        else:
            r, _ = rho.normal_data(pg, mesh, [e], ps)
            c_val = -float(r[0, 0]) * float(nS @ pgrad[0, 0])
        np.add.at(out, rc, Bc * c_val)
    return out


# ------------------------------------------------ exterior operator D_S

def _ext_tensor_general(vec, A, n, vals, grad, sg):
    trA = np.trace(A, axis1=-2, axis2=-1)
    I = np.eye(2)
    An = np.einsum("...ij,...j->...i", A, n)
    T = (trA[..., None, None] * I - np.swapaxes(A, -1, -2)
         + An[..., :, None] * n[..., None, :])
    drv = grad if grad is not None else sg       # rho . grad_S phi for boundary-only fields
    rho_dphi = np.sum(vec * drv, axis=-1)
    return T * vals[..., None, None] + rho_dphi[..., None, None] * I


def _ext_tensor_normal(r, sgr, n, t, kappa, vals, grad, sg):
    I = np.eye(2)
    gn = kappa[..., None, None] * t[..., :, None] * t[..., None, :]
    T = (r * kappa)[..., None, None] * I - r[..., None, None] * gn + sgr[..., :, None] * n[..., None, :]
    drv = grad if grad is not None else sg
    rho_dphi = r * np.sum(n * drv, axis=-1)
    return T * vals[..., None, None] + rho_dphi[..., None, None] * I


def perturbed_exterior_operator_load(phi, rho: PerturbationField, test_space, mesh, tags=None,
                                     edges=None, form=None, nq=8):
    """Weak first-order change of ``int psi D_S phi``; returns (n_slots, 2).

    ``M`` is the bracketed tensor applied to ``phi``; the load is
    ``sum_Gamma psi n_S . M - int grad_S psi . M``.
    """
    form = form or rho.form
    E = _edges(mesh, tags, edges)
    s, w = _quad(nq)
    vals, grad, sg, geo = evaluate_on_edges(phi, mesh, E, s)
    ws = w[None, :] * geo["J"]

    def tensor(g, vv, gr, sgr_phi, ee, ss):
        if form == "general_vector":
            vec, A = rho.general_data(g, mesh, ee, ss)
            return _ext_tensor_general(vec, A, g["n"], vv, gr, sgr_phi)
        r, sgr = rho.normal_data(g, mesh, ee, ss)
        return _ext_tensor_normal(r, sgr, g["n"], g["t"], g["kappa"], vv, gr, sgr_phi)

    M = tensor(geo, vals, grad, sg, E, s)
    B, gB, rows = _test_basis(test_space, mesh, E, s, geo)
    local = -np.einsum("eq,eqai,eqij->eaj", ws, gB, M)
    out = _scatter(test_space.n_slots, rows, local, (2,))
    for v, e, sv, nS in contour_of_edges(mesh, E):
        Bc, rc = _contour_test_values(test_space, mesh, e, sv)
        pv, pgrad, psg, pg, ps = _point_data(rho, phi, mesh, e, sv)
        Mc = tensor(pg, pv, pgrad, psg, [e], ps)[0, 0]
        np.add.at(out, rc, Bc[:, None] * (nS @ Mc)[None, :])
    return out


# ------------------------------------------------------- Appendix identity

def delta_contour_normal_geometric(n, n_S, A):
    """``delta(n_S dGamma) / dGamma`` from the tangent-plane decomposition.

    Arrays are 3D frames with a trailing dimension 3; ``A = grad_S rho``.
    """
    trA = np.trace(A, axis1=-2, axis2=-1)
    AnS = np.einsum("...ij,...j->...i", A, n_S)
    nSAn = np.einsum("...i,...ij,...j->...", n_S, A, n)
    return n_S * trA[..., None] - AnS + nSAn[..., None] * n


def delta_contour_normal_line_element(n, n_S, A):
    """Same variation from ``n_S dGamma = t dGamma x n`` and the product rule."""
    t = np.cross(n, n_S)
    tA = np.einsum("...i,...ij->...j", t, A)
    dn = -np.einsum("...ij,...j->...i", A, n)
    return np.cross(tA, n) + np.cross(t, dn)


def random_frames(rng, count):
    """Orthonormal (n, n_S) pairs and tangential gradients ``A = I_S . G``."""
    q, _ = np.linalg.qr(rng.standard_normal((count, 3, 3)))
    n, n_S = q[:, :, 0], q[:, :, 1]
    G = rng.standard_normal((count, 3, 3))
    I_S = np.eye(3)[None] - n[:, :, None] * n[:, None, :]
    return n, n_S, np.einsum("eij,ejk->eik", I_S, G)


# ----------------------------------------------------- Poisson demonstrator

@dataclass
class PoissonDemoResult:
    phi0: np.ndarray
    phi1: np.ndarray
    space: Any
    mesh: Mesh2D
    table: list = field(default_factory=list)   # rows (delta, rel_error)

    def slopes(self):
        d = np.array([r[0] for r in self.table])
        e = np.array([r[1] for r in self.table])
        return np.log(e[:-1] / e[1:]) / np.log(d[:-1] / d[1:])


def _poisson_forms(mesh, bc: MixedBcData, tag, degree, anchor):
    V = make_space(mesh, "domain_scalar", degree)
    lay = BlockLayout({"phi": V})
    c = float(bc.c)

    def volume(geo, f, k):
        phi = f["phi"]
        src = jax.vmap(bc.sigma)(geo.x, phi.val)
        return {"phi": (src, phi.grad)}

    def robin(geo, f, k):
        phi = f["phi"]
        gam = jax.vmap(bc.gamma)(geo.x)
        return {"phi": -(c * phi.val + gam)}

    terms = [Term(volume, ["phi"], ["phi"], name="poisson"),
             Term(robin, ["phi"], ["phi"], where="edges", tags=(tag,), name="robin")]
    dbc = []
    if anchor is not None:
        dbc.append(DirichletBC("phi", V.node_dofs([anchor[0]]), anchor[1]))
    return V, lay, terms, dbc


def poisson_zeroth_form(mesh, bc: MixedBcData, tag="bubble", degree=2, anchor=None):
    V, lay, terms, dbc = _poisson_forms(mesh, bc, tag, degree, anchor)
    return V, WeakForm(mesh, lay, terms, dirichlet=dbc)


def solve_poisson_zeroth(mesh, bc: MixedBcData, tag="bubble", degree=2, anchor=None,
                         displacement=None, settings=None):
    V, form = poisson_zeroth_form(mesh, bc, tag, degree, anchor)
    lay = form.layout
    x = newton_solve(form, lay.zeros(), settings or NewtonSettings(abs_tol=1e-11),
                     displacement=displacement)
    return V, x["phi"].copy()


def poisson_first_form(mesh, bc: MixedBcData, V, phi0, rho_n: Callable, tag="bubble", anchor=None):
    """Linear first-order problem for ``phi1`` on the unperturbed domain."""
    lay = BlockLayout({"phi1": V})
    plays = BlockLayout({"phi0": V})
    params = BlockVector(plays, phi0)
    c = float(bc.c)

    def volume(geo, f, k):
        p1, p0 = f["phi1"], f["phi0"]
        ds = jax.vmap(bc.sigma_phi)(geo.x, p0.val)
        return {"phi1": (ds * p1.val, p1.grad)}

    def boundary(geo, f, k):
        p1, p0 = f["phi1"], f["phi0"]
        x, n, kap = geo.x, geo.n, geo.kappa
        r = jax.vmap(rho_n)(x)
        sig0 = jax.vmap(bc.sigma)(x, p0.val)
        gam = jax.vmap(bc.gamma)(x)
        dgam = jax.vmap(jax.grad(bc.gamma))(x)
        g0 = c * p0.val + gam
        dn_g0 = c * jnp.sum(n * p0.grad, 1) + jnp.sum(n * dgam, 1)
        V = -c * p1.val + r * sig0 - r * kap * g0 - r * dn_g0
        # -psi D_S.(rho grad phi0) = +grad_S psi . rho grad phi0 on a closed curve
        G = r[:, None] * p0.grad
        return {"phi1": (V, G)}

    terms = [Term(volume, ["phi1"], ["phi1"], params=["phi0"], name="poisson1"),
             Term(boundary, ["phi1"], ["phi1"], params=["phi0"], where="edges", tags=(tag,),
                  name="robin1")]
    dbc = []
    if anchor is not None:
        dbc.append(DirichletBC("phi1", V.node_dofs([anchor[0]]), 0.0))
    return WeakForm(mesh, lay, terms, params=params, dirichlet=dbc)


def solve_poisson_first(mesh, bc: MixedBcData, V, phi0, rho_n: Callable, tag="bubble", anchor=None):
    form = poisson_first_form(mesh, bc, V, phi0, rho_n, tag, anchor)
    x = newton_solve(form, form.layout.zeros(), NewtonSettings(abs_tol=1e-11))
    return x["phi1"].copy()


def radial_perturbation(mesh, rho_n, delta, center=(0.0, 0.0), inner=0.5, radius=1.0):
    """Nodal displacement moving the circle of ``radius`` by ``delta rho_n`` along the
    radius, blended smoothly to zero inside ``r < inner``."""
    c = np.asarray(center, float)
    d = mesh.points - c
    r = np.hypot(d[:, 0], d[:, 1])
    s = np.clip((r - inner) / (radius - inner), 0.0, 1.0)
    blend = s * s * (3.0 - 2.0 * s)
    er = d / np.where(r > 0, r, 1.0)[:, None]
    on = np.asarray(jax.vmap(rho_n)(jnp.asarray(c + er * radius)))
    return (delta * blend * on)[:, None] * er


def demo_problem(c=-1.0):
    """Robin data and boundary bump used by the demonstrator runs.

    ``n.grad phi = c phi + 1 + x/2`` with source ``phi**2`` and bump
    ``rho_n = 1 + cos(2 theta)/2``.
    """
    bc = MixedBcData(c, lambda x: 1.0 + 0.5 * x[0], lambda x, p: p ** 2)

    def rho_n(x):
        return 1.0 + 0.5 * jnp.cos(2.0 * jnp.arctan2(x[1], x[0]))
    return bc, rho_n


def linearize_poisson_demo(bc: MixedBcData, mesh, deltas, rho_n: Callable = None, tag="bubble",
                           degree=2, anchor=None, inner=0.5, radius=1.0) -> PoissonDemoResult:
    """Zeroth and first-order solves plus the comparison against direct solves.

    For each ``delta`` the mesh is deformed so its ``tag`` boundary follows
    ``r = radius + delta rho_n``; nodes with ``r < inner`` do not move, so
    values there are compared node by node.  The reported error is
    ``||phi_direct - phi0 - delta phi1|| / ||phi0||`` over those nodes.
    """
    if rho_n is None:
        def rho_n(x):
            return 1.0 + 0.0 * x[0]
    V, phi0 = solve_poisson_zeroth(mesh, bc, tag, degree, anchor)
    phi1 = solve_poisson_first(mesh, bc, V, phi0, rho_n, tag, anchor)
    nodes = V.nodes()
    inside = np.hypot(*mesh.points[nodes].T) < inner - 1e-12
    res = PoissonDemoResult(phi0, phi1, V, mesh)
    norm0 = np.linalg.norm(phi0[inside])
    for d in deltas:
        disp = radial_perturbation(mesh, rho_n, d, inner=inner, radius=radius)
        _, phid = solve_poisson_zeroth(mesh, bc, tag, degree, anchor, displacement=disp)
        err = np.linalg.norm((phid - phi0 - d * phi1)[inside]) / max(norm0, 1e-300)
        res.table.append((float(d), float(err)))
    return res
