"""Boundary frames and the boundary operators grad_S and D_S on curves.

In two dimensions a boundary ``Sigma`` is a curve and its contour is the set
of curve endpoints, where the contour normal is ``n_S = -t`` at the start and
``+t`` at the end.  ``D_S phi`` is never formed by differentiating ``I_S``;
it is always realised weakly::

    int psi D_S phi = sum_endpoints n_S psi phi - int (grad_S psi) phi

All routines here are plain numpy on the isoparametric (quadratic) edge map.
They share no code with the jax assembly kernels, so each path checks the
other.
"""

from __future__ import annotations

from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import GeometryError, UsageError
from .fem import reference as ref
from .fem.spaces import FunctionSpace, make_space


@dataclass(frozen=True)
class SurfaceFrame:
    point: np.ndarray
    n: np.ndarray
    t: np.ndarray
    n_S: np.ndarray | None
    I_S: np.ndarray
    jacobian: float
    curvature: float  # div_S n; -1/a on a hole of radius a


@dataclass(frozen=True)
class OperatorSample:
    grad: np.ndarray | None
    sgrad: np.ndarray
    curvature_vector: np.ndarray | None


@dataclass(frozen=True)
class DiscreteField:
    """Coefficients of a scalar field in ``space``."""

    space: FunctionSpace
    coeffs: np.ndarray


# ------------------------------------------------------------- geometry

def _positions(mesh, displacement):
    if displacement is None:
        return mesh.points
    d = np.asarray(displacement, float)
    if d.shape != mesh.points.shape:
        raise UsageError("displacement must be given on every mesh node")
    return mesh.points + d


def edge_geometry(mesh, edges, s, displacement=None):
    """Geometry at edge parameters ``s`` for boundary edges ``edges``.

    Returns a dict of arrays shaped (E, nq, ...): ``x``, ``t``, ``n``, ``J``
    (arclength per unit parameter) and ``kappa`` (``div_S n``).
    """
    edges = np.atleast_1d(np.asarray(edges, dtype=np.int64))
    s = np.atleast_1d(np.asarray(s, float))
    X = _positions(mesh, displacement)
    nodes = mesh.boundary_edge_nodes[edges]
    if mesh.is_quadratic:
        N, dN = ref.line_basis(2, s)
        xe = X[nodes]
        d2 = np.array([4.0, 4.0, -8.0])
    else:
        N, dN = ref.line_basis(1, s)
        xe = X[nodes[:, :2]]
        d2 = np.zeros(2)
    x = np.einsum("qa,eai->eqi", N, xe)
    xs = np.einsum("qa,eai->eqi", dN, xe)
    xss = np.einsum("a,eai->ei", d2, xe)[:, None, :]
    J = np.linalg.norm(xs, axis=2)
    if np.any(J <= 1e-14 * max(1.0, np.abs(X).max())):
        bad = edges[np.argmin(J.min(axis=1))]
        raise GeometryError(f"degenerate boundary edge {int(bad)}")
    t = xs / J[..., None]
    n = np.stack([t[..., 1], -t[..., 0]], axis=-1)
    dt = (xss - np.sum(t * xss, axis=2, keepdims=True) * t) / J[..., None]
    dn = np.stack([dt[..., 1], -dt[..., 0]], axis=-1)
    kappa = np.sum(t * dn, axis=2) / J
    return {"x": x, "t": t, "n": n, "J": J, "kappa": kappa, "xs": xs}


def contour_points(mesh, tags):
    """Endpoints of the (possibly open) boundary made of edges with ``tags``.

    Returns a dict node -> (edge, s) for each endpoint, where ``s`` is 0 for
    a start point and 1 for an end point.
    """
    edges = mesh.edges_with_tag(*tags)
    be = mesh.boundary_edges[edges]
    starts = {int(a): int(e) for e, (a, _) in zip(edges, be)}
    ends = {int(b): int(e) for e, (_, b) in zip(edges, be)}
    out = {}
    for v, e in starts.items():
        if v not in ends:
            out[v] = (e, 0.0)
    for v, e in ends.items():
        if v not in starts:
            out[v] = (e, 1.0)
    return out


def frame_at(mesh, edge, local_coord, displacement=None) -> SurfaceFrame:
    if not 0.0 <= local_coord <= 1.0:
        raise UsageError("local_coord must lie in [0, 1]")
    if not 0 <= int(edge) < len(mesh.boundary_edges):
        raise UsageError(f"{edge} is not a boundary edge index")
    g = edge_geometry(mesh, [edge], [local_coord], displacement)
    t = g["t"][0, 0]
    n = g["n"][0, 0]
    n_S = None
    if local_coord in (0.0, 1.0):
        tag = mesh.boundary_tags[int(edge)]
        v = int(mesh.boundary_edges[int(edge), 0 if local_coord == 0.0 else 1])
        ends = contour_points(mesh, (tag,))
        if v in ends:
            n_S = -t if local_coord == 0.0 else t.copy()
    return SurfaceFrame(g["x"][0, 0], n, t, n_S, np.eye(2) - np.outer(n, n),
                        float(g["J"][0, 0]), float(g["kappa"][0, 0]))


# ---------------------------------------------------------- field values

def _cell_eval(mesh, space, coeffs, edges, s, displacement):
    """Value and full gradient of a domain field at edge points (E, nq)."""
    X = _positions(mesh, displacement)
    ck = mesh.boundary_edge_cells[edges]
    cn = mesh.cell_nodes[ck[:, 0]]
    vals = np.empty((len(edges), len(s)))
    grads = np.empty((len(edges), len(s), 2))
    nloc = 3 if space.degree == 1 else 6
    for i, (c, k) in enumerate(ck):
        xi = ref.edge_to_ref(int(k), s)
        _, dN2 = ref.p2_tri(xi)
        Nf, dNf = ref.tri_basis(space.degree, xi)
        jac = np.einsum("ai,qaj->qij", X[cn[i]], dN2)
        inv = np.linalg.inv(jac)
        c_loc = np.asarray(coeffs)[space.slot[cn[i, :nloc]]]
        vals[i] = Nf @ c_loc
        grads[i] = np.einsum("a,qaj,qji->qi", c_loc, dNf, inv)
    return vals, grads


def _boundary_eval(mesh, space, coeffs, edges, s, geo):
    nodes = mesh.boundary_edge_nodes[edges][:, : space.degree + 1]
    N, dN = ref.line_basis(space.degree, s)
    c = np.asarray(coeffs)[space.slot[nodes]]
    if np.any(space.slot[nodes] < 0):
        raise UsageError("field is not defined on these edges")
    vals = np.einsum("qa,ea->eq", N, c)
    ds = np.einsum("qa,ea->eq", dN, c) / geo["J"]
    return vals, ds[..., None] * geo["t"]


def evaluate_on_edges(field, mesh, edges, s, displacement=None, need_grad=False):
    """Values, full gradient (or None) and surface gradient of ``field``.

    ``field`` is either a callable ``phi(x)`` of a single point written with
    ``jax.numpy`` (its gradient comes from autodiff) or a
    :class:`DiscreteField`.
    """
    edges = np.atleast_1d(np.asarray(edges, dtype=np.int64))
    s = np.atleast_1d(np.asarray(s, float))
    geo = edge_geometry(mesh, edges, s, displacement)
    t = geo["t"]
    if callable(field):
        pts = geo["x"].reshape(-1, 2)
        f, g = _as_vectorised(field)
        vals = np.asarray(f(jnp.asarray(pts))).reshape(geo["J"].shape)
        grad = np.asarray(g(jnp.asarray(pts))).reshape(t.shape)
    elif isinstance(field, DiscreteField):
        if field.space.on_boundary:
            if need_grad:
                raise UsageError("a boundary-only field has no volume gradient")
            vals, sg = _boundary_eval(mesh, field.space, field.coeffs, edges, s, geo)
            return vals, None, sg, geo
        vals, grad = _cell_eval(mesh, field.space, field.coeffs, edges, s, displacement)
    else:
        raise UsageError("field must be a callable or a DiscreteField")
    sg = np.sum(grad * t, axis=2, keepdims=True) * t
    return vals, grad, sg, geo


def surface_gradient(field, mesh, edge, local_coord, displacement=None) -> np.ndarray:
    """``I_S . grad phi`` at one boundary point."""
    _, _, sg, _ = evaluate_on_edges(field, mesh, [edge], [local_coord], displacement)
    return sg[0, 0]


def gradient(field, mesh, edge, local_coord, displacement=None) -> np.ndarray:
    """Full gradient at a boundary point; boundary-only fields raise."""
    _, g, _, _ = evaluate_on_edges(field, mesh, [edge], [local_coord], displacement, need_grad=True)
    return g[0, 0]


def sample_operators(field, mesh, edge, local_coord, displacement=None) -> OperatorSample:
    vals, g, sg, geo = evaluate_on_edges(field, mesh, [edge], [local_coord], displacement)
    cv = -geo["n"][0, 0] * geo["kappa"][0, 0] * vals[0, 0]
    return OperatorSample(None if g is None else g[0, 0], sg[0, 0], cv)


# -------------------------------------------------------- weak operators

def boundary_space(mesh, tags, degree=2):
    return make_space(mesh, "boundary_scalar", degree, tags=tuple(tags))


def _edge_loop(mesh, space, nq=6):
    edges = mesh.edges_with_tag(*space.support)
    s, w = ref.GAUSS_1D(nq)
    N, dN = ref.line_basis(space.degree, s)
    rows = space.slot[mesh.boundary_edge_nodes[edges][:, : space.degree + 1]]
    return edges, s, w, N, dN, rows


def boundary_mass(mesh, space, displacement=None, nq=6):
    edges, s, w, N, _, rows = _edge_loop(mesh, space, nq)
    geo = edge_geometry(mesh, edges, s, displacement)
    Me = np.einsum("q,eq,qa,qb->eab", w, geo["J"], N, N)
    r = np.broadcast_to(rows[:, :, None], Me.shape).ravel()
    c = np.broadcast_to(rows[:, None, :], Me.shape).ravel()
    return sp.coo_matrix((Me.ravel(), (r, c)), shape=(space.n_slots,) * 2).tocsr()


def _resolve_contour(mesh, tags, contour_terms):
    ends = contour_points(mesh, tags)
    if not ends:
        return {}
    if contour_terms is None:
        raise UsageError("open boundary: contour data (n_S at the endpoints) must be supplied")
    if isinstance(contour_terms, str) and contour_terms == "auto":
        out = {}
        for v, (e, sv) in ends.items():
            fr = frame_at(mesh, e, sv)
            out[v] = (e, sv, fr.n_S)
        return out
    out = {}
    for v, nS in dict(contour_terms).items():
        if int(v) not in ends:
            raise UsageError(f"node {v} is not an endpoint of the boundary")
        e, sv = ends[int(v)]
        out[int(v)] = (e, sv, np.asarray(nS, float))
    return out


def weak_exterior_differential(test_space, phi, mesh, contour_terms=None, displacement=None, nq=6):
    """Load vector ``b[i] = sum_Gamma n_S psi_i phi - int grad_S psi_i phi``.

    Returns an array (n_slots, 2).  ``phi`` is a callable or DiscreteField.
    """
    tags = test_space.support
    edges, s, w, N, dN, rows = _edge_loop(mesh, test_space, nq)
    vals, _, _, geo = evaluate_on_edges(phi, mesh, edges, s, displacement)
    # grad_S psi_a * J = dN_a/ds * t
    b_e = -np.einsum("q,qa,eqi,eq->eai", w, dN, geo["t"], vals)
    out = np.zeros((test_space.n_slots, 2))
    np.add.at(out, rows, b_e)
    for v, (e, sv, nS) in _resolve_contour(mesh, tags, contour_terms).items():
        val, _, _, _ = evaluate_on_edges(phi, mesh, [e], [sv], displacement)
        out[test_space.slot[v]] += nS * val[0, 0]
    return out


def weak_exterior_divergence(test_space, w_field, mesh, contour_terms=None, displacement=None, nq=6):
    """Load ``b[i] = sum_Gamma psi_i n_S . w - int grad_S psi_i . w``.

    ``w_field(x, geo)`` returns the vector field at edge points given the
    local geometry dict (so it may depend on ``n``).
    """
    edges, s, wq, N, dN, rows = _edge_loop(mesh, test_space, nq)
    geo = edge_geometry(mesh, edges, s, displacement)
    W = np.asarray(w_field(geo["x"], geo))
    b_e = -np.einsum("q,qa,eqi,eqi->ea", wq, dN, geo["t"], W)
    out = np.zeros(test_space.n_slots)
    np.add.at(out, rows, b_e)
    for v, (e, sv, nS) in _resolve_contour(mesh, test_space.support, contour_terms).items():
        g = edge_geometry(mesh, [e], [sv], displacement)
        out[test_space.slot[v]] += float(nS @ np.asarray(w_field(g["x"], g))[0, 0])
    return out


def recover_curvature_vector(mesh, tag="bubble", degree=2, displacement=None):
    """Nodal ``D_S 1`` (the mean curvature vector) by L2 projection."""
    space = boundary_space(mesh, (tag,), degree)
    b = weak_exterior_differential(space, lambda x: 1.0 + 0.0 * x[0], mesh, displacement=displacement)
    M = boundary_mass(mesh, space, displacement).tocsc()
    lu = spla.splu(M)
    H = np.column_stack([lu.solve(b[:, 0]), lu.solve(b[:, 1])])
    return space, H


def curvature_error(mesh, center, radius, tag="bubble", degree=2, nq=6):
    """L2 norm over the curve of (recovered D_S 1) - n_exact / radius."""
    space, H = recover_curvature_vector(mesh, tag, degree)
    edges, s, w, N, _, rows = _edge_loop(mesh, space, nq)
    geo = edge_geometry(mesh, edges, s)
    Hq = np.einsum("qa,eai->eqi", N, H[rows])
    r = geo["x"] - np.asarray(center)
    exact = -r / np.linalg.norm(r, axis=2, keepdims=True) / radius
    err2 = np.einsum("q,eq,eq->", w, geo["J"], np.sum((Hq - exact) ** 2, axis=2))
    return float(np.sqrt(err2))


# ---------------------------------------------------- Stokes-type checks

def _cell_quadrature(mesh, displacement=None, degree=8):
    X = _positions(mesh, displacement)
    pts, wts = ref.TRI_RULE(degree)
    _, dN2 = ref.p2_tri(pts)
    N2, _ = ref.p2_tri(pts)
    if mesh.is_quadratic:
        xe = X[mesh.cell_nodes]
        jac = np.einsum("cai,qaj->cqij", xe, dN2)
        x = np.einsum("qa,cai->cqi", N2, xe)
    else:
        N1, dN1 = ref.p1_tri(pts)
        xe = X[mesh.cells]
        jac = np.einsum("cai,qaj->cqij", xe, dN1)
        x = np.einsum("qa,cai->cqi", N1, xe)
    det = np.linalg.det(jac)
    return x, wts[None, :] * det


def _edge_quadrature(mesh, tags=None, displacement=None, nq=8):
    edges = np.arange(len(mesh.boundary_edges)) if tags is None else mesh.edges_with_tag(*tags)
    s, w = ref.GAUSS_1D(nq)
    geo = edge_geometry(mesh, edges, s, displacement)
    return geo, w[None, :] * geo["J"]


def _as_vectorised(phi):
    # one compiled graph per call is much cheaper than eager op-by-op dispatch
    return jax.jit(jax.vmap(phi)), jax.jit(jax.vmap(jax.grad(phi)))


def check_stokes_volume(phi, mesh, displacement=None) -> np.ndarray:
    """``int_V grad phi - oint n phi`` by quadrature (phi written with jax.numpy)."""
    f, g = _as_vectorised(phi)
    x, wv = _cell_quadrature(mesh, displacement)
    vol = np.einsum("cq,cqi->i", wv, np.asarray(g(jnp.asarray(x.reshape(-1, 2)))).reshape(x.shape))
    geo, ws = _edge_quadrature(mesh, displacement=displacement)
    fv = np.asarray(f(jnp.asarray(geo["x"].reshape(-1, 2)))).reshape(ws.shape)
    return vol - np.einsum("eq,eq,eqi->i", ws, fv, geo["n"])


def check_reciprocal_volume(psi, phi, mesh, displacement=None) -> np.ndarray:
    """``int psi grad phi + int (grad psi) phi - oint n psi phi``."""
    fp, gp = _as_vectorised(phi)
    fs, gs = _as_vectorised(psi)
    x, wv = _cell_quadrature(mesh, displacement)
    pts = jnp.asarray(x.reshape(-1, 2))
    sh = x.shape
    integrand = (np.asarray(fs(pts))[:, None] * np.asarray(gp(pts))
                 + np.asarray(gs(pts)) * np.asarray(fp(pts))[:, None]).reshape(sh)
    vol = np.einsum("cq,cqi->i", wv, integrand)
    geo, ws = _edge_quadrature(mesh, displacement=displacement)
    bp = jnp.asarray(geo["x"].reshape(-1, 2))
    prod = (np.asarray(fs(bp)) * np.asarray(fp(bp))).reshape(ws.shape)
    return vol - np.einsum("eq,eq,eqi->i", ws, prod, geo["n"])


def check_stokes_boundary(phi, mesh, tags=("bubble",), mode="strong", displacement=None, nq=8):
    """``oint_Sigma D_S phi`` over a closed boundary.

    ``mode='strong'`` integrates ``grad_S phi - n (div_S n) phi`` pointwise on
    the curved edges, so the result measures the curvature discretisation
    error.  ``mode='weak'`` uses the weak form with test function 1, which
    telescopes exactly.
    """
    if contour_points(mesh, tags):
        raise UsageError("boundary Stokes check needs a closed boundary")
    if mode == "weak":
        space = boundary_space(mesh, tags, 2 if mesh.is_quadratic else 1)
        b = weak_exterior_differential(space, phi, mesh, displacement=displacement)
        return b.sum(axis=0)
    if mode != "strong":
        raise UsageError("mode must be 'strong' or 'weak'")
    edges = mesh.edges_with_tag(*tags)
    s, w = ref.GAUSS_1D(nq)
    vals, _, sg, geo = evaluate_on_edges(phi, mesh, edges, s, displacement)
    D = sg - geo["n"] * (geo["kappa"] * vals)[..., None]
    return np.einsum("q,eq,eqi->i", w, geo["J"], D)


def _corner_jumps(mesh, tags, displacement=None):
    """Tangent jump ``t_in - t_out`` at every vertex of a closed boundary."""
    edges = mesh.edges_with_tag(*tags)
    g0 = edge_geometry(mesh, edges, [0.0], displacement)["t"][:, 0]
    g1 = edge_geometry(mesh, edges, [1.0], displacement)["t"][:, 0]
    be = mesh.boundary_edges[edges]
    t_in = {int(b): g1[i] for i, (_, b) in enumerate(be)}
    return {int(a): t_in[int(a)] - g0[i] for i, (a, _) in enumerate(be)}


def check_reciprocal_boundary(psi, phi, mesh, tags=("bubble",), displacement=None, nq=8):
    """``oint psi D_S phi + oint (grad_S psi) phi`` on a closed curve.

    ``D_S`` is taken in the distributional sense: the smooth part
    ``grad_S - n div_S n`` inside each edge plus the tangent jump at each
    vertex.  The identity then holds to quadrature accuracy on any piecewise
    polynomial curve.
    """
    if contour_points(mesh, tags):
        raise UsageError("boundary reciprocal check needs a closed boundary")
    edges = mesh.edges_with_tag(*tags)
    s, w = ref.GAUSS_1D(nq)
    vp, _, sgp, geo = evaluate_on_edges(phi, mesh, edges, s, displacement)
    vs, _, sgs, _ = evaluate_on_edges(psi, mesh, edges, s, displacement)
    D = sgp - geo["n"] * (geo["kappa"] * vp)[..., None]
    total = np.einsum("q,eq,eqi->i", w, geo["J"], vs[..., None] * D + sgs * vp[..., None])
    X = _positions(mesh, displacement)
    f, _ = _as_vectorised(psi)
    g, _ = _as_vectorised(phi)
    for v, jump in _corner_jumps(mesh, tags, displacement).items():
        pt = jnp.asarray(X[v][None, :])
        total = total - float(f(pt)[0] * g(pt)[0]) * jump
    return total
