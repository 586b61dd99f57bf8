"""Invariant suites for the boundary calculus and the perturbation formulas.

Each check returns a :class:`Check`; :func:`run_selftests` runs them all.
The same routines back the ``selftest`` command and part of the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np

from . import dbp, surface
from .fem import reference as ref
from .fem.assembly import DirichletBC, PointConstraint, Term, WeakForm, assemble, residual
from .fem.solve import solve_linear
from .fem.spaces import BlockLayout, make_space
from .mesh import build_disk_mesh, build_square_mesh


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    limit: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: {self.value:.3e} (limit {self.limit:.1e}) {self.detail}".rstrip()


def _below(name, value, limit, detail=""):
    return Check(name, float(value), limit, bool(value < limit), detail)


def _above(name, value, limit, detail=""):
    return Check(name, float(value), limit, bool(value >= limit), detail)


def observed_orders(h, err):
    h, err = np.asarray(h, float), np.asarray(err, float)
    return np.log(err[:-1] / err[1:]) / np.log(h[:-1] / h[1:])


def disk(n, radius=1.0):
    return build_disk_mesh(radius, 2 * np.pi * radius / n, n_boundary=n)


def random_trig(rng, modes=3):
    """Smooth random function of the polar angle, written with jax.numpy."""
    a = rng.standard_normal(modes + 1)
    b = rng.standard_normal(modes + 1)

    def f(x):
        th = jnp.arctan2(x[1], x[0])
        return sum(a[k] * jnp.cos(k * th) + b[k] * jnp.sin(k * th) for k in range(modes + 1))
    return f


def random_poly(rng, degree=3):
    c = rng.standard_normal((degree + 1, degree + 1))

    def f(x):
        return sum(c[i, j] * x[0] ** i * x[1] ** j
                   for i in range(degree + 1) for j in range(degree + 1 - i))
    return f


# ------------------------------------------------------------ calculus

def check_volume_identities(rng) -> list:
    mesh = build_square_mesh(6, 1.0, (-0.3, 0.2)).straightened()
    phi, psi = random_poly(rng, 3), random_poly(rng, 2)
    r1 = np.abs(surface.check_stokes_volume(phi, mesh)).max()
    r2 = np.abs(surface.check_reciprocal_volume(psi, phi, mesh)).max()
    return [_below("volume Stokes theorem", r1, 1e-12),
            _below("volume reciprocal theorem", r2, 1e-12)]


def check_boundary_stokes_order(rng, ns=(16, 32, 64)) -> Check:
    def phi(x):
        return 1.0 + 0.4 * x[0] ** 2 - 0.3 * x[0] * x[1] + 0.2 * x[1] ** 3

    err = [np.linalg.norm(surface.check_stokes_boundary(phi, disk(n))) for n in ns]
    order = observed_orders([1.0 / n for n in ns], err).min()
    return _above("boundary Stokes theorem order", order, 1.9, f"errors {np.round(err, 12).tolist()}")


def check_curvature_order(ns=(16, 32, 64), radius=0.7) -> Check:
    err = [surface.curvature_error(disk(n, radius), (0.0, 0.0), radius) for n in ns]
    order = observed_orders([1.0 / n for n in ns], err).min()
    return _above("curvature vector recovery order", order, 1.9)


# ------------------------------------------------------------ perturbations

def check_contour_variation(rng, count=1000) -> Check:
    n, n_S, A = dbp.random_frames(rng, count)
    a = dbp.delta_contour_normal_geometric(n, n_S, A)
    b = dbp.delta_contour_normal_line_element(n, n_S, A)
    return _below("contour-normal variation, two derivations", np.abs(a - b).max(), 1e-14)


def check_form_equivalence(rng, n=24) -> list:
    mesh = disk(n)
    phi = random_poly(rng, 3)
    rho = dbp.PerturbationField.normal(random_trig(rng))
    bc = dbp.MixedBcData(-1.0, random_poly(rng, 2), lambda x, p: p ** 2)
    space = make_space(mesh, "boundary_scalar", 2, tags=("bubble",))
    out = []

    def pair(fn, *args):
        a = np.asarray(fn(*args, form="normal_scalar"))
        b = np.asarray(fn(*args, form="general_vector"))
        return np.abs(a - b).max() / max(1.0, np.abs(a).max())

    out.append(_below("general/normal: domain integral", pair(dbp.perturbed_domain_integral, phi, rho, mesh), 1e-12))
    out.append(_below("general/normal: boundary integral", pair(dbp.perturbed_boundary_integral, phi, rho, mesh), 1e-12))
    out.append(_below("general/normal: mixed condition",
                      pair(dbp.perturbed_mixed_bc_residual, phi, rho, bc, space, mesh), 1e-12))
    out.append(_below("general/normal: exterior operator",
                      pair(dbp.perturbed_exterior_operator_load, phi, rho, space, mesh), 1e-12))
    return out


def check_linearity(rng, n=24) -> Check:
    mesh = disk(n)
    phi = random_poly(rng, 2)
    space = make_space(mesh, "boundary_scalar", 2, tags=("bubble",))
    r1, r2 = random_trig(rng), random_trig(rng)
    a, b = rng.standard_normal(2)
    P = dbp.PerturbationField.normal

    def rho_n(x):
        return a * r1(x) + b * r2(x)

    def load(r):
        return dbp.perturbed_exterior_operator_load(phi, P(r), space, mesh)

    zero = load(lambda x: 0.0 * x[0])
    lin = load(rho_n) - zero
    sep = a * (load(r1) - zero) + b * (load(r2) - zero)
    return _below("linearity in rho", np.abs(lin - sep).max() / np.abs(lin).max(), 1e-12)


def check_sigma_derivative(rng) -> Check:
    bc = dbp.MixedBcData(-1.0, lambda x: 0.0 * x[0], lambda x, p: jnp.sin(x[0]) * p ** 3 + p ** 2)
    worst = max(bc.check_sigma_derivative(rng.uniform(-1, 1, 2), rng.uniform(0.5, 2.0))
                for _ in range(10))
    return _below("source derivative vs finite difference", worst, 1e-6)


# ------------------------------------------------------------ Stokes pair

def _mms_velocity(x):
    s, c, pi = jnp.sin, jnp.cos, jnp.pi
    return jnp.stack([pi * s(pi * x[0]) ** 2 * s(2 * pi * x[1]),
                      -pi * s(2 * pi * x[0]) * s(pi * x[1]) ** 2])


def _mms_pressure(x):
    return jnp.cos(jnp.pi * x[0]) * jnp.cos(jnp.pi * x[1])


def _mms_force(x):
    """Body force for the divergence-free pair above: -lap u + grad p."""
    lap = jnp.trace(jax.hessian(_mms_velocity)(x), axis1=1, axis2=2)
    return -lap + jax.grad(_mms_pressure)(x)


def _mms_kernel(geo, f, k):
    from .bubble import stokes_kernel

    out = stokes_kernel("u", "p")(geo, f, k)
    _, G = out["u"]
    return {"u": (jax.vmap(_mms_force)(geo.x), G), "p": out["p"]}


def stokes_mms_form(n: int) -> WeakForm:
    """P2/P1 Stokes on an ``n x n`` unit square with exact Dirichlet velocity and
    the pressure pinned at the origin."""
    mesh = build_square_mesh(n)
    V = make_space(mesh, "domain_vector", 2)
    P = make_space(mesh, "domain_scalar", 1)
    lay = BlockLayout({"u": V, "p": P, "pref": make_space(mesh, "global_scalar")})
    bnodes = mesh.nodes_with_tag("wall")
    ubc = np.asarray(jax.vmap(_mms_velocity)(mesh.points[bnodes]))
    corner = int(np.argmin(np.hypot(*mesh.points[: mesh.n_vertices].T)))
    return WeakForm(mesh, lay, [Term(_mms_kernel, ["u", "p"], ["u", "p"], name="mms")],
                    dirichlet=[DirichletBC("u", V.node_dofs(bnodes), ubc.ravel())],
                    point_constraints=[PointConstraint("p", corner, "pref", 1.0)])


def stokes_mms_errors(n: int):
    """L2 velocity and pressure errors of the P2/P1 pair on an ``n x n`` unit square."""
    form = stokes_mms_form(n)
    mesh, lay = form.mesh, form.layout
    V, P = lay.spaces["u"], lay.spaces["p"]
    x = lay.zeros()
    x.data[:] += solve_linear(assemble(form, x)).data
    U, Pn = V.nodal(x["u"]), P.nodal(x["p"])[:, 0]

    pts, _ = ref.TRI_RULE(8)
    N2, _ = ref.p2_tri(pts)
    N1, _ = ref.p1_tri(pts)
    xq, wq = surface._cell_quadrature(mesh)
    ue = np.asarray(jax.vmap(_mms_velocity)(xq.reshape(-1, 2))).reshape(xq.shape)
    pe = np.asarray(jax.vmap(_mms_pressure)(xq.reshape(-1, 2))).reshape(wq.shape)
    uh = np.einsum("qa,cai->cqi", N2, U[mesh.cell_nodes])
    ph = np.einsum("qa,ca->cq", N1, Pn[mesh.cells])
    eu = np.sqrt(np.sum(wq * np.sum((uh - ue) ** 2, axis=2)))
    ep = np.sqrt(np.sum(wq * (ph - pe) ** 2))
    return float(eu), float(ep)


def check_stokes_convergence(ns=(8, 16, 32, 64)) -> list:
    errs = np.array([stokes_mms_errors(n) for n in ns])
    h = [1.0 / n for n in ns]
    ou, op = observed_orders(h, errs[:, 0]).min(), observed_orders(h, errs[:, 1]).min()
    return [_above("manufactured Stokes velocity order", ou, 2.9),
            _above("manufactured Stokes pressure order", op, 1.9)]


# ------------------------------------------------------------ Jacobians

def jacobian_columns(layout, rng, count=50):
    """Random columns, at least two from every block (fewer if the block is smaller)."""
    picks = []
    for name in layout.names:
        sl = layout.slice(name)
        size = sl.stop - sl.start
        picks += list(sl.start + rng.choice(size, min(2, size), replace=False))
    rest = np.setdiff1d(np.arange(layout.size), picks)
    extra = max(0, count - len(picks))
    picks += list(rng.choice(rest, min(extra, len(rest)), replace=False))
    return np.array(sorted(picks[:max(count, len(layout.names))]))


def jacobian_fd_error(form, state, rng, count=50, step=1e-6):
    """Worst relative mismatch between analytic Jacobian columns and central differences."""
    J = assemble(form, state).matrix.tocsc()
    floor = 1e-8 * max(abs(J).max(), 1.0)
    worst = 0.0
    for j in jacobian_columns(form.layout, rng, count):
        xp, xm = state.copy(), state.copy()
        xp.data[j] += step
        xm.data[j] -= step
        fd = (residual(form, xp) - residual(form, xm)) / (2 * step)
        col = J[:, j].toarray().ravel()
        worst = max(worst, np.linalg.norm(col - fd) / max(np.linalg.norm(col), floor))
    return float(worst)


def run_selftests(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    checks = []
    checks += check_volume_identities(rng)
    checks.append(check_boundary_stokes_order(rng))
    checks.append(check_curvature_order())
    checks.append(check_contour_variation(rng))
    checks += check_form_equivalence(rng)
    checks.append(check_linearity(rng))
    checks.append(check_sigma_derivative(rng))
    return checks
