"""Periodic bubble train in a 2D channel: nonlinear shape solve and its linearisation.

Coordinates: the channel is ``[0, L] x [-1/2, 1/2]``, the bubble is centred
at ``(L/2, eps)`` and the frame travels with it, so the walls move at
``-V e_x``.  Unknowns of the nonlinear (zeroth-order) problem:

``u``     periodic P2 velocity
``p``     P1 pressure; its jump across the period enters weakly at the inlet
``disp``  P2 mesh displacement ``x - X`` (harmonic inside, boundary Poisson on the bubble)
``g``     P1 normal source of the boundary motion, paired with ``u . n = 0``
``tau``   periodic P2 wall traction (multiplier of the wall velocity)
``V, dp, pG, f, pref``  bubble speed, extra pressure drop, gas pressure,
          transverse body force and the pressure-reference multiplier.

Every term except the interior mesh Laplacian is integrated on the displaced
configuration, so Newton sees the full shape dependence.  The first-order
problem is linear in ``(u1, p1, rho1, tau1, V1, dp1, pG1, f1, pref1)`` and
is assembled on the converged zeroth-order configuration.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import jax.numpy as jnp
import numpy as np

from .errors import AssemblyError, ConfigurationError, ConvergenceError, DefdomError, GeometryError
from .fem.assembly import PointConstraint, Term, WeakForm, assemble
from .fem.solve import NewtonSettings, newton_solve, solve_linear
from .fem.spaces import BlockLayout, BlockVector, make_space
from .mesh import Mesh2D, build_channel_mesh, quality
from .motion import ale_term, fixed_boundary_conditions, require_closed

log = logging.getLogger(__name__)

POISEUILLE_GRADIENT = -12.0          # d p_P / dx for unit flow rate in a unit-height channel
GLOBALS0 = ("V", "dp", "pG", "f", "pref")
GLOBALS1 = ("V1", "dp1", "pG1", "f1", "pref1")


@dataclass(frozen=True)
class CaseConfig:
    Ca: float
    V_B: float
    L: float = 3.0
    epsilon: float = 0.0
    mesh_h: float = 0.05
    newton: NewtonSettings = field(default_factory=lambda: NewtonSettings(abs_tol=1e-10, max_iter=30))
    x_p: tuple | None = None
    n_bubble: int | None = None

    def __post_init__(self):
        if not self.Ca > 0:
            raise ConfigurationError("Ca must be positive")
        if not 0 < self.V_B < self.L:
            raise ConfigurationError("V_B must lie in (0, L) for a unit-height channel")
        r = self.radius
        if abs(self.epsilon) + r >= 0.5:
            raise ConfigurationError(f"bubble of radius {r:.4g} at offset {self.epsilon} touches the wall")
        if self.L <= 2 * r:
            raise ConfigurationError("period L must exceed the bubble diameter")
        if not self.mesh_h > 0:
            raise ConfigurationError("mesh_h must be positive")

    @property
    def radius(self) -> float:
        return math.sqrt(self.V_B / math.pi)

    def consts(self, **extra):
        c = {"Ca": self.Ca, "V_B": self.V_B, "L": self.L, "eps": self.epsilon}
        c.update(extra)
        return c


@dataclass
class ZerothState:
    config: CaseConfig
    mesh: Mesh2D
    vector: BlockVector
    history: list = field(default_factory=list)

    def _g(self, name):
        return self.vector.scalar(name)

    V0 = property(lambda s: s._g("V"))
    dp0 = property(lambda s: s._g("dp"))
    pG0 = property(lambda s: s._g("pG"))
    f0 = property(lambda s: s._g("f"))
    pref0 = property(lambda s: s._g("pref"))

    @property
    def layout(self):
        return self.vector.layout

    @property
    def displacement(self) -> np.ndarray:
        return self.layout.spaces["disp"].nodal(self.vector["disp"])

    @property
    def velocity(self) -> np.ndarray:
        return self.layout.spaces["u"].nodal(self.vector["u"])

    @property
    def pressure(self) -> np.ndarray:
        return _p1_to_nodes(self.mesh, self.layout.spaces["p"], self.vector["p"])

    @property
    def q(self) -> np.ndarray:
        nodes = self.mesh.nodes_with_tag("bubble")
        return self.displacement[nodes]

    @property
    def g(self) -> np.ndarray:
        return self.vector["g"].copy()

    @property
    def wall_traction(self) -> np.ndarray:
        return self.vector["tau"].reshape(-1, 2).copy()

    def bubble_area(self) -> float:
        return float(_bubble_moments(self.mesh, self.displacement)[0])

    def bubble_centroid(self) -> np.ndarray:
        m = _bubble_moments(self.mesh, self.displacement)
        return m[1:] / m[0]

    def quality(self):
        return quality(self.mesh, self.displacement)


@dataclass
class FirstState:
    zeroth: ZerothState
    vector: BlockVector
    sign: float = -1.0

    def _g(self, name):
        return self.vector.scalar(name)

    V1 = property(lambda s: s._g("V1"))
    dp1 = property(lambda s: s._g("dp1"))
    pG1 = property(lambda s: s._g("pG1"))
    f1 = property(lambda s: s._g("f1"))
    pref1 = property(lambda s: s._g("pref1"))

    @property
    def rho1(self) -> np.ndarray:
        return self.vector["rho"].copy()

    @property
    def velocity(self) -> np.ndarray:
        return self.vector.layout.spaces["u1"].nodal(self.vector["u1"])


# ------------------------------------------------------------- helpers

def _p1_to_nodes(mesh, space, coeffs):
    """P1 values on every node, mid-edge nodes by linear interpolation."""
    out = np.zeros(mesh.n_nodes)
    out[: mesh.n_vertices] = np.asarray(coeffs)[space.slot[: mesh.n_vertices]]
    if mesh.cell_midnodes is not None:
        for k in range(3):
            a, b = mesh.cells[:, k], mesh.cells[:, (k + 1) % 3]
            out[mesh.cell_midnodes[:, k]] = 0.5 * (out[a] + out[b])
    return out


def _bubble_moments(mesh, displacement=None):
    """Area and first moments of the hole, from its quadratic boundary."""
    from .fem.reference import GAUSS_1D
    from .surface import edge_geometry

    edges = mesh.edges_with_tag("bubble")
    s, w = GAUSS_1D(6)
    geo = edge_geometry(mesh, edges, s, displacement)
    ws = w[None, :] * geo["J"]
    x, y = geo["x"][..., 0], geo["x"][..., 1]
    nx, ny = geo["n"][..., 0], geo["n"][..., 1]
    # the liquid normal points into the hole, hence the minus signs
    area = -np.sum(ws * nx * x)
    mx = -np.sum(ws * nx * x * x) / 2.0
    my = -np.sum(ws * ny * y * y) / 2.0
    return np.array([area, mx, my])


def pressure_reference_node(mesh, x_p=None) -> int:
    """Inlet vertex closest to ``x_p`` (default: the inlet point on the centreline)."""
    target = np.array([0.0, 0.0] if x_p is None else x_p, float)
    cand = mesh.nodes_with_tag("inlet")
    cand = cand[cand < mesh.n_vertices]
    return int(cand[np.argmin(np.hypot(*(mesh.points[cand] - target).T))])


def shift_mesh(mesh: Mesh2D, dy: float, radius: float, center, gap: float) -> Mesh2D:
    """Move the hole rigidly by ``dy`` along ``y`` with a smooth blend to zero.

    Nodes within ``radius`` of the centre move rigidly, nodes beyond
    ``radius + gap`` stay, so meshes for nearby offsets share their
    topology and finite differences in the offset stay smooth.
    """
    d = np.hypot(*(mesh.points - np.asarray(center, float)).T)
    s = np.clip((d - radius) / gap, 0.0, 1.0)
    w = 1.0 - s * s * (3.0 - 2.0 * s)
    pts = mesh.points.copy()
    pts[:, 1] += dy * w
    moved = mesh.with_points(pts)
    c = dict(moved.curved)
    if "bubble" in c:
        cx, cy = c["bubble"]["center"]
        c["bubble"] = dict(c["bubble"], center=(cx, cy + dy))
    return Mesh2D(pts, moved.cells, moved.boundary_edges, moved.boundary_tags,
                  moved.cell_midnodes, moved.periodic_pairs, c).validate()


def case_mesh(config: CaseConfig) -> Mesh2D:
    return build_channel_mesh(config.L, config.radius, config.epsilon, config.mesh_h,
                              n_bubble=config.n_bubble)


# -------------------------------------------------------------- kernels

@lru_cache(maxsize=None)
def stokes_kernel(u, p):
    def kernel(geo, f, k):
        gu = f[u].grad                      # gu[q, c, i] = d u_c / d x_i
        P = f[p].val
        eye = jnp.eye(2)
        tau = -P[:, None, None] * eye + gu + jnp.swapaxes(gu, 1, 2)
        div = gu[:, 0, 0] + gu[:, 1, 1]
        return {u: (None, -tau), p: div}
    return kernel


@lru_cache(maxsize=None)
def _wall_kernel(u, tau, V):
    def kernel(geo, f, k):
        vel = f[u].val + jnp.stack([f[V].val, 0.0 * f[V].val], 1)
        return {u: f[tau].val, tau: vel}
    return kernel


def _inlet0(geo, f, k):
    jump = f["dp"].val - POISEUILLE_GRADIENT * k["L"]
    return {"u": jnp.stack([jump, 0.0 * jump], 1),
            "dp": f["u"].val[:, 0] + f["V"].val - 1.0}


def _bubble0(geo, f, k):
    n = geo.n
    y = geo.x[:, 1]
    load = -f["pG"].val + f["f"].val * y
    nq = n.shape[0]
    tension = -jnp.broadcast_to(jnp.eye(2), (nq, 2, 2)) / k["Ca"]
    return {"u": (load[:, None] * n, tension),
            "disp": (f["g"].val[:, None] * n, f["disp"].sgrad),
            "g": jnp.sum(f["u"].val * n, 1)}


def _moments0(geo, f, k):
    n, x = geo.n, geo.x
    return {"pG": -n[:, 0] * x[:, 0],
            "f": -n[:, 1] * x[:, 1] ** 2 / 2.0,
            "V": -n[:, 0] * x[:, 0] ** 2 / 2.0}


def _inlet1(geo, f, k):
    return {"u1": jnp.stack([f["dp1"].val, 0.0 * f["dp1"].val], 1),
            "dp1": f["u1"].val[:, 0] + f["V1"].val}


def _bubble1(geo, f, k):
    n, t, kap = geo.n, geo.t, geo.kappa
    y = geo.x[:, 1]
    rho = f["rho"].val
    srho = f["rho"].sgrad
    ca = k["Ca"]
    eye = jnp.eye(2)
    gu0 = f["u"].grad
    jump0 = f["pG"].val - f["f"].val * y - f["p"].val
    T0 = jump0[:, None, None] * eye + gu0 + jnp.swapaxes(gu0, 1, 2)
    grad_n = kap[:, None, None] * t[:, :, None] * t[:, None, :]
    # G[q, j, i] multiplies d_Si u~_j
    G = -rho[:, None, None] * jnp.swapaxes(T0, 1, 2)
    G = G + (-rho * kap)[:, None, None] * eye / ca
    G = G + rho[:, None, None] * jnp.swapaxes(grad_n, 1, 2) / ca
    G = G - n[:, :, None] * srho[:, None, :] / ca
    load = -f["pG1"].val + f["f1"].val * y
    V = load[:, None] * n + jnp.stack([0.0 * rho, rho * f["f"].val], 1)
    return {"u1": (V, G),
            "rho": (jnp.sum(f["u1"].val * n, 1), rho[:, None] * f["u"].val)}


def _moments1(geo, f, k):
    rho, x = f["rho"].val, geo.x
    return {"pG1": rho, "f1": x[:, 1] * rho, "V1": x[:, 0] * rho}


# ------------------------------------------------------------ zeroth order

def zeroth_layout(mesh):
    glob = make_space(mesh, "global_scalar")
    spaces = {
        "u": make_space(mesh, "domain_vector", 2, periodic=True),
        "p": make_space(mesh, "domain_scalar", 1),
        "disp": make_space(mesh, "domain_vector", 2),
        "g": make_space(mesh, "boundary_scalar", 1, tags=("bubble",)),
        "tau": make_space(mesh, "boundary_vector", 2, tags=("wall",), periodic=True),
    }
    spaces.update({name: glob for name in GLOBALS0})
    return BlockLayout(spaces)


def zeroth_form(config: CaseConfig, mesh: Mesh2D, layout=None) -> WeakForm:
    require_closed(mesh, "bubble")
    lay = layout or zeroth_layout(mesh)
    disp_space = lay.spaces["disp"]
    terms = [
        Term(stokes_kernel("u", "p"), ["u", "p"], ["u", "p", "disp"], geometry="disp", name="stokes"),
        ale_term(disp_space, mesh, "disp"),
        Term(_wall_kernel("u", "tau", "V"), ["u", "tau"], ["u", "tau", "V", "disp"], where="edges",
             tags=("wall",), geometry="disp", name="wall"),
        Term(_inlet0, ["u", "dp"], ["u", "dp", "V", "disp"], where="edges", tags=("inlet",),
             geometry="disp", name="inlet"),
        Term(_bubble0, ["u", "disp", "g"], ["u", "disp", "g", "pG", "f"], where="edges",
             tags=("bubble",), geometry="disp", name="bubble"),
        Term(_moments0, ["pG", "f", "V"], ["disp"], where="edges", tags=("bubble",),
             geometry="disp", name="moments"),
    ]
    VB = config.V_B
    constants = {"pG": -VB, "f": -VB * config.epsilon, "V": -VB * config.L / 2.0}
    node = pressure_reference_node(mesh, config.x_p)
    return WeakForm(mesh, lay, terms,
                    dirichlet=fixed_boundary_conditions(disp_space, mesh, "disp"),
                    point_constraints=[PointConstraint("p", node, "pref")],
                    constants=constants, consts=config.consts())


def initial_state(config: CaseConfig, layout, mesh) -> BlockVector:
    """Circular bubble, Poiseuille-like flow and Laplace gas pressure."""
    x = layout.zeros()
    V = 1.5
    u = layout.spaces["u"]
    x["u"] = u.interpolate(mesh, lambda P: np.column_stack([1.5 * (1 - 4 * P[:, 1] ** 2) - V,
                                                            0 * P[:, 1]]))
    x["V"] = V
    x["pG"] = 1.0 / (config.Ca * config.radius)
    return x


def _newton(config, mesh, initial, Ca):
    cfg = replace(config, Ca=Ca)
    form = zeroth_form(cfg, mesh, initial.layout)
    return newton_solve(form, initial, cfg.newton)


def solve_zeroth(config: CaseConfig, mesh: Mesh2D | None = None,
                 initial: BlockVector | None = None, max_steps: int = 40) -> ZerothState:
    """Nonlinear solve with Ca continuation.

    The first attempt goes straight to ``config.Ca``.  On failure the solve
    restarts from a smaller Ca (near-circular shape) and steps back up,
    shrinking the step whenever Newton fails.
    """
    mesh = mesh or case_mesh(config)
    lay = zeroth_layout(mesh) if initial is None else initial.layout
    start = initial if initial is not None else initial_state(config, lay, mesh)
    target = config.Ca
    solved_ca, state = None, None
    trial = target
    history = []
    last_exc = None
    for _ in range(max_steps):
        base = state if state is not None else start
        try:
            x = _newton(config, mesh, base, trial)
        except (ConvergenceError, AssemblyError) as exc:
            last_exc = exc
            log.info("Ca=%.4g failed: %s", trial, exc)
            if solved_ca is None:
                trial = trial / 2.0
            else:
                trial = math.sqrt(solved_ca * trial)
                if abs(trial - solved_ca) < 1e-6 * target:
                    break
            continue
        history.extend(x.history)
        solved_ca, state = trial, x
        log.info("converged at Ca=%.4g", trial)
        if trial == target:
            return ZerothState(config, mesh, state, history)
        trial = min(target, 2.0 * trial)
    if isinstance(last_exc, AssemblyError):
        raise GeometryError(f"mesh inverted during Ca continuation ({last_exc}); "
                            "try a finer mesh or smaller Ca steps") from last_exc
    hist = getattr(last_exc, "history", [])
    raise ConvergenceError(f"no converged state at Ca={target}: {last_exc}", None, hist)


def zeroth_residual(state: ZerothState) -> np.ndarray:
    form = zeroth_form(state.config, state.mesh, state.layout)
    return -assemble(form, state.vector, jacobian=False).rhs.data


def wall_force(state: ZerothState) -> float:
    """``int_W tau_y``, the transverse traction the walls exert on the liquid."""
    from .fem.reference import GAUSS_1D
    from .surface import edge_geometry

    mesh = state.mesh
    sp = state.layout.spaces["tau"]
    edges = mesh.edges_with_tag("wall")
    s, w = GAUSS_1D(4)
    from .fem.reference import line_basis
    N, _ = line_basis(2, s)
    geo = edge_geometry(mesh, edges, s, state.displacement)
    tau = state.vector["tau"].reshape(-1, 2)[sp.slot[mesh.boundary_edge_nodes[edges]]]
    ty = np.einsum("qa,ea->eq", N, tau[..., 1])
    return float(np.sum(w[None, :] * geo["J"] * ty))


def force_balance(state: ZerothState) -> dict:
    """Transverse momentum balance of the converged state.

    With the reduced pressure the wall force equals ``f V_B``.  Adding the
    hydrostatic part of the full stress on the walls (and nothing through
    the periodic faces, whose fluxes cancel) gives ``-f`` times the liquid area.
    """
    fw = wall_force(state)
    cfg = state.config
    f0 = state.f0
    liquid = cfg.L - cfg.V_B
    full = fw - f0 * cfg.L          # hydrostatic wall load: int_W f y n_y = f L
    return {"wall_force": fw, "reduced_residual": fw - f0 * cfg.V_B,
            "full_wall_force": full, "full_residual": full + f0 * liquid}


# ------------------------------------------------------------- first order

def first_layout(mesh, rho_degree=2):
    glob = make_space(mesh, "global_scalar")
    spaces = {
        "u1": make_space(mesh, "domain_vector", 2, periodic=True),
        "p1": make_space(mesh, "domain_scalar", 1),
        "rho": make_space(mesh, "boundary_scalar", rho_degree, tags=("bubble",)),
        "tau1": make_space(mesh, "boundary_vector", 2, tags=("wall",), periodic=True),
    }
    spaces.update({name: glob for name in GLOBALS1})
    return BlockLayout(spaces)


def first_form(zeroth: ZerothState, sign: float = -1.0, rho_degree: int = 2) -> WeakForm:
    """Linear first-order system on the zeroth configuration.

    ``sign`` sets the transverse-centroid condition ``oint y rho1 = sign V_B``.
    The liquid normal points into the bubble, so an upward shift of the
    bubble needs ``sign = -1``.
    """
    cfg, mesh = zeroth.config, zeroth.mesh
    lay = first_layout(mesh, rho_degree)
    params = zeroth.vector
    terms = [
        Term(stokes_kernel("u1", "p1"), ["u1", "p1"], ["u1", "p1"], params=["disp"],
             geometry="disp", name="stokes1"),
        Term(_wall_kernel("u1", "tau1", "V1"), ["u1", "tau1"], ["u1", "tau1", "V1"],
             params=["disp"], where="edges", tags=("wall",), geometry="disp", name="wall1"),
        Term(_inlet1, ["u1", "dp1"], ["u1", "dp1", "V1"], params=["disp"], where="edges",
             tags=("inlet",), geometry="disp", name="inlet1"),
        Term(_bubble1, ["u1", "rho"], ["u1", "rho", "pG1", "f1"],
             params=["u", "p", "disp", "pG", "f"], where="edges", tags=("bubble",),
             geometry="disp", name="bubble1"),
        Term(_moments1, ["pG1", "f1", "V1"], ["rho"], params=["disp"], where="edges",
             tags=("bubble",), geometry="disp", name="moments1"),
    ]
    node = pressure_reference_node(mesh, cfg.x_p)
    return WeakForm(mesh, lay, terms, params=params,
                    point_constraints=[PointConstraint("p1", node, "pref1")],
                    constants={"f1": -sign * cfg.V_B}, consts=cfg.consts())


def solve_first(zeroth: ZerothState, sign: float = -1.0, rho_degree: int = 2) -> FirstState:
    """One sparse solve of the first-order system."""
    form = first_form(zeroth, sign, rho_degree)
    system = assemble(form, form.layout.zeros())
    return FirstState(zeroth, solve_linear(system), sign)


# ------------------------------------------------------------ validation

@dataclass
class SensitivityRow:
    eps: float
    f0: float = float("nan")
    f1: float = float("nan")
    dfd_eps: float = float("nan")
    V0: float = float("nan")
    dp0: float = float("nan")
    pG0: float = float("nan")
    error: str = ""

    @property
    def mismatch(self) -> float:
        return abs(self.f1 - self.dfd_eps) / max(abs(self.dfd_eps), 1e-12)

    @property
    def ok(self) -> bool:
        return not self.error


@dataclass
class SensitivityReport:
    rows: list
    delta: float

    @property
    def max_mismatch(self) -> float:
        vals = [r.mismatch for r in self.rows if r.ok]
        return max(vals) if vals else float("nan")

    @property
    def complete(self) -> bool:
        return all(r.ok for r in self.rows)


def _sensitivity_point(config: CaseConfig, eps: float, delta: float, gap=None) -> SensitivityRow:
    row = SensitivityRow(eps)
    try:
        cfg = replace(config, epsilon=eps)
        mesh = case_mesh(cfg)
        z = solve_zeroth(cfg, mesh)
        first = solve_first(z)
        r = cfg.radius
        g = gap if gap is not None else 0.9 * (0.5 - abs(eps) - r - delta)
        center = (cfg.L / 2.0, eps)
        f = []
        for d in (delta, -delta):
            m = shift_mesh(mesh, d, r, center, g)
            zs = solve_zeroth(replace(cfg, epsilon=eps + d), m,
                              initial=BlockVector(z.layout, z.vector.data.copy()))
            f.append(zs.f0)
        row.f0, row.f1 = z.f0, first.f1
        row.dfd_eps = (f[0] - f[1]) / (2.0 * delta)
        row.V0, row.dp0, row.pG0 = z.V0, z.dp0, z.pG0
    except DefdomError as exc:
        row.error = f"{type(exc).__name__}: {exc}"
        log.warning("eps=%g failed: %s", eps, row.error)
    return row


def sensitivity_validation(config: CaseConfig, delta: float, eps_grid, jobs: int = 1) -> SensitivityReport:
    """Compare ``f1`` with a centred difference of ``f0`` in the offset.

    The offset meshes are the base mesh with the hole shifted smoothly, so
    the difference quotient is not polluted by remeshing noise.
    """
    grid = [float(e) for e in eps_grid]
    if jobs > 1 and len(grid) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(lambda e: _sensitivity_point(config, e, delta), grid))
    else:
        rows = [_sensitivity_point(config, e, delta) for e in grid]
    return SensitivityReport(rows, float(delta))


# ------------------------------------------------------------------ export

CSV_HEADER = ("eps", "f0", "f1", "dfd_eps", "V0", "dp0", "pG0")


def write_csv(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([repr(float(getattr(r, k))) for k in CSV_HEADER])
    return path


def write_vtk(state: ZerothState, path, first: FirstState | None = None) -> Path:
    """Legacy ASCII VTK of the displaced quadratic mesh with nodal fields."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mesh = state.mesh
    disp = state.displacement
    x = mesh.points + disp
    cells = mesh.cell_nodes
    point_data = {
        "mesh_displacement_norm": np.linalg.norm(disp, axis=1),
        "pressure": state.pressure,
    }
    vectors = {"velocity": state.velocity, "mesh_displacement": disp}
    if first is not None:
        vectors["velocity_first_order"] = first.velocity
    lines = ["# vtk DataFile Version 3.0", "defdom bubble state", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {len(x)} double"]
    lines += [f"{a:.17g} {b:.17g} 0" for a, b in x]
    lines.append(f"CELLS {len(cells)} {7 * len(cells)}")
    lines += ["6 " + " ".join(str(int(i)) for i in c) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += ["22"] * len(cells)
    lines.append(f"POINT_DATA {len(x)}")
    for name, v in point_data.items():
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [f"{val:.17g}" for val in np.nan_to_num(v)]
    for name, v in vectors.items():
        lines.append(f"VECTORS {name} double")
        lines += [f"{a:.17g} {b:.17g} 0" for a, b in np.nan_to_num(v)]
    path.write_text("\n".join(lines) + "\n")
    return path


def export_results(rows, out_dir, states=(), stem="bubble") -> dict:
    """CSV of sensitivity rows plus one VTK file per (zeroth, first) state pair."""
    out = Path(out_dir)
    files = {"csv": write_csv(rows, out / f"{stem}.csv"), "vtk": []}
    for i, st in enumerate(states):
        z, fst = st if isinstance(st, tuple) else (st, None)
        files["vtk"].append(write_vtk(z, out / f"{stem}_{i}.vtk", fst))
    return files
