import numpy as np
import pytest
from scipy.optimize import brentq

from defdom import GeometryError, build_channel_mesh, build_disk_mesh, build_square_mesh, quality
from defdom import motion
from defdom.fem import BlockLayout, DirichletBC, Term, WeakForm, make_space, newton_solve
from defdom.fem import reference as ref
from defdom.selftest import jacobian_fd_error


def _scalar_laplace(geo, f, k):
    return {"phi": (None, f["phi"].grad)}


def scalar_harmonic(mesh, values_by_tag):
    """Independent scalar solve: one Laplace problem with piecewise constant Dirichlet data."""
    V = make_space(mesh, "domain_scalar", 2)
    lay = BlockLayout({"phi": V})
    bcs = [DirichletBC("phi", V.node_dofs(mesh.nodes_with_tag(t)), float(v))
           for t, v in values_by_tag.items()]
    form = WeakForm(mesh, lay, [Term(_scalar_laplace, ["phi"], ["phi"])], dirichlet=bcs)
    return V.nodal(newton_solve(form, lay.zeros())["phi"])[:, 0]


def test_zero_data_gives_zero_displacement():
    mesh = build_channel_mesh(3.0, 0.2, 0.0, 0.15)
    ale = motion.solve_ale(mesh, {})
    assert np.abs(ale.displacement).max() == 0.0


def test_translated_bubble_matches_scalar_solves():
    mesh = build_channel_mesh(3.0, 0.2, 0.0, 0.12)
    shift = np.array([0.03, -0.02])
    ale = motion.solve_ale(mesh, {"bubble": lambda P: np.tile(shift, (len(P), 1))})
    fixed = {"wall": 0.0, "inlet": 0.0, "outlet": 0.0}
    w = scalar_harmonic(mesh, {**fixed, "bubble": 1.0})
    assert np.abs(ale.displacement - np.outer(w, shift)).max() < 1e-12


def test_linear_boundary_data_gives_linear_field():
    mesh = build_disk_mesh(1.0, 0.2)
    A = np.array([[0.02, -0.01], [0.015, 0.03]])
    ale = motion.solve_ale(mesh, {"bubble": lambda P: P @ A.T + 0.01})
    assert np.abs(ale.displacement - (mesh.points @ A.T + 0.01)).max() < 1e-12
    assert np.abs(motion.ale_residual(mesh, ale.displacement)).max() < 1e-12


def test_ale_superposition(rng):
    mesh = build_channel_mesh(3.0, 0.2, 0.0, 0.15)
    c1, c2 = rng.standard_normal((2, 2)) * 0.01

    def wave(c):
        return lambda P: np.outer(np.sin(3 * np.arctan2(P[:, 1], P[:, 0] - 1.5)), c)

    a = motion.solve_ale(mesh, {"bubble": wave(c1)}).displacement
    b = motion.solve_ale(mesh, {"bubble": wave(c2)}).displacement
    ab = motion.solve_ale(mesh, {"bubble": lambda P: wave(c1)(P) + wave(c2)(P)}).displacement
    assert np.abs(ab - a - b).max() < 1e-13


def test_zero_source_leaves_anchored_curve_in_place():
    mesh = build_disk_mesh(1.0, 0.3)
    res = motion.solve_bale(mesh, 0.0)
    assert np.abs(res.q).max() < 1e-14


def test_uniform_source_shrinks_circle_evenly():
    g = 0.05
    mesh = build_disk_mesh(1.0, 0.1)
    res = motion.solve_bale(mesh, g)
    x = mesh.points[res.nodes] + res.q
    radii = np.hypot(*x.T)
    # circle of radius 1 + d with d = -g (1 + d)^2 solves the boundary equation exactly
    d = brentq(lambda d: d + g * (1 + d) ** 2, -0.5, 0.0)
    assert abs(radii.mean() - (1 + d)) < 1e-5
    verts = res.nodes < mesh.n_vertices
    # vertices and mid-edge nodes are each equivalent under rotation
    assert np.ptp(radii[verts]) < 1e-12 and np.ptp(radii[~verts]) < 1e-12
    tangential = res.q[:, 0] * mesh.points[res.nodes, 1] - res.q[:, 1] * mesh.points[res.nodes, 0]
    assert np.abs(tangential).max() < 1e-12
    assert quality(mesh, res.displacement).boundary_spacing_cv < 1e-10


def test_random_source_against_dense_assembly(rng):
    mesh = build_disk_mesh(1.0, 1.0, n_boundary=16)
    gs = make_space(mesh, "boundary_scalar", 2, tags=("bubble",))
    assert gs.n_slots == 32
    gvals = 0.05 * rng.standard_normal(32)
    lookup = dict(zip(gs.nodes(), gvals))
    res = motion.solve_bale(mesh, lambda P: np.array([lookup[int(np.argmin(np.hypot(*(mesh.points - p).T)))]
                                                      for p in P]))
    x = mesh.points + res.displacement

    # dense re-assembly on the displaced quadratic curve
    nodes = list(res.nodes)
    index = {v: i for i, v in enumerate(nodes)}
    R = np.zeros((32, 2))
    m = np.zeros(32)
    s, w = ref.GAUSS_1D(4)
    N, dN = ref.line_basis(2, s)
    for e in mesh.edges_with_tag("bubble"):
        en = mesh.boundary_edge_nodes[e]
        xe, Xe = x[en], mesh.points[en]
        qe = res.displacement[en]
        ge = np.array([lookup[int(v)] for v in en])
        for k in range(len(s)):
            xs = dN[k] @ xe
            J = np.linalg.norm(xs)
            t = xs / J
            n = np.array([t[1], -t[0]])
            dq = dN[k] @ qe
            for a in range(3):
                R[index[int(en[a])]] += w[k] * (dN[k, a] * dq / J + N[k, a] * (N[k] @ ge) * n * J)
                m[index[int(en[a])]] += w[k] * N[k, a] * np.linalg.norm(dN[k] @ Xe)
    # the anchor adds lambda * int psi (reference length) to every row
    lam = -np.linalg.lstsq(m[:, None], R, rcond=None)[0]
    assert np.abs(R + m[:, None] * lam).max() < 1e-11
    assert np.abs(res.q.mean(axis=0)).max() < 0.05


def test_velocity_coupling_rows_vanish_for_uniform_flow():
    mesh = build_disk_mesh(1.0, 0.25)
    gs = make_space(mesh, "boundary_scalar", 2, tags=("bubble",))
    vel = np.tile([0.7, -0.2], (mesh.n_nodes, 1))
    disp = 0.02 * np.column_stack([np.sin(mesh.points[:, 1]), mesh.points[:, 0] ** 2])
    _, grows, _ = motion.bale_residual(mesh, disp, np.zeros(gs.n_slots), velocity=vel)
    assert abs(grows.sum()) < 1e-13


def test_source_has_no_tangential_part_on_flat_pieces(rng):
    mesh = build_disk_mesh(1.0, 0.3).straightened()
    gs = make_space(mesh, "boundary_scalar", 2, tags=("bubble",))
    disp = np.zeros_like(mesh.points)
    g = rng.standard_normal(gs.n_slots)
    q1, _, nodes = motion.bale_residual(mesh, disp, g)
    q0, _, _ = motion.bale_residual(mesh, disp, 0 * g)
    src = q1 - q0
    for e in mesh.edges_with_tag("bubble"):
        a, b, mid = mesh.boundary_edge_nodes[e]
        t = mesh.points[b] - mesh.points[a]
        i = int(np.flatnonzero(nodes == mid)[0])
        assert abs(src[i] @ t) < 1e-13


def test_open_boundary_is_rejected(square_with_open_top):
    with pytest.raises(GeometryError, match="unsupported topology"):
        motion.bale_term(square_with_open_top)
    with pytest.raises(GeometryError):
        motion.solve_bale(square_with_open_top, 0.1)


def test_fixed_boundaries_do_not_move():
    mesh = build_channel_mesh(3.0, 0.2, 0.0, 0.15)
    ale = motion.solve_ale(mesh, {"bubble": lambda P: 0.02 * (P - [1.5, 0.0])})
    fixed = mesh.nodes_with_tag("wall", "inlet", "outlet")
    assert np.abs(ale.displacement[fixed]).max() < 1e-15


def test_bale_jacobian(rng):
    mesh = build_disk_mesh(1.0, 0.3)
    form = motion.bale_form(mesh, lambda P: 0.05 + 0.02 * P[:, 0])
    x = form.layout.zeros()
    x.data[:] = 0.01 * rng.standard_normal(x.data.size)
    assert jacobian_fd_error(form, x, rng, count=30) < 1e-5
