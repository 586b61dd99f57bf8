import math

import jax.numpy as jnp
import numpy as np
import pytest

from defdom import GeometryError, UsageError, build_channel_mesh, build_disk_mesh, build_square_mesh
from defdom import surface
from defdom.selftest import disk, observed_orders
from defdom.surface import DiscreteField

from conftest import retag


def edge_starting_at(mesh, point, tag):
    e = mesh.edges_with_tag(tag)
    d = np.hypot(*(mesh.points[mesh.boundary_edges[e, 0]] - point).T)
    return int(e[np.argmin(d)])


def top_edge(mesh):
    e = mesh.edges_with_tag(*set(mesh.boundary_tags))
    mids = 0.5 * (mesh.points[mesh.boundary_edges[e, 0]] + mesh.points[mesh.boundary_edges[e, 1]])
    return int(e[np.argmax(mids[:, 1])])


def test_hole_frame_points_to_centre():
    mesh = build_channel_mesh(3.0, 0.2, 0.0, 0.1)
    e = edge_starting_at(mesh, (1.7, 0.0), "bubble")
    fr = surface.frame_at(mesh, e, 0.0)
    assert np.allclose(fr.point, (1.7, 0.0), atol=1e-12)
    assert np.allclose(fr.n, (-1.0, 0.0), atol=5e-3)
    assert abs(fr.curvature + 1 / 0.2) < 0.05 / 0.2


def test_flat_wall_frame():
    mesh = build_square_mesh(3)
    fr = surface.frame_at(mesh, top_edge(mesh), 0.3)
    assert np.allclose(fr.n, (0.0, 1.0), atol=1e-14)
    assert abs(fr.curvature) < 1e-14


@pytest.mark.parametrize("s", [0.0, 0.21, 0.5, 1.0])
def test_frame_invariants(s):
    mesh = build_disk_mesh(1.0, 0.3)
    for e in range(0, len(mesh.boundary_edges), 3):
        fr = surface.frame_at(mesh, e, s)
        assert abs(np.linalg.norm(fr.n) - 1) < 1e-12 and abs(np.linalg.norm(fr.t) - 1) < 1e-12
        assert abs(fr.n @ fr.t) < 1e-12
        assert np.allclose(fr.I_S @ fr.n, 0, atol=1e-12) and np.allclose(fr.I_S @ fr.t, fr.t, atol=1e-12)
        assert fr.n_S is None


def test_contour_normal_at_open_ends(square_with_open_top):
    mesh = square_with_open_top
    ends = surface.contour_points(mesh, ("bubble",))
    assert len(ends) == 2
    for v, (e, s) in ends.items():
        fr = surface.frame_at(mesh, e, s)
        assert abs(fr.n @ fr.n_S) < 1e-12
        assert np.allclose(fr.I_S @ fr.n_S, fr.n_S, atol=1e-12)
        # n_S points away from the segment
        inward = mesh.points[mesh.boundary_edges[e, 1 - int(s)]] - mesh.points[v]
        assert fr.n_S @ inward < 0


def test_degenerate_edge_raises():
    mesh = build_square_mesh(2)
    disp = np.zeros_like(mesh.points)
    e = top_edge(mesh)
    a, b, m = mesh.boundary_edge_nodes[e]
    disp[b] = mesh.points[a] - mesh.points[b]
    disp[m] = mesh.points[a] - mesh.points[m]
    with pytest.raises(GeometryError):
        surface.frame_at(mesh, e, 0.5, disp)


def test_frame_rejects_bad_coordinate():
    with pytest.raises(UsageError):
        surface.frame_at(build_square_mesh(1), 0, 1.5)


def test_surface_gradient_of_x_on_flat_wall():
    mesh = build_square_mesh(3)
    g = surface.surface_gradient(lambda x: x[0], mesh, top_edge(mesh), 0.4)
    assert np.allclose(g, (1.0, 0.0), atol=1e-14)


def test_surface_gradient_of_x_on_circle():
    mesh = build_disk_mesh(0.5, 0.05)
    for e in (0, 7, 13):
        fr = surface.frame_at(mesh, e, 0.0)
        g = surface.surface_gradient(lambda x: x[0], mesh, e, 0.0)
        ex = np.array([1.0, 0.0])
        assert np.allclose(g, ex - fr.n * fr.n[0], atol=1e-12)
        n_exact = fr.point / np.linalg.norm(fr.point)
        assert np.allclose(g, ex - n_exact * n_exact[0], atol=1e-3)


def test_surface_gradient_of_constant_is_zero():
    mesh = build_disk_mesh(1.0, 0.2)
    assert np.allclose(surface.surface_gradient(lambda x: 3.0 + 0 * x[0], mesh, 2, 0.3), 0, atol=1e-14)


def test_sgrad_is_projected_grad(rng):
    mesh = build_disk_mesh(1.0, 0.2, jitter=0.3)
    c = rng.standard_normal(4)

    def phi(x):
        return c[0] * x[0] ** 2 + c[1] * x[0] * x[1] + c[2] * jnp.sin(x[1]) + c[3]

    s = np.linspace(0, 1, 5)
    _, g, sg, geo = surface.evaluate_on_edges(phi, mesh, np.arange(len(mesh.boundary_edges)), s)
    n = geo["n"]
    proj = g - np.sum(g * n, axis=2, keepdims=True) * n
    assert np.abs(proj - sg).max() < 1e-12


def test_boundary_only_field_has_no_volume_gradient():
    mesh = build_disk_mesh(1.0, 0.3)
    space = surface.boundary_space(mesh, ("bubble",))
    f = DiscreteField(space, np.ones(space.n_slots))
    with pytest.raises(UsageError):
        surface.gradient(f, mesh, 0, 0.5)
    assert np.allclose(surface.surface_gradient(f, mesh, 0, 0.5), 0, atol=1e-13)


def test_weak_differential_of_one_sums_to_zero():
    mesh = build_disk_mesh(1.0, 0.2)
    space = surface.boundary_space(mesh, ("bubble",))
    b = surface.weak_exterior_differential(space, lambda x: 1.0 + 0 * x[0], mesh)
    assert np.abs(b.sum(axis=0)).max() < 1e-12


@pytest.mark.parametrize("builder", ["disk", "hole"])
def test_curvature_vector_points_to_centre(builder):
    a = 0.3
    if builder == "disk":
        mesh, centre = build_disk_mesh(a, 0.03), np.zeros(2)
    else:
        mesh, centre = build_channel_mesh(3.0, a, 0.0, 0.03), np.array([1.5, 0.0])
    space, H = surface.recover_curvature_vector(mesh)
    nodes = space.nodes()
    toward = centre - mesh.points[nodes]
    toward /= np.linalg.norm(toward, axis=1, keepdims=True)
    i = int(np.argmin(np.hypot(*(mesh.points[nodes] - centre - (a, 0)).T)))
    assert np.allclose(H[i], toward[i] / a, rtol=0, atol=0.02 / a)


def test_weak_differential_on_open_segment_matches_direct(square_with_open_top):
    mesh = square_with_open_top
    space = surface.boundary_space(mesh, ("bubble",))

    def phi(x):
        return 2.0 * x[0] - 0.5 * x[1] + 1.0

    b = surface.weak_exterior_differential(space, phi, mesh, contour_terms="auto")
    row_int = np.asarray(surface.boundary_mass(mesh, space).sum(axis=1)).ravel()
    direct = np.outer(row_int, [2.0, 0.0])
    assert np.abs(b - direct).max() < 1e-12


def test_open_segment_needs_contour_data(square_with_open_top):
    space = surface.boundary_space(square_with_open_top, ("bubble",))
    with pytest.raises(UsageError):
        surface.weak_exterior_differential(space, lambda x: x[0], square_with_open_top)


def test_volume_stokes_simple_fields():
    sq = build_square_mesh(2).straightened()
    assert np.abs(surface.check_stokes_volume(lambda x: 1.0 + 0 * x[0], sq)).max() < 1e-12
    assert np.abs(surface.check_stokes_volume(lambda x: x[0], sq)).max() < 1e-12
    ch = build_channel_mesh(3.0, 0.2, 0.0, 0.1).straightened()
    assert np.abs(surface.check_stokes_volume(lambda x: x[0] * x[1], ch)).max() < 1e-12


def test_boundary_stokes_of_one_vanishes_by_symmetry():
    assert np.abs(surface.check_stokes_boundary(lambda x: 1.0 + 0 * x[0], disk(24, 0.8))).max() < 1e-12


@pytest.mark.parametrize("phi,jitter", [(lambda x: 1.0 + 0 * x[0], 0.3), (lambda x: x[0], 0.0)])
def test_boundary_stokes_second_order(phi, jitter):
    errs = [np.linalg.norm(surface.check_stokes_boundary(
        phi, build_disk_mesh(0.8, 1.0, n_boundary=n, jitter=jitter))) for n in (16, 32, 64)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios > 3.5), ratios


def test_boundary_stokes_weak_telescopes():
    mesh = disk(10, 1.0).straightened()
    assert np.abs(surface.check_stokes_boundary(lambda x: 1.0 + 0 * x[0], mesh, mode="weak")).max() < 1e-12


def test_boundary_reciprocal_on_curved_polygon():
    mesh = build_disk_mesh(1.0, 0.25, jitter=0.2)
    r = surface.check_reciprocal_boundary(lambda x: 1 + x[0] * x[1], lambda x: x[0] ** 2 - x[1], mesh)
    assert np.abs(r).max() < 1e-10


def test_curvature_recovery_order():
    errs = [surface.curvature_error(disk(n, 0.7), (0, 0), 0.7) for n in (16, 32, 64)]
    assert observed_orders([1 / 16, 1 / 32, 1 / 64], errs).min() >= 1.9
