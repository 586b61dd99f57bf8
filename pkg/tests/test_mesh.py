import math

import numpy as np
import pytest

from defdom import (ConfigurationError, MeshParseError, MeshValidationError, build_channel_mesh,
                    build_disk_mesh, build_square_mesh, load_mesh, quality, save_mesh)
from defdom.mesh import bubble_edge_lengths


def hole_area(mesh):
    # the liquid region is the period rectangle minus the hole
    return mesh.period * 1.0 - mesh.signed_areas().sum()


def curved_area(mesh):
    """Area enclosed by the quadratic boundary curves, via the divergence theorem."""
    from defdom.surface import edge_geometry
    from defdom.fem.reference import GAUSS_1D

    s, w = GAUSS_1D(8)
    geo = edge_geometry(mesh, np.arange(len(mesh.boundary_edges)), s)
    return 0.5 * np.einsum("q,eq,eq->", w, geo["J"], np.sum(geo["x"] * geo["n"], axis=2))


@pytest.mark.parametrize("r", [0.2, 0.4])
def test_channel_hole_area(r):
    mesh = build_channel_mesh(3.0, r, 0.0, 0.05)
    assert abs(hole_area(mesh) - math.pi * r * r) / (math.pi * r * r) < 0.01


def test_channel_curved_area_matches_liquid_area():
    mesh = build_channel_mesh(3.0, 0.2, 0.1, 0.08)
    liquid = 3.0 - math.pi * 0.04
    assert abs(curved_area(mesh) - liquid) < 1e-5


def test_channel_rejects_bubble_touching_wall():
    with pytest.raises(ConfigurationError):
        build_channel_mesh(3.0, 0.2, 0.4, 0.05)


@pytest.mark.parametrize("args", [(3.0, 0.0, 0.0, 0.05), (0.3, 0.2, 0.0, 0.05), (3.0, 0.2, 0.0, -1.0)])
def test_channel_rejects_bad_parameters(args):
    with pytest.raises(ConfigurationError):
        build_channel_mesh(*args)


def test_periodic_pairs_are_exact_translates():
    mesh = build_channel_mesh(3.0, 0.2, 0.05, 0.1)
    inlet = set(mesh.nodes_with_tag("inlet")) & set(range(mesh.n_vertices))
    assert set(mesh.periodic_pairs[:, 0]) == inlet
    i, o = mesh.periodic_pairs.T
    assert np.all(mesh.points[o, 0] - mesh.points[i, 0] == 3.0)
    assert np.abs(mesh.points[o, 1] - mesh.points[i, 1]).max() <= 1e-12


def test_bubble_vertices_equally_spaced():
    mesh = build_channel_mesh(3.0, 0.2, 0.0, 0.05)
    assert quality(mesh).boundary_spacing_cv < 1e-12
    assert quality(build_disk_mesh(0.7, 0.1)).boundary_spacing_cv < 1e-12


def test_quality_positive_angles_and_flags_inversion():
    mesh = build_square_mesh(3)
    q = quality(mesh)
    assert q.min_angle > 0 and q.max_skew >= 0 and q.ok
    disp = np.zeros_like(mesh.points)
    disp[mesh.cells[0, 0]] = mesh.points[mesh.cells[0, 1]] - mesh.points[mesh.cells[0, 0]] + 0.01
    flagged = quality(mesh, disp)
    assert not flagged.ok and len(flagged.inverted_cells) >= 1


def test_hole_normals_point_into_hole():
    from defdom.surface import edge_geometry

    mesh = build_channel_mesh(3.0, 0.2, 0.0, 0.1)
    e = mesh.edges_with_tag("bubble")
    geo = edge_geometry(mesh, e, [0.5])
    towards_centre = np.array([1.5, 0.0]) - geo["x"][:, 0]
    assert np.all(np.sum(geo["n"][:, 0] * towards_centre, axis=1) > 0)


def test_edge_lengths_sum_to_perimeter():
    mesh = build_disk_mesh(0.5, 0.05)
    assert abs(bubble_edge_lengths(mesh).sum() - math.pi) < 1e-6


def test_roundtrip_is_bit_exact(tmp_path):
    mesh = build_channel_mesh(3.0, 0.2, 0.05, 0.1)
    save_mesh(mesh, tmp_path / "m.txt")
    back = load_mesh(tmp_path / "m.txt")
    assert np.array_equal(back.points, mesh.points)
    assert np.array_equal(back.cells, mesh.cells)
    assert np.array_equal(back.cell_midnodes, mesh.cell_midnodes)
    assert np.array_equal(back.boundary_edges, mesh.boundary_edges)
    assert back.boundary_tags == mesh.boundary_tags
    assert np.array_equal(back.periodic_pairs, mesh.periodic_pairs)


def test_unknown_tag_is_a_validation_error(tmp_path):
    path = tmp_path / "m.txt"
    save_mesh(build_square_mesh(1), path)
    path.write_text(path.read_text().replace(" wall", " lid", 1))
    with pytest.raises(MeshValidationError):
        load_mesh(path)


def test_truncated_file_is_a_parse_error(tmp_path):
    path = tmp_path / "m.txt"
    save_mesh(build_square_mesh(2), path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[: len(lines) // 2]))
    with pytest.raises(MeshParseError) as info:
        load_mesh(path)
    assert info.value.lineno is not None


def test_bad_header_is_a_parse_error(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("not a mesh\n")
    with pytest.raises(MeshParseError):
        load_mesh(path)
