"""Reference triangulations with tagged boundaries and periodic pairing.

A :class:`Mesh2D` stores the material (reference) positions ``X`` of every
geometric node.  Corner vertices come first, mid-edge nodes of the quadratic
(isoparametric) geometry follow.  Local edge ``k`` of a cell joins corners
``k`` and ``(k + 1) % 3``; its mid-edge node is ``cell_midnodes[c, k]``.

Boundary edges are oriented with the domain on their left, so the outward
normal of the domain is the edge tangent rotated clockwise.  On a hole this
normal points into the hole.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    MeshError,
    MeshParseError,
    MeshValidationError,
)

TAGS = ("wall", "inlet", "outlet", "bubble")

FORMAT_HEADER = "defdom-mesh v1"


@dataclass(frozen=True, eq=False)
class Mesh2D:
    points: np.ndarray
    cells: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: tuple
    cell_midnodes: np.ndarray | None = None
    periodic_pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    curved: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        cells = np.ascontiguousarray(self.cells, dtype=np.int64).reshape(-1, 3)
        be = np.ascontiguousarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        pp = np.ascontiguousarray(self.periodic_pairs, dtype=np.int64).reshape(-1, 2)
        mid = None
        if self.cell_midnodes is not None:
            mid = np.ascontiguousarray(self.cell_midnodes, dtype=np.int64).reshape(-1, 3)
        for arr in (pts, cells, be, pp) + ((mid,) if mid is not None else ()):
            arr.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "boundary_edges", be)
        object.__setattr__(self, "periodic_pairs", pp)
        object.__setattr__(self, "cell_midnodes", mid)
        object.__setattr__(self, "boundary_tags", tuple(str(t) for t in self.boundary_tags))
        if len(self.boundary_tags) != len(be):
            raise MeshValidationError("one tag per boundary edge is required")
        unknown = sorted(set(self.boundary_tags) - set(TAGS))
        if unknown:
            raise MeshValidationError(f"unknown boundary tag(s): {unknown}")

    # ------------------------------------------------------------------ sizes
    @property
    def n_nodes(self) -> int:
        return len(self.points)

    @cached_property
    def n_vertices(self) -> int:
        return int(self.cells.max()) + 1 if len(self.cells) else 0

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def is_quadratic(self) -> bool:
        return self.cell_midnodes is not None

    @property
    def vertices(self) -> np.ndarray:
        return self.points[: self.n_vertices]

    @cached_property
    def period(self) -> float | None:
        if len(self.periodic_pairs) == 0:
            return None
        i, o = self.periodic_pairs[0]
        return float(self.points[o, 0] - self.points[i, 0])

    @cached_property
    def cell_nodes(self) -> np.ndarray:
        """(M, 6) node ids for quadratic meshes, (M, 3) otherwise."""
        if self.cell_midnodes is None:
            return self.cells
        out = np.hstack([self.cells, self.cell_midnodes])
        out.setflags(write=False)
        return out

    # -------------------------------------------------------------- topology
    @cached_property
    def _edge_owner(self) -> dict:
        owner = {}
        for c, tri in enumerate(self.cells):
            for k in range(3):
                a, b = int(tri[k]), int(tri[(k + 1) % 3])
                owner.setdefault((a, b), []).append((c, k))
        return owner

    @cached_property
    def boundary_edge_cells(self) -> np.ndarray:
        """(K, 2) array of (cell, local edge) owning each boundary edge."""
        out = np.empty((len(self.boundary_edges), 2), dtype=np.int64)
        for e, (a, b) in enumerate(self.boundary_edges):
            hits = self._edge_owner.get((int(a), int(b)), [])
            if len(hits) != 1:
                raise MeshValidationError(
                    f"boundary edge {e} ({a}, {b}) must belong to exactly one cell "
                    f"with the domain on its left; found {len(hits)}"
                )
            out[e] = hits[0]
        out.setflags(write=False)
        return out

    @cached_property
    def boundary_edge_nodes(self) -> np.ndarray:
        """(K, 3) node ids (start, end, mid) of each boundary edge."""
        be = self.boundary_edges
        if self.cell_midnodes is None:
            mid = np.full(len(be), -1, dtype=np.int64)
        else:
            c, k = self.boundary_edge_cells.T
            mid = self.cell_midnodes[c, k]
        out = np.column_stack([be, mid])
        out.setflags(write=False)
        return out

    def edges_with_tag(self, *tags: str) -> np.ndarray:
        bad = set(tags) - set(TAGS)
        if bad:
            raise MeshValidationError(f"unknown boundary tag(s): {sorted(bad)}")
        return np.array([i for i, t in enumerate(self.boundary_tags) if t in tags], dtype=np.int64)

    def nodes_with_tag(self, *tags: str) -> np.ndarray:
        idx = self.edges_with_tag(*tags)
        nodes = self.boundary_edge_nodes[idx].ravel()
        return np.unique(nodes[nodes >= 0])

    @cached_property
    def periodic_node_map(self) -> np.ndarray:
        """Map every node to its periodic master (outlet nodes -> inlet nodes)."""
        m = np.arange(self.n_nodes)
        if len(self.periodic_pairs) == 0:
            return m
        vmap = {int(o): int(i) for i, o in self.periodic_pairs}
        image = {int(i): int(o) for i, o in self.periodic_pairs}
        for o, i in vmap.items():
            m[o] = i
        if self.cell_midnodes is not None:
            inlet = self.edges_with_tag("inlet")
            outlet = self.edges_with_tag("outlet")
            out_mid = {}
            for e in outlet:
                a, b, mnode = self.boundary_edge_nodes[e]
                out_mid[frozenset((int(a), int(b)))] = int(mnode)
            for e in inlet:
                a, b, mnode = self.boundary_edge_nodes[e]
                key = frozenset((image[int(a)], image[int(b)]))
                if key not in out_mid:
                    raise MeshValidationError(f"inlet edge {e} has no periodic image")
                m[out_mid[key]] = int(mnode)
        m.setflags(write=False)
        return m

    # ------------------------------------------------------------ geometry
    def signed_areas(self, displacement=None) -> np.ndarray:
        x = self.points if displacement is None else self.points + np.asarray(displacement)
        a, b, c = (x[self.cells[:, i]] for i in range(3))
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))

    def straightened(self) -> "Mesh2D":
        """Copy whose mid-edge nodes sit at the chord midpoints."""
        if self.cell_midnodes is None:
            return self
        pts = np.array(self.points)
        for k in range(3):
            a = self.cells[:, k]
            b = self.cells[:, (k + 1) % 3]
            pts[self.cell_midnodes[:, k]] = 0.5 * (pts[a] + pts[b])
        return Mesh2D(pts, self.cells, self.boundary_edges, self.boundary_tags,
                      self.cell_midnodes, self.periodic_pairs, dict(self.curved))

    def with_points(self, points) -> "Mesh2D":
        return Mesh2D(points, self.cells, self.boundary_edges, self.boundary_tags,
                      self.cell_midnodes, self.periodic_pairs, dict(self.curved))

    def validate(self) -> "Mesh2D":
        if np.any(self.signed_areas() <= 0.0):
            bad = int(np.argmin(self.signed_areas()))
            raise MeshValidationError(f"cell {bad} has nonpositive signed area")
        self.boundary_edge_cells  # noqa: B018  (raises on bad orientation)
        single = {e for e, hits in self._edge_owner.items() if (e[1], e[0]) not in self._edge_owner}
        tagged = {(int(a), int(b)) for a, b in self.boundary_edges}
        if single != tagged:
            raise MeshValidationError(
                f"{len(single - tagged)} untagged boundary edge(s), "
                f"{len(tagged - single)} tagged interior edge(s)"
            )
        if self.cell_midnodes is not None and self.cell_midnodes.min() < self.n_vertices:
            raise MeshValidationError("corner vertices must precede mid-edge nodes")
        if len(self.periodic_pairs):
            inlet = set(self.nodes_with_tag("inlet")[self.nodes_with_tag("inlet") < self.n_vertices])
            L = self.period
            for i, o in self.periodic_pairs:
                if int(i) not in inlet:
                    raise MeshValidationError(f"periodic vertex {i} is not on the inlet")
                dx = self.points[o, 0] - self.points[i, 0]
                dy = abs(self.points[o, 1] - self.points[i, 1])
                if dx != L or dy > 1e-12:
                    raise MeshValidationError(f"periodic pair ({i}, {o}) is not an x-translate by {L}")
            if len(set(self.periodic_pairs[:, 0])) != len(inlet):
                raise MeshValidationError("every inlet vertex needs exactly one outlet partner")
        return self


# ---------------------------------------------------------------- builders

def _add_midnodes(vertices, cells, boundary_edges, tags, curved):
    """Create one mid-edge node per unique edge; curved boundary midnodes are
    projected with ``curved[tag](midpoint, a, b)``."""
    nv = len(vertices)
    e = np.concatenate([cells[:, [0, 1]], cells[:, [1, 2]], cells[:, [2, 0]]])
    key = np.sort(e, axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    mids = 0.5 * (vertices[uniq[:, 0]] + vertices[uniq[:, 1]])
    lookup = {(int(a), int(b)): i for i, (a, b) in enumerate(uniq)}
    for (a, b), tag in zip(boundary_edges, tags):
        proj = curved.get(tag)
        if proj is not None:
            i = lookup[(min(a, b), max(a, b))]
            mids[i] = proj(vertices[a], vertices[b])
    m = len(cells)
    cell_mid = nv + np.column_stack([inv[:m], inv[m:2 * m], inv[2 * m:]])
    return np.vstack([vertices, mids]), cell_mid


def _boundary_edges_from_cells(cells):
    owner = {}
    for tri in cells:
        for k in range(3):
            owner[(int(tri[k]), int(tri[(k + 1) % 3]))] = True
    return np.array([e for e in owner if (e[1], e[0]) not in owner], dtype=np.int64).reshape(-1, 2)


def _circle_projector(center, radius, theta_of_mid=None):
    c = np.asarray(center, dtype=float)

    def proj(a, b):
        if theta_of_mid is not None:
            th = theta_of_mid(a, b)
        else:
            ta = math.atan2(a[1] - c[1], a[0] - c[0])
            tb = math.atan2(b[1] - c[1], b[0] - c[0])
            d = (tb - ta + math.pi) % (2.0 * math.pi) - math.pi
            th = ta + 0.5 * d
        return c + radius * np.array([math.cos(th), math.sin(th)])

    return proj


def _triangulate(vertices, segments, holes, max_area, min_angle=30.0):
    import triangle

    spec = {"vertices": np.asarray(vertices, float), "segments": np.asarray(segments, np.int64)}
    if holes:
        spec["holes"] = np.asarray(holes, float)
    try:
        out = triangle.triangulate(spec, f"pq{min_angle:g}a{max_area:.12g}Y")
    except Exception as exc:  # the C library signals failure with generic errors
        raise MeshError(f"triangulation failed: {exc}") from exc
    if "triangles" not in out or len(out["triangles"]) == 0:
        raise MeshError("triangulation produced no cells")
    verts = np.asarray(out["vertices"], float)
    tris = np.asarray(out["triangles"], np.int64)
    # enforce counter-clockwise cells
    a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    area = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    tris[area < 0] = tris[area < 0][:, [0, 2, 1]]
    return verts, tris


def _polyline(p0, p1, n):
    t = np.linspace(0.0, 1.0, n + 1)
    return np.outer(1.0 - t, p0) + np.outer(t, p1)


def _loop_segments(start, n, closed=True):
    idx = np.arange(start, start + n)
    if closed:
        return np.column_stack([idx, np.roll(idx, -1)])
    return np.column_stack([idx[:-1], idx[1:]])


def build_channel_mesh(L, bubble_radius, bubble_center_y=0.0, target_h=0.05, *, n_bubble=None):
    """Periodic channel ``[0, L] x [-1/2, 1/2]`` with a circular hole.

    The hole of radius ``bubble_radius`` is centred at ``(L/2, bubble_center_y)``.
    Bubble vertices are equally spaced in arclength.  When the hole is centred
    (``bubble_center_y == 0``) the triangulation is mirror symmetric about
    ``y = 0``.
    """
    L = float(L)
    r = float(bubble_radius)
    eps = float(bubble_center_y)
    h = float(target_h)
    if not (0.0 < r < 0.5):
        raise ConfigurationError(f"bubble radius {r} must lie in (0, 0.5)")
    if abs(eps) + r >= 0.5:
        raise ConfigurationError(f"bubble of radius {r} at offset {eps} intersects the wall")
    if L <= 2.0 * r:
        raise ConfigurationError(f"period L={L} must exceed the bubble diameter {2 * r}")
    if h <= 0.0:
        raise ConfigurationError("target_h must be positive")
    cx, cy = 0.5 * L, eps
    nb = n_bubble or max(16, int(round(2.0 * math.pi * r / h)))
    nb += nb % 2
    ny = max(2, int(math.ceil(1.0 / h)))
    ny += ny % 2
    nx = max(2, int(math.ceil(L / h)))
    max_area = 0.5 * h * h
    symmetric = eps == 0.0

    if symmetric:
        ns = max(1, int(math.ceil((cx - r) / h)))
        nyh = ny // 2
        pieces = [
            _polyline((0.0, 0.0), (cx - r, 0.0), ns)[:-1],
            np.array([[cx + r * math.cos(t), r * math.sin(t)]
                      for t in math.pi - np.pi * np.arange(nb // 2) / (nb // 2)]),
            _polyline((cx + r, 0.0), (L, 0.0), ns)[:-1],
            _polyline((L, 0.0), (L, 0.5), nyh)[:-1],
            _polyline((L, 0.5), (0.0, 0.5), nx)[:-1],
            _polyline((0.0, 0.5), (0.0, 0.0), nyh)[:-1],
        ]
        pts = np.vstack(pieces)
        pts[np.abs(pts) < 1e-15] = 0.0
        segs = _loop_segments(0, len(pts))
        verts, tris = _triangulate(pts, segs, [[cx, 0.5 * r]], max_area)
        verts[:, 1][np.abs(verts[:, 1]) < 1e-14] = 0.0
        on_axis = verts[:, 1] == 0.0
        n = len(verts)
        mirror_id = np.where(on_axis, np.arange(n), n + np.cumsum(~on_axis) - 1)
        lower = verts[~on_axis] * np.array([1.0, -1.0])
        verts = np.vstack([verts, lower])
        tris = np.vstack([tris, mirror_id[tris][:, [0, 2, 1]]])
    else:
        theta = 2.0 * math.pi * np.arange(nb) / nb
        outer = np.vstack([
            _polyline((0.0, -0.5), (L, -0.5), nx)[:-1],
            _polyline((L, -0.5), (L, 0.5), ny)[:-1],
            _polyline((L, 0.5), (0.0, 0.5), nx)[:-1],
            _polyline((0.0, 0.5), (0.0, -0.5), ny)[:-1],
        ])
        circ = np.column_stack([cx + r * np.cos(theta), cy + r * np.sin(theta)])
        pts = np.vstack([outer, circ])
        segs = np.vstack([_loop_segments(0, len(outer)), _loop_segments(len(outer), nb)])
        verts, tris = _triangulate(pts, segs, [[cx, cy]], max_area)

    # inlet/outlet y coordinates must match bit for bit
    left = np.isclose(verts[:, 0], 0.0, atol=1e-12)
    right = np.isclose(verts[:, 0], L, atol=1e-12)
    verts[left, 0] = 0.0
    verts[right, 0] = L

    bedges = _boundary_edges_from_cells(tris)
    tags = []
    for a, b in bedges:
        pa, pb = verts[a], verts[b]
        if pa[0] == 0.0 and pb[0] == 0.0:
            tags.append("inlet")
        elif pa[0] == L and pb[0] == L:
            tags.append("outlet")
        elif abs(abs(pa[1]) - 0.5) < 1e-12 and abs(abs(pb[1]) - 0.5) < 1e-12:
            tags.append("wall")
        elif (abs(math.hypot(pa[0] - cx, pa[1] - cy) - r) < 1e-9
              and abs(math.hypot(pb[0] - cx, pb[1] - cy) - r) < 1e-9):
            tags.append("bubble")
        else:
            raise MeshError(f"could not classify boundary edge {pa} -> {pb}")

    inlet = np.flatnonzero(left)
    outlet = np.flatnonzero(right)
    inlet = inlet[np.argsort(verts[inlet, 1], kind="stable")]
    outlet = outlet[np.argsort(verts[outlet, 1], kind="stable")]
    if len(inlet) != len(outlet) or np.any(np.abs(verts[inlet, 1] - verts[outlet, 1]) > 1e-12):
        raise MeshError("inlet and outlet vertices do not pair up")
    pairs = np.column_stack([inlet, outlet])

    proj = _circle_projector((cx, cy), r)
    points, cell_mid = _add_midnodes(verts, tris, bedges, tags, {"bubble": proj})
    mesh = Mesh2D(points, tris, bedges, tags, cell_mid, pairs,
                  curved={"bubble": {"center": (cx, cy), "radius": r}})
    return mesh.validate()


def build_disk_mesh(radius=1.0, target_h=0.1, center=(0.0, 0.0), *, n_boundary=None,
                    jitter=0.0, tag="bubble"):
    """Disk meshed with quadratic boundary edges placed on the exact circle.

    ``jitter`` in ``[0, 1)`` makes the boundary spacing smoothly non-uniform via
    the parametrisation ``theta(s) = 2 pi s + jitter sin(2 pi s)``.
    """
    if not 0.0 <= jitter < 1.0:
        raise ConfigurationError("jitter must lie in [0, 1)")
    R = float(radius)
    cx, cy = map(float, center)
    n = n_boundary or max(12, int(round(2.0 * math.pi * R / target_h)))

    def theta(s):
        return 2.0 * math.pi * s + jitter * math.sin(2.0 * math.pi * s)

    s = np.arange(n) / n
    th = np.array([theta(v) for v in s])
    circ = np.column_stack([cx + R * np.cos(th), cy + R * np.sin(th)])
    h = 2.0 * math.pi * R / n if n_boundary else target_h
    verts, tris = _triangulate(circ, _loop_segments(0, n), [], 0.5 * h * h)
    bedges = _boundary_edges_from_cells(tris)
    sval = {i: s[i] for i in range(n)}

    def theta_mid(a, b):
        ia = int(np.argmin(np.hypot(*(circ - a).T)))
        ib = int(np.argmin(np.hypot(*(circ - b).T)))
        sa, sb = sval[ia], sval[ib]
        if abs(sb - sa) > 0.5:
            sb = sb + 1.0 if sb < sa else sb - 1.0
        return theta(0.5 * (sa + sb))

    tags = [tag] * len(bedges)
    proj = _circle_projector((cx, cy), R, theta_mid)
    points, cell_mid = _add_midnodes(verts, tris, bedges, tags, {tag: proj})
    mesh = Mesh2D(points, tris, bedges, tags, cell_mid,
                  curved={tag: {"center": (cx, cy), "radius": R}})
    return mesh.validate()


def build_square_mesh(n, size=1.0, origin=(0.0, 0.0), tag="wall"):
    """Structured ``n x n`` square of right triangles (alternating diagonals)."""
    x0, y0 = origin
    g = np.linspace(0.0, size, n + 1)
    X, Y = np.meshgrid(g + x0, g + y0, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    tris = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            b, c, d = a + 1, a + n + 2, a + n + 1
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    tris = np.array(tris, dtype=np.int64)
    bedges = _boundary_edges_from_cells(tris)
    tags = [tag] * len(bedges)
    points, cell_mid = _add_midnodes(verts, tris, bedges, tags, {})
    return Mesh2D(points, tris, bedges, tags, cell_mid).validate()


# ------------------------------------------------------------------ quality

@dataclass(frozen=True)
class MeshQualityReport:
    min_angle: float
    max_skew: float
    boundary_spacing_cv: float
    inverted_cells: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.inverted_cells


def bubble_edge_lengths(mesh, displacement=None, tag="bubble"):
    """Arclength of each tagged boundary edge on the (displaced) quadratic curve."""
    from .fem.reference import GAUSS_1D

    x = mesh.points if displacement is None else mesh.points + np.asarray(displacement)
    idx = mesh.edges_with_tag(tag)
    nodes = mesh.boundary_edge_nodes[idx]
    s, w = GAUSS_1D(6)
    xa, xb = x[nodes[:, 0]], x[nodes[:, 1]]
    if nodes[0, 2] < 0:
        return np.hypot(*(xb - xa).T)
    xm = x[nodes[:, 2]]
    # derivative of the quadratic Lagrange interpolant through (a, b, mid) at s
    dNa = 4.0 * s - 3.0
    dNb = 4.0 * s - 1.0
    dNm = 4.0 - 8.0 * s
    xs = (xa[:, None, :] * dNa[None, :, None] + xb[:, None, :] * dNb[None, :, None]
          + xm[:, None, :] * dNm[None, :, None])
    return np.sum(np.linalg.norm(xs, axis=2) * w[None, :], axis=1)


def quality(mesh, displacement=None, tag="bubble") -> MeshQualityReport:
    x = mesh.points if displacement is None else mesh.points + np.asarray(displacement, float)
    if displacement is not None and np.shape(displacement) != mesh.points.shape:
        raise ConfigurationError("displacement must be defined on every node")
    a, b, c = (x[mesh.cells[:, i]] for i in range(3))
    area = mesh.signed_areas(None if displacement is None else displacement)
    inverted = tuple(int(i) for i in np.flatnonzero(area <= 0.0))

    def angle(p, q, r):
        u, v = q - p, r - p
        cosv = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        return np.degrees(np.arccos(np.clip(cosv, -1.0, 1.0)))

    angles = np.column_stack([angle(a, b, c), angle(b, c, a), angle(c, a, b)])
    ok = area > 0.0
    amin = angles.min(axis=1)
    amax = angles.max(axis=1)
    skew = np.maximum((amax - 60.0) / 120.0, (60.0 - amin) / 60.0)
    min_angle = float(amin[ok].min()) if ok.any() else 0.0
    max_skew = float(skew.max()) if len(skew) else 0.0
    cv = 0.0
    if len(mesh.edges_with_tag(tag)):
        lengths = bubble_edge_lengths(mesh, displacement, tag)
        cv = float(np.std(lengths) / np.mean(lengths))
    return MeshQualityReport(min_angle, max_skew, cv, inverted)


# ----------------------------------------------------------------------- I/O

def save_mesh(mesh: Mesh2D, path) -> None:
    lines = [FORMAT_HEADER, f"vertices {mesh.n_nodes}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.points]
    lines.append(f"cells {mesh.n_cells}")
    for row in mesh.cell_nodes:
        lines.append(" ".join(str(int(v)) for v in row))
    lines.append(f"boundary {len(mesh.boundary_edges)}")
    for (a, b), t in zip(mesh.boundary_edges, mesh.boundary_tags):
        lines.append(f"{a} {b} {t}")
    lines.append(f"periodic {len(mesh.periodic_pairs)}")
    lines += [f"{i} {o}" for i, o in mesh.periodic_pairs]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path) -> Mesh2D:
    raw = Path(path).read_text().splitlines()
    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(raw) and not raw[pos].strip():
            pos += 1
        if pos >= len(raw):
            raise MeshParseError("unexpected end of file", pos + 1)
        pos += 1
        return pos, raw[pos - 1].split()

    def block(name):
        ln, tok = next_line()
        if len(tok) != 2 or tok[0] != name:
            raise MeshParseError(f"expected '{name} <count>', got {' '.join(tok)!r}", ln)
        try:
            return int(tok[1])
        except ValueError:
            raise MeshParseError(f"bad count {tok[1]!r}", ln) from None

    ln, tok = next_line()
    if " ".join(tok) != FORMAT_HEADER:
        raise MeshParseError(f"missing header {FORMAT_HEADER!r}", ln)

    n = block("vertices")
    pts = np.empty((n, 2))
    for i in range(n):
        ln, tok = next_line()
        try:
            if len(tok) != 2:
                raise ValueError
            pts[i] = float(tok[0]), float(tok[1])
        except ValueError:
            raise MeshParseError(f"expected 'x y', got {' '.join(tok)!r}", ln) from None

    m = block("cells")
    rows = []
    for _ in range(m):
        ln, tok = next_line()
        try:
            if len(tok) not in (3, 6):
                raise ValueError
            rows.append([int(v) for v in tok])
        except ValueError:
            raise MeshParseError("expected 3 or 6 node indices", ln) from None
    if len({len(r) for r in rows}) > 1:
        raise MeshParseError("mixed linear and quadratic cells", ln)
    cells = np.array(rows, dtype=np.int64).reshape(-1, len(rows[0]) if rows else 3)
    if cells.size and (cells.min() < 0 or cells.max() >= n):
        raise MeshValidationError("cell node index out of range")

    k = block("boundary")
    edges, tags = [], []
    for _ in range(k):
        ln, tok = next_line()
        if len(tok) != 3:
            raise MeshParseError("expected 'v0 v1 tag'", ln)
        try:
            edges.append((int(tok[0]), int(tok[1])))
        except ValueError:
            raise MeshParseError("bad boundary vertex index", ln) from None
        if tok[2] not in TAGS:
            raise MeshValidationError(f"line {ln}: unknown boundary tag {tok[2]!r}")
        tags.append(tok[2])

    p = block("periodic")
    pairs = []
    for _ in range(p):
        ln, tok = next_line()
        try:
            if len(tok) != 2:
                raise ValueError
            pairs.append((int(tok[0]), int(tok[1])))
        except ValueError:
            raise MeshParseError("expected 'inlet_vertex outlet_vertex'", ln) from None

    mid = cells[:, 3:] if cells.shape[1] == 6 else None
    mesh = Mesh2D(pts, cells[:, :3], np.array(edges, dtype=np.int64).reshape(-1, 2), tags, mid,
                  np.array(pairs, dtype=np.int64).reshape(-1, 2))
    return mesh.validate()
