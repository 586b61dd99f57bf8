"""Reference-element data: quadrature rules and Lagrange shape functions.

Reference triangle has vertices (0,0), (1,0), (0,1).  Quadratic local nodes
3, 4, 5 are the midpoints of edges (0,1), (1,2), (2,0).  Edge parameters run
over [0, 1].
"""

import numpy as np

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

# local node triple (start, end, mid) of each local edge
EDGE_NODES = np.array([[0, 1, 3], [1, 2, 4], [2, 0, 5]])


def GAUSS_1D(n=4):
    """Gauss-Legendre points and weights mapped to [0, 1] (weights sum to 1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _tri_rule_degree5():
    a1, b1 = 0.059715871789770, 0.470142064105115
    a2, b2 = 0.797426985353087, 0.101286507323456
    w0 = 0.225
    w1 = 0.132394152788506
    w2 = 0.125939180544827
    bary = [(1 / 3, 1 / 3, 1 / 3)]
    wts = [w0]
    for a, b, w in ((a1, b1, w1), (a2, b2, w2)):
        for perm in ((a, b, b), (b, a, b), (b, b, a)):
            bary.append(perm)
            wts.append(w)
    bary = np.array(bary)
    return bary[:, 1:], 0.5 * np.array(wts)


def _tri_rule_collapsed(n):
    """Conical-product Gauss rule, exact to degree 2n - 2 on the triangle."""
    x, wx = GAUSS_1D(n)
    pts, wts = [], []
    for xi, wi in zip(x, wx):
        for yj, wj in zip(x, wx):
            pts.append((xi * (1.0 - yj), yj))
            wts.append(wi * wj * (1.0 - yj))
    return np.array(pts), np.array(wts)


def TRI_RULE(degree=5):
    """Points (nq, 2) and weights (sum 1/2) exact for polynomials of ``degree``."""
    if degree <= 5:
        p, w = _tri_rule_degree5()
        # the tabulated constants carry 15 digits; renormalise the weights
        return p, w * (0.5 / w.sum())
    return _tri_rule_collapsed(degree // 2 + 2)


# ------------------------------------------------------------- triangles

def p1_tri(xi):
    xi = np.atleast_2d(xi)
    r, s = xi[:, 0], xi[:, 1]
    N = np.column_stack([1.0 - r - s, r, s])
    dN = np.broadcast_to(np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]), (len(xi), 3, 2)).copy()
    return N, dN


def p2_tri(xi):
    xi = np.atleast_2d(xi)
    r, s = xi[:, 0], xi[:, 1]
    l0 = 1.0 - r - s
    N = np.column_stack([
        l0 * (2 * l0 - 1), r * (2 * r - 1), s * (2 * s - 1),
        4 * l0 * r, 4 * r * s, 4 * s * l0,
    ])
    dN = np.empty((len(xi), 6, 2))
    dN[:, 0] = np.column_stack([1 - 4 * l0, 1 - 4 * l0])
    dN[:, 1] = np.column_stack([4 * r - 1, 0 * r])
    dN[:, 2] = np.column_stack([0 * s, 4 * s - 1])
    dN[:, 3] = np.column_stack([4 * (l0 - r), -4 * r])
    dN[:, 4] = np.column_stack([4 * s, 4 * r])
    dN[:, 5] = np.column_stack([-4 * s, 4 * (l0 - s)])
    return N, dN


# constant second derivatives of the P2 basis: H[a] = d2 N_a / dxi_i dxi_j
P2_HESSIAN = np.array([
    [[4, 4], [4, 4]],
    [[4, 0], [0, 0]],
    [[0, 0], [0, 4]],
    [[-8, -4], [-4, 0]],
    [[0, 4], [4, 0]],
    [[0, -4], [-4, -8]],
], dtype=float)


def tri_basis(degree, xi):
    if degree == 1:
        return p1_tri(xi)
    if degree == 2:
        return p2_tri(xi)
    raise ValueError(f"unsupported degree {degree}")


# ----------------------------------------------------------------- edges

def line_basis(degree, s):
    """1D Lagrange basis on [0, 1], node order (start, end[, mid])."""
    s = np.atleast_1d(np.asarray(s, float))
    if degree == 1:
        return np.column_stack([1.0 - s, s]), np.column_stack([-np.ones_like(s), np.ones_like(s)])
    if degree == 2:
        N = np.column_stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)])
        dN = np.column_stack([4 * s - 3, 4 * s - 1, 4 - 8 * s])
        return N, dN
    raise ValueError(f"unsupported degree {degree}")


def edge_to_ref(k, s):
    """Reference-triangle coordinates of parameter ``s`` on local edge ``k``."""
    a = REF_VERTICES[k]
    b = REF_VERTICES[(k + 1) % 3]
    s = np.atleast_1d(s)
    return a[None, :] + s[:, None] * (b - a)[None, :]


def edge_direction(k):
    return REF_VERTICES[(k + 1) % 3] - REF_VERTICES[k]
