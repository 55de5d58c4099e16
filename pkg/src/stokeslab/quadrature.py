"""Numerical quadrature on the reference triangle.

The reference triangle is {(x, y) : x >= 0, y >= 0, x + y <= 1}.  Rules are
built by collapsing a tensor Gauss-Legendre grid with the Duffy map
(x, eta) -> (x, eta*(1 - x)); the Jacobian factor (1 - x) is folded into the
weights, so all weights stay positive and sum to the reference area 1/2.
"""

from __future__ import annotations

import numpy as np


class QuadratureRule:
    """Points and weights on the reference triangle.

    Attributes
    ----------
    points : (n, 2) array
        Quadrature nodes in reference coordinates.
    weights : (n,) array
        Positive weights summing to 1/2.
    degree : int
        Total polynomial degree integrated exactly.
    """

    def __init__(self, points, weights, degree):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.degree = int(degree)
        if np.any(self.weights <= 0.0):
            raise ValueError("quadrature weights must be positive")

    def __len__(self):
        return len(self.weights)

    def __repr__(self):
        return f"QuadratureRule(degree={self.degree}, npoints={len(self)})"


_RULE_CACHE: dict[int, QuadratureRule] = {}


def gauss_triangle(degree: int) -> QuadratureRule:
    """Rule exact for all polynomials of total degree <= ``degree``.

    After the Duffy collapse the x-integrand picks up one extra polynomial
    order from the Jacobian, so n Gauss points per direction handle total
    degree 2n - 2; the rule uses n = ceil((degree + 2) / 2).
    """
    degree = max(int(degree), 1)
    if degree in _RULE_CACHE:
        return _RULE_CACHE[degree]
    n = (degree + 3) // 2
    t, w = np.polynomial.legendre.leggauss(n)
    # shift from [-1, 1] to [0, 1]
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    xg, eg = np.meshgrid(t, t, indexing="ij")
    wx, we = np.meshgrid(w, w, indexing="ij")
    pts_x = xg.ravel()
    pts_y = (eg * (1.0 - xg)).ravel()
    wts = (wx * we * (1.0 - xg)).ravel()
    rule = QuadratureRule(np.column_stack([pts_x, pts_y]), wts, degree)
    _RULE_CACHE[degree] = rule
    return rule


_CHILD_MAPS = (
    (0.5, (0.0, 0.0)),
    (0.5, (0.5, 0.0)),
    (0.5, (0.0, 0.5)),
    (-0.5, (0.5, 0.5)),
)


def composite_rule(rule: QuadratureRule, levels: int = 1) -> QuadratureRule:
    """Apply the rule on 4^levels congruent sub-triangles.

    Exactness is preserved while non-polynomial (for example weakly
    singular) integrands are resolved much more accurately.
    """
    pts, wts = rule.points, rule.weights
    for _ in range(max(levels, 0)):
        new_pts, new_wts = [], []
        for scale, shift in _CHILD_MAPS:
            new_pts.append(scale * pts + np.asarray(shift))
            new_wts.append(0.25 * wts)
        pts = np.concatenate(new_pts)
        wts = np.concatenate(new_wts)
    return QuadratureRule(pts, wts, rule.degree)


def map_to_element(rule: QuadratureRule, verts):
    """Map a reference rule to a physical triangle.

    Parameters
    ----------
    rule : QuadratureRule
    verts : (3, 2) array of triangle vertices

    Returns
    -------
    points : (n, 2) physical quadrature points
    weights : (n,) physical weights (reference weights times |det J|)
    """
    verts = np.asarray(verts, dtype=float)
    v0 = verts[0]
    J = np.column_stack([verts[1] - v0, verts[2] - v0])
    det = abs(np.linalg.det(J))
    pts = rule.points @ J.T + v0
    return pts, rule.weights * det
