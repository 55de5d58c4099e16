"""Lagrange bases of degree 1..4 on the reference triangle.

Nodes sit on the barycentric lattice {(a, b, c)/r : a + b + c = r}.  The
classification of each node (vertex / edge / interior) drives the global
degree-of-freedom numbering in :mod:`stokeslab.space`; edge nodes carry the
barycentric weights of the two edge endpoints so both adjacent elements agree
on the physical location of a shared degree of freedom.
"""

from __future__ import annotations

import numpy as np

# local edges as (endpoint, endpoint) pairs of local vertex ids; edge e is
# opposite local vertex e
EDGE_VERTICES = ((1, 2), (2, 0), (0, 1))


class ReferenceBasis:
    """Lagrange basis on the reference triangle.

    Attributes
    ----------
    degree : int
    nodes : (ndof, 2) reference coordinates of the Lagrange nodes
    node_kind : list of tuples describing each node:
        ("vertex", v), ("edge", e, k) with k in 1..degree-1 the position
        along local edge e counted from its first endpoint, or
        ("interior", m) with m a running interior index.
    """

    def __init__(self, degree: int):
        if not 1 <= degree <= 4:
            raise ValueError("supported Lagrange degrees are 1..4")
        self.degree = r = degree
        bary = []
        for a in range(r, -1, -1):
            for b in range(r - a, -1, -1):
                bary.append((a, b, r - a - b))
        self.bary = np.array(bary, dtype=int)
        self.nodes = np.column_stack([self.bary[:, 1] / r, self.bary[:, 2] / r])
        self.ndof = len(bary)

        kinds = []
        n_int = 0
        for (a, b, c) in bary:
            if a == r:
                kinds.append(("vertex", 0))
            elif b == r:
                kinds.append(("vertex", 1))
            elif c == r:
                kinds.append(("vertex", 2))
            elif a == 0:
                # on edge 0 between local vertices 1 and 2; position from v1
                kinds.append(("edge", 0, c))
            elif b == 0:
                # edge 1 between local vertices 2 and 0; position from v2
                kinds.append(("edge", 1, a))
            elif c == 0:
                # edge 2 between local vertices 0 and 1; position from v0
                kinds.append(("edge", 2, b))
            else:
                kinds.append(("interior", n_int))
                n_int += 1
        self.node_kind = kinds
        self.n_interior = n_int

        exps = [(i, j) for i in range(r + 1) for j in range(r + 1 - i) ]
        self._ex = np.array([e[0] for e in exps])
        self._ey = np.array([e[1] for e in exps])
        V = self._monomials(self.nodes)
        self._coeff = np.linalg.inv(V)

    def _monomials(self, pts):
        pts = np.asarray(pts, dtype=float)
        x = pts[..., 0, None]
        y = pts[..., 1, None]
        return (x ** self._ex) * (y ** self._ey)

    def eval(self, pts):
        """Basis values at reference points; shape (..., ndof)."""
        return self._monomials(pts) @ self._coeff

    def grad(self, pts):
        """Reference gradients at points; shape (..., ndof, 2)."""
        pts = np.asarray(pts, dtype=float)
        x = pts[..., 0, None]
        y = pts[..., 1, None]
        ex, ey = self._ex, self._ey
        dx = np.where(ex > 0, ex * x ** np.maximum(ex - 1, 0) * y ** ey, 0.0)
        dy = np.where(ey > 0, ey * x ** ex * y ** np.maximum(ey - 1, 0), 0.0)
        gx = dx @ self._coeff
        gy = dy @ self._coeff
        return np.stack([gx, gy], axis=-1)

    def hess(self, pts):
        """Reference second derivatives; shape (..., ndof, 3) as (xx, xy, yy)."""
        pts = np.asarray(pts, dtype=float)
        x = pts[..., 0, None]
        y = pts[..., 1, None]
        ex, ey = self._ex, self._ey
        dxx = np.where(ex > 1, ex * (ex - 1) * x ** np.maximum(ex - 2, 0) * y ** ey, 0.0)
        dxy = np.where((ex > 0) & (ey > 0),
                       ex * ey * x ** np.maximum(ex - 1, 0) * y ** np.maximum(ey - 1, 0), 0.0)
        dyy = np.where(ey > 1, ey * (ey - 1) * x ** ex * y ** np.maximum(ey - 2, 0), 0.0)
        return np.stack([dxx @ self._coeff, dxy @ self._coeff, dyy @ self._coeff], axis=-1)


_BASIS_CACHE: dict[int, ReferenceBasis] = {}


def reference_basis(degree: int) -> ReferenceBasis:
    if degree not in _BASIS_CACHE:
        _BASIS_CACHE[degree] = ReferenceBasis(degree)
    return _BASIS_CACHE[degree]
