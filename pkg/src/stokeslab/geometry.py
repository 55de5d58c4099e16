"""Convex polygonal domains, triangulations, subdomains, dyadic decompositions.

Meshes are immutable after construction.  Uniform (red) refinement splits
every triangle into four congruent children and records the parent/child
relation, which later lets fields on a refined mesh be evaluated exactly at
points of a coarser ancestor without a global search.
"""

from __future__ import annotations

import math

import numpy as np


class PointOutsideDomain(ValueError):
    """Raised when a point cannot be located inside the mesh."""


class DegenerateDecomposition(ValueError):
    """Raised when a dyadic decomposition cannot be built."""


class Domain:
    """A simple convex polygon.

    Vertices are given in order (either orientation); construction certifies
    convexity and stores a counterclockwise copy.  With ``rescale=True`` the
    polygon is shrunk about its centroid so its diameter does not exceed 1,
    the normalization the annulus machinery assumes.  The standard unit
    square is deliberately kept at [0, 1]^2 so structured meshes have
    h = sqrt(2)/n; the decomposition code compensates by allowing extra
    outer annuli (see :func:`build_dyadic`).
    """

    def __init__(self, vertices, rescale: bool = False):
        verts = np.asarray(vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 3:
            raise ValueError("need at least three 2D vertices")
        area2 = 0.0
        n = len(verts)
        for i in range(n):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % n]
            area2 += x0 * y1 - x1 * y0
        if area2 < 0:
            verts = verts[::-1].copy()
        crosses = []
        for i in range(n):
            a = verts[(i + 1) % n] - verts[i]
            b = verts[(i + 2) % n] - verts[(i + 1) % n]
            crosses.append(a[0] * b[1] - a[1] * b[0])
        crosses = np.array(crosses)
        scale = np.max(np.abs(verts)) + 1.0
        if np.any(crosses <= 1e-14 * scale * scale):
            raise ValueError("polygon is not strictly convex")
        if rescale:
            diam = self._diameter(verts)
            if diam > 1.0:
                c = verts.mean(axis=0)
                verts = c + (verts - c) / diam
        self.vertices = verts
        self.vertices.flags.writeable = False

    @staticmethod
    def _diameter(verts):
        d = verts[:, None, :] - verts[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    @property
    def diameter(self) -> float:
        return self._diameter(self.vertices)

    @property
    def centroid(self):
        return self.vertices.mean(axis=0)

    def area(self) -> float:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        return float(0.5 * np.sum(v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]))

    @classmethod
    def unit_square(cls) -> "Domain":
        return cls([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])


class Mesh:
    """Conforming triangulation with positive orientation.

    Attributes
    ----------
    points : (nv, 2) float array
    triangles : (nt, 3) int array
    boundary_vertex : (nv,) bool array
    edges : (ne, 2) int array of sorted vertex pairs
    tri_edges : (nt, 3) int array; edge ``tri_edges[t, e]`` is opposite
        local vertex ``e`` of triangle ``t``
    boundary_edge : (ne,) bool array
    h : float, maximum circumdiameter
    quasi_uniformity : float, h divided by the smallest inradius
    """

    def __init__(self, points, triangles, parent=None, child_map=None):
        pts = np.asarray(points, dtype=float)
        tris = np.asarray(triangles, dtype=np.int64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must be (nv, 2)")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise ValueError("triangles must be (nt, 3)")

        v0 = pts[tris[:, 0]]
        e1 = pts[tris[:, 1]] - v0
        e2 = pts[tris[:, 2]] - v0
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        if np.any(det == 0.0):
            raise ValueError("degenerate (zero-area) triangle")
        flip = det < 0
        if np.any(flip):
            tris = tris.copy()
            tris[flip, 1], tris[flip, 2] = tris[flip, 2], tris[flip, 1]
            e1 = pts[tris[:, 1]] - pts[tris[:, 0]]
            e2 = pts[tris[:, 2]] - pts[tris[:, 0]]
            det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]

        self.points = pts
        self.triangles = tris
        self.nv = len(pts)
        self.nt = len(tris)

        # edge tables; local edge e joins the two vertices not equal to e
        pairs = np.concatenate([
            tris[:, (1, 2)], tris[:, (2, 0)], tris[:, (0, 1)],
        ])
        pairs = np.sort(pairs, axis=1)
        self.edges, inv, counts = np.unique(
            pairs, axis=0, return_inverse=True, return_counts=True)
        self.tri_edges = inv.reshape(3, self.nt).T.copy()
        if np.any(counts > 2):
            raise ValueError("non-conforming mesh: edge shared by >2 triangles")
        self.boundary_edge = counts == 1
        self.boundary_vertex = np.zeros(self.nv, dtype=bool)
        self.boundary_vertex[self.edges[self.boundary_edge].ravel()] = True

        # geometry caches
        self._jac = np.stack([e1, e2], axis=-1)  # columns e1, e2
        self._det = det
        inv_jac = np.empty_like(self._jac)
        inv_jac[:, 0, 0] = e2[:, 1] / det
        inv_jac[:, 0, 1] = -e2[:, 0] / det
        inv_jac[:, 1, 0] = -e1[:, 1] / det
        inv_jac[:, 1, 1] = e1[:, 0] / det
        self._inv_jac = inv_jac
        self.areas = 0.5 * det
        self.centroids = (pts[tris[:, 0]] + pts[tris[:, 1]] + pts[tris[:, 2]]) / 3.0

        la = np.linalg.norm(pts[tris[:, 2]] - pts[tris[:, 1]], axis=1)
        lb = np.linalg.norm(pts[tris[:, 0]] - pts[tris[:, 2]], axis=1)
        lc = np.linalg.norm(pts[tris[:, 1]] - pts[tris[:, 0]], axis=1)
        self.circumdiameter = la * lb * lc / (2.0 * self.areas)
        perimeter = la + lb + lc
        self.inradius = 2.0 * self.areas / perimeter
        self.h = float(self.circumdiameter.max())
        self.quasi_uniformity = float(self.h / self.inradius.min())

        self.parent = parent
        self.child_map = child_map  # (parent.nt, 4) child element ids

        for arr in (self.points, self.triangles, self.edges, self.tri_edges):
            arr.flags.writeable = False

    # ------------------------------------------------------------------
    def __repr__(self):
        return f"Mesh(nv={self.nv}, nt={self.nt}, h={self.h:.6g})"

    def triangle_vertices(self, t):
        return self.points[self.triangles[t]]

    def barycentric(self, pts):
        """Barycentric coordinates of points w.r.t. every triangle.

        Returns an array of shape (npts, nt, 3).
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        v0 = self.points[self.triangles[:, 0]]
        rel = pts[:, None, :] - v0[None, :, :]
        st = np.einsum("tij,ptj->pti", self._inv_jac, rel)
        lam0 = 1.0 - st[..., 0] - st[..., 1]
        return np.concatenate([lam0[..., None], st], axis=-1)

    def locate_point(self, x, tol: float = 1e-12) -> int:
        """Id of a triangle containing x; lowest id wins ties."""
        bary = self.barycentric(x)[0]
        inside = bary.min(axis=1) >= -tol
        if not inside.any():
            raise PointOutsideDomain(f"point {tuple(np.asarray(x, float))} is outside the mesh")
        return int(np.argmax(inside))

    def locate_points(self, pts, tol: float = 1e-12):
        bary = self.barycentric(pts)
        inside = bary.min(axis=2) >= -tol
        hit = inside.any(axis=1)
        if not hit.all():
            raise PointOutsideDomain(f"{int((~hit).sum())} points outside the mesh")
        return np.argmax(inside, axis=1)

    def contains(self, x, tol: float = 1e-12) -> bool:
        bary = self.barycentric(x)[0]
        return bool((bary.min(axis=1) >= -tol).any())


def build_structured_mesh(domain: Domain, n: int) -> Mesh:
    """Quasi-uniform mesh with 2 n^2 triangles on the unit square.

    General convex polygons are triangulated by a centroid fan and then
    uniformly refined, so their ``n`` must be a power of two.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    verts = domain.vertices
    square = (len(verts) == 4
              and np.allclose(verts, Domain.unit_square().vertices))
    if square:
        idx = np.arange((n + 1) * (n + 1)).reshape(n + 1, n + 1)
        xs = np.linspace(0.0, 1.0, n + 1)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        a = idx[:-1, :-1].ravel()
        b = idx[1:, :-1].ravel()
        c = idx[1:, 1:].ravel()
        d = idx[:-1, 1:].ravel()
        tris = np.concatenate([
            np.column_stack([a, b, c]),
            np.column_stack([a, c, d]),
        ])
        return Mesh(pts, tris)
    m = int(round(math.log2(n)))
    if 2 ** m != n:
        raise ValueError("polygon meshes require n to be a power of two")
    c = domain.centroid
    nv = len(verts)
    pts = np.vstack([verts, c])
    tris = np.array([[i, (i + 1) % nv, nv] for i in range(nv)])
    mesh = Mesh(pts, tris)
    for _ in range(m):
        mesh = refine_uniform(mesh)
    return mesh


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: every triangle into 4 congruent children."""
    pts = mesh.points
    tris = mesh.triangles
    mid = 0.5 * (pts[mesh.edges[:, 0]] + pts[mesh.edges[:, 1]])
    new_pts = np.vstack([pts, mid])
    m = mesh.nv + mesh.tri_edges  # (nt, 3) midpoint vertex ids
    v0, v1, v2 = tris[:, 0], tris[:, 1], tris[:, 2]
    m0, m1, m2 = m[:, 0], m[:, 1], m[:, 2]
    children = np.stack([
        np.column_stack([v0, m2, m1]),
        np.column_stack([m2, v1, m0]),
        np.column_stack([m1, m0, v2]),
        np.column_stack([m0, m1, m2]),
    ], axis=1)  # (nt, 4, 3)
    new_tris = children.reshape(-1, 3)
    child_map = np.arange(4 * mesh.nt).reshape(mesh.nt, 4)
    return Mesh(new_pts, new_tris, parent=mesh, child_map=child_map)


def descend_locate(coarse: Mesh, fine: Mesh, coarse_elems, pts, tol=1e-12):
    """Fine-mesh element ids for points with known coarse containers.

    ``fine`` must be obtained from ``coarse`` by repeated uniform refinement.
    """
    chain = []
    m = fine
    while m is not coarse:
        if m.parent is None:
            raise ValueError("fine mesh is not a refinement of the coarse mesh")
        chain.append(m)
        m = m.parent
    elems = np.asarray(coarse_elems, dtype=np.int64).copy()
    pts = np.asarray(pts, dtype=float)
    for level in reversed(chain):
        cand = level.child_map[elems]  # (np, 4)
        best = np.full(len(elems), -1, dtype=np.int64)
        best_val = np.full(len(elems), -np.inf)
        for c in range(4):
            ids = cand[:, c]
            v0 = level.points[level.triangles[ids, 0]]
            rel = pts - v0
            st = np.einsum("pij,pj->pi", level._inv_jac[ids], rel)
            lam = np.minimum(1.0 - st[:, 0] - st[:, 1], np.minimum(st[:, 0], st[:, 1]))
            take = lam > best_val
            best[take] = ids[take]
            best_val[take] = lam[take]
        if best_val.min() < -1e-9:
            raise PointOutsideDomain("descent lost a point; inconsistent hierarchy")
        elems = best
    return elems


def mesh_hierarchy(base: Mesh, levels: int):
    """[base, refined once, ...] with ``levels`` meshes in total."""
    out = [base]
    for _ in range(levels - 1):
        out.append(refine_uniform(out[-1]))
    return out


# ----------------------------------------------------------------------
# subdomains

class Subdomain:
    """Radially-defined subset of the domain.

    kind is one of "ball" (dist <= r_outer), "annulus"
    (r_inner <= dist <= r_outer) or "full".  Element membership is decided
    by the centroid, so norms over subdomains integrate whole elements.
    """

    def __init__(self, kind, center=None, r_inner=0.0, r_outer=0.0):
        if kind not in ("ball", "annulus", "full"):
            raise ValueError(f"unknown subdomain kind {kind!r}")
        self.kind = kind
        self.center = None if center is None else np.asarray(center, dtype=float)
        self.r_inner = float(r_inner)
        self.r_outer = float(r_outer)
        if kind != "full" and self.center is None:
            raise ValueError("ball/annulus subdomains need a center")

    def __repr__(self):
        if self.kind == "full":
            return "Subdomain(full)"
        return (f"Subdomain({self.kind}, center={tuple(self.center)}, "
                f"r=[{self.r_inner:.6g}, {self.r_outer:.6g}])")

    def contains(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.kind == "full":
            return np.ones(len(pts), dtype=bool)
        d = np.linalg.norm(pts - self.center, axis=1)
        if self.kind == "ball":
            return d <= self.r_outer
        return (d >= self.r_inner) & (d <= self.r_outer)

    def classify(self, mesh: Mesh):
        """Element ids whose centroid satisfies the radius predicate."""
        return np.where(self.contains(mesh.centroids))[0]

    def enlarged(self, d: float) -> "Subdomain":
        if self.kind == "full":
            return self
        if self.kind == "ball":
            return Subdomain("ball", self.center, 0.0, self.r_outer + d)
        return Subdomain("annulus", self.center,
                         max(self.r_inner - d, 0.0), self.r_outer + d)


def classify_elements(mesh: Mesh, sub: Subdomain):
    return sub.classify(mesh)


class DyadicDecomposition:
    """Ball around x0 of radius K*h plus geometric annuli of radii 2^-j.

    The paper-style index range is j = 0..J with the whole domain within
    unit distance of x0; when x0 sits close to a corner of an unscaled
    domain, extra outer annuli with negative j are added so the coverage
    identity still holds exactly.
    """

    def __init__(self, mesh: Mesh, x0, K: float):
        x0 = np.asarray(x0, dtype=float)
        h = mesh.h
        if K <= 1.0:
            raise ValueError("K must exceed 1")
        Kh = K * h
        pts = mesh.points
        dmax = float(np.linalg.norm(pts - x0, axis=1).max())
        if Kh > max(dmax, 1.0):
            raise DegenerateDecomposition(
                f"K*h = {Kh:.3g} exceeds the domain extent around x0")
        if Kh > 1.0:
            raise DegenerateDecomposition("precondition K*h <= 1 violated")
        # largest J with 2^-(J+1) <= K h <= 2^-J; exact ties take the larger J
        J = int(math.floor(-math.log2(Kh) + 1e-12))
        j_min = 0
        while 2.0 ** (-j_min) < dmax * (1.0 + 1e-12):
            j_min -= 1
        self.mesh = mesh
        self.x0 = x0
        self.K = float(K)
        self.h = h
        self.J = J
        self.j_min = j_min
        self.omega_star = Subdomain("ball", x0, 0.0, Kh)

        def d(j):
            return 2.0 ** (-j)

        self.annuli = {}
        self.enlarged1 = {}
        self.enlarged2 = {}
        self.enlarged3 = {}
        for j in range(j_min, J + 1):
            self.annuli[j] = Subdomain("annulus", x0, d(j + 1), d(j))
            self.enlarged1[j] = Subdomain("annulus", x0, d(j + 2), d(j - 1))
            self.enlarged2[j] = Subdomain("annulus", x0, d(j + 3), d(j - 2))
            self.enlarged3[j] = Subdomain("annulus", x0, d(j + 4), d(j - 3))

    def d_j(self, j: int) -> float:
        return 2.0 ** (-j)

    STAR_LABEL = -(10 ** 9)

    def partition_labels(self):
        """Exclusive element labels: STAR_LABEL for the ball, else annulus j.

        Every element receives exactly one label, so summed areas reproduce
        the mesh area to rounding error.
        """
        dist = np.linalg.norm(self.mesh.centroids - self.x0, axis=1)
        labels = np.empty(self.mesh.nt, dtype=np.int64)
        star = dist <= self.K * self.h
        labels[star] = self.STAR_LABEL
        rest = ~star
        with np.errstate(divide="ignore"):
            j = np.floor(-np.log2(np.maximum(dist[rest], 1e-300))).astype(np.int64)
        labels[rest] = np.clip(j, self.j_min, self.J)
        return labels


def build_dyadic(mesh: Mesh, x0, K: float) -> DyadicDecomposition:
    return DyadicDecomposition(mesh, x0, K)


# ----------------------------------------------------------------------
# text format

def write_mesh(mesh: Mesh, path):
    """Line-oriented mesh file: "NV NT", vertices "x y flag", triangles."""
    lines = [f"{mesh.nv} {mesh.nt}"]
    for (x, y), flag in zip(mesh.points, mesh.boundary_vertex):
        lines.append(f"{x:.17g} {y:.17g} {int(flag)}")
    for t in mesh.triangles:
        lines.append(f"{t[0]} {t[1]} {t[2]}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    with open(path, "r", encoding="ascii") as fh:
        tokens = fh.read().split()
    nv, nt = int(tokens[0]), int(tokens[1])
    body = tokens[2:]
    pts = np.empty((nv, 2))
    flags = np.empty(nv, dtype=bool)
    for i in range(nv):
        pts[i, 0] = float(body[3 * i])
        pts[i, 1] = float(body[3 * i + 1])
        flags[i] = bool(int(body[3 * i + 2]))
    rest = body[3 * nv:]
    tris = np.array(rest[: 3 * nt], dtype=np.int64).reshape(nt, 3)
    mesh = Mesh(pts, tris)
    if not np.array_equal(mesh.boundary_vertex, flags):
        raise ValueError("stored boundary flags disagree with mesh topology")
    return mesh
