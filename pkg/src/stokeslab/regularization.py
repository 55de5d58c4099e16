"""Regularized delta functions, the distance weight, and the unit bump.

The delta function lives in span{b_T^2 q : q in P_k(T)} on the single
triangle containing its anchor point, with b_T the cubic bubble.  Its
coefficients solve the moment system (q, delta)_T = q(x0) for all
q in P_k(T), so pairing with any piecewise-degree-k field reproduces the
point value exactly and the function together with its gradient vanishes
on the triangle boundary.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad as scipy_quad

from .basis import reference_basis
from .geometry import Domain, Mesh
from .quadrature import gauss_triangle


class DegenerateElement(RuntimeError):
    pass


class WeightSigma:
    """sigma(x) = sqrt(|x - x0|^2 + (kappa h)^2)."""

    def __init__(self, x0, kappa: float, h: float):
        if kappa <= 1.0:
            raise ValueError("kappa must exceed 1")
        self.x0 = np.asarray(x0, dtype=float)
        self.kappa = float(kappa)
        self.h = float(h)

    @property
    def floor(self) -> float:
        return self.kappa * self.h

    def eval(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        r2 = np.sum((pts - self.x0) ** 2, axis=1)
        return np.sqrt(r2 + (self.kappa * self.h) ** 2)

    def power(self, nu: float):
        """Callable pts -> sigma(pts)**nu for weighted norms."""
        return lambda pts: self.eval(pts) ** nu

    def __call__(self, pts):
        return self.eval(pts)


def eval_sigma(w: WeightSigma, x) -> float:
    return float(w.eval(np.asarray(x, dtype=float)[None, :])[0])


class DeltaFunction:
    """Smooth point-evaluation kernel supported on one triangle."""

    def __init__(self, mesh: Mesh, x0, degree: int):
        self.mesh = mesh
        self.x0 = np.asarray(x0, dtype=float)
        self.degree = degree
        self.element = mesh.locate_point(self.x0)

        basis = reference_basis(degree)
        rule = gauss_triangle(2 * degree + 6)
        vals = basis.eval(rule.points)  # (nq, ndl)
        lam0 = 1.0 - rule.points[:, 0] - rule.points[:, 1]
        bubble = lam0 * rule.points[:, 0] * rule.points[:, 1]
        w2 = rule.weights * bubble ** 2
        gram_ref = np.einsum("q,qm,qn->mn", w2, vals, vals)

        det = mesh._det[self.element]
        gram = gram_ref * det
        cond = np.linalg.cond(gram)
        if cond > 1e12:
            raise DegenerateElement(
                f"moment Gram matrix condition {cond:.3g} on element {self.element}")
        v0 = mesh.points[mesh.triangles[self.element, 0]]
        st = mesh._inv_jac[self.element] @ (self.x0 - v0)
        target = basis.eval(st[None, :])[0]
        self._coeff = np.linalg.solve(gram, target)
        self._basis = basis
        self._cond = cond

    def _ref_coords(self, pts):
        mesh = self.mesh
        v0 = mesh.points[mesh.triangles[self.element, 0]]
        return (np.atleast_2d(pts) - v0) @ mesh._inv_jac[self.element].T

    def value(self, pts):
        """Pointwise values; zero outside the supporting triangle."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        st = self._ref_coords(pts)
        lam = np.column_stack([1.0 - st[:, 0] - st[:, 1], st])
        inside = lam.min(axis=1) >= -1e-12
        out = np.zeros(len(pts))
        if inside.any():
            s = st[inside]
            bub = (1.0 - s[:, 0] - s[:, 1]) * s[:, 0] * s[:, 1]
            poly = self._basis.eval(s) @ self._coeff
            out[inside] = bub ** 2 * poly
        return out

    def gradient(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        st = self._ref_coords(pts)
        lam = np.column_stack([1.0 - st[:, 0] - st[:, 1], st])
        inside = lam.min(axis=1) >= -1e-12
        out = np.zeros((len(pts), 2))
        if inside.any():
            s = st[inside]
            x, y = s[:, 0], s[:, 1]
            l0 = 1.0 - x - y
            bub = l0 * x * y
            dbub = np.column_stack([y * (l0 - x), x * (l0 - y)])
            poly = self._basis.eval(s) @ self._coeff
            gpoly = np.einsum("pmi,m->pi", self._basis.grad(s), self._coeff)
            gref = (2.0 * bub[:, None] * dbub * poly[:, None]
                    + (bub ** 2)[:, None] * gpoly)
            ij = self.mesh._inv_jac[self.element]
            out[inside] = gref @ ij
        return out

    # -- pairings against finite element bases ---------------------------
    def support_elements(self, mesh: Mesh):
        """Elements of ``mesh`` covering the supporting triangle.

        ``mesh`` is the owning mesh or one of its uniform refinements.
        """
        gap = 0
        m = mesh
        while m is not None and m is not self.mesh:
            m = m.parent
            gap += 1
        if m is not self.mesh:
            raise ValueError("delta pairing requires a refinement of its mesh")
        lo = self.element * 4 ** gap
        return np.arange(lo, lo + 4 ** gap)

    def _pair(self, layout, use_gradient: bool, direction: int | None):
        mesh = layout.mesh
        elems = self.support_elements(mesh)
        deg = 6 + self.degree + layout.degree
        rule = gauss_triangle(deg)
        out = np.zeros(layout.n_dofs)
        v0 = mesh.points[mesh.triangles[elems, 0]]
        pts = v0[:, None, :] + np.einsum("tij,qj->tqi", mesh._jac[elems], rule.points)
        flat = pts.reshape(-1, 2)
        dvals = self.value(flat).reshape(len(elems), len(rule))
        wdet = rule.weights[None, :] * mesh._det[elems, None]
        if use_gradient:
            gref = layout.basis.grad(rule.points)  # (nq, ndl, 2)
            ij = mesh._inv_jac[elems]
            g = np.einsum("qmi,tij->tqmj", gref, ij)
            loc = np.einsum("tq,tqm->tm", wdet * dvals, g[:, :, :, direction])
        else:
            bvals = layout.basis.eval(rule.points)
            loc = np.einsum("tq,qm->tm", wdet * dvals, bvals)
        np.add.at(out, layout.elem_dofs[elems].ravel(), loc.ravel())
        return out

    def pair_basis(self, layout):
        """(delta_h, psi_j) for every scalar basis function."""
        return self._pair(layout, False, None)

    def pair_basis_gradient(self, layout, direction: int):
        """(delta_h, d psi_j / d x_direction)."""
        return self._pair(layout, True, direction)

    def mass(self) -> float:
        """Integral of delta_h; equals 1 by the constant-moment condition."""
        rule = gauss_triangle(6 + 2 * self.degree)
        verts = self.mesh.triangle_vertices(self.element)
        from .quadrature import map_to_element
        pts, w = map_to_element(rule, verts)
        return float(np.sum(w * self.value(pts)))

    def lp_norm(self, q: float) -> float:
        rule = gauss_triangle(2 * (6 + self.degree) + 2)
        from .quadrature import map_to_element
        pts, w = map_to_element(rule, self.mesh.triangle_vertices(self.element))
        vals = np.abs(self.value(pts))
        return float(np.sum(w * vals ** q) ** (1.0 / q))

    def sup_norm(self, density: int = 40) -> float:
        lattice = np.array([(i / density, j / density)
                            for i in range(density + 1)
                            for j in range(density + 1 - i)])
        verts = self.mesh.triangle_vertices(self.element)
        pts = verts[0] + lattice @ np.stack([verts[1] - verts[0], verts[2] - verts[0]])
        return float(np.abs(self.value(pts)).max())

    def weighted_grad_l2(self, sigma: WeightSigma, nu: float, k: int) -> float:
        """||sigma^nu grad^k delta_h||_{L2}; k in {0, 1}."""
        rule = gauss_triangle(2 * (6 + self.degree) + 4)
        from .quadrature import map_to_element
        pts, w = map_to_element(rule, self.mesh.triangle_vertices(self.element))
        if k == 0:
            mag = np.abs(self.value(pts))
        else:
            mag = np.linalg.norm(self.gradient(pts), axis=1)
        sv = sigma.eval(pts) ** nu
        return float(np.sqrt(np.sum(w * (sv * mag) ** 2)))


def build_delta(space_or_mesh, x0, degree: int | None = None) -> DeltaFunction:
    """Delta function for a space's velocity degree at x0."""
    if isinstance(space_or_mesh, Mesh):
        if degree is None:
            raise ValueError("degree required when passing a bare mesh")
        return DeltaFunction(space_or_mesh, x0, degree)
    space = space_or_mesh
    return DeltaFunction(space.mesh, x0, space.velocity_degree)


# exp(-1/(1-t)) integrated over t in [0, 1]; fixes the bump normalization
_BUMP_RADIAL = scipy_quad(lambda s: math.exp(-1.0 / s), 0.0, 1.0,
                          epsabs=1e-14, epsrel=1e-14)[0]


class SmoothBump:
    """C-infinity unit-mass bump supported on a ball inside the domain."""

    def __init__(self, domain: Domain, center=None, radius: float | None = None):
        verts = domain.vertices
        if center is None:
            center = domain.centroid
        if radius is None:
            radius = 0.2 * domain.diameter
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        n = len(verts)
        for i in range(n):
            a, b = verts[i], verts[(i + 1) % n]
            ab = b - a
            t = np.clip(np.dot(self.center - a, ab) / np.dot(ab, ab), 0.0, 1.0)
            if np.linalg.norm(self.center - (a + t * ab)) < self.radius - 1e-12:
                raise ValueError("bump support leaves the domain")
        for v in verts:
            if np.linalg.norm(self.center - v) < 1.5 * self.radius - 1e-12:
                raise ValueError("bump violates the corner clearance")
        self.normalization = 1.0 / (math.pi * self.radius ** 2 * _BUMP_RADIAL)

    def value(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        r2 = np.sum((pts - self.center) ** 2, axis=1) / self.radius ** 2
        out = np.zeros(len(pts))
        inside = r2 < 1.0
        out[inside] = self.normalization * np.exp(-1.0 / (1.0 - r2[inside]))
        return out

    def __call__(self, pts):
        return self.value(pts)

    def mass_quadrature(self, segments: int = 400) -> float:
        """Independent check of the unit mass by radial composite Simpson."""
        t = np.linspace(0.0, 1.0, 2 * segments + 1)
        vals = np.zeros_like(t)
        interior = t < 1.0
        vals[interior] = np.exp(-1.0 / (1.0 - t[interior]))
        weights = np.ones_like(t)
        weights[1:-1:2] = 4.0
        weights[2:-1:2] = 2.0
        integral = (t[1] - t[0]) / 3.0 * np.sum(weights * vals)
        return float(math.pi * self.radius ** 2 * self.normalization * integral)


def build_bump(domain: Domain, center=None, radius: float | None = None) -> SmoothBump:
    return SmoothBump(domain, center, radius)
