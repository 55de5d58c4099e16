"""Closed-form fields and forcing scenarios used by tests and experiments.

The polynomial Stokes solution is the curl of x^2(1-x)^2 y^2(1-y)^2 with
pressure x^3 - 1/4; its forcing was differentiated by hand and is guarded
by a finite-difference transcription test.  Rough radial fields provide
manufactured functions of limited Sobolev/Hoelder regularity so the
approximation assumptions are exercised at their stated sharpness.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad as scipy_quad

from .space import CallableField


# ----------------------------------------------------------------------
# polynomial Stokes solution on the unit square

def _poly_u(pts):
    x, y = pts[:, 0], pts[:, 1]
    u1 = 2 * x**2 * y * (2 * x**2 * y**2 - 3 * x**2 * y + x**2 - 4 * x * y**2
                         + 6 * x * y - 2 * x + 2 * y**2 - 3 * y + 1)
    u2 = 2 * x * y**2 * (-2 * x**2 * y**2 + 4 * x**2 * y - 2 * x**2 + 3 * x * y**2
                         - 6 * x * y + 3 * x - y**2 + 2 * y - 1)
    return np.column_stack([u1, u2])


def _poly_grad_u(pts):
    x, y = pts[:, 0], pts[:, 1]
    d11 = 4 * x * y * (4 * x**2 * y**2 - 6 * x**2 * y + 2 * x**2 - 6 * x * y**2
                       + 9 * x * y - 3 * x + 2 * y**2 - 3 * y + 1)
    d12 = 2 * x**2 * (6 * x**2 * y**2 - 6 * x**2 * y + x**2 - 12 * x * y**2
                      + 12 * x * y - 2 * x + 6 * y**2 - 6 * y + 1)
    d21 = 2 * y**2 * (-6 * x**2 * y**2 + 12 * x**2 * y - 6 * x**2 + 6 * x * y**2
                      - 12 * x * y + 6 * x - y**2 + 2 * y - 1)
    d22 = -d11
    g = np.empty((len(pts), 2, 2))
    g[:, 0, 0] = d11
    g[:, 0, 1] = d12
    g[:, 1, 0] = d21
    g[:, 1, 1] = d22
    return g


def _poly_hess_u(pts):
    x, y = pts[:, 0], pts[:, 1]
    h = np.empty((len(pts), 2, 2, 2))
    h[:, 0, 0, 0] = 4 * y * (12 * x**2 * y**2 - 18 * x**2 * y + 6 * x**2
                             - 12 * x * y**2 + 18 * x * y - 6 * x + 2 * y**2 - 3 * y + 1)
    h[:, 0, 0, 1] = h[:, 0, 1, 0] = 4 * x * (12 * x**2 * y**2 - 12 * x**2 * y + 2 * x**2
                                             - 18 * x * y**2 + 18 * x * y - 3 * x
                                             + 6 * y**2 - 6 * y + 1)
    h[:, 0, 1, 1] = 12 * x**2 * (2 * x**2 * y - x**2 - 4 * x * y + 2 * x + 2 * y - 1)
    h[:, 1, 0, 0] = 12 * y**2 * (-2 * x * y**2 + 4 * x * y - 2 * x + y**2 - 2 * y + 1)
    h[:, 1, 0, 1] = h[:, 1, 1, 0] = -h[:, 0, 0, 0]
    h[:, 1, 1, 1] = -h[:, 0, 0, 1]
    return h


def _poly_p(pts):
    return pts[:, 0] ** 3 - 0.25


def _poly_grad_p(pts):
    g = np.zeros((len(pts), 2))
    g[:, 0] = 3 * pts[:, 0] ** 2
    return g


def _poly_f(pts):
    x, y = pts[:, 0], pts[:, 1]
    f1 = (-24 * x**4 * y + 12 * x**4 + 48 * x**3 * y - 24 * x**3
          - 48 * x**2 * y**3 + 72 * x**2 * y**2 - 48 * x**2 * y + 15 * x**2
          + 48 * x * y**3 - 72 * x * y**2 + 24 * x * y - 8 * y**3 + 12 * y**2 - 4 * y)
    f2 = (48 * x**3 * y**2 - 48 * x**3 * y + 8 * x**3 - 72 * x**2 * y**2
          + 72 * x**2 * y - 12 * x**2 + 24 * x * y**4 - 48 * x * y**3
          + 48 * x * y**2 - 24 * x * y + 4 * x - 12 * y**4 + 24 * y**3 - 12 * y**2)
    return np.column_stack([f1, f2])


def polynomial_stokes():
    """Closed-form divergence-free solution, pressure, and forcing."""
    u = CallableField(_poly_u, _poly_grad_u, shape="vector", hessian=_poly_hess_u)
    p = CallableField(_poly_p, _poly_grad_p, shape="scalar")
    return {"u": u, "p": p, "f": _poly_f,
            "grad_u_l2": 2.0 / 35.0}  # sqrt(4/1225)


def pressure_gradient_scenario():
    """f = (1, 1) = grad(x + y - 1): the discrete velocity vanishes."""
    u = CallableField(lambda pts: np.zeros((len(pts), 2)),
                      lambda pts: np.zeros((len(pts), 2, 2)), shape="vector")
    p = CallableField(lambda pts: pts[:, 0] + pts[:, 1] - 1.0,
                      lambda pts: np.ones((len(pts), 2)), shape="scalar")
    return {"u": u, "p": p, "f": lambda pts: np.ones((len(pts), 2))}


# ----------------------------------------------------------------------
# random smooth zero-trace fields

def random_trig_velocity(rng, n_modes: int = 2, scale: float = 1.0):
    """sum c_{mn} sin(m pi x) sin(n pi y) per component; zero trace."""
    c = rng.standard_normal((2, n_modes, n_modes)) * scale

    def value(pts):
        x, y = pts[:, 0], pts[:, 1]
        out = np.zeros((len(pts), 2))
        for m in range(1, n_modes + 1):
            sx, sy = np.sin(m * np.pi * x), np.sin(m * np.pi * y)
            for n in range(1, n_modes + 1):
                sn = np.sin(n * np.pi * y)
                out[:, 0] += c[0, m - 1, n - 1] * sx * sn
                out[:, 1] += c[1, m - 1, n - 1] * sx * sn
        return out

    def gradient(pts):
        x, y = pts[:, 0], pts[:, 1]
        g = np.zeros((len(pts), 2, 2))
        for m in range(1, n_modes + 1):
            sx, cx = np.sin(m * np.pi * x), np.cos(m * np.pi * x)
            for n in range(1, n_modes + 1):
                sy, cy = np.sin(n * np.pi * y), np.cos(n * np.pi * y)
                for comp in range(2):
                    a = c[comp, m - 1, n - 1]
                    g[:, comp, 0] += a * m * np.pi * cx * sy
                    g[:, comp, 1] += a * n * np.pi * sx * cy
        return g

    return CallableField(value, gradient, shape="vector")


def random_trig_pressure(rng, n_modes: int = 2, scale: float = 1.0):
    c = rng.standard_normal((n_modes, n_modes)) * scale

    def value(pts):
        x, y = pts[:, 0], pts[:, 1]
        out = np.zeros(len(pts))
        for m in range(1, n_modes + 1):
            for n in range(1, n_modes + 1):
                out += c[m - 1, n - 1] * np.cos(m * np.pi * x) * np.cos(n * np.pi * y)
        return out

    def gradient(pts):
        x, y = pts[:, 0], pts[:, 1]
        g = np.zeros((len(pts), 2))
        for m in range(1, n_modes + 1):
            for n in range(1, n_modes + 1):
                a = c[m - 1, n - 1]
                g[:, 0] += -a * m * np.pi * np.sin(m * np.pi * x) * np.cos(n * np.pi * y)
                g[:, 1] += -a * n * np.pi * np.cos(m * np.pi * x) * np.sin(n * np.pi * y)
        return g

    return CallableField(value, gradient, shape="scalar")


# ----------------------------------------------------------------------
# rough radial fields

def _step(t):
    a = np.zeros_like(t)
    b = np.zeros_like(t)
    good = (t > 0) & (t < 1)
    a[good] = np.exp(-1.0 / (1.0 - t[good]))
    b[good] = np.exp(-1.0 / t[good])
    out = np.where(t <= 0, 1.0, 0.0)
    out[good] = a[good] / (a[good] + b[good])
    return out


def _step_d1(t):
    out = np.zeros_like(t)
    good = (t > 0) & (t < 1)
    tg = t[good]
    a = np.exp(-1.0 / (1.0 - tg))
    b = np.exp(-1.0 / tg)
    da = -a / (1.0 - tg) ** 2
    db = b / tg ** 2
    out[good] = (da * b - a * db) / (a + b) ** 2
    return out


def _step_d2(t):
    out = np.zeros_like(t)
    good = (t > 0) & (t < 1)
    tg = t[good]
    a = np.exp(-1.0 / (1.0 - tg))
    b = np.exp(-1.0 / tg)
    da = -a / (1.0 - tg) ** 2
    db = b / tg ** 2
    dda = a / (1.0 - tg) ** 4 - 2.0 * a / (1.0 - tg) ** 3
    ddb = b / tg ** 4 - 2.0 * b / tg ** 3
    u = da * b - a * db
    du = dda * b - a * ddb
    v = (a + b) ** 2
    dv = 2.0 * (a + b) * (da + db)
    out[good] = (du * v - u * dv) / v ** 2
    return out


class RadialPowerField:
    """v(x) = |x - c|^gamma * cutoff(|x - c|) along a fixed direction.

    The cutoff plateaus at 1 for r <= r_core and vanishes for r >= r_supp,
    so the field has exact zero trace whenever the support ball stays in
    the domain.  With gamma = 1 + beta the field lies in H^(2+beta) but in
    no smoother space, and with gamma = 1 + alpha it is C^(1,alpha).
    """

    def __init__(self, center, gamma, r_core=0.15, r_supp=0.3,
                 direction=(1.0, 0.0)):
        self.center = np.asarray(center, dtype=float)
        self.gamma = float(gamma)
        self.r_core = float(r_core)
        self.r_supp = float(r_supp)
        self.direction = np.asarray(direction, dtype=float)

    def _t(self, r):
        return (r - self.r_core) / (self.r_supp - self.r_core)

    def _radial(self, r, second: bool = False):
        """f, f', and optionally f'' of f(r) = r^gamma * S(t(r))."""
        g = self.gamma
        w = self.r_supp - self.r_core
        t = self._t(r)
        S, S1 = _step(t), _step_d1(t) / w
        rg = r ** g
        f = rg * S
        f1 = g * r ** (g - 1) * S + rg * S1
        if not second:
            return f, f1, None
        S2 = _step_d2(t) / w ** 2
        f2 = g * (g - 1) * r ** (g - 2) * S + 2 * g * r ** (g - 1) * S1 + rg * S2
        return f, f1, f2

    def as_field(self) -> CallableField:
        def value(pts):
            r = np.linalg.norm(np.atleast_2d(pts) - self.center, axis=1)
            f, _, _ = self._radial(np.maximum(r, 1e-300))
            return f[:, None] * self.direction

        def gradient(pts):
            pts = np.atleast_2d(pts)
            rel = pts - self.center
            r = np.maximum(np.linalg.norm(rel, axis=1), 1e-300)
            _, f1, _ = self._radial(r)
            rad = rel / r[:, None]
            return self.direction[None, :, None] * (f1[:, None] * rad)[:, None, :]

        return CallableField(value, gradient, shape="vector")

    def scalar_field(self) -> CallableField:
        def value(pts):
            r = np.linalg.norm(np.atleast_2d(pts) - self.center, axis=1)
            return self._radial(np.maximum(r, 1e-300))[0]

        def gradient(pts):
            pts = np.atleast_2d(pts)
            rel = pts - self.center
            r = np.maximum(np.linalg.norm(rel, axis=1), 1e-300)
            _, f1, _ = self._radial(r)
            return (f1 / r)[:, None] * rel

        return CallableField(value, gradient, shape="scalar")

    def h2_seminorm(self) -> float:
        """||D^2 v||_L2 from the radial closed form (2D polar integral)."""
        def integrand(r):
            _, f1, f2 = self._radial(np.array([r]), second=True)
            return (f2[0] ** 2 + (f1[0] / r) ** 2) * 2 * math.pi * r

        val, _ = scipy_quad(integrand, 1e-12, self.r_supp, limit=400)
        return math.sqrt(val)

    def h1_seminorm(self) -> float:
        def integrand(r):
            _, f1, _ = self._radial(np.array([r]))
            return f1[0] ** 2 * 2 * math.pi * r

        val, _ = scipy_quad(integrand, 1e-12, self.r_supp, limit=400)
        return math.sqrt(val)


# ----------------------------------------------------------------------
# forcing scenarios without closed-form solutions

def corner_bump_forcing(corner, delta_c, direction=(1.0, 1.0),
                        offset_direction=(1.0, 0.45)):
    """Unit-mass bump at distance delta_c from a corner.

    The default offset hugs one edge: a near-edge source keeps a monotone
    image structure (no alternating corner eddies), so interior responses
    scale predictably with delta_c.
    """
    corner = np.asarray(corner, dtype=float)
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    offset = np.asarray(offset_direction, dtype=float)
    offset = offset / np.linalg.norm(offset)
    center = corner + delta_c * offset
    radius = 0.3 * delta_c
    norm_const = 1.0 / (math.pi * radius ** 2
                        * scipy_quad(lambda s: math.exp(-1.0 / s), 0, 1,
                                     epsabs=1e-14, epsrel=1e-14)[0])

    def f(pts):
        pts = np.atleast_2d(pts)
        r2 = np.sum((pts - center) ** 2, axis=1) / radius ** 2
        amp = np.zeros(len(pts))
        inside = r2 < 1.0
        amp[inside] = norm_const * np.exp(-1.0 / (1.0 - r2[inside]))
        return amp[:, None] * direction

    return {"f": f, "center": center, "radius": radius}


def layer_velocity(r0=0.3, width=0.05, center=(0.5, 0.5)):
    """Steep circular interior layer with exact zero boundary trace."""
    center = np.asarray(center, dtype=float)

    def envelope(pts):
        x, y = pts[:, 0], pts[:, 1]
        return 16.0 * x * (1 - x) * y * (1 - y)

    def envelope_grad(pts):
        x, y = pts[:, 0], pts[:, 1]
        gx = 16.0 * (1 - 2 * x) * y * (1 - y)
        gy = 16.0 * x * (1 - x) * (1 - 2 * y)
        return np.column_stack([gx, gy])

    def value(pts):
        pts = np.atleast_2d(pts)
        r = np.linalg.norm(pts - center, axis=1)
        z = envelope(pts) * np.tanh((r - r0) / width)
        out = np.zeros((len(pts), 2))
        out[:, 0] = z
        return out

    def gradient(pts):
        pts = np.atleast_2d(pts)
        rel = pts - center
        r = np.maximum(np.linalg.norm(rel, axis=1), 1e-300)
        th = np.tanh((r - r0) / width)
        dth = (1.0 - th ** 2) / width
        env = envelope(pts)
        genv = envelope_grad(pts)
        g = np.zeros((len(pts), 2, 2))
        g[:, 0, :] = genv * th[:, None] + (env * dth / r)[:, None] * rel
        return g

    return CallableField(value, gradient, shape="vector")


def finite_difference_gradient(f, pts, eps=1e-6):
    """Central differences for transcription checks of hand-coded forms."""
    pts = np.atleast_2d(pts)
    base = np.asarray(f(pts))
    out = np.empty(base.shape + (2,))
    for d in range(2):
        dp = pts.copy(); dp[:, d] += eps
        dm = pts.copy(); dm[:, d] -= eps
        out[..., d] = (np.asarray(f(dp)) - np.asarray(f(dm))) / (2 * eps)
    return out
