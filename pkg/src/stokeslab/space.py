"""Taylor-Hood spaces, fields, interpolation, and norm computations.

A velocity space is a vector-valued continuous Lagrange space of degree k
with zero boundary trace; the pressure space is continuous Lagrange of
degree k-1 without a mean-value constraint (the zero-mean subspace is
handled by the solvers).  Scalar degree-of-freedom layouts are shared by
both components of the velocity.
"""

from __future__ import annotations

import numpy as np

from .basis import EDGE_VERTICES, reference_basis
from .geometry import Mesh, PointOutsideDomain, Subdomain, descend_locate
from .quadrature import gauss_triangle


class MismatchedSpaces(ValueError):
    """Raised when fields with incompatible shapes or meshes are combined."""


class ScalarLayout:
    """Global numbering for a continuous scalar Lagrange space."""

    def __init__(self, mesh: Mesh, degree: int):
        self.mesh = mesh
        self.degree = degree
        self.basis = reference_basis(degree)
        r = degree
        n_edge = r - 1
        nv, ne, nt = mesh.nv, len(mesh.edges), mesh.nt
        self.n_dofs = nv + ne * n_edge + nt * self.basis.n_interior

        tris = mesh.triangles
        elem_dofs = np.empty((nt, self.basis.ndof), dtype=np.int64)
        for m, kind in enumerate(self.basis.node_kind):
            if kind[0] == "vertex":
                elem_dofs[:, m] = tris[:, kind[1]]
            elif kind[0] == "edge":
                e, kpos = kind[1], kind[2]
                eid = mesh.tri_edges[:, e]
                first = tris[:, EDGE_VERTICES[e][0]]
                forward = mesh.edges[eid, 0] == first
                idx = np.where(forward, kpos, r - kpos)
                elem_dofs[:, m] = nv + eid * n_edge + (idx - 1)
            else:
                elem_dofs[:, m] = (nv + ne * n_edge
                                   + np.arange(nt) * self.basis.n_interior + kind[1])
        self.elem_dofs = elem_dofs

        coords = np.empty((self.n_dofs, 2))
        v0 = mesh.points[tris[:, 0]]
        ref = self.basis.nodes
        phys = v0[:, None, :] + np.einsum("tij,mj->tmi", mesh._jac, ref)
        coords[elem_dofs.ravel()] = phys.reshape(-1, 2)
        self.dof_coords = coords

        bnd = np.zeros(self.n_dofs, dtype=bool)
        bnd[:nv] = mesh.boundary_vertex
        if n_edge > 0:
            eb = np.repeat(mesh.boundary_edge, n_edge)
            bnd[nv:nv + ne * n_edge] = eb
        self.boundary_dof = bnd

    def eval_matrix(self, ref_pts):
        """Basis values at reference points, shape (npts, ndof_local)."""
        return self.basis.eval(ref_pts)


class FeSpace:
    """Velocity/pressure pair on a mesh.

    ``FeSpace.taylor_hood`` builds the standard inf-sup stable pair
    (k >= 2); the raw constructor also accepts the deliberately unstable
    equal-order (1, 1) pair used as a negative control in the inf-sup
    experiments.
    """

    def __init__(self, mesh: Mesh, velocity_degree: int = 2,
                 pressure_degree: int | None = None):
        if pressure_degree is None:
            pressure_degree = velocity_degree - 1
        if velocity_degree < 1 or pressure_degree < 1:
            raise ValueError("degrees must be at least 1")
        self.mesh = mesh
        self.velocity_degree = velocity_degree
        self.pressure_degree = pressure_degree
        self.vel = ScalarLayout(mesh, velocity_degree)
        self.pres = ScalarLayout(mesh, pressure_degree)
        self.n_vel_scalar = self.vel.n_dofs
        self.n_vel_dofs = 2 * self.vel.n_dofs
        self.n_pres_dofs = self.pres.n_dofs
        self.free_scalar = np.where(~self.vel.boundary_dof)[0]
        self.quad_degree = max(2 * velocity_degree + 2, 6)
        self.sample_density = 2 * velocity_degree + 1

    @classmethod
    def taylor_hood(cls, mesh: Mesh, k: int = 2) -> "FeSpace":
        if k < 2:
            raise ValueError("Taylor-Hood needs velocity degree >= 2")
        return cls(mesh, k, k - 1)

    def __repr__(self):
        return (f"FeSpace(P{self.velocity_degree}/P{self.pressure_degree}, "
                f"nv_dofs={self.n_vel_dofs}, np_dofs={self.n_pres_dofs})")

    def layout(self, kind: str) -> ScalarLayout:
        return self.vel if kind == "velocity" else self.pres

    def zero_field(self, kind: str) -> "FeField":
        n = self.n_vel_dofs if kind == "velocity" else self.n_pres_dofs
        return FeField(self, kind, np.zeros(n))

    def pressure_mass_vector(self):
        """Integrals of each pressure basis function."""
        rule = gauss_triangle(2 * self.pressure_degree)
        vals = self.pres.eval_matrix(rule.points)  # (nq, ndl)
        contrib = np.einsum("q,qm->m", rule.weights, vals)
        out = np.zeros(self.n_pres_dofs)
        np.add.at(out, self.pres.elem_dofs.ravel(),
                  np.outer(self.mesh._det, contrib).ravel())
        return out


class FeField:
    """Coefficient vector over a space, either velocity or pressure.

    Velocity coefficients are blocked: the x-component occupies the first
    ``n_vel_scalar`` entries, the y-component the rest.
    """

    def __init__(self, space: FeSpace, kind: str, coefficients):
        if kind not in ("velocity", "pressure"):
            raise ValueError("kind must be 'velocity' or 'pressure'")
        self.space = space
        self.kind = kind
        coeffs = np.asarray(coefficients, dtype=float)
        expect = space.n_vel_dofs if kind == "velocity" else space.n_pres_dofs
        if coeffs.shape != (expect,):
            raise ValueError(f"expected {expect} coefficients, got {coeffs.shape}")
        self.coefficients = coeffs

    @property
    def is_vector(self) -> bool:
        return self.kind == "velocity"

    def copy(self):
        return FeField(self.space, self.kind, self.coefficients.copy())

    def __sub__(self, other: "FeField") -> "FeField":
        if other.space is not self.space or other.kind != self.kind:
            raise MismatchedSpaces("fields live on different spaces")
        return FeField(self.space, self.kind, self.coefficients - other.coefficients)

    def __add__(self, other: "FeField") -> "FeField":
        if other.space is not self.space or other.kind != self.kind:
            raise MismatchedSpaces("fields live on different spaces")
        return FeField(self.space, self.kind, self.coefficients + other.coefficients)

    # -- elementwise evaluation -------------------------------------------
    def _component_coeffs(self):
        if self.kind == "velocity":
            n = self.space.n_vel_scalar
            return [self.coefficients[:n], self.coefficients[n:]]
        return [self.coefficients]

    def _local_ref(self, mesh, elems, pts):
        """Own-mesh element ids and reference coordinates for points.

        ``mesh``/``elems`` describe where the caller knows the points live;
        the field's mesh may be the same mesh, an ancestor, or a descendant
        obtained by uniform refinement.
        """
        own = self.space.mesh
        if mesh is own:
            own_elems = np.asarray(elems, dtype=np.int64)
        else:
            gap = 0
            m = mesh
            while m is not None and m is not own:
                m = m.parent
                gap += 1
            if m is own:
                # frame mesh is a refinement of the field's mesh
                own_elems = np.asarray(elems, dtype=np.int64) // (4 ** gap)
            else:
                gap = 0
                m = own
                while m is not None and m is not mesh:
                    m = m.parent
                    gap += 1
                if m is mesh:
                    own_elems = descend_locate(mesh, own, elems, pts)
                else:
                    own_elems = own.locate_points(pts)
        v0 = own.points[own.triangles[own_elems, 0]]
        st = np.einsum("pij,pj->pi", own._inv_jac[own_elems], pts - v0)
        return own_elems, st

    def values_on(self, mesh, elems, pts):
        pts = np.asarray(pts, dtype=float)
        own_elems, st = self._local_ref(mesh, elems, pts)
        layout = self.space.layout(self.kind)
        vals = layout.basis.eval(st)  # (np, ndl)
        dofs = layout.elem_dofs[own_elems]
        comps = [np.einsum("pm,pm->p", vals, c[dofs]) for c in self._component_coeffs()]
        if self.kind == "velocity":
            return np.stack(comps, axis=-1)
        return comps[0]

    def gradients_on(self, mesh, elems, pts):
        pts = np.asarray(pts, dtype=float)
        own_elems, st = self._local_ref(mesh, elems, pts)
        own = self.space.mesh
        layout = self.space.layout(self.kind)
        gref = layout.basis.grad(st)  # (np, ndl, 2)
        ij = own._inv_jac[own_elems]  # d(ref)/d(phys)
        gphys = np.einsum("pmi,pij->pmj", gref, ij)
        dofs = layout.elem_dofs[own_elems]
        comps = [np.einsum("pmj,pm->pj", gphys, c[dofs]) for c in self._component_coeffs()]
        if self.kind == "velocity":
            return np.stack(comps, axis=-2)  # (np, 2 comp, 2 deriv)
        return comps[0]

    def hessians_on(self, mesh, elems, pts):
        """Broken second derivatives; (np, ncomp, 2, 2) or (np, 2, 2)."""
        pts = np.asarray(pts, dtype=float)
        own_elems, st = self._local_ref(mesh, elems, pts)
        own = self.space.mesh
        layout = self.space.layout(self.kind)
        htri = layout.basis.hess(st)  # (np, ndl, 3) as xx, xy, yy
        dofs = layout.elem_dofs[own_elems]
        ij = own._inv_jac[own_elems]
        out = []
        for c in self._component_coeffs():
            hc = np.einsum("pmk,pm->pk", htri, c[dofs])
            href = np.empty((len(pts), 2, 2))
            href[:, 0, 0] = hc[:, 0]
            href[:, 0, 1] = href[:, 1, 0] = hc[:, 1]
            href[:, 1, 1] = hc[:, 2]
            out.append(np.einsum("pki,pkl,plj->pij", ij, href, ij))
        if self.kind == "velocity":
            return np.stack(out, axis=1)
        return out[0]

    # -- point evaluation ---------------------------------------------------
    def __call__(self, x):
        return evaluate(self, x)


def evaluate(field: FeField, x, gradient: bool = False):
    """Exact evaluation at a point, containing element tie-broken by id."""
    mesh = field.space.mesh
    x = np.asarray(x, dtype=float)
    elem = mesh.locate_point(x)
    pts = x[None, :]
    if gradient:
        out = field.gradients_on(mesh, [elem], pts)[0]
    else:
        out = field.values_on(mesh, [elem], pts)[0]
    return out


def evaluate_gradient(field: FeField, x):
    return evaluate(field, x, gradient=True)


def interpolate(space: FeSpace, f, kind: str = "velocity") -> FeField:
    """Nodal Lagrange interpolant.

    ``f`` maps an (n, 2) array of points to (n,) scalar values or (n, 2)
    vectors.  Velocity boundary coefficients are pinned to zero.
    """
    layout = space.layout(kind)
    vals = np.asarray(f(layout.dof_coords), dtype=float)
    if kind == "velocity":
        if vals.shape != (layout.n_dofs, 2):
            raise ValueError("velocity callable must return (n, 2) values")
        vals = vals.copy()
        vals[layout.boundary_dof] = 0.0
        coeffs = np.concatenate([vals[:, 0], vals[:, 1]])
    else:
        if vals.shape != (layout.n_dofs,):
            raise ValueError("pressure callable must return (n,) values")
        coeffs = vals
    return FeField(space, kind, coeffs)


class CallableField:
    """Analytic field with vectorized value/gradient callables."""

    def __init__(self, value, gradient=None, shape="scalar", hessian=None):
        if shape not in ("scalar", "vector"):
            raise ValueError("shape must be 'scalar' or 'vector'")
        self.value = value
        self.gradient = gradient
        self.hessian = hessian
        self.shape = shape

    @property
    def is_vector(self):
        return self.shape == "vector"

    def values_on(self, mesh, elems, pts):
        return np.asarray(self.value(np.asarray(pts, dtype=float)), dtype=float)

    def gradients_on(self, mesh, elems, pts):
        if self.gradient is None:
            raise ValueError("field has no gradient callable")
        return np.asarray(self.gradient(np.asarray(pts, dtype=float)), dtype=float)

    def hessians_on(self, mesh, elems, pts):
        if self.hessian is None:
            raise ValueError("field has no hessian callable")
        return np.asarray(self.hessian(np.asarray(pts, dtype=float)), dtype=float)


def _resolve_frame(fields, space):
    for f in fields:
        if isinstance(f, FeField):
            if space is not None and f.space.mesh is not space.mesh:
                # frame explicitly requested; fields transfer themselves
                continue
            return f.space
    if space is None:
        raise MismatchedSpaces("need an FeSpace frame to integrate callables")
    return space


def _combine(fields, coeffs, mesh, elems, pts, deriv):
    acc = None
    for f, c in zip(fields, coeffs):
        if deriv == 0:
            v = f.values_on(mesh, elems, pts)
        elif deriv == 1:
            v = f.gradients_on(mesh, elems, pts)
        else:
            v = f.hessians_on(mesh, elems, pts)
        acc = c * v if acc is None else acc + c * v
    return acc


def _pointwise_magnitude(arr):
    if arr.ndim == 1:
        return np.abs(arr)
    return np.sqrt(np.sum(arr.reshape(len(arr), -1) ** 2, axis=1))


def norm(field, against=None, *, kind="L2", deriv=0, subdomain=None,
         weight=None, space=None, quad_degree=None, density=None):
    """Norms and error norms of fields.

    Parameters
    ----------
    field, against : FeField or CallableField
        When ``against`` is given the norm of the difference is computed.
        Fields may live on different meshes of one refinement hierarchy;
        integration happens on the frame space's mesh.
    kind : "L1", "L2" or "Linf"
    deriv : 0 for values, 1 for gradients, 2 for broken second derivatives
    subdomain : optional Subdomain; integration/sampling is restricted to
        elements whose centroid lies inside
    weight : optional callable pts -> weights multiplying the integrand
        (ignored for Linf)
    space : frame FeSpace, required when all fields are callables
    """
    fields = [field] if against is None else [field, against]
    coeffs = [1.0] if against is None else [1.0, -1.0]
    vec = {getattr(f, "is_vector") for f in fields}
    if len(vec) != 1:
        raise MismatchedSpaces("cannot mix scalar and vector fields")
    frame = _resolve_frame(fields, space)
    mesh = frame.mesh
    if subdomain is None:
        elems = np.arange(mesh.nt)
    else:
        elems = subdomain.classify(mesh)
        if len(elems) == 0:
            return 0.0

    if kind in ("L1", "L2"):
        qd = quad_degree if quad_degree is not None else frame.quad_degree
        rule = gauss_triangle(qd)
        v0 = mesh.points[mesh.triangles[elems, 0]]
        pts = (v0[:, None, :]
               + np.einsum("tij,qj->tqi", mesh._jac[elems], rule.points))
        npts = pts.reshape(-1, 2)
        eids = np.repeat(elems, len(rule))
        vals = _combine(fields, coeffs, mesh, eids, npts, deriv)
        mags = _pointwise_magnitude(vals)
        if weight is not None:
            mags = mags * np.asarray(weight(npts), dtype=float)
        w = np.outer(mesh._det[elems], rule.weights).ravel()
        if kind == "L1":
            return float(np.sum(w * mags))
        return float(np.sqrt(np.sum(w * mags ** 2)))

    if kind != "Linf":
        raise ValueError(f"unknown norm kind {kind!r}")
    m = density if density is not None else frame.sample_density
    lattice = []
    for i in range(m + 1):
        for j in range(m + 1 - i):
            lattice.append((i / m, j / m))
    lattice = np.array(lattice)
    v0 = mesh.points[mesh.triangles[elems, 0]]
    pts = v0[:, None, :] + np.einsum("tij,qj->tqi", mesh._jac[elems], lattice)
    npts = pts.reshape(-1, 2)
    eids = np.repeat(elems, len(lattice))
    vals = _combine(fields, coeffs, mesh, eids, npts, deriv)
    mags = _pointwise_magnitude(vals)
    return float(mags.max()) if len(mags) else 0.0


def h1_norm(field, against=None, **kw):
    a = norm(field, against, kind="L2", deriv=0, **kw)
    b = norm(field, against, kind="L2", deriv=1, **kw)
    return float(np.hypot(a, b))


# ----------------------------------------------------------------------
# smooth cutoff

def _smoothstep(t):
    """C-infinity step: 1 for t <= 0, 0 for t >= 1."""
    t = np.asarray(t, dtype=float)
    a = np.zeros_like(t)
    b = np.zeros_like(t)
    good = (t > 0) & (t < 1)
    a[good] = np.exp(-1.0 / (1.0 - t[good]))
    b[good] = np.exp(-1.0 / t[good])
    out = np.where(t <= 0, 1.0, np.where(t >= 1, 0.0, 0.0))
    out[good] = a[good] / (a[good] + b[good])
    return out


def _smoothstep_deriv(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    good = (t > 0) & (t < 1)
    tg = t[good]
    a = np.exp(-1.0 / (1.0 - tg))
    b = np.exp(-1.0 / tg)
    da = -a / (1.0 - tg) ** 2
    db = b / tg ** 2
    out[good] = (da * (a + b) - a * (da + db)) / (a + b) ** 2
    return out


class CutoffFunction:
    """Smooth radial cutoff: 1 on Q, 0 outside the d-enlargement of Q."""

    def __init__(self, Q: Subdomain, d: float, domain=None):
        if d <= 0:
            raise ValueError("width d must be positive")
        if Q.kind == "full":
            raise ValueError("cutoff needs a ball or annulus core")
        self.Q = Q
        self.d = float(d)
        if domain is not None:
            self._check_inside(domain)

    def _check_inside(self, domain):
        verts = domain.vertices
        c = self.Q.center
        n = len(verts)
        reach = self.Q.r_outer + self.d
        for i in range(n):
            a, b = verts[i], verts[(i + 1) % n]
            ab = b - a
            t = np.clip(np.dot(c - a, ab) / np.dot(ab, ab), 0.0, 1.0)
            dist = np.linalg.norm(c - (a + t * ab))
            if dist < reach - 1e-12:
                raise ValueError("enlarged cutoff support leaves the domain")

    def _signed(self, pts):
        """Distance beyond Q, scaled by d: <=0 inside Q, >=1 outside Q_d."""
        rho = np.linalg.norm(np.atleast_2d(pts) - self.Q.center, axis=1)
        if self.Q.kind == "ball":
            s = rho - self.Q.r_outer
        else:
            s = np.maximum(self.Q.r_inner - rho, rho - self.Q.r_outer)
        return s / self.d, rho

    def value(self, pts):
        t, _ = self._signed(pts)
        return _smoothstep(t)

    def gradient(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        t, rho = self._signed(pts)
        dz = _smoothstep_deriv(t) / self.d
        rad = pts - self.Q.center
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(rho[:, None] > 0, rad / np.maximum(rho, 1e-300)[:, None], 0.0)
        if self.Q.kind == "annulus":
            inner_side = (self.Q.r_inner - rho) > (rho - self.Q.r_outer)
            sign = np.where(inner_side, -1.0, 1.0)
        else:
            sign = np.ones_like(rho)
        return dz[:, None] * sign[:, None] * unit

    def measured_gradient_bound(self, n_samples: int = 4000, seed: int = 0):
        """max |grad omega| * d over a deterministic radial sample."""
        rng = np.random.default_rng(seed)
        lo = max(self.Q.r_inner - 2 * self.d, 0.0)
        hi = self.Q.r_outer + 2 * self.d
        rr = rng.uniform(lo, hi, n_samples)
        th = rng.uniform(0, 2 * np.pi, n_samples)
        pts = self.Q.center + np.column_stack([rr * np.cos(th), rr * np.sin(th)])
        g = self.gradient(pts)
        return float(np.max(np.linalg.norm(g, axis=1)) * self.d)


def build_cutoff(Q: Subdomain, d: float, domain=None) -> CutoffFunction:
    return CutoffFunction(Q, d, domain)


# ----------------------------------------------------------------------
# field file format

def write_field(field: FeField, path):
    deg = (field.space.velocity_degree if field.kind == "velocity"
           else field.space.pressure_degree)
    lines = [f"FIELD {field.kind} {deg} {len(field.coefficients)}"]
    lines.extend(f"{c:.17g}" for c in field.coefficients)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field(space: FeSpace, path) -> FeField:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if header[0] != "FIELD":
            raise ValueError("not a field file")
        kind, deg, ndof = header[1], int(header[2]), int(header[3])
        expect_deg = (space.velocity_degree if kind == "velocity"
                      else space.pressure_degree)
        if deg != expect_deg:
            raise MismatchedSpaces("field degree does not match the space")
        coeffs = np.array([float(fh.readline()) for _ in range(ndof)])
    return FeField(space, kind, coeffs)
