"""Assembly and solution of the discrete Stokes saddle-point system.

The bilinear form is
    a((u, p), (v, q)) = (grad u, grad v) - (p, div v) + (div u, q),
discretized with exact quadrature for all matrix entries.  Solves use a
sparse LU factorization of the symmetric indefinite reduced system

    [ A   -B^T  0 ] [u]   [ F ]
    [-B    0    c ] [p] = [-G ]
    [ 0   c^T   0 ] [s]   [ 0 ]

on interior velocity dofs, where c holds the pressure basis integrals; the
multiplier s pins the pressure mean, which is afterwards projected out
exactly.  Factorizations are cached on the operator so the many
right-hand sides of the Green's-function and projection studies reuse them.
"""

from __future__ import annotations

import threading

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import scipy.linalg

# guards lazy factorization state when experiment jobs run in threads
_STATE_LOCK = threading.Lock()

from .quadrature import gauss_triangle
from .space import FeField, FeSpace


class SingularSystem(RuntimeError):
    pass


class SolverNonconvergence(RuntimeError):
    pass


# saddle systems beyond this size skip the direct factorization (whose
# fill exceeds desk memory) and use hierarchy multigrid-preconditioned
# MINRES instead
DIRECT_SADDLE_LIMIT = 40_000


_ASSEMBLY_CHUNK = 65536


def _accumulate(shape, rows, cols, vals, acc):
    part = sp.coo_matrix((vals, (rows.astype(np.int32, copy=False),
                                 cols.astype(np.int32, copy=False))),
                         shape=shape).tocsr()
    return part if acc is None else acc + part


def scalar_stiffness(layout, quad_degree=None):
    mesh = layout.mesh
    deg = quad_degree or 2 * layout.degree
    rule = gauss_triangle(deg)
    gref = layout.basis.grad(rule.points)  # (nq, ndl, 2)
    ndl = layout.basis.ndof
    shape = (layout.n_dofs, layout.n_dofs)
    acc = None
    for lo in range(0, mesh.nt, _ASSEMBLY_CHUNK):
        sl = slice(lo, min(lo + _ASSEMBLY_CHUNK, mesh.nt))
        ij = mesh._inv_jac[sl]
        nb = ij.shape[0]
        local = np.zeros((nb, ndl, ndl))
        for q, w in enumerate(rule.weights):
            g = np.einsum("mi,tij->tmj", gref[q], ij)
            local += w * np.einsum("tmj,tnj->tmn", g, g)
        local *= mesh._det[sl, None, None]
        dofs = layout.elem_dofs[sl]
        rows = np.repeat(dofs, ndl, axis=1).ravel()
        cols = np.tile(dofs, (1, ndl)).ravel()
        acc = _accumulate(shape, rows, cols, local.ravel(), acc)
    return acc


def scalar_mass(layout, quad_degree=None):
    mesh = layout.mesh
    deg = quad_degree or 2 * layout.degree
    rule = gauss_triangle(deg)
    vals = layout.basis.eval(rule.points)  # (nq, ndl)
    ndl = layout.basis.ndof
    ref = np.einsum("q,qm,qn->mn", rule.weights, vals, vals)
    shape = (layout.n_dofs, layout.n_dofs)
    acc = None
    for lo in range(0, mesh.nt, _ASSEMBLY_CHUNK):
        sl = slice(lo, min(lo + _ASSEMBLY_CHUNK, mesh.nt))
        local = ref[None, :, :] * mesh._det[sl, None, None]
        dofs = layout.elem_dofs[sl]
        rows = np.repeat(dofs, ndl, axis=1).ravel()
        cols = np.tile(dofs, (1, ndl)).ravel()
        acc = _accumulate(shape, rows, cols, local.ravel(), acc)
    return acc


def divergence_matrix(space: FeSpace):
    """B with B[q, i] = (div phi_i, psi_q) over blocked velocity dofs."""
    mesh = space.mesh
    deg = space.velocity_degree + space.pressure_degree
    rule = gauss_triangle(deg)
    gref = space.vel.basis.grad(rule.points)
    pvals = space.pres.eval_matrix(rule.points)
    nvl = space.vel.basis.ndof
    npl = space.pres.basis.ndof
    nsc = space.n_vel_scalar
    shape = (space.n_pres_dofs, 2 * nsc)
    acc = None
    for lo in range(0, mesh.nt, _ASSEMBLY_CHUNK):
        sl = slice(lo, min(lo + _ASSEMBLY_CHUNK, mesh.nt))
        ij = mesh._inv_jac[sl]
        nb = ij.shape[0]
        loc = np.zeros((nb, npl, nvl, 2))
        for q, w in enumerate(rule.weights):
            g = np.einsum("mi,tij->tmj", gref[q], ij)
            loc += w * np.einsum("p,tmj->tpmj", pvals[q], g)
        loc *= mesh._det[sl, None, None, None]
        vdofs = space.vel.elem_dofs[sl]
        pdofs = space.pres.elem_dofs[sl]
        rows = np.repeat(pdofs, nvl, axis=1).ravel()
        cols = np.tile(vdofs, (1, npl)).ravel()
        acc = _accumulate(shape, np.concatenate([rows, rows]),
                          np.concatenate([cols, cols + nsc]),
                          np.concatenate([loc[..., 0].ravel(),
                                          loc[..., 1].ravel()]), acc)
    return acc


class RhsFunctional:
    """Right-hand-side data for the saddle problem.

    kinds:
      "body_force"       payload: vector callable f(pts) -> (n, 2)
      "delta_component"  payload: (DeltaFunction, i)
      "delta_derivative" payload: (DeltaFunction, i, j); realized weakly as
                         -(delta_h, d v_i / d x_j)
      "divergence_data"  payload: (DeltaFunction, SmoothBump); data of the
                         constraint equation, div u = delta_h - phi
    """

    def __init__(self, kind: str, payload):
        if kind not in ("body_force", "delta_component", "delta_derivative",
                        "divergence_data"):
            raise ValueError(f"unknown rhs kind {kind!r}")
        self.kind = kind
        self.payload = payload


class StokesOperator:
    """Assembled Stokes operator on a space, with cached factorizations."""

    def __init__(self, space: FeSpace):
        self.space = space
        mesh = space.mesh
        K = scalar_stiffness(space.vel)
        B = divergence_matrix(space)
        self.Mp = scalar_mass(space.pres)
        self.c = space.pressure_mass_vector()
        self.area = float(mesh.areas.sum())

        nfs = len(space.free_scalar)
        self.free_vel = np.concatenate(
            [space.free_scalar, space.n_vel_scalar + space.free_scalar])
        self.Kff = K[space.free_scalar][:, space.free_scalar].tocsr()
        self.B_f = B[:, self.free_vel].tocsr()
        self.n_free = 2 * nfs
        self.n_total = self.n_free + space.n_pres_dofs + 1
        self.direct_limit = DIRECT_SADDLE_LIMIT
        # full-dof blocks are kept only at desk scale; reference-scale
        # systems drop them and run on the free-dof blocks alone
        if self.n_total <= self.direct_limit:
            self._K, self._B = K, B
        else:
            self._K, self._B = None, None
        self._A = None
        self._A_ff = None
        self._saddle = None
        self._lu = None
        self._lu_A = None
        self._lu_Mp = None
        self._minres = None

    # big blocks are assembled on first use; the iterative large-system
    # path never touches them, which keeps reference solves inside memory
    @property
    def K(self):
        if self._K is None:
            self._K = scalar_stiffness(self.space.vel)
        return self._K

    @property
    def B(self):
        if self._B is None:
            self._B = divergence_matrix(self.space)
        return self._B

    @property
    def A(self):
        if self._A is None:
            self._A = sp.block_diag([self.K, self.K]).tocsr()
        return self._A

    @property
    def A_ff(self):
        if self._A_ff is None:
            self._A_ff = sp.block_diag([self.Kff, self.Kff]).tocsc()
        return self._A_ff

    @property
    def saddle(self):
        if self._saddle is None:
            crow = sp.csr_matrix(self.c[None, :])
            self._saddle = sp.bmat([
                [self.A_ff, -self.B_f.T, None],
                [-self.B_f, None, crow.T],
                [None, crow, None],
            ], format="csc")
        return self._saddle

    # -- factorizations ---------------------------------------------------
    def lu(self):
        with _STATE_LOCK:
            if self._lu is None:
                try:
                    self._lu = spla.splu(self.saddle)
                except RuntimeError as exc:  # pragma: no cover
                    raise SingularSystem(
                        f"saddle factorization failed: {exc}") from exc
        return self._lu

    def lu_stiffness(self):
        with _STATE_LOCK:
            if self._lu_A is None:
                self._lu_A = spla.splu(self.A_ff)
        return self._lu_A

    def lu_pressure_mass(self):
        with _STATE_LOCK:
            if self._lu_Mp is None:
                self._lu_Mp = spla.splu(self.Mp.tocsc())
        return self._lu_Mp

    # -- rhs assembly -------------------------------------------------------
    def assemble_velocity_functional(self, f, quad_degree=None):
        """(f, phi_i) for a vector callable; full velocity dof vector."""
        space = self.space
        mesh = space.mesh
        deg = quad_degree or max(space.quad_degree, 10)
        rule = gauss_triangle(deg)
        vals = space.vel.eval_matrix(rule.points)  # (nq, ndl)
        v0 = mesh.points[mesh.triangles[:, 0]]
        out = np.zeros(space.n_vel_dofs)
        nsc = space.n_vel_scalar
        pts = v0[:, None, :] + np.einsum("tij,qj->tqi", mesh._jac, rule.points)
        fv = np.asarray(f(pts.reshape(-1, 2)), dtype=float).reshape(mesh.nt, len(rule), 2)
        wdet = rule.weights[None, :] * mesh._det[:, None]
        loc = np.einsum("tq,qm,tqc->tmc", wdet, vals, fv)
        np.add.at(out[:nsc], space.vel.elem_dofs.ravel(), loc[:, :, 0].ravel())
        np.add.at(out[nsc:], space.vel.elem_dofs.ravel(), loc[:, :, 1].ravel())
        return out

    def assemble_pressure_functional(self, g, quad_degree=None,
                                     subdivide: int = 0):
        """(g, psi_q) for a scalar callable; full pressure dof vector."""
        from .quadrature import composite_rule

        space = self.space
        mesh = space.mesh
        deg = quad_degree or max(space.quad_degree, 12)
        rule = gauss_triangle(deg)
        if subdivide:
            rule = composite_rule(rule, subdivide)
        vals = space.pres.eval_matrix(rule.points)
        v0 = mesh.points[mesh.triangles[:, 0]]
        pts = v0[:, None, :] + np.einsum("tij,qj->tqi", mesh._jac, rule.points)
        gv = np.asarray(g(pts.reshape(-1, 2)), dtype=float).reshape(mesh.nt, len(rule))
        wdet = rule.weights[None, :] * mesh._det[:, None]
        loc = np.einsum("tq,qm->tm", wdet * gv, vals)
        out = np.zeros(space.n_pres_dofs)
        np.add.at(out, space.pres.elem_dofs.ravel(), loc.ravel())
        return out

    def assemble_rhs(self, rhs: RhsFunctional):
        """Full-dof velocity functional F and pressure functional G."""
        space = self.space
        F = np.zeros(space.n_vel_dofs)
        G = np.zeros(space.n_pres_dofs)
        stats = {}
        if rhs.kind == "body_force":
            F = self.assemble_velocity_functional(rhs.payload)
        elif rhs.kind == "delta_component":
            delta, i = rhs.payload
            nsc = space.n_vel_scalar
            F[i * nsc:(i + 1) * nsc] = delta.pair_basis(space.vel)
        elif rhs.kind == "delta_derivative":
            delta, i, j = rhs.payload
            nsc = space.n_vel_scalar
            F[i * nsc:(i + 1) * nsc] = -delta.pair_basis_gradient(space.vel, j)
        elif rhs.kind == "divergence_data":
            delta, bump = rhs.payload
            G = delta.pair_basis(space.pres)
            G -= self.assemble_pressure_functional(bump.value, subdivide=2)
            defect = float(G.sum())
            # keep the constraint data orthogonal to constant pressures
            G -= defect * self.c / self.area
            stats["mass_defect"] = defect
        return F, G, stats

    # -- solves -------------------------------------------------------------
    def solve_raw(self, F_full, G_full):
        """Solve with assembled functionals; returns full-dof coefficients."""
        if self.n_total > self.direct_limit:
            return self._solve_iterative(F_full, G_full)
        rhs = np.concatenate([F_full[self.free_vel], -G_full, [0.0]])
        z = self.lu().solve(rhs)
        res = self.saddle @ z - rhs
        scale = float(np.linalg.norm(rhs))
        rel = float(np.linalg.norm(res)) / scale if scale > 0 else float(np.linalg.norm(res))
        if not np.isfinite(rel) or rel > 1e-10:
            raise SolverNonconvergence(f"relative residual {rel:.3e}")
        u = np.zeros(self.space.n_vel_dofs)
        u[self.free_vel] = z[:self.n_free]
        p = z[self.n_free:-1].copy()
        mult = float(z[-1])
        p -= (self.c @ p) / self.area
        return u, p, mult, rel

    def _solve_iterative(self, F_full, G_full):
        from .mg import SaddleMinres

        with _STATE_LOCK:
            if self._minres is None:
                self._minres = SaddleMinres(self)
        # without the mean multiplier row the constraint data must be
        # orthogonal to constant pressures for the system to be consistent
        defect = float(G_full.sum())
        if defect != 0.0:
            G_full = G_full - defect * self.c / self.area
        uf, p, rel = self._minres.solve(F_full[self.free_vel], G_full)
        if not np.isfinite(rel) or rel > 1e-10:
            raise SolverNonconvergence(
                f"iterative saddle solve stalled at residual {rel:.3e}")
        u = np.zeros(self.space.n_vel_dofs)
        u[self.free_vel] = uf
        p = p - (self.c @ p) / self.area
        return u, p, 0.0, rel

    def solve(self, rhs: RhsFunctional) -> "Solution":
        F, G, stats = self.assemble_rhs(rhs)
        u, p, mult, rel = self.solve_raw(F, G)
        stats = dict(stats, multiplier=mult)
        return Solution(
            velocity=FeField(self.space, "velocity", u),
            pressure=FeField(self.space, "pressure", p),
            residual=rel, stats=stats)

    # -- derived quantities ---------------------------------------------
    def aform(self, u: FeField, p: FeField, v: FeField, q: FeField) -> float:
        """a((u, p), (v, q)) evaluated through the assembled matrices."""
        uc, pc = u.coefficients, p.coefficients
        vc, qc = v.coefficients, q.coefficients
        return float(uc @ (self.A @ vc) - pc @ (self.B @ vc) + qc @ (self.B @ uc))

    def divergence_residual(self, u: FeField) -> float:
        """max_q |(div u_h, psi_q)| over the pressure basis."""
        return float(np.abs(self.B @ u.coefficients).max())

    def pressure_mean(self, p: FeField) -> float:
        return float(self.c @ p.coefficients)


class Solution:
    """Velocity-pressure pair with solver diagnostics."""

    def __init__(self, velocity: FeField, pressure: FeField, residual: float,
                 stats=None):
        self.velocity = velocity
        self.pressure = pressure
        self.residual = residual
        self.stats = stats or {}

    def __repr__(self):
        return f"Solution(residual={self.residual:.2e})"


def operator(space: FeSpace) -> StokesOperator:
    """The assembled operator for a space, built once and cached on it."""
    op = getattr(space, "_operator", None)
    if op is None:
        with _STATE_LOCK:
            op = getattr(space, "_operator", None)
            if op is None:
                op = StokesOperator(space)
                space._operator = op
    return op


def assemble(space: FeSpace, rhs: RhsFunctional):
    """Spec-facing assembly: the operator plus the reduced rhs vector."""
    op = operator(space)
    F, G, _ = op.assemble_rhs(rhs)
    vec = np.concatenate([F[op.free_vel], -G, [0.0]])
    return op, vec


def solve(space_or_op, rhs: RhsFunctional) -> Solution:
    op = space_or_op if isinstance(space_or_op, StokesOperator) else operator(space_or_op)
    return op.solve(rhs)


def solve_body_force(space: FeSpace, f) -> Solution:
    return solve(space, RhsFunctional("body_force", f))


# ----------------------------------------------------------------------
# inf-sup constant

def compute_infsup(space: FeSpace) -> float:
    """beta_h from the pressure Schur complement generalized eigenproblem.

    The smallest eigenvalue of (B A^-1 B^T, M_p) is the exactly-zero
    constant-pressure mode; beta_h is the square root of the next one.
    """
    op = operator(space)
    lu = op.lu_stiffness()
    Bt = np.asarray(op.B_f.T.todense())
    X = lu.solve(Bt)
    S = np.asarray(op.B_f @ X)
    S = 0.5 * (S + S.T)
    Mp = np.asarray(op.Mp.todense())
    vals = scipy.linalg.eigh(S, Mp, eigvals_only=True)
    return float(np.sqrt(max(vals[1], 0.0)))


def infsup_spectrum(space: FeSpace, kernel_tol: float = 1e-12):
    """(beta_h, kernel dimension, smallest beta above the kernel).

    For inf-sup stable pairs the kernel holds only the constant pressure
    and beta_h equals the above-kernel value.  Unstable equal-order pairs
    carry extra exact spurious modes, so beta_h collapses to zero; the
    above-kernel eigenvalue is then the decay indicator of the negative
    control.
    """
    op = operator(space)
    lu = op.lu_stiffness()
    X = lu.solve(np.asarray(op.B_f.T.todense()))
    S = np.asarray(op.B_f @ X)
    S = 0.5 * (S + S.T)
    Mp = np.asarray(op.Mp.todense())
    vals = scipy.linalg.eigh(S, Mp, eigvals_only=True)
    n_kernel = int(np.sum(vals < kernel_tol))
    beta_h = float(np.sqrt(max(vals[1], 0.0)))
    above = float(np.sqrt(vals[n_kernel])) if n_kernel < len(vals) else 0.0
    return beta_h, n_kernel, above


def infsup_dense_oracle(space: FeSpace) -> float:
    """Independent recomputation via dense inversion and the QZ eigensolver."""
    op = operator(space)
    A = np.asarray(op.A_ff.todense())
    B = np.asarray(op.B_f.todense())
    Mp = np.asarray(op.Mp.todense())
    S = B @ np.linalg.inv(A) @ B.T
    vals = scipy.linalg.eig(S, Mp, right=False)
    vals = np.sort(np.real(vals))
    return float(np.sqrt(max(vals[1], 0.0)))


# ----------------------------------------------------------------------
# Ritz projection

def ritz_projection(space: FeSpace, z) -> FeField:
    """Componentwise discrete vector-Laplacian projection of z.

    z is an FeField on the same space (fast algebraic path, exact
    idempotence) or a vector FieldLike with gradients.
    """
    op = operator(space)
    lu = op.lu_stiffness()
    if isinstance(z, FeField):
        if z.space is not space or z.kind != "velocity":
            rhs_full = _ritz_rhs_field(op, z)
        else:
            rhs_full = op.A @ z.coefficients
    else:
        rhs_full = _ritz_rhs_field(op, z)
    rhs = rhs_full[op.free_vel]
    sol = lu.solve(rhs)
    res = float(np.linalg.norm(op.A_ff @ sol - rhs))
    if not np.isfinite(res):
        raise SolverNonconvergence("ritz projection solve failed")
    coeffs = np.zeros(space.n_vel_dofs)
    coeffs[op.free_vel] = sol
    return FeField(space, "velocity", coeffs)


def _ritz_rhs_field(op: StokesOperator, z, subdivide: int = 0):
    """(grad z, grad phi_i) by quadrature for a general vector field."""
    from .quadrature import composite_rule

    space = op.space
    mesh = space.mesh
    rule = gauss_triangle(max(space.quad_degree, 12))
    if subdivide:
        rule = composite_rule(rule, subdivide)
    gref = space.vel.basis.grad(rule.points)
    v0 = mesh.points[mesh.triangles[:, 0]]
    pts = (v0[:, None, :] + np.einsum("tij,qj->tqi", mesh._jac, rule.points))
    flat = pts.reshape(-1, 2)
    eids = np.repeat(np.arange(mesh.nt), len(rule))
    gz = z.gradients_on(mesh, eids, flat).reshape(mesh.nt, len(rule), 2, 2)
    ij = mesh._inv_jac
    wdet = rule.weights[None, :] * mesh._det[:, None]
    out = np.zeros(space.n_vel_dofs)
    nsc = space.n_vel_scalar
    for q in range(len(rule)):
        g = np.einsum("mi,tij->tmj", gref[q], ij)  # (nt, ndl, 2)
        for comp in range(2):
            loc = wdet[:, q, None] * np.einsum("tmj,tj->tm", g, gz[:, q, comp, :])
            np.add.at(out[comp * nsc:(comp + 1) * nsc],
                      space.vel.elem_dofs.ravel(), loc.ravel())
    return out


def export_matrix(mat, path):
    """Coordinate text export: one "i j value" line per entry, 0-based."""
    coo = sp.coo_matrix(mat)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="ascii") as fh:
        for k in order:
            fh.write(f"{coo.row[k]} {coo.col[k]} {coo.data[k]:.17g}\n")
