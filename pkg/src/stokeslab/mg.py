"""Geometric multigrid over uniform-refinement hierarchies.

Reference solves on the finest meshes exceed the memory of a sparse direct
factorization, so those saddle systems are solved with MINRES, block-diag
preconditioned by a V-cycle on each velocity component and the lumped
pressure mass.  Everything is deterministic: fixed Chebyshev smoothing,
fixed power-iteration eigenvalue estimates, and a direct solve on the
coarsest level of the hierarchy.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import reference_basis
from .space import ScalarLayout

# affine maps sending reference coordinates of a child triangle into its
# parent, matching the child ordering of geometry.refine_uniform
_CHILD_MAPS = (
    (np.array([[0.5, 0.0], [0.0, 0.5]]), np.array([0.0, 0.0])),
    (np.array([[0.5, 0.0], [0.0, 0.5]]), np.array([0.5, 0.0])),
    (np.array([[0.5, 0.0], [0.0, 0.5]]), np.array([0.0, 0.5])),
    (np.array([[-0.5, 0.0], [0.0, -0.5]]), np.array([0.5, 0.5])),
)


def prolongation_matrix(coarse: ScalarLayout, fine: ScalarLayout) -> sp.csr_matrix:
    """Nodal interpolation from a layout onto the once-refined layout."""
    if fine.mesh.parent is not coarse.mesh or fine.degree != coarse.degree:
        raise ValueError("layouts are not consecutive hierarchy levels")
    basis = reference_basis(coarse.degree)
    ndl = basis.ndof
    weights = []
    for A, b in _CHILD_MAPS:
        pts = basis.nodes @ A.T + b
        weights.append(basis.eval(pts))  # (ndl fine-node, ndl coarse-basis)

    # one defining (element, local node) per fine dof: first occurrence in
    # the element table; any occurrence gives the same value by continuity
    flat = fine.elem_dofs.ravel()
    _, first = np.unique(flat, return_index=True)  # indexed by dof id
    own_elem = first // ndl
    own_node = first % ndl
    weights_arr = np.stack(weights)  # (4, ndl, ndl)
    W = weights_arr[own_elem % 4, own_node, :]  # (n_fine_dofs, ndl)
    cols = coarse.elem_dofs[own_elem // 4]  # (n_fine_dofs, ndl)
    rows = np.repeat(np.arange(fine.n_dofs), ndl)
    vals = W.ravel()
    P = sp.coo_matrix((vals, (rows, cols.ravel())),
                      shape=(fine.n_dofs, coarse.n_dofs))
    P.sum_duplicates()
    P.data[np.abs(P.data) < 1e-14] = 0.0
    P.eliminate_zeros()
    return P.tocsr()


class _Level:
    def __init__(self, K, free, dinv, lmax, P_free):
        self.K = K
        self.free = free
        self.dinv = dinv
        self.lmax = lmax
        self.P = P_free  # from the previous (coarser) level, or None


def _estimate_lmax(K, dinv, iters: int = 30) -> float:
    rng = np.random.default_rng(1234)
    v = rng.standard_normal(K.shape[0])
    v /= np.linalg.norm(v)
    lam = 1.0
    for _ in range(iters):
        w = dinv * (K @ v)
        lam = float(np.linalg.norm(w))
        v = w / lam
    return lam


class ScalarMultigrid:
    """V-cycle preconditioner for one zero-trace scalar stiffness.

    ``stiffness`` entries are full-dof matrices, except entries passed as
    ("free", Kff) which are already restricted to interior dofs.
    """

    def __init__(self, layouts, stiffness, smooth_steps: int = 3):
        self.smooth_steps = smooth_steps
        self.levels = []
        prev_layout = None
        for layout, K in zip(layouts, stiffness):
            free = np.where(~layout.boundary_dof)[0]
            if isinstance(K, tuple) and K[0] == "free":
                Kff = K[1].tocsr()
            else:
                Kff = K[free][:, free].tocsr()
            dinv = 1.0 / Kff.diagonal()
            P_free = None
            if prev_layout is not None:
                P = prolongation_matrix(prev_layout, layout)
                prev_free = np.where(~prev_layout.boundary_dof)[0]
                P_free = P[free][:, prev_free].tocsr()
            lmax = _estimate_lmax(Kff, dinv)
            self.levels.append(_Level(Kff, free, dinv, lmax, P_free))
            prev_layout = layout
        self._coarse_lu = spla.splu(self.levels[0].K.tocsc())

    def _smooth(self, lvl: _Level, b, x):
        """Chebyshev iteration on the interval [lmax/4, 1.05 lmax]."""
        a, bnd = lvl.lmax / 4.0, 1.05 * lvl.lmax
        theta = 0.5 * (bnd + a)
        delta = 0.5 * (bnd - a)
        sigma = theta / delta
        rho = 1.0 / sigma
        r = b - lvl.K @ x if x.any() else b.copy()
        d = (lvl.dinv * r) / theta
        x = x + d
        for _ in range(self.smooth_steps - 1):
            rho_new = 1.0 / (2.0 * sigma - rho)
            r = r - lvl.K @ d
            d = rho_new * rho * d + (2.0 * rho_new / delta) * (lvl.dinv * r)
            x = x + d
            rho = rho_new
        return x

    def _cycle(self, li: int, b):
        if li == 0:
            return self._coarse_lu.solve(b)
        lvl = self.levels[li]
        x = self._smooth(lvl, b, np.zeros_like(b))
        r = b - lvl.K @ x
        rc = lvl.P.T @ r
        xc = self._cycle(li - 1, rc)
        x = x + lvl.P @ xc
        return self._smooth(lvl, b, x)

    def apply(self, b):
        return self._cycle(len(self.levels) - 1, b)


class SaddleMinres:
    """MINRES on the 2x2 saddle blocks with a block-diagonal V-cycle
    preconditioner; the pressure mean is projected out afterwards."""

    def __init__(self, op, rtol: float = 1e-12, maxiter: int = 400):
        self.op = op
        self.rtol = rtol
        self.maxiter = maxiter
        space = op.space
        layouts, stiffness = [], []
        mesh_chain = []
        m = space.mesh
        while m is not None:
            mesh_chain.append(m)
            m = m.parent
        mesh_chain.reverse()
        for m in mesh_chain:
            if m is space.mesh:
                layouts.append(space.vel)
                stiffness.append(("free", op.Kff))
            else:
                lay = ScalarLayout(m, space.velocity_degree)
                from .stokes import scalar_stiffness
                layouts.append(lay)
                stiffness.append(scalar_stiffness(lay))
        coarsest_free = int((~layouts[0].boundary_dof).sum())
        if coarsest_free > 200_000:
            raise MemoryError(
                "saddle system too large for the direct factorization and its "
                "mesh has no refinement ancestors to support multigrid; this "
                "exceeds the desk scale - use a smaller sweep or build the "
                "mesh through uniform refinement")
        self.mg = ScalarMultigrid(layouts, stiffness)
        self.nfs = len(space.free_scalar)
        self.n_p = space.n_pres_dofs
        # the plain diagonal: row-sum lumping degenerates for quadratic
        # pressure bases (vertex functions integrate to zero)
        self.mp_diag = op.Mp.diagonal()

        n = 2 * self.nfs + self.n_p
        nfs = self.nfs

        def matvec(z):
            u, p = z[:2 * nfs], z[2 * nfs:]
            out = np.empty_like(z)
            out[:2 * nfs] = -(op.B_f.T @ p)
            out[:nfs] += op.Kff @ u[:nfs]
            out[nfs:2 * nfs] += op.Kff @ u[nfs:]
            out[2 * nfs:] = -(op.B_f @ u)
            return out

        def precond(z):
            out = np.empty_like(z)
            out[:self.nfs] = self.mg.apply(z[:self.nfs])
            out[self.nfs:2 * self.nfs] = self.mg.apply(z[self.nfs:2 * self.nfs])
            out[2 * self.nfs:] = z[2 * self.nfs:] / self.mp_diag
            return out

        self._mat = spla.LinearOperator((n, n), matvec=matvec, dtype=np.float64)
        self._pre = spla.LinearOperator((n, n), matvec=precond, dtype=np.float64)

    def _minres_guarded(self, rhs, rtol):
        """MINRES with the last iterate kept across a Lanczos breakdown.

        scipy raises on beta < 0, which can fire spuriously when the
        preconditioned residual reaches the roundoff floor; the most
        recent iterate is then already usable.
        """
        last = [np.zeros_like(rhs)]

        def keep(xk):
            last[0] = xk.copy()

        try:
            x, _ = spla.minres(self._mat, rhs, M=self._pre, rtol=rtol,
                               maxiter=self.maxiter, callback=keep)
            return x
        except ValueError:
            return last[0]

    def solve(self, F_free, G):
        rhs = np.concatenate([F_free, -G])
        scale = float(np.linalg.norm(rhs))
        if scale == 0.0:
            return (np.zeros(2 * self.nfs), np.zeros(self.n_p), 0.0)
        x = self._minres_guarded(rhs, self.rtol)
        # explicit residual refinement clears the Lanczos recurrence drift
        for _ in range(3):
            r = rhs - self._mat @ x
            rel = float(np.linalg.norm(r)) / scale
            if rel < 1e-12:
                break
            x = x + self._minres_guarded(r, 1e-10)
        rel = float(np.linalg.norm(rhs - self._mat @ x)) / scale
        return x[:2 * self.nfs], x[2 * self.nfs:], rel
