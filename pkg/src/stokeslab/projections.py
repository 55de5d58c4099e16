"""The approximation operators: divergence-preserving H1 projection and
global L2 pressure projection.

P_h v minimizes ||grad(v - w_h)|| over the velocity space subject to
(div(v - w_h), q_h) = 0 for all discrete pressures, realized with the same
saddle factorization as the Stokes solves, so stability and divergence
preservation hold by construction.  r_h is the plain L2 projection onto the
pressure space without the mean constraint.
"""

from __future__ import annotations

import numpy as np

from .quadrature import composite_rule, gauss_triangle
from .space import FeField, FeSpace
from .stokes import StokesOperator, operator, _ritz_rhs_field


def _quad_frame(mesh, rule):
    v0 = mesh.points[mesh.triangles[:, 0]]
    pts = v0[:, None, :] + np.einsum("tij,qj->tqi", mesh._jac, rule.points)
    eids = np.repeat(np.arange(mesh.nt), len(rule))
    return pts.reshape(-1, 2), eids


def _pressure_value_functional(op: StokesOperator, q, quad_degree=None,
                               subdivide: int = 0):
    """(q, psi_j) for a scalar FieldLike."""
    space = op.space
    mesh = space.mesh
    rule = gauss_triangle(quad_degree or max(space.quad_degree, 12))
    if subdivide:
        rule = composite_rule(rule, subdivide)
    vals = space.pres.eval_matrix(rule.points)
    pts, eids = _quad_frame(mesh, rule)
    qv = q.values_on(mesh, eids, pts).reshape(mesh.nt, len(rule))
    wdet = rule.weights[None, :] * mesh._det[:, None]
    loc = np.einsum("tq,qm->tm", wdet * qv, vals)
    out = np.zeros(space.n_pres_dofs)
    np.add.at(out, space.pres.elem_dofs.ravel(), loc.ravel())
    return out


def _divergence_data_functional(op: StokesOperator, v, quad_degree=None,
                                subdivide: int = 0):
    """(div v, psi_j) from the trace of the field gradient."""
    space = op.space
    mesh = space.mesh
    rule = gauss_triangle(quad_degree or max(space.quad_degree, 12))
    if subdivide:
        rule = composite_rule(rule, subdivide)
    vals = space.pres.eval_matrix(rule.points)
    pts, eids = _quad_frame(mesh, rule)
    g = v.gradients_on(mesh, eids, pts)
    div = (g[:, 0, 0] + g[:, 1, 1]).reshape(mesh.nt, len(rule))
    wdet = rule.weights[None, :] * mesh._det[:, None]
    loc = np.einsum("tq,qm->tm", wdet * div, vals)
    out = np.zeros(space.n_pres_dofs)
    np.add.at(out, space.pres.elem_dofs.ravel(), loc.ravel())
    return out


def projection_Ph(space: FeSpace, v, return_residual: bool = False,
                  quad_subdivide: int = 0):
    """Divergence-constrained H1 projection onto the velocity space.

    ``quad_subdivide`` levels of composite quadrature sharpen the data
    functionals when v has weak singularities.
    """
    op = operator(space)
    if isinstance(v, FeField) and v.space is space and v.kind == "velocity":
        F = op.A @ v.coefficients
        G = op.B @ v.coefficients
    else:
        F = _ritz_rhs_field(op, v, quad_subdivide)
        G = _divergence_data_functional(op, v, subdivide=quad_subdivide)
    w, _, _, _ = op.solve_raw(F, G)
    field = FeField(space, "velocity", w)
    if return_residual:
        resid = float(np.abs(G - op.B @ w).max())
        return field, resid
    return field


def projection_rh(space: FeSpace, q, quad_subdivide: int = 0) -> FeField:
    """Global L2 projection onto the unconstrained pressure space."""
    op = operator(space)
    if isinstance(q, FeField) and q.space is space and q.kind == "pressure":
        rhs = op.Mp @ q.coefficients
    else:
        rhs = _pressure_value_functional(op, q, subdivide=quad_subdivide)
    coeffs = op.lu_pressure_mass().solve(rhs)
    return FeField(space, "pressure", coeffs)
