"""Regularized Green's problems and their measured error quantities.

Continuous Green's functions have no closed form on polygons; the oracle
standing in for them is the solve of the same (fixed, coarse-level) data on
a mesh refined ``gap`` times with the velocity degree raised by one.  Since
the coarse pair is nested in the reference pair, Galerkin orthogonality
between the two is exact and the self-convergence of the oracle is the only
approximation in the reported numbers.
"""

from __future__ import annotations

import numpy as np

from .geometry import DyadicDecomposition, Mesh, Subdomain, mesh_hierarchy
from .projections import projection_Ph, projection_rh
from .regularization import DeltaFunction, SmoothBump, WeightSigma, build_delta
from .space import FeField, FeSpace, norm
from .stokes import RhsFunctional, Solution, operator


class CompatibilityError(ValueError):
    """Divergence data for the pressure Green problem has nonzero mass."""


class GreensCase:
    """One regularized Green's problem.

    kind "G0": momentum data delta_h e_i (component i in {0, 1})
    kind "G1": momentum data (d delta_h / d x_j) e_i
    kind "PressureGreen": divergence data delta_h - phi
    """

    def __init__(self, kind: str, component: int = 0, deriv: int = 0):
        if kind not in ("G0", "G1", "PressureGreen"):
            raise ValueError(f"unknown case kind {kind!r}")
        if component not in (0, 1) or deriv not in (0, 1):
            raise ValueError("component/deriv indices are 0 or 1 in 2D")
        self.kind = kind
        self.component = component
        self.deriv = deriv

    def key(self):
        return (self.kind, self.component, self.deriv)

    def label(self) -> str:
        if self.kind == "G0":
            return f"G0_i{self.component}"
        if self.kind == "G1":
            return f"G1_i{self.component}_j{self.deriv}"
        return "Gpressure"


class ReferencePair:
    """Coarse solution and its refined higher-degree oracle."""

    def __init__(self, case, coarse_space, fine_space, coarse, fine, delta,
                 bump, gap):
        self.case = case
        self.coarse_space = coarse_space
        self.fine_space = fine_space
        self.coarse = coarse
        self.fine = fine
        self.delta = delta
        self.bump = bump
        self.gap = gap


def case_rhs(case: GreensCase, delta: DeltaFunction,
             bump: SmoothBump | None) -> RhsFunctional:
    if case.kind == "G0":
        return RhsFunctional("delta_component", (delta, case.component))
    if case.kind == "G1":
        return RhsFunctional("delta_derivative", (delta, case.component, case.deriv))
    if bump is None:
        raise CompatibilityError("pressure Green case needs a bump")
    if abs(delta.mass() - bump.mass_quadrature()) > 1e-9:
        raise CompatibilityError("delta and bump masses disagree beyond 1e-9")
    return RhsFunctional("divergence_data", (delta, bump))


def solve_greens(space: FeSpace, case: GreensCase, delta: DeltaFunction,
                 bump: SmoothBump | None = None) -> Solution:
    return operator(space).solve(case_rhs(case, delta, bump))


def prolong(field: FeField, target: FeSpace) -> FeField:
    """Nodal interpolation into a space on a refined mesh.

    Exact whenever the target space contains the source space (nested mesh,
    degree not lower), which is how the reference spaces are built.
    """
    mesh = target.mesh
    layout = target.layout(field.kind)
    v0 = mesh.points[mesh.triangles[:, 0]]
    phys = v0[:, None, :] + np.einsum("tij,mj->tmi", mesh._jac, layout.basis.nodes)
    flat = phys.reshape(-1, 2)
    eids = np.repeat(np.arange(mesh.nt), layout.basis.ndof)
    vals = field.values_on(mesh, eids, flat)
    if field.kind == "velocity":
        coeffs = np.zeros(2 * layout.n_dofs)
        coeffs[layout.elem_dofs.ravel()] = vals[:, 0]
        coeffs[layout.n_dofs + layout.elem_dofs.ravel()] = vals[:, 1]
    else:
        coeffs = np.zeros(layout.n_dofs)
        coeffs[layout.elem_dofs.ravel()] = vals
    return FeField(target, field.kind, coeffs)


class GreensLab:
    """Green's-function study anchored at one point of one coarse space.

    Shares the delta function, the weight, the coarse factorization, and
    the per-gap reference spaces across all cases.
    """

    def __init__(self, space: FeSpace, x0, kappa: float = 4.0, K: float = 4.0,
                 oracle_gap: int = 2, bump: SmoothBump | None = None,
                 space_provider=None):
        self.space = space
        self.x0 = np.asarray(x0, dtype=float)
        self.kappa = float(kappa)
        self.K = float(K)
        self.oracle_gap = int(oracle_gap)
        self.delta = build_delta(space, self.x0)
        self.sigma = WeightSigma(self.x0, kappa, space.mesh.h)
        self.bump = bump
        # optional shared source of reference spaces (a LevelLadder.space
        # style callable taking the refinement gap), so several labs and
        # experiments reuse one assembled operator per fine space
        self.space_provider = space_provider
        self._fine: dict[int, FeSpace] = {}
        self._coarse_solutions: dict = {}
        self._fine_solutions: dict = {}

    def fine_space(self, gap: int | None = None) -> FeSpace:
        gap = self.oracle_gap if gap is None else gap
        if gap not in self._fine:
            if self.space_provider is not None:
                self._fine[gap] = self.space_provider(gap)
            else:
                meshes = mesh_hierarchy(self.space.mesh, gap + 1)
                self._fine[gap] = FeSpace(meshes[-1],
                                          self.space.velocity_degree + 1)
        return self._fine[gap]

    def coarse_solution(self, case: GreensCase) -> Solution:
        key = case.key()
        if key not in self._coarse_solutions:
            self._coarse_solutions[key] = solve_greens(
                self.space, case, self.delta, self.bump)
        return self._coarse_solutions[key]

    def reference(self, case: GreensCase, gap: int | None = None) -> ReferencePair:
        gap = self.oracle_gap if gap is None else gap
        key = (case.key(), gap)
        if key not in self._fine_solutions:
            fine_sp = self.fine_space(gap)
            fine = solve_greens(fine_sp, case, self.delta, self.bump)
            self._fine_solutions[key] = fine
        return ReferencePair(case, self.space, self.fine_space(gap),
                             self.coarse_solution(case),
                             self._fine_solutions[key],
                             self.delta, self.bump, gap)

    # -- measured quantities --------------------------------------------
    def error_norms(self, pair: ReferencePair, nu: float = 1.0) -> dict:
        """The L1/weighted error record of one reference pair.

        Quadrature runs at coarse-mesh resolution with the reference
        sampled exactly at the coarse quadrature points.
        """
        sp = pair.coarse_space
        w = self.sigma.power(nu)
        g_h, l_h = pair.coarse.velocity, pair.coarse.pressure
        g, l = pair.fine.velocity, pair.fine.pressure
        out = {
            "grad_err_l1": norm(g, g_h, kind="L1", deriv=1, space=sp),
            "grad_err_sigma_l2": norm(g, g_h, kind="L2", deriv=1, space=sp, weight=w),
            "grad_pressure_l1": norm(l_h, kind="L1", deriv=1),
            "grad_pressure_sigma_l2": norm(l_h, kind="L2", deriv=1, weight=w),
        }
        rh_l = projection_rh(sp, l)
        out["pressure_interp_l1"] = norm(l, rh_l, kind="L1", space=sp)
        if pair.case.kind == "PressureGreen":
            ph_g = projection_Ph(sp, g)
            out["Ph_err_l1"] = norm(g, ph_g, kind="L1", deriv=1, space=sp)
            out["Ph_err_sigma_l2"] = norm(g, ph_g, kind="L2", deriv=1, space=sp, weight=w)
            out["rh_err_l1"] = out["pressure_interp_l1"]
            out["rh_err_sigma_l2"] = norm(l, rh_l, kind="L2", space=sp, weight=w)
        return out

    def self_convergence(self, case: GreensCase, keys=("grad_err_l1",)) -> dict:
        """Relative change of error norms between gap and gap+1 oracles."""
        a = self.error_norms(self.reference(case, self.oracle_gap))
        b = self.error_norms(self.reference(case, self.oracle_gap + 1))
        return {k: abs(a[k] - b[k]) / max(abs(b[k]), 1e-300) for k in keys}

    def decomposition(self, mesh: Mesh | None = None) -> DyadicDecomposition:
        return DyadicDecomposition(mesh or self.space.mesh, self.x0, self.K)


def interpolation_error_lambda0(pair: ReferencePair) -> float:
    """||lambda_ref - r_h(lambda_ref)||_L1 on the coarse space."""
    rh_l = projection_rh(pair.coarse_space, pair.fine.pressure)
    return norm(pair.fine.pressure, rh_l, kind="L1", space=pair.coarse_space)


# ----------------------------------------------------------------------
# dyadic profiles

class DyadicProfile:
    """Per-annulus maxima, norms, and fitted log-log decay slopes."""

    def __init__(self, records, slopes):
        self.records = records  # list of dicts, one per annulus
        self.slopes = slopes    # quantity -> (slope, stderr)


def _loglog_slope(xs, ys):
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    good = (xs > 0) & (ys > 0)
    if good.sum() < 2:
        return float("nan"), float("nan")
    lx, ly = np.log(xs[good]), np.log(ys[good])
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    dof = max(len(lx) - 2, 1)
    sse = float(res[0]) if len(res) else float(np.sum((A @ coef - ly) ** 2))
    denom = float(np.sum((lx - lx.mean()) ** 2))
    stderr = float(np.sqrt(sse / dof / denom)) if denom > 0 else float("nan")
    return float(coef[0]), stderr


def dyadic_profile(velocity: FeField, pressure: FeField,
                   decomp: DyadicDecomposition) -> DyadicProfile:
    """Annulus-wise decay profile of a (velocity, pressure) pair."""
    mesh = velocity.space.mesh
    records = []
    for j in sorted(decomp.annuli):
        sub = decomp.annuli[j]
        elems = sub.classify(mesh)
        rec = {"j": j, "d_j": decomp.d_j(j), "n_elements": int(len(elems))}
        if len(elems) == 0:
            rec["empty"] = True
            records.append(rec)
            continue
        rec["empty"] = False
        rec["max_grad_g"] = norm(velocity, kind="Linf", deriv=1, subdomain=sub)
        rec["max_g"] = norm(velocity, kind="Linf", subdomain=sub)
        rec["max_lambda"] = norm(pressure, kind="Linf", subdomain=sub)
        rec["h2_surrogate_g"] = norm(velocity, kind="L2", deriv=2, subdomain=sub)
        rec["grad_lambda_l2"] = norm(pressure, kind="L2", deriv=1, subdomain=sub)
        records.append(rec)
    slopes = {}
    quantities = ("max_grad_g", "max_g", "max_lambda", "h2_surrogate_g",
                  "grad_lambda_l2")
    ds = [r["d_j"] for r in records if not r.get("empty")]
    for q in quantities:
        ys = [r[q] for r in records if not r.get("empty")]
        slopes[q] = _loglog_slope(ds, ys)
    return DyadicProfile(records, slopes)


# ----------------------------------------------------------------------
# representation identities (the paper-chain checks)

def value_identity(space: FeSpace, solution: Solution, x0,
                   component: int = 0) -> tuple[float, float]:
    """u_{h,i}(x0) versus the a-form against the discrete G0 pair."""
    delta = build_delta(space, x0)
    g0 = solve_greens(space, GreensCase("G0", component), delta)
    op = operator(space)
    lhs = float(solution.velocity(np.asarray(x0, float))[component])
    rhs = op.aform(solution.velocity, solution.pressure,
                   g0.velocity, g0.pressure)
    return lhs, rhs


def derivative_identity(space: FeSpace, solution: Solution, x0,
                        component: int = 0, deriv: int = 0) -> tuple[float, float]:
    """-d_j u_{h,i}(x0) versus the a-form against the discrete G1 pair."""
    from .space import evaluate_gradient

    delta = build_delta(space, x0)
    g1 = solve_greens(space, GreensCase("G1", component, deriv), delta)
    op = operator(space)
    grad = evaluate_gradient(solution.velocity, np.asarray(x0, float))
    lhs = -float(grad[component, deriv])
    rhs = op.aform(solution.velocity, solution.pressure,
                   g1.velocity, g1.pressure)
    return lhs, rhs


def galerkin_orthogonality(pair: ReferencePair, n_tests: int = 10,
                           seed: int = 0) -> float:
    """max |a((g - g_h, l - l_h), (v, q))| over random discrete pairs.

    Both pairs are prolonged into the (nested) reference space, so the
    a-form is evaluated exactly and the returned residual reflects only
    solver precision.
    """
    fine_sp = pair.fine_space
    op = operator(fine_sp)
    eu = prolong(pair.coarse.velocity, fine_sp) - pair.fine.velocity
    ep = prolong(pair.coarse.pressure, fine_sp) - pair.fine.pressure
    rng = np.random.default_rng(seed)
    sp = pair.coarse_space
    worst = 0.0
    for _ in range(n_tests):
        vc = np.zeros(sp.n_vel_dofs)
        free = np.concatenate([sp.free_scalar, sp.n_vel_scalar + sp.free_scalar])
        vc[free] = rng.standard_normal(len(free))
        v = FeField(sp, "velocity", vc)
        q = FeField(sp, "pressure", rng.standard_normal(sp.n_pres_dofs))
        qz = q.coefficients - (operator(sp).c @ q.coefficients) / operator(sp).area
        q = FeField(sp, "pressure", qz)
        vf, qf = prolong(v, fine_sp), prolong(q, fine_sp)
        scale = (np.linalg.norm(vf.coefficients) + np.linalg.norm(qf.coefficients))
        worst = max(worst, abs(op.aform(eu, ep, vf, qf)) / scale)
    return worst
