import math

import numpy as np
import pytest

from stokeslab.geometry import Domain, build_structured_mesh
from stokeslab.greens import (CompatibilityError, GreensCase, GreensLab,
                              derivative_identity, dyadic_profile,
                              galerkin_orthogonality,
                              interpolation_error_lambda0, prolong,
                              solve_greens, value_identity)
from stokeslab.manufactured import polynomial_stokes
from stokeslab.regularization import build_bump, build_delta
from stokeslab.space import FeField, FeSpace, interpolate, norm
from stokeslab.stokes import operator, solve_body_force

SQUARE = Domain.unit_square()


@pytest.fixture(scope="module")
def lab():
    space = FeSpace.taylor_hood(build_structured_mesh(SQUARE, 8), 2)
    anchor = space.mesh.centroids[space.mesh.locate_point((0.3, 0.7))]
    return GreensLab(space, anchor, oracle_gap=2, bump=build_bump(SQUARE))


def test_g0_pairing_identity(lab):
    # the discrete equations restated: (v_h, delta e_i) = a-form value
    space = lab.space
    sol = lab.coarse_solution(GreensCase("G0", 0))
    op = operator(space)
    rng = np.random.default_rng(0)
    free = np.concatenate([space.free_scalar,
                           space.n_vel_scalar + space.free_scalar])
    pair = lab.delta.pair_basis(space.vel)
    for _ in range(5):
        vc = np.zeros(space.n_vel_dofs)
        vc[free] = rng.standard_normal(len(free))
        v = FeField(space, "velocity", vc)
        q = FeField(space, "pressure", np.zeros(space.n_pres_dofs))
        a = op.aform(sol.velocity, sol.pressure, v, q)
        assert a == pytest.approx(pair @ vc[:space.n_vel_scalar], abs=1e-10)


def test_g1_constant_pairing(lab):
    from stokeslab.stokes import RhsFunctional

    space = lab.space
    # rhs pairing of the derivative case against a constant-on-support field
    F, G, _ = operator(space).assemble_rhs(
        RhsFunctional("delta_derivative", (lab.delta, 0, 1)))
    ones = np.zeros(space.n_vel_dofs)
    lay = space.vel
    ones[lay.elem_dofs[lab.delta.element]] = 1.0
    assert abs(F @ ones) < 1e-12


def test_pressure_green_compatibility(lab):
    sol = lab.coarse_solution(GreensCase("PressureGreen"))
    assert sol.residual <= 1e-10
    # the recorded defect is the quadrature-level mass mismatch of the bump
    # on this mesh, small but not at the analytic-mass tolerance
    assert abs(sol.stats.get("mass_defect", 0.0)) < 1e-7
    with pytest.raises(CompatibilityError):
        solve_greens(lab.space, GreensCase("PressureGreen"), lab.delta, None)


def test_reference_pair_and_self_convergence(lab):
    pair = lab.reference(GreensCase("G0", 0))
    assert pair.fine.residual <= 1e-10
    errs = lab.error_norms(pair)
    assert errs["grad_err_l1"] > 0
    sc = lab.self_convergence(GreensCase("G0", 0))
    assert sc["grad_err_l1"] < 0.10


def test_identical_pair_zero_error(lab):
    pair = lab.reference(GreensCase("G0", 0))
    same = norm(pair.coarse.velocity, pair.coarse.velocity, kind="L1",
                deriv=1, space=lab.space)
    assert same == 0.0


def test_prolong_exact(lab):
    pair = lab.reference(GreensCase("G0", 0))
    fine_sp = pair.fine_space
    pv = prolong(pair.coarse.velocity, fine_sp)
    rng = np.random.default_rng(1)
    pts = rng.uniform(0.1, 0.9, (30, 2))
    elems = fine_sp.mesh.locate_points(pts)
    a = pv.values_on(fine_sp.mesh, elems, pts)
    b = pair.coarse.velocity.values_on(fine_sp.mesh, elems, pts)
    assert np.allclose(a, b, atol=1e-11)


def test_galerkin_orthogonality_green_pair(lab):
    pair = lab.reference(GreensCase("G0", 0))
    assert galerkin_orthogonality(pair, n_tests=10) < 1e-9


def test_representation_identities():
    space = FeSpace.taylor_hood(build_structured_mesh(SQUARE, 8), 2)
    man = polynomial_stokes()
    sol = solve_body_force(space, man["f"])
    rng = np.random.default_rng(7)
    for _ in range(5):
        x0 = rng.uniform(0.15, 0.85, 2)
        lhs, rhs = value_identity(space, sol, x0, component=rng.integers(2))
        assert lhs == pytest.approx(rhs, abs=1e-8)
        lhs, rhs = derivative_identity(space, sol, x0,
                                       component=rng.integers(2),
                                       deriv=rng.integers(2))
        assert lhs == pytest.approx(rhs, abs=1e-8)


def test_dyadic_profile_zero_field(lab):
    space = lab.space
    dec = lab.decomposition()
    prof = dyadic_profile(space.zero_field("velocity"),
                          space.zero_field("pressure"), dec)
    for rec in prof.records:
        if not rec.get("empty"):
            assert rec["max_grad_g"] == 0.0
            assert rec["max_lambda"] == 0.0


def test_dyadic_profile_decay(lab):
    pair = lab.reference(GreensCase("G0", 0))
    dec = lab.decomposition(pair.fine_space.mesh)
    prof = dyadic_profile(pair.fine.velocity, pair.fine.pressure, dec)
    recs = [r for r in prof.records if not r.get("empty")]
    lam = [r["max_lambda"] for r in recs]
    # pressure maxima decay away from the anchor (increasing d_j)
    assert lam == sorted(lam)
    slope, err = prof.slopes["max_lambda"]
    assert np.isfinite(slope) and slope < 0


def test_interpolation_error_lambda0(lab):
    from stokeslab.projections import projection_rh

    pair = lab.reference(GreensCase("G0", 0))
    val = interpolation_error_lambda0(pair)
    assert val > 0
    # a pressure already in the coarse space projects to itself
    rh = projection_rh(lab.space, pair.coarse.pressure)
    assert norm(pair.coarse.pressure, rh, kind="L1") < 1e-12
