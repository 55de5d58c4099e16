import numpy as np
import pytest

from stokeslab.geometry import Domain, build_structured_mesh, mesh_hierarchy
from stokeslab.manufactured import random_trig_pressure, random_trig_velocity
from stokeslab.projections import projection_Ph, projection_rh
from stokeslab.space import CallableField, FeField, FeSpace, interpolate, norm
from stokeslab.verification import LevelLadder

SQUARE = Domain.unit_square()


@pytest.fixture(scope="module")
def space():
    return FeSpace.taylor_hood(build_structured_mesh(SQUARE, 8), 2)


def random_vh(space, rng):
    coeffs = np.zeros(space.n_vel_dofs)
    free = np.concatenate([space.free_scalar,
                           space.n_vel_scalar + space.free_scalar])
    coeffs[free] = rng.standard_normal(len(free))
    return FeField(space, "velocity", coeffs)


def test_Ph_idempotent(space):
    vh = random_vh(space, np.random.default_rng(0))
    ph = projection_Ph(space, vh)
    assert np.abs(ph.coefficients - vh.coefficients).max() < 1e-12


def test_rh_idempotent_and_constants(space):
    rng = np.random.default_rng(1)
    qh = FeField(space, "pressure", rng.standard_normal(space.n_pres_dofs))
    rh = projection_rh(space, qh)
    assert np.abs(rh.coefficients - qh.coefficients).max() < 1e-12
    const = CallableField(lambda p: np.full(len(p), 3.25), shape="scalar")
    rc = projection_rh(space, const)
    assert np.abs(rc.coefficients - 3.25).max() < 1e-11


def test_Ph_divergence_orthogonality(space):
    rng = np.random.default_rng(2)
    for _ in range(20):
        v = random_trig_velocity(rng)
        ph, resid = projection_Ph(space, v, return_residual=True)
        gv = norm(v, kind="L2", deriv=1, space=space)
        assert resid <= 1e-10 * gv


def test_Ph_stability(space):
    rng = np.random.default_rng(3)
    ratios = []
    for _ in range(20):
        v = random_trig_velocity(rng)
        ph = projection_Ph(space, v)
        ratios.append(norm(ph, kind="L2", deriv=1)
                      / norm(v, kind="L2", deriv=1, space=space))
    assert max(ratios) < 1.2


def test_rh_smooth_rate():
    q = CallableField(lambda p: np.cos(2 * np.pi * p[:, 0]),
                      lambda p: np.column_stack([
                          -2 * np.pi * np.sin(2 * np.pi * p[:, 0]),
                          np.zeros(len(p))]), shape="scalar")
    errs, hs = [], []
    for n in (8, 16, 32):
        sp = FeSpace.taylor_hood(build_structured_mesh(SQUARE, n), 2)
        rh = projection_rh(sp, q)
        errs.append(norm(q, rh, kind="L2", space=sp))
        hs.append(sp.mesh.h)
    rate = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert rate == pytest.approx(2.0, abs=0.1)


def test_Ph_gradient_rate_smooth():
    # the assumption's O(h) bound holds a fortiori: degree-2 elements give
    # second order on smooth divergence-free-ish fields
    rng = np.random.default_rng(4)
    v = random_trig_velocity(rng)
    errs, hs = [], []
    for n in (8, 16, 32):
        sp = FeSpace.taylor_hood(build_structured_mesh(SQUARE, n), 2)
        ph = projection_Ph(sp, v)
        errs.append(norm(v, ph, kind="L2", deriv=1, space=sp))
        hs.append(sp.mesh.h)
    rate = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert rate > 1.0
