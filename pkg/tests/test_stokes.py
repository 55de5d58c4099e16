import math

import numpy as np
import pytest

from stokeslab.geometry import Domain, build_structured_mesh, mesh_hierarchy
from stokeslab.manufactured import (finite_difference_gradient,
                                    polynomial_stokes,
                                    pressure_gradient_scenario)
from stokeslab.space import CallableField, FeField, FeSpace, interpolate, norm
from stokeslab.stokes import (RhsFunctional, compute_infsup, export_matrix,
                              infsup_dense_oracle, infsup_spectrum, operator,
                              ritz_projection, scalar_stiffness, solve,
                              solve_body_force)

SQUARE = Domain.unit_square()


@pytest.fixture(scope="module")
def space():
    return FeSpace.taylor_hood(build_structured_mesh(SQUARE, 8), 2)


def test_p1_stiffness_matches_hand_assembly():
    # independent oracle: P1 hat gradients from the edge-rotation formula
    mesh = build_structured_mesh(SQUARE, 1)
    sp = FeSpace(mesh, 1, 1)
    K = scalar_stiffness(sp.vel).toarray()
    hand = np.zeros_like(K)
    for t in range(mesh.nt):
        verts = mesh.triangle_vertices(t)
        area = mesh.areas[t]
        grads = []
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            e = verts[k] - verts[j]
            grads.append(np.array([-e[1], e[0]]) / (2 * area))
        idx = mesh.triangles[t]
        for a in range(3):
            for b in range(3):
                hand[idx[a], idx[b]] += area * grads[a] @ grads[b]
    assert np.allclose(K, hand, atol=1e-13)
    # the diagonal entry of a right-angle vertex hat on the reference
    # triangle is 1, and constants lie in the kernel
    assert hand.max() == pytest.approx(1.0)
    assert np.allclose(K @ np.ones(4), 0.0, atol=1e-14)


def test_zero_forcing(space):
    sol = solve_body_force(space, lambda p: np.zeros((len(p), 2)))
    assert np.all(sol.velocity.coefficients == 0.0)
    assert np.all(sol.pressure.coefficients == 0.0)


def test_gradient_pressure_forcing(space):
    man = pressure_gradient_scenario()
    sol = solve_body_force(space, man["f"])
    assert norm(sol.velocity, kind="Linf") < 1e-10
    assert norm(man["p"], sol.pressure, kind="Linf", space=space) < 1e-12
    assert abs(operator(space).pressure_mean(sol.pressure)) < 1e-12


def test_rigid_translation_divergence_free(space):
    op = operator(space)
    # interpolant of a constant velocity with pinned trace: interior constant
    v = interpolate(space, lambda p: np.ones((len(p), 2)))
    # divergence pairing of any discrete field against constants vanishes
    assert abs((op.B @ v.coefficients).sum()) < 1e-12


def test_manufactured_convergence():
    man = polynomial_stokes()
    errs, hs = [], []
    for n in (8, 16, 32):
        sp = FeSpace.taylor_hood(build_structured_mesh(SQUARE, n), 2)
        sol = solve_body_force(sp, man["f"])
        e = (norm(man["u"], sol.velocity, kind="L2", deriv=1, space=sp)
             + norm(man["p"], sol.pressure, kind="L2", space=sp))
        errs.append(e)
        hs.append(sp.mesh.h)
        assert sol.residual <= 1e-10
        assert operator(sp).divergence_residual(sol.velocity) < 1e-10
    rate = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert rate == pytest.approx(2.0, abs=0.15)


def test_forcing_transcription_fd():
    man = polynomial_stokes()
    rng = np.random.default_rng(11)
    pts = rng.uniform(0.1, 0.9, (10, 2))
    gu = finite_difference_gradient(man["u"].value, pts)
    assert np.allclose(gu, man["u"].gradient(pts), atol=1e-8)
    # f = -Laplace(u) + grad p checked against second differences
    eps = 1e-5
    for p in pts[:4]:
        lap = np.zeros(2)
        for d in range(2):
            dp = p.copy(); dp[d] += eps
            dm = p.copy(); dm[d] -= eps
            lap += (man["u"].value(dp[None, :])[0]
                    + man["u"].value(dm[None, :])[0]
                    - 2 * man["u"].value(p[None, :])[0]) / eps ** 2
        f_fd = -lap + man["p"].gradient(p[None, :])[0]
        assert np.allclose(f_fd, man["f"](p[None, :])[0], atol=1e-4)


def test_energy_best_approximation():
    man = polynomial_stokes()
    for n in (8, 16):
        sp = FeSpace.taylor_hood(build_structured_mesh(SQUARE, n), 2)
        sol = solve_body_force(sp, man["f"])
        err = (norm(man["u"], sol.velocity, kind="L2", deriv=1, space=sp)
               + norm(man["p"], sol.pressure, kind="L2", space=sp))
        vi = interpolate(sp, man["u"].value)
        qi = interpolate(sp, man["p"].value, kind="pressure")
        best = (norm(man["u"], vi, kind="L2", deriv=1, space=sp)
                + norm(man["p"], qi, kind="L2", space=sp))
        assert err < 10.0 * best


def test_infsup_uniform_and_oracle():
    betas = []
    for n in (4, 8, 16):
        sp = FeSpace.taylor_hood(build_structured_mesh(SQUARE, n), 2)
        betas.append(compute_infsup(sp))
    assert abs(betas[-1] - betas[-2]) / betas[-1] < 0.05
    sp4 = FeSpace.taylor_hood(build_structured_mesh(SQUARE, 4), 2)
    assert abs(compute_infsup(sp4) - infsup_dense_oracle(sp4)) < 1e-8


def test_infsup_negative_control():
    above = []
    for n in (4, 8, 16):
        sp = FeSpace(build_structured_mesh(SQUARE, n), 1, 1)
        beta, n_kernel, first = infsup_spectrum(sp)
        assert n_kernel > 1       # spurious pressure modes
        assert beta <= 1e-6       # beta_h collapses for the unstable pair
        above.append(first)
    assert above[0] > above[1] > above[2]  # decay toward zero


def test_ritz_idempotent_and_zero(space):
    rng = np.random.default_rng(4)
    coeffs = np.zeros(space.n_vel_dofs)
    free = np.concatenate([space.free_scalar,
                           space.n_vel_scalar + space.free_scalar])
    coeffs[free] = rng.standard_normal(len(free))
    vh = FeField(space, "velocity", coeffs)
    rz = ritz_projection(space, vh)
    assert np.abs(rz.coefficients - vh.coefficients).max() < 1e-10
    zero = ritz_projection(space, space.zero_field("velocity"))
    assert np.all(zero.coefficients == 0.0)


def test_galerkin_orthogonality_manufactured():
    man = polynomial_stokes()
    meshes = mesh_hierarchy(build_structured_mesh(SQUARE, 8), 2)
    sp = FeSpace.taylor_hood(meshes[0], 2)
    sol = solve_body_force(sp, man["f"])
    op = operator(sp)
    rng = np.random.default_rng(0)
    # a((u_h,p_h),(v,q)) = (f, v) for random discrete pairs
    for _ in range(5):
        vc = np.zeros(sp.n_vel_dofs)
        free = np.concatenate([sp.free_scalar, sp.n_vel_scalar + sp.free_scalar])
        vc[free] = rng.standard_normal(len(free))
        v = FeField(sp, "velocity", vc)
        qc = rng.standard_normal(sp.n_pres_dofs)
        qc -= (op.c @ qc) / op.area
        q = FeField(sp, "pressure", qc)
        lhs = op.aform(sol.velocity, sol.pressure, v, q)
        rhs = op.assemble_velocity_functional(man["f"]) @ vc
        assert abs(lhs - rhs) < 1e-9 * max(1.0, abs(rhs))


def test_export_matrix(tmp_path, space):
    op = operator(space)
    path = tmp_path / "mass.txt"
    export_matrix(op.Mp, path)
    lines = open(path).read().strip().split("\n")
    i, j, v = lines[0].split()
    assert int(i) == 0 and float(v) != 0.0
    assert len(lines) == op.Mp.nnz


def test_iterative_path_matches_direct():
    # same problem solved through both branches of solve_raw
    meshes = mesh_hierarchy(build_structured_mesh(SQUARE, 4), 3)
    sp = FeSpace.taylor_hood(meshes[-1], 2)
    man = polynomial_stokes()
    op = operator(sp)
    F = op.assemble_velocity_functional(man["f"])
    G = np.zeros(sp.n_pres_dofs)
    u1, p1, _, r1 = op.solve_raw(F, G)
    op.direct_limit = 1  # force the multigrid MINRES branch
    try:
        u2, p2, _, r2 = op.solve_raw(F, G)
    finally:
        op.direct_limit = 40_000
    assert r2 <= 1e-10
    assert np.abs(u1 - u2).max() < 1e-9
    assert np.abs(p1 - p2).max() < 1e-8
