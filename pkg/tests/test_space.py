import math

import numpy as np
import pytest

from stokeslab.basis import reference_basis
from stokeslab.geometry import Domain, Subdomain, build_structured_mesh, mesh_hierarchy
from stokeslab.space import (CallableField, CutoffFunction, FeField, FeSpace,
                             MismatchedSpaces, build_cutoff, evaluate,
                             evaluate_gradient, interpolate, norm, read_field,
                             write_field)

SQUARE = Domain.unit_square()


@pytest.fixture(scope="module")
def mesh():
    return build_structured_mesh(SQUARE, 4)


@pytest.fixture(scope="module", params=[2, 3])
def space(request, mesh):
    return FeSpace.taylor_hood(mesh, request.param)


def test_reference_basis_nodal():
    for degree in (1, 2, 3, 4):
        basis = reference_basis(degree)
        vals = basis.eval(basis.nodes)
        assert np.allclose(vals, np.eye(basis.ndof), atol=1e-11)
        # partition of unity
        pts = np.random.default_rng(0).uniform(0, 0.5, (20, 2))
        assert np.allclose(basis.eval(pts).sum(axis=1), 1.0, atol=1e-11)


def test_basis_gradient_matches_fd():
    basis = reference_basis(3)
    pts = np.array([[0.21, 0.34], [0.5, 0.1]])
    g = basis.grad(pts)
    eps = 1e-6
    for d in range(2):
        dp = pts.copy(); dp[:, d] += eps
        dm = pts.copy(); dm[:, d] -= eps
        fd = (basis.eval(dp) - basis.eval(dm)) / (2 * eps)
        assert np.allclose(g[..., d], fd, atol=1e-8)


def test_shared_edge_dofs_consistent(space):
    lay = space.vel
    mesh = space.mesh
    ref = lay.basis.nodes
    v0 = mesh.points[mesh.triangles[:, 0]]
    phys = v0[:, None, :] + np.einsum("tij,mj->tmi", mesh._jac, ref)
    assert np.abs(phys - lay.dof_coords[lay.elem_dofs]).max() < 1e-12


def test_velocity_degrees_taylor_hood(mesh):
    with pytest.raises(ValueError):
        FeSpace.taylor_hood(mesh, 1)
    sp = FeSpace(mesh, 1, 1)  # negative-control pair is allowed directly
    assert sp.velocity_degree == 1


def test_interpolate_reproduces_polynomials(space):
    k = space.velocity_degree

    def poly(p):
        return np.column_stack([p[:, 0] ** k + p[:, 1],
                                (p[:, 0] * p[:, 1]) ** (k // 2)])

    f = interpolate(space, poly)
    # exact on elements without boundary dofs (velocity pins the trace)
    lay = space.vel
    interior = ~lay.boundary_dof[lay.elem_dofs].any(axis=1)
    rng = np.random.default_rng(1)
    for e in np.where(interior)[0][:10]:
        lam = rng.dirichlet((1, 1, 1))
        x = lam @ space.mesh.triangle_vertices(e)
        got = f.values_on(space.mesh, [e], x[None, :])[0]
        assert np.allclose(got, poly(x[None, :])[0], atol=1e-12)


def test_interpolate_zero(space):
    f = interpolate(space, lambda p: np.zeros((len(p), 2)))
    assert np.all(f.coefficients == 0.0)


def test_evaluate_examples(mesh):
    space = FeSpace.taylor_hood(mesh, 2)
    one = interpolate(space, lambda p: np.ones(len(p)), kind="pressure")
    assert evaluate(one, (0.3, 0.77)) == pytest.approx(1.0)
    v = interpolate(space, lambda p: np.column_stack([p[:, 0], np.zeros(len(p))]))
    assert evaluate(v, (0.25, 0.5)) == pytest.approx([0.25, 0.0])
    assert np.allclose(evaluate_gradient(v, (0.25, 0.5)), [[1, 0], [0, 0]],
                       atol=1e-12)


def test_interpolation_convergence_rate():
    errs, hs = [], []
    for n in (8, 16, 32):
        m = build_structured_mesh(SQUARE, n)
        sp = FeSpace.taylor_hood(m, 2)
        f = CallableField(
            lambda p: np.column_stack([np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1]),
                                       np.zeros(len(p))]),
            shape="vector")
        g = interpolate(sp, f.value)
        errs.append(norm(f, g, kind="L2", space=sp))
        hs.append(m.h)
    rate = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert rate == pytest.approx(3.0, abs=0.2)  # k + 1 for degree 2


def test_norms_constant_field(mesh):
    space = FeSpace.taylor_hood(mesh, 2)
    one = interpolate(space, lambda p: np.ones(len(p)), kind="pressure")
    for kind in ("L1", "L2", "Linf"):
        assert norm(one, kind=kind) == pytest.approx(1.0)
    zero = space.zero_field("velocity")
    for kind in ("L1", "L2", "Linf"):
        assert norm(zero, kind=kind) == 0.0


def test_weighted_norm_nu_zero(mesh):
    space = FeSpace.taylor_hood(mesh, 2)
    f = interpolate(space, lambda p: np.cos(p[:, 0]) + p[:, 1], kind="pressure")
    plain = norm(f, kind="L2")
    weighted = norm(f, kind="L2", weight=lambda pts: np.ones(len(pts)))
    assert weighted == pytest.approx(plain, abs=1e-14)


def test_linf_density_self_check(mesh):
    space = FeSpace.taylor_hood(mesh, 2)
    f = interpolate(space, lambda p: np.sin(3 * p[:, 0] * p[:, 1]), kind="pressure")
    a = norm(f, kind="Linf", density=space.sample_density)
    b = norm(f, kind="Linf", density=2 * space.sample_density)
    assert abs(a - b) / b < 0.01


def test_norm_mismatched(mesh):
    space = FeSpace.taylor_hood(mesh, 2)
    v = space.zero_field("velocity")
    q = space.zero_field("pressure")
    with pytest.raises(MismatchedSpaces):
        norm(v, q)


def test_cross_mesh_evaluation():
    meshes = mesh_hierarchy(build_structured_mesh(SQUARE, 2), 3)
    coarse = FeSpace.taylor_hood(meshes[0], 2)
    fine = FeSpace.taylor_hood(meshes[2], 3)
    f = interpolate(coarse, lambda p: np.column_stack([p[:, 1] ** 2, p[:, 0]]))
    # coarse field evaluated on the fine frame agrees pointwise
    pts = np.random.default_rng(2).uniform(0.3, 0.7, (20, 2))
    elems = meshes[2].locate_points(pts)
    vals = f.values_on(meshes[2], elems, pts)
    direct = np.stack([f.values_on(meshes[0], [meshes[0].locate_point(p)],
                                   p[None, :])[0] for p in pts])
    assert np.allclose(vals, direct, atol=1e-12)
    # fine field evaluated on the coarse frame (descent path)
    g = interpolate(fine, lambda p: np.column_stack([p[:, 0] ** 3, p[:, 1]]))
    coarse_elems = meshes[0].locate_points(pts)
    vals = g.values_on(meshes[0], coarse_elems, pts)
    expect = np.column_stack([pts[:, 0] ** 3, pts[:, 1]])
    interior = (np.abs(pts - 0.5).max(axis=1) < 0.45)
    assert np.allclose(vals[interior], expect[interior], atol=1e-10)


def test_cutoff_plateau_support_gradient():
    Q = Subdomain("ball", (0.5, 0.5), 0.0, 0.15)
    omega = build_cutoff(Q, 0.2, domain=SQUARE)
    assert omega.value(np.array([[0.5, 0.5]]))[0] == pytest.approx(1.0)
    assert omega.value(np.array([[0.5, 0.88]]))[0] == 0.0
    bounds = [CutoffFunction(Q, d).measured_gradient_bound()
              for d in (0.1, 0.2, 0.3)]
    assert max(bounds) / min(bounds) < 1.05  # scale-invariant profile
    with pytest.raises(ValueError):
        build_cutoff(Q, 0.4, domain=SQUARE)  # support leaves the domain


def test_cutoff_gradient_fd():
    Q = Subdomain("ball", (0.5, 0.5), 0.0, 0.15)
    omega = CutoffFunction(Q, 0.2)
    pts = np.array([[0.71, 0.53], [0.62, 0.61], [0.45, 0.3]])
    g = omega.gradient(pts)
    eps = 1e-7
    for d in range(2):
        dp = pts.copy(); dp[:, d] += eps
        dm = pts.copy(); dm[:, d] -= eps
        fd = (omega.value(dp) - omega.value(dm)) / (2 * eps)
        assert np.allclose(g[:, d], fd, atol=1e-6)


def test_field_file_roundtrip(tmp_path, mesh):
    space = FeSpace.taylor_hood(mesh, 2)
    rng = np.random.default_rng(5)
    f = FeField(space, "pressure", rng.standard_normal(space.n_pres_dofs))
    path = tmp_path / "field.txt"
    write_field(f, path)
    back = read_field(space, path)
    assert np.array_equal(back.coefficients, f.coefficients)
    assert open(path).readline().startswith("FIELD pressure 1")
