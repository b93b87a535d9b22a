"""Tests for the sandwich estimator, cone construction and F-projection."""

import numpy as np
import pytest

from acx import (
    AcxError,
    Cone,
    ModelSpec,
    NoiseConfig,
    Sample,
    SingularMatrixError,
    all_free_cone,
    build_cone,
    cone_project,
    cone_project_many,
    default_space,
    estimate_sandwich,
    simulate_response,
)
from acx.asymptotics import _project_pg


def _random_pd(rng, d, jitter=0.3):
    A = rng.normal(size=(d, d))
    return A @ A.T + jitter * np.eye(d)


def _random_cone(rng, d, max_constrained=None):
    kinds = np.zeros(d, dtype=np.int8)
    k = rng.integers(1, (max_constrained or d) + 1)
    idx = rng.choice(d, size=k, replace=False)
    kinds[idx] = rng.choice([-1, 1], size=k)
    return Cone(kinds)


# ---------------------------------------------------------------------------
# sandwich
# ---------------------------------------------------------------------------

def test_pure_noise_sandwich_matches_population_values():
    # y ~ N(0,1): on the (const, var_const) block the population matrices
    # are F = diag(2, 1) and G = diag(4, 2), so the two-parameter sandwich
    # built from those blocks is diag(1, 2)
    spec = ModelSpec.fdar_x(0)
    space = default_space(spec)
    theta = np.array([0.0, 0.0, 1.0, 0.0])
    noise = NoiseConfig("normal", 99, 0)
    y = noise.draw(100_000, noise.make_rng())
    sample = Sample(y, np.zeros((y.size, 1)))
    sw = estimate_sandwich(spec, space, sample, theta)
    blk = np.ix_([0, 2], [0, 2])
    assert np.allclose(sw.F[blk], np.diag([2.0, 1.0]), rtol=0.1, atol=0.02)
    assert np.allclose(sw.G[blk], np.diag([4.0, 2.0]), rtol=0.1, atol=0.05)
    Fb = sw.F[blk]
    Gb = sw.G[blk]
    sigma_block = np.linalg.solve(Fb, np.linalg.solve(Fb, Gb).T)
    assert sigma_block[0, 0] == pytest.approx(1.0, rel=0.1)
    assert sigma_block[1, 1] == pytest.approx(2.0, rel=0.1)


def test_G_is_positive_semidefinite():
    spec = ModelSpec.fdar_x(1)
    space = default_space(spec)
    from acx import simulate_covariates

    x = simulate_covariates(700, 0.5, 0.5, NoiseConfig("normal", 5, 0))
    sample = simulate_response(
        spec, np.array([0.15, -0.2, 0.4, 0.3, 0.08, 0.0]), x[:, None], 200,
        noise=NoiseConfig("normal", 5, 1),
    )
    sw = estimate_sandwich(
        spec, space, sample, np.array([0.15, -0.2, 0.4, 0.3, 0.08, 0.01])
    )
    evals = np.linalg.eigvalsh(sw.G)
    assert evals.min() >= -1e-8 * np.trace(sw.G)
    assert np.allclose(sw.F, sw.F.T, atol=1e-8 * max(1, np.abs(sw.F).max()))


def test_duplicated_covariate_column_is_singular():
    spec = ModelSpec.arch_x(1, d_x=2)
    space = default_space(spec)
    rng = np.random.default_rng(3)
    x1 = np.abs(rng.normal(1.0, 0.5, size=500))
    x = np.column_stack([x1, x1])  # engineered collinearity
    theta = np.array([0.4, 0.3, 0.3, 0.3])
    sample = simulate_response(spec, theta, x, 300, burn_in=200, noise=NoiseConfig("normal", 4, 1))
    with pytest.raises(SingularMatrixError) as exc:
        estimate_sandwich(spec, space, sample, theta)
    assert exc.value.condition is None or exc.value.condition > 1e8


def test_hessian_symmetry_at_interior_point():
    spec = ModelSpec.fdar_x(1)
    space = default_space(spec)
    from acx import simulate_covariates

    x = simulate_covariates(800, 0.5, 0.5, NoiseConfig("normal", 8, 0))
    sample = simulate_response(
        spec, np.array([0.15, -0.2, 0.4, 0.3, 0.08, 0.05]), x[:, None], 300,
        noise=NoiseConfig("normal", 8, 1),
    )
    # interior evaluation point
    theta = np.array([0.2, -0.15, 0.45, 0.25, 0.1, 0.08])
    from acx.asymptotics import _fd_column
    from acx.likelihood import per_obs_scores

    total_score = lambda t: per_obs_scores(spec, space, t, sample).sum(axis=0)
    H = np.empty((spec.d, spec.d))
    for j in range(spec.d):
        H[:, j] = _fd_column(total_score, theta, j, space, 1e-4)
    asym = np.abs(H - H.T).max() / max(1.0, np.abs(H).max())
    assert asym <= 1e-4


# ---------------------------------------------------------------------------
# cone construction
# ---------------------------------------------------------------------------

def test_build_cone_interior_case():
    spec = ModelSpec.fdar_x(1)
    space = default_space(spec)
    cone = build_cone(space, space.midpoint(), activity=())
    assert np.all(cone.kinds == 0)
    z = np.array([1.0, -2.0, 0.5, -0.1, 3.0, -4.0])
    assert np.array_equal(cone_project(z, np.eye(6), cone), z)


def test_build_cone_fdarx_null():
    spec = ModelSpec.fdar_x(1)
    space = default_space(spec)
    ref = space.lo.copy()
    cone = build_cone(space, ref, activity=(4, 5))
    assert list(cone.kinds) == [0, 0, 0, 0, 1, 1]


def test_build_cone_upper_bound_is_nonpositive():
    spec = ModelSpec.fdar_x(1)
    space = default_space(spec)
    ref = space.midpoint()
    ref[5] = space.hi[5]
    cone = build_cone(space, ref, activity=(5,))
    assert cone.kinds[5] == -1


def test_build_cone_rejects_unconstrained():
    spec = ModelSpec.fdar_x(1)
    space = default_space(spec)
    with pytest.raises(AcxError):
        build_cone(space, space.lo, activity=(0,))


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------

def test_projection_hand_case():
    F = np.array([[2.0, 1.0], [1.0, 2.0]])
    cone = Cone(np.array([1, 1], dtype=np.int8))
    out = cone_project(np.array([-1.0, 1.0]), F, cone)
    assert np.allclose(out, [0.0, 0.5], atol=1e-12)


def test_projection_fixes_cone_points():
    rng = np.random.default_rng(2)
    for _ in range(20):
        d = int(rng.integers(1, 6))
        cone = _random_cone(rng, d)
        F = _random_pd(rng, d)
        z = rng.normal(size=d)
        z[cone.kinds == 1] = np.abs(z[cone.kinds == 1])
        z[cone.kinds == -1] = -np.abs(z[cone.kinds == -1])
        out = cone_project(z, F, cone)
        assert np.allclose(out, z, atol=1e-10)


def test_projection_euclidean_is_clipping():
    cone = Cone(np.array([1, 1], dtype=np.int8))
    out = cone_project(np.array([-1.0, 2.0]), np.eye(2), cone)
    assert np.allclose(out, [0.0, 2.0])


def test_projection_idempotent_and_variational():
    rng = np.random.default_rng(77)
    for _ in range(100):
        d = int(rng.integers(1, 7))
        cone = _random_cone(rng, d)
        F = _random_pd(rng, d)
        z = 3 * rng.normal(size=d)
        zc = cone_project(z, F, cone)
        assert cone.contains(zc, tol=1e-12)
        # idempotence
        zc2 = cone_project(zc, F, cone)
        assert np.allclose(zc, zc2, atol=1e-10)
        # variational inequality against random cone points
        C = rng.normal(size=(50, d))
        C[:, cone.kinds == 1] = np.abs(C[:, cone.kinds == 1])
        C[:, cone.kinds == -1] = -np.abs(C[:, cone.kinds == -1])
        lhs = (C - zc) @ F @ (z - zc)
        bound = 1e-8 * np.sqrt(z @ F @ z) * np.sqrt(np.einsum("ij,jk,ik->i", C, F, C))
        assert np.all(lhs <= bound + 1e-12)


def test_projection_batched_matches_single():
    rng = np.random.default_rng(6)
    d = 5
    cone = _random_cone(rng, d, max_constrained=3)
    F = _random_pd(rng, d)
    Z = rng.normal(size=(40, d))
    batch = cone_project_many(Z, F, cone)
    single = np.vstack([cone_project(z, F, cone) for z in Z])
    assert np.allclose(batch, single, atol=1e-12)


def test_projection_gradient_path_agrees_with_enumeration():
    rng = np.random.default_rng(12)
    for _ in range(20):
        d = int(rng.integers(2, 7))
        cone = _random_cone(rng, d)
        F = _random_pd(rng, d)
        z = 2 * rng.normal(size=d)
        via_enum = cone_project(z, F, cone)
        via_pg = _project_pg(z, F, cone)
        assert np.allclose(via_pg, via_enum, atol=1e-6)


def test_projection_large_block_uses_pg_and_satisfies_kkt():
    rng = np.random.default_rng(21)
    d = 14
    kinds = np.ones(d, dtype=np.int8)  # 14 constrained exceeds the enum limit
    cone = Cone(kinds)
    F = _random_pd(rng, d)
    z = rng.normal(size=d)
    zc = cone_project(z, F, cone)
    assert cone.contains(zc, tol=1e-9)
    grad = 2 * F @ (zc - z)
    active = np.abs(zc) <= 1e-9
    assert np.all(grad[active] >= -1e-6)
    assert np.allclose(grad[~active], 0.0, atol=1e-6)


def test_projection_rejects_indefinite_F():
    cone = Cone(np.array([1], dtype=np.int8))
    with pytest.raises(SingularMatrixError):
        cone_project(np.array([1.0]), np.array([[-1.0]]), cone)


def test_all_free_cone_shape():
    cone = all_free_cone(4)
    assert cone.d == 4 and np.all(cone.kinds == 0)
