"""Tests for the Wald statistic and its two calibration paths."""

import math

import numpy as np
import pytest

from acx import (
    AcxError,
    Cone,
    ModelSpec,
    NoiseConfig,
    all_free_cone,
    critical_value_chisq,
    critical_value_cone_mc,
    default_space,
    significance_test,
    simulate_covariates,
    simulate_response,
    wald_statistic,
)

S0_THETA = np.array([0.15, -0.2, 0.4, 0.3, 0.0, 0.0])
S1_THETA = np.array([0.15, -0.2, 0.4, 0.3, 0.08, 0.0])


def _sample(theta, n, seed):
    spec = ModelSpec.fdar_x(1)
    x = simulate_covariates(n + 500, 0.5, 0.5, NoiseConfig("normal", seed, 0))
    return spec, simulate_response(
        spec, theta, x[:, None], n, noise=NoiseConfig("normal", seed, 1)
    )


def _nullity_gamma():
    G = np.zeros((2, 6))
    G[0, 4] = 1.0
    G[1, 5] = 1.0
    return G


# ---------------------------------------------------------------------------
# statistic
# ---------------------------------------------------------------------------

def test_statistic_zero_when_null_holds_exactly():
    G = np.array([[0.0, 1.0]])
    W = wald_statistic(G, np.array([0.3, 0.7]), np.array([0.7]), np.eye(2), 100)
    assert W == pytest.approx(0.0, abs=1e-12)


def test_statistic_one_line_arithmetic():
    G = np.array([[0.0, 1.0]])
    Sigma = np.array([[1.0, 0.0], [0.0, 0.25]])
    W = wald_statistic(G, np.array([0.0, 0.1]), np.array([0.0]), Sigma, 100)
    assert W == pytest.approx(4.0, abs=1e-10)


def test_statistic_scaling_invariance():
    rng = np.random.default_rng(4)
    A = rng.normal(size=(3, 3))
    Sigma = A @ A.T + 0.5 * np.eye(3)
    G = rng.normal(size=(2, 3))
    theta = rng.normal(size=3)
    v0 = rng.normal(size=2)
    W1 = wald_statistic(G, theta, v0, Sigma, 250)
    W2 = wald_statistic(3.7 * G, theta, 3.7 * v0, Sigma, 250)
    assert W1 == pytest.approx(W2, abs=1e-10 * max(1, W1))


def test_statistic_rank_checks():
    G = np.vstack([np.eye(2), np.eye(2)[:1]])  # 3 rows, rank 2
    with pytest.raises(AcxError):
        wald_statistic(G, np.zeros(2), np.zeros(3), np.eye(2), 10)


# ---------------------------------------------------------------------------
# critical values
# ---------------------------------------------------------------------------

def test_chisq_quantiles_match_closed_forms():
    assert critical_value_chisq(1, 0.05) == pytest.approx(3.8415, abs=1e-3)
    # for two degrees of freedom the quantile is -2 log(alpha)
    assert critical_value_chisq(2, 0.05) == pytest.approx(-2 * math.log(0.05), abs=1e-9)
    assert critical_value_chisq(2, 0.05) == pytest.approx(5.9915, abs=1e-3)
    assert critical_value_chisq(1, 0.999999) < 1e-6


def test_mc_all_free_matches_chisq():
    rng = np.random.default_rng(10)
    A = rng.normal(size=(3, 3))
    Sigma = A @ A.T + 0.5 * np.eye(3)
    F = np.linalg.inv(Sigma)
    for d0 in (1, 2):
        G = np.eye(d0, 3)
        q = critical_value_cone_mc(G, Sigma, F, all_free_cone(3), 0.05, draws=100_000, seed=2)
        target = critical_value_chisq(d0, 0.05)
        assert abs(q - target) / target < 0.02


def test_mc_half_line_mixture():
    # T = max(Z, 0)^2 with Z ~ N(0,1): 0.95 quantile is the chi2(1) 0.90 quantile
    q = critical_value_cone_mc(
        np.array([[1.0]]), np.array([[1.0]]), np.array([[1.0]]),
        Cone(np.array([1], dtype=np.int8)), 0.05, draws=100_000, seed=3,
    )
    assert abs(q - 2.7055) / 2.7055 < 0.03


def test_mc_draw_count_consistency():
    args = (np.array([[1.0]]), np.array([[1.0]]), np.array([[1.0]]),
            Cone(np.array([1], dtype=np.int8)))
    q_small = critical_value_cone_mc(*args, 0.05, draws=1000, seed=8)
    q_large = critical_value_cone_mc(*args, 0.05, draws=100_000, seed=8)
    # binomial error at the 95th percentile of 1000 draws is a few percent
    assert abs(q_small - q_large) < 0.5


def test_mc_rejects_too_few_draws():
    with pytest.raises(AcxError):
        critical_value_cone_mc(
            np.array([[1.0]]), np.array([[1.0]]), np.array([[1.0]]),
            Cone(np.array([1], dtype=np.int8)), 0.05, draws=10,
        )


# ---------------------------------------------------------------------------
# significance_test
# ---------------------------------------------------------------------------

def test_method_selection_and_consistency_null_data():
    spec, sample = _sample(S0_THETA, 500, 64)
    space = default_space(spec)
    res = significance_test(
        spec, space, sample, _nullity_gamma(), np.zeros(2),
        alpha=0.05, draws=10_000, seed=4, starts=3,
    )
    assert res.method == "cone_mc"  # nullity test at the lower bound
    assert res.mc_draws == 10_000
    assert 0.0 <= res.p_value <= 1.0
    assert res.reject == (res.W_n > res.critical_value)
    assert res.reject == (res.p_value < res.alpha)


def test_explicit_interior_null_takes_chisq_path():
    spec, sample = _sample(S1_THETA, 500, 65)
    space = default_space(spec)
    G = np.zeros((1, 6))
    G[0, 1] = 1.0  # ar coefficient, unconstrained interior component
    res = significance_test(
        spec, space, sample, G, np.array([-0.2]), alpha=0.05, seed=1, starts=3,
    )
    assert res.method == "chisq"
    assert res.mc_draws == 0
    assert res.reject == (res.p_value < res.alpha)
    assert not res.reject  # the null is true here


def test_chisq_and_all_free_mc_agree():
    spec, sample = _sample(S1_THETA, 600, 66)
    space = default_space(spec)
    G = np.zeros((1, 6))
    G[0, 1] = 1.0
    chi = significance_test(spec, space, sample, G, np.array([-0.2]), seed=2, starts=3)
    mc = significance_test(
        spec, space, sample, G, np.array([-0.2]), null_activity=(),
        seed=2, starts=3,
    )
    assert chi.W_n == pytest.approx(mc.W_n, rel=1e-9)
    assert chi.method == "chisq"


def test_zero_row_gamma_rejected():
    spec, sample = _sample(S0_THETA, 200, 67)
    space = default_space(spec)
    G = np.zeros((1, 6))
    with pytest.raises(AcxError):
        significance_test(spec, space, sample, G, np.zeros(1), starts=1)


def test_power_grows_with_sample_size():
    # under a fixed alternative the statistic drifts upward with n
    spec = ModelSpec.fdar_x(1)
    space = default_space(spec)
    G = _nullity_gamma()
    medians = []
    for n in (250, 500, 1000):
        stats = []
        for rep in range(15):
            seed = 9000 + rep
            x = simulate_covariates(n + 500, 0.5, 0.5, NoiseConfig("normal", seed, 0))
            sample = simulate_response(
                spec, S1_THETA, x[:, None], n, noise=NoiseConfig("normal", seed, 1)
            )
            res = significance_test(
                spec, space, sample, G, np.zeros(2), draws=2000, seed=seed, starts=2,
            )
            stats.append(res.W_n)
        medians.append(np.median(stats))
    assert medians[0] < medians[1] < medians[2]


def test_wald_result_json_fields():
    spec, sample = _sample(S0_THETA, 300, 68)
    space = default_space(spec)
    res = significance_test(
        spec, space, sample, _nullity_gamma(), np.zeros(2), draws=2000, seed=5, starts=2,
    )
    doc = res.to_json()
    assert set(doc) == {
        "W_n", "d0", "method", "critical_value", "p_value", "alpha",
        "mc_draws", "reject", "converged",
    }
    assert doc["d0"] == 2
