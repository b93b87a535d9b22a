"""Tests for the truncated quasi-likelihood and the finite-difference engine."""

import numpy as np
import pytest

from acx import (
    ModelSpec,
    NoiseConfig,
    NumericsError,
    Sample,
    default_space,
    eval_loglik,
    fd_gradient,
    per_obs_scores,
    score_fd,
    simulate_covariates,
    simulate_response,
)
from acx.likelihood import make_negloglik, make_negloglik_and_grad


@pytest.fixture(scope="module")
def fdarx_sample():
    spec = ModelSpec.fdar_x(1)
    x = simulate_covariates(800, 0.5, 0.5, NoiseConfig("normal", 42, 0))
    sample = simulate_response(
        spec,
        np.array([0.15, -0.2, 0.4, 0.3, 0.08, 0.0]),
        x[:, None],
        300,
        noise=NoiseConfig("normal", 42, 1),
    )
    return spec, default_space(spec), sample


def test_pure_noise_terms():
    spec = ModelSpec.fdar_x(1)
    space = default_space(spec)
    theta = np.array([0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
    state = eval_loglik(spec, space, theta, Sample(np.array([1.0, 2.0]), np.zeros((2, 1))))
    assert np.allclose(state.qhat, [1.0, 4.0])
    assert state.loglik == pytest.approx(-2.5)
    assert state.deviance == pytest.approx(5.0)


def test_two_step_hand_computation():
    spec = ModelSpec.fdar_x(1)
    space = default_space(spec)
    theta = np.array([0.1, 0.2, 0.5, 0.3, 0.1, 0.2])
    sample = Sample(np.array([1.0, -1.0]), np.array([[0.5], [1.0]]))
    state = eval_loglik(spec, space, theta, sample)
    q1 = (1 - 0.1) ** 2 / 0.5 + np.log(0.5)
    f2 = 0.1 + 0.2 * 1.0 + 0.1 * 0.5
    h2 = 0.5 + 0.3 * 1.0 + 0.2 * 0.25
    q2 = (-1 - f2) ** 2 / h2 + np.log(h2)
    assert state.fhat[0] == pytest.approx(0.1)
    assert state.hhat[0] == pytest.approx(0.5)
    assert np.allclose(state.qhat, [q1, q2])


def test_arxgarch_recursion_matches_geometric_sum():
    # independent oracle: the explicit truncated geometric-sum form of the
    # GARCH variance, written as a double loop
    spec = ModelSpec.arx_garch11()
    space = default_space(spec)
    x = simulate_covariates(650, 0.5, 0.5, NoiseConfig("normal", 10, 0))
    sample = simulate_response(
        spec, np.array([0.3, 0.4, 0.2, 0.3, 0.5]), x[:, None], 150,
        noise=NoiseConfig("normal", 10, 1),
    )
    rng = np.random.default_rng(0)
    for _ in range(5):
        a, c0, c1, dd, g = 0.4 * rng.uniform(-1, 1), 0.3 + rng.uniform(0, 1), \
            rng.uniform(0, 0.5), rng.uniform(0, 0.9), rng.uniform(-1, 1)
        theta = np.array([a, c0, c1, dd, g])
        state = eval_loglik(spec, space, theta, sample)

        y = sample.y
        xv = sample.x[:, 0]
        n = y.size
        loglik = 0.0
        for t in range(n):
            f_t = a * (y[t - 1] if t >= 1 else 0.0) + g * (xv[t - 1] if t >= 1 else 0.0)
            s2 = c0 / (1 - dd)
            for k in range(1, t + 1):
                tm = t - k  # index of epsilon_{t-k}
                eps = y[tm] - a * (y[tm - 1] if tm >= 1 else 0.0) - g * (
                    xv[tm - 1] if tm >= 1 else 0.0
                )
                s2 += c1 * dd ** (k - 1) * eps**2
            loglik += -0.5 * ((y[t] - f_t) ** 2 / s2 + np.log(s2))
        assert state.loglik == pytest.approx(loglik, abs=1e-10 * max(1, abs(loglik)))


def test_floor_bounds_qhat():
    spec = ModelSpec.fdar_x(1)
    space = default_space(spec)
    state = eval_loglik(
        spec, space, np.array([0.0, 0.0, 1e-4, 0.0, 0.0, 0.0]),
        Sample(np.zeros(5), np.zeros((5, 1))),
    )
    assert np.all(state.qhat >= np.log(space.h_floor))


@pytest.mark.filterwarnings("ignore:overflow")
def test_nonfinite_data_names_first_bad_t():
    spec = ModelSpec.fdar_x(1)
    space = default_space(spec)
    y = np.zeros(10)
    y[4] = 1e300  # square overflows at the next step
    sample = Sample.__new__(Sample)  # bypass finiteness validation on purpose
    object.__setattr__(sample, "y", y)
    object.__setattr__(sample, "x", np.zeros((10, 1)))
    with pytest.raises(NumericsError, match="t=6"):
        eval_loglik(spec, space, np.array([0.0, 0.9, 1.0, 0.9, 0.0, 0.0]), sample)


def test_scale_coherence_on_doubled_sample():
    spec, space, sample = ModelSpec.fdar_x(1), None, None
    space = default_space(spec)
    x = simulate_covariates(700, 0.5, 0.5, NoiseConfig("normal", 3, 0))
    s1 = simulate_response(
        spec, np.array([0.15, -0.2, 0.4, 0.3, 0.0, 0.0]), x[:, None], 200,
        noise=NoiseConfig("normal", 3, 1),
    )
    double = Sample(np.r_[s1.y, s1.y], np.vstack([s1.x, s1.x]))
    theta = np.array([0.15, -0.2, 0.4, 0.3, 0.0, 0.0])
    d1 = eval_loglik(spec, space, theta, s1).deviance
    d2 = eval_loglik(spec, space, theta, double).deviance
    assert d2 == pytest.approx(2 * d1, rel=0.02)


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def test_fd_gradient_exact_on_quadratic():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    fun = lambda t: float(t @ A @ t)
    theta = np.array([0.3, -0.7])
    g = fd_gradient(fun, theta, eps=1e-6)
    assert np.allclose(g, 2 * A @ theta, rtol=1e-6)


def test_fd_one_sided_at_bounds():
    fun = lambda t: float(t[0] ** 2)
    g = fd_gradient(fun, np.array([0.0]), lo=np.array([0.0]), hi=np.array([1.0]))
    assert g[0] == pytest.approx(0.0, abs=1e-5)
    with pytest.raises(NumericsError):
        fd_gradient(fun, np.array([0.5]), lo=np.array([0.5]), hi=np.array([0.5]))


def test_score_zero_at_interior_maximizer(fdarx_sample):
    spec, space, sample = fdarx_sample
    from acx import fit_qmle

    fit = fit_qmle(spec, space, sample, starts=3, seed=0)
    g = score_fd(spec, space, fit.theta_hat, sample)
    free = [i for i in range(spec.d) if i not in fit.active_bounds]
    assert np.max(np.abs(g[free]), initial=0.0) <= 1e-3 * sample.n


def test_per_obs_scores_sum_identity(fdarx_sample):
    spec, space, sample = fdarx_sample
    theta = np.array([0.2, -0.1, 0.45, 0.25, 0.1, 0.1])
    rows = per_obs_scores(spec, space, theta, sample)
    total = rows.sum(axis=0)
    score = score_fd(spec, space, theta, sample)
    assert np.allclose(total, -2.0 * score, rtol=1e-8, atol=1e-10)


def test_per_obs_scores_analytic_column():
    # with f = phi0 and unit variance, dq_t/dphi0 = -2 (y_t - phi0)
    spec = ModelSpec.fdar_x(1)
    space = default_space(spec)
    y = np.array([0.4, -1.2, 2.0])
    sample = Sample(y, np.zeros((3, 1)))
    rows = per_obs_scores(spec, space, np.array([0.0, 0.0, 1.0, 0.0, 0.0, 0.0]), sample)
    assert np.allclose(rows[:, 0], -2 * y, atol=1e-8)


def test_per_obs_scores_zero_sample_kills_covariate_columns():
    spec = ModelSpec.fdar_x(1)
    space = default_space(spec)
    sample = Sample(np.zeros(6), np.zeros((6, 1)))
    rows = per_obs_scores(spec, space, np.array([0.1, 0.2, 0.5, 0.1, 0.3, 0.4]), sample)
    # psi and beta multiply zero regressors, so their scores vanish
    assert np.allclose(rows[:, 4], 0.0, atol=1e-9)
    assert np.allclose(rows[:, 5], 0.0, atol=1e-9)


def test_richardson_step_halving(fdarx_sample):
    spec, space, sample = fdarx_sample
    fn = make_negloglik(spec, space, sample)
    rng = np.random.default_rng(15)
    for _ in range(20):
        theta = space.lo + (space.hi - space.lo) * (0.2 + 0.6 * rng.uniform(size=spec.d))
        g1 = fd_gradient(fn, theta, space.lo, space.hi, eps=1e-3)
        g2 = fd_gradient(fn, theta, space.lo, space.hi, eps=5e-4)
        g4 = fd_gradient(fn, theta, space.lo, space.hi, eps=2.5e-4)
        ratio = np.linalg.norm(g1 - g2) / np.linalg.norm(g2 - g4)
        assert 3.5 <= ratio <= 4.5


def test_objective_gradient_matches_fd(fdarx_sample):
    spec, space, sample = fdarx_sample
    vg = make_negloglik_and_grad(spec, space, sample)
    fn = make_negloglik(spec, space, sample)
    rng = np.random.default_rng(8)
    for _ in range(10):
        theta = space.lo + (space.hi - space.lo) * (0.2 + 0.6 * rng.uniform(size=spec.d))
        val, g = vg(theta)
        assert val == pytest.approx(fn(theta), rel=1e-12)
        gfd = fd_gradient(fn, theta, space.lo, space.hi, eps=1e-6)
        assert np.allclose(g, gfd, rtol=1e-5, atol=1e-6)


def test_per_t_diagnostics_csv(tmp_path):
    spec = ModelSpec.fdar_x(1)
    space = default_space(spec)
    state = eval_loglik(
        spec, space, np.array([0.0, 0.0, 1.0, 0.0, 0.0, 0.0]),
        Sample(np.array([1.0, 2.0]), np.zeros((2, 1))),
    )
    path = tmp_path / "diag.csv"
    state.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,fhat,hhat,qhat"
    assert len(lines) == 3
