"""Truncated Gaussian quasi-log-likelihood and finite-difference derivatives.

The reported objective is L = -0.5 * sum_t q_t with
q_t = (y_t - f_t)^2 / h_t + log h_t, evaluated with zeroed pre-sample
history.  The deviance -2L is the model-selection currency.

All derivatives are numerical: central differences with a per-coordinate
relative step, switching to one-sided differences against the box bounds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionError, NumericsError
from .models import ModelSpec, ParamSpace, conditional_moments
from .simulate import Sample

DEFAULT_FD_EPS = 1e-6


@dataclass(frozen=True)
class LikelihoodState:
    """Per-observation terms of one likelihood evaluation."""

    fhat: np.ndarray
    hhat: np.ndarray
    qhat: np.ndarray
    loglik: float

    @property
    def deviance(self) -> float:
        return -2.0 * self.loglik

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "fhat", "hhat", "qhat"])
            for t in range(self.fhat.size):
                writer.writerow(
                    [
                        t + 1,
                        repr(float(self.fhat[t])),
                        repr(float(self.hhat[t])),
                        repr(float(self.qhat[t])),
                    ]
                )


def eval_loglik(
    spec: ModelSpec, space: ParamSpace, theta: np.ndarray, sample: Sample
) -> LikelihoodState:
    """Evaluate the truncated quasi-log-likelihood at theta.

    The conditional variance is floored at ``space.h_floor`` before the log
    and the division; at admissible parameters the floor is never active.
    """
    fhat, hraw = conditional_moments(spec, theta, sample.y, sample.x)
    if not (np.all(np.isfinite(fhat)) and np.all(np.isfinite(hraw))):
        bad = ~(np.isfinite(fhat) & np.isfinite(hraw))
        raise NumericsError(
            f"non-finite conditional moment at t={int(np.argmax(bad)) + 1}"
        )
    hhat = np.maximum(hraw, space.h_floor)
    resid = sample.y - fhat
    qhat = resid**2 / hhat + np.log(hhat)
    loglik = -0.5 * float(np.sum(qhat))
    if not np.isfinite(loglik):
        raise NumericsError(
            f"non-finite likelihood term at t={int(np.argmax(~np.isfinite(qhat))) + 1}"
        )
    return LikelihoodState(fhat=fhat, hhat=hhat, qhat=qhat, loglik=loglik)


def make_negloglik(
    spec: ModelSpec, space: ParamSpace, sample: Sample
) -> Callable[[np.ndarray], float]:
    """Fast negative log-likelihood closure for repeated evaluation.

    For families whose conditional moments are linear in fixed lag
    regressors (fdarx, archx) the lag design matrices are precomputed once,
    so each call is two mat-vecs.  Other families fall back to
    :func:`eval_loglik`.  Values agree with ``-eval_loglik(...).loglik`` up
    to float rounding.
    """
    n = sample.n
    y = sample.y
    floor = space.h_floor

    if spec.family in ("fdarx", "archx"):
        mean_design, var_design, mean_idx, var_idx = _linear_designs(spec, sample)

        def negloglik(theta: np.ndarray) -> float:
            theta = np.asarray(theta, dtype=float)
            f = mean_design @ theta[mean_idx] if mean_idx.size else 0.0
            h = var_design @ theta[var_idx]
            np.maximum(h, floor, out=h)
            resid = y - f
            q = resid * resid / h + np.log(h)
            total = float(np.sum(q))
            if not np.isfinite(total):
                raise NumericsError(
                    f"non-finite likelihood term at t={int(np.argmax(~np.isfinite(q))) + 1}"
                )
            return 0.5 * total

        return negloglik

    def negloglik_generic(theta: np.ndarray) -> float:
        return -eval_loglik(spec, space, theta, sample).loglik

    return negloglik_generic


def make_negloglik_and_grad(
    spec: ModelSpec, space: ParamSpace, sample: Sample
) -> Callable[[np.ndarray], tuple[float, np.ndarray]] | None:
    """Joint (value, gradient) closure for the linear-moment families.

    Only used to drive the optimizer; reported scores and Hessians always
    come from the finite-difference engine.  Returns None for families
    without the linear lag structure.  Where the variance floor binds the
    gradient takes the flat side of the kink.
    """
    if spec.family not in ("fdarx", "archx"):
        return None
    y = sample.y
    floor = space.h_floor
    mean_design, var_design, mean_idx, var_idx = _linear_designs(spec, sample)
    d = spec.d

    def value_and_grad(theta: np.ndarray) -> tuple[float, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        f = mean_design @ theta[mean_idx] if mean_idx.size else 0.0
        hraw = var_design @ theta[var_idx]
        floored = hraw < floor
        h = np.where(floored, floor, hraw)
        invh = 1.0 / h
        resid = y - f
        q = resid * resid * invh + np.log(h)
        val = 0.5 * float(np.sum(q))
        if not np.isfinite(val):
            raise NumericsError(
                f"non-finite likelihood term at t={int(np.argmax(~np.isfinite(q))) + 1}"
            )
        grad = np.zeros(d)
        if mean_idx.size:
            grad[mean_idx] = -mean_design.T @ (resid * invh)
        wv = 0.5 * (invh - resid * resid * invh * invh)
        wv[floored] = 0.0
        grad[var_idx] = var_design.T @ wv
        return val, grad

    return value_and_grad


def _linear_designs(spec: ModelSpec, sample: Sample):
    """Lag regressor matrices for the linear-moment families."""
    from .models import _lag, _lag2

    n = sample.n
    y = sample.y
    x = sample.x
    ylag = _lag(y, 1)
    if spec.family == "fdarx":
        (q,) = spec.orders
        x1 = x[:, 0] if x.shape[1] else np.zeros(n)
        xlags = [_lag(x1, i + 1) for i in range(q)]
        mean_design = np.column_stack([np.ones(n), ylag] + xlags)
        var_design = np.column_stack(
            [np.ones(n), ylag**2] + [xl**2 for xl in xlags]
        )
        mean_idx = np.r_[0, 1, 4 : 4 + q].astype(int)
        var_idx = np.r_[2, 3, 4 + q : 4 + 2 * q].astype(int)
        return mean_design, var_design, mean_idx, var_idx
    # archx: zero mean, variance linear in lagged y^2 and lagged x
    (q,) = spec.orders
    cols = [np.ones(n)]
    cols += [_lag(y, k + 1) ** 2 for k in range(q)]
    for k in range(q):
        xl = _lag2(x, k + 1)
        cols += [xl[:, j] for j in range(x.shape[1])]
    var_design = np.column_stack(cols)
    return np.zeros((n, 0)), var_design, np.array([], dtype=int), np.arange(spec.d)


def fd_gradient(
    fun: Callable[[np.ndarray], float],
    theta: np.ndarray,
    lo: np.ndarray | None = None,
    hi: np.ndarray | None = None,
    eps: float = DEFAULT_FD_EPS,
) -> np.ndarray:
    """Finite-difference gradient of a scalar function.

    Central differences with step eps * max(1, |theta_i|) per coordinate;
    one-sided when a bound is closer than the step.
    """
    theta = np.asarray(theta, dtype=float)
    g = np.empty(theta.size)
    for i in range(theta.size):
        g[i] = _fd_coordinate(fun, theta, i, lo, hi, eps, scalar=True)
    return g


def _fd_coordinate(fun, theta, i, lo, hi, eps, scalar):
    """One coordinate of a central/one-sided difference; fun may be vector-valued."""
    h = eps * max(1.0, abs(theta[i]))
    lo_i = -np.inf if lo is None else lo[i]
    hi_i = np.inf if hi is None else hi[i]
    up_ok = theta[i] + h <= hi_i
    dn_ok = theta[i] - h >= lo_i
    if not up_ok and not dn_ok:
        raise NumericsError(
            f"box too tight for a finite-difference step at component {i}"
        )
    tp = theta.copy()
    tm = theta.copy()
    if up_ok and dn_ok:
        tp[i] += h
        tm[i] -= h
        denom = 2.0 * h
    elif up_ok:
        tp[i] += h
        denom = h
    else:
        tm[i] -= h
        denom = h
    fp = fun(tp)
    fm = fun(tm)
    if scalar:
        return (fp - fm) / denom
    return (np.asarray(fp) - np.asarray(fm)) / denom


def score_fd(
    spec: ModelSpec,
    space: ParamSpace,
    theta: np.ndarray,
    sample: Sample,
    eps: float = DEFAULT_FD_EPS,
) -> np.ndarray:
    """Numerical gradient of the quasi-log-likelihood, length d."""
    fun = lambda t: eval_loglik(spec, space, t, sample).loglik
    return fd_gradient(fun, theta, space.lo, space.hi, eps)


def per_obs_scores(
    spec: ModelSpec,
    space: ParamSpace,
    theta: np.ndarray,
    sample: Sample,
    eps: float = DEFAULT_FD_EPS,
) -> np.ndarray:
    """n x d matrix of the per-observation gradients d q_t / d theta.

    Rows use the same difference stencil as :func:`score_fd`, so they sum
    to exactly -2 times the likelihood score up to rounding.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.d,):
        raise DimensionError(f"theta must have length {spec.d}")
    qfun = lambda t: eval_loglik(spec, space, t, sample).qhat
    out = np.empty((sample.n, theta.size))
    for i in range(theta.size):
        out[:, i] = _fd_coordinate(qfun, theta, i, space.lo, space.hi, eps, scalar=False)
    return out
