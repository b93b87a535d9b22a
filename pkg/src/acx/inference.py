"""Wald-type significance tests with chi-square or cone Monte Carlo calibration.

For restrictions that keep the true parameter interior the statistic is
asymptotically chi-square.  When the null pins constrained components on a
bound of the parameter space, the limit is a quadratic form in the cone
projection of a Gaussian vector; its quantiles are simulated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve
from scipy.stats import chi2

from .asymptotics import Cone, all_free_cone, build_cone, cone_project_many, estimate_sandwich
from .errors import AcxError, DimensionError, SingularMatrixError
from .estimate import fit_qmle
from .models import ModelSpec, ParamSpace
from .simulate import Sample

DEFAULT_MC_DRAWS = 10_000


@dataclass(frozen=True)
class WaldResult:
    """Outcome of a significance test."""

    W_n: float
    d0: int
    method: str
    critical_value: float
    p_value: float
    alpha: float
    mc_draws: int
    reject: bool
    converged: bool = True

    def to_json(self) -> dict:
        return {
            "W_n": self.W_n,
            "d0": self.d0,
            "method": self.method,
            "critical_value": self.critical_value,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "mc_draws": self.mc_draws,
            "reject": self.reject,
            "converged": self.converged,
        }

    def verdict(self) -> str:
        flag = "REJECT" if self.reject else "ACCEPT"
        return (
            f"{flag} H0 at level {self.alpha}: W_n = {self.W_n:.4f}, "
            f"critical value = {self.critical_value:.4f} ({self.method})"
        )


def wald_statistic(
    Gamma: np.ndarray,
    theta_hat: np.ndarray,
    v0: np.ndarray,
    Sigma: np.ndarray,
    n: int,
) -> float:
    """n (G th - v0)' (G Sigma G')^-1 (G th - v0), via a linear solve."""
    Gamma = np.atleast_2d(np.asarray(Gamma, dtype=float))
    theta_hat = np.asarray(theta_hat, dtype=float)
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))
    d0, d = Gamma.shape
    if d0 < 1 or theta_hat.shape != (d,) or v0.shape != (d0,):
        raise DimensionError("Gamma, theta_hat and v0 dimensions disagree")
    if np.linalg.matrix_rank(Gamma) < d0:
        raise AcxError("Gamma must have full row rank")
    mid = Gamma @ Sigma @ Gamma.T
    r = Gamma @ theta_hat - v0
    try:
        w = float(n * r @ solve(mid, r, assume_a="sym"))
    except np.linalg.LinAlgError as err:
        raise SingularMatrixError("Gamma Sigma Gamma' is singular") from err
    cond = np.linalg.cond(mid)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularMatrixError(
            "Gamma Sigma Gamma' is singular beyond tolerance", condition=float(cond)
        )
    return max(w, 0.0)


def critical_value_chisq(d0: int, alpha: float) -> float:
    """(1 - alpha) quantile of chi-square with d0 degrees of freedom."""
    if d0 < 1:
        raise AcxError("d0 must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise AcxError("alpha must lie in (0, 1)")
    return float(chi2.ppf(1.0 - alpha, df=d0))


def _mc_statistics(
    Gamma: np.ndarray,
    Sigma: np.ndarray,
    F: np.ndarray,
    cone: Cone,
    draws: int,
    seed: int,
) -> np.ndarray:
    """Draws of (G Z^C)' (G Sigma G')^-1 (G Z^C) with Z ~ N(0, Sigma)."""
    Gamma = np.atleast_2d(np.asarray(Gamma, dtype=float))
    d = Gamma.shape[1]
    if Sigma.shape != (d, d) or cone.d != d:
        raise DimensionError("Gamma, Sigma and cone dimensions disagree")
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(0xC0E,)))
    )
    # eigen factor tolerates the semi-definite case
    evals, evecs = np.linalg.eigh(np.asarray(Sigma, dtype=float))
    evals = np.clip(evals, 0.0, None)
    root = evecs * np.sqrt(evals)
    Z = rng.standard_normal((draws, d)) @ root.T
    ZC = cone_project_many(Z, F, cone)
    mid = Gamma @ Sigma @ Gamma.T
    cond = np.linalg.cond(mid)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularMatrixError(
            "Gamma Sigma Gamma' is singular beyond tolerance", condition=float(cond)
        )
    R = ZC @ Gamma.T
    return np.einsum("ij,ij->i", R, solve(mid, R.T, assume_a="sym").T)


def critical_value_cone_mc(
    Gamma: np.ndarray,
    Sigma: np.ndarray,
    F: np.ndarray,
    cone: Cone,
    alpha: float,
    draws: int = DEFAULT_MC_DRAWS,
    seed: int = 0,
) -> float:
    """Empirical (1 - alpha) quantile of the simulated null statistic.

    Uses the 'higher' interpolation so the finite-draw test errs on the
    conservative side.
    """
    if draws < 1000:
        raise AcxError("draws must be >= 1000 for a stable quantile")
    if not 0.0 < alpha < 1.0:
        raise AcxError("alpha must lie in (0, 1)")
    stats = _mc_statistics(Gamma, Sigma, F, cone, draws, seed)
    return float(np.quantile(stats, 1.0 - alpha, method="higher"))


def significance_test(
    spec: ModelSpec,
    space: ParamSpace,
    sample: Sample,
    Gamma: np.ndarray,
    v0: np.ndarray,
    alpha: float = 0.05,
    null_activity: tuple[int, ...] | set[int] | None = None,
    draws: int = DEFAULT_MC_DRAWS,
    seed: int = 0,
    starts: int = 5,
    fit=None,
    sandwich=None,
) -> WaldResult:
    """Test Gamma theta = v0 against its negation.

    ``null_activity`` lists constrained components that the null pins on a
    bound of the space; with the default (None) it is inferred: a
    single-component restriction whose null value equals a bound of a
    constrained component marks that component active.  Empty activity
    selects the chi-square calibration, anything else the cone Monte
    Carlo.  A pre-computed ``fit`` / ``sandwich`` pair may be supplied to
    avoid refitting.
    """
    Gamma = np.atleast_2d(np.asarray(Gamma, dtype=float))
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))
    d0 = Gamma.shape[0]
    if d0 < 1 or Gamma.shape[1] != spec.d:
        raise DimensionError(f"Gamma must be d0 x {spec.d} with d0 >= 1")
    if np.linalg.matrix_rank(Gamma) < d0:
        raise AcxError("Gamma must have full row rank")

    if null_activity is None:
        null_activity = _default_activity(space, Gamma, v0)
    activity = tuple(sorted(set(int(i) for i in null_activity)))

    if fit is None:
        fit = fit_qmle(spec, space, sample, starts=starts, seed=seed)
    if sandwich is None:
        sandwich = estimate_sandwich(spec, space, sample, fit.theta_hat)

    W = wald_statistic(Gamma, fit.theta_hat, v0, sandwich.Sigma, sample.n)
    if not activity:
        crit = critical_value_chisq(d0, alpha)
        p = float(chi2.sf(W, df=d0))
        return WaldResult(
            W_n=W, d0=d0, method="chisq", critical_value=crit, p_value=p,
            alpha=alpha, mc_draws=0, reject=bool(W > crit), converged=fit.converged,
        )
    cone = build_cone(space, _null_reference(space, Gamma, v0), activity)
    stats = _mc_statistics(Gamma, sandwich.Sigma, sandwich.F, cone, draws, seed)
    crit = float(np.quantile(stats, 1.0 - alpha, method="higher"))
    p = float(np.mean(stats >= W))
    return WaldResult(
        W_n=W, d0=d0, method="cone_mc", critical_value=crit, p_value=p,
        alpha=alpha, mc_draws=draws, reject=bool(W > crit), converged=fit.converged,
    )


def _default_activity(space: ParamSpace, Gamma: np.ndarray, v0: np.ndarray):
    """Constrained components whose null value is one of their bounds."""
    activity = []
    for row, target in zip(Gamma, v0):
        nz = np.flatnonzero(row)
        if nz.size != 1:
            continue
        i = int(nz[0])
        val = target / row[i]
        if space.constrained[i] and (val == space.lo[i] or val == space.hi[i]):
            activity.append(i)
    return tuple(activity)


def _null_reference(space: ParamSpace, Gamma: np.ndarray, v0: np.ndarray) -> np.ndarray:
    """Parameter vector placing components at the bound their null pins.

    Components not determined by a single-component restriction default to
    their lower bound, the common case of a nullity test with lo = 0.
    """
    ref = space.lo.copy()
    for row, target in zip(Gamma, v0):
        nz = np.flatnonzero(row)
        if nz.size != 1:
            continue
        i = int(nz[0])
        val = target / row[i]
        if val == space.hi[i]:
            ref[i] = space.hi[i]
    return ref
