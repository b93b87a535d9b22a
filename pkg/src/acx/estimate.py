"""Box-constrained quasi-maximum likelihood estimation.

The maximizer runs L-BFGS-B (gradient projection quasi-Newton) from several
starting points and falls back to bounded Nelder-Mead when the gradient
path fails; the best run wins.  Submodels freeze a subset of components at
zero and optimize the rest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import AcxError, DimensionError, EstimationError, InvertibilityError, NumericsError
from .likelihood import eval_loglik, make_negloglik, make_negloglik_and_grad, score_fd
from .models import ModelSpec, ParamSpace, check_space
from .simulate import Sample

BARRIER = 1e12
DEFAULT_STARTS = 5


@dataclass(frozen=True)
class FitResult:
    """A QMLE fit: estimate, likelihood value and diagnostics."""

    theta_hat: np.ndarray
    loglik: float
    converged: bool
    n_starts_used: int
    active_bounds: tuple[int, ...]
    frozen: tuple[int, ...]
    method: str = "lbfgsb"
    message: str = ""

    @property
    def deviance(self) -> float:
        return -2.0 * self.loglik

    def to_json(self) -> dict:
        return {
            "theta_hat": [float(v) for v in self.theta_hat],
            "loglik": self.loglik,
            "deviance": self.deviance,
            "converged": self.converged,
            "active_bounds": list(self.active_bounds),
            "frozen": list(self.frozen),
        }


def activity_tolerance(n: int) -> float:
    """Distance to a bound below which a component is reported active."""
    return max(1e-4, n ** (-0.5))


def fit_qmle(
    spec: ModelSpec,
    space: ParamSpace,
    sample: Sample,
    frozen: tuple[int, ...] | set[int] = (),
    starts: int = DEFAULT_STARTS,
    seed: int = 0,
    extra_starts: list[np.ndarray] | None = None,
) -> FitResult:
    """Maximize the truncated quasi-log-likelihood over the box.

    ``frozen`` components are fixed at zero (submodel support).  Starting
    points: the box midpoint with the variance intercept lifted to at least
    10 * h_floor, then ``starts - 1`` uniform draws; ``extra_starts`` (full
    length vectors) are appended, which lets nested model chains warm-start.
    """
    check_space(spec, space)
    frozen = tuple(sorted(set(int(i) for i in frozen)))
    d = spec.d
    if sample.n <= d - len(frozen):
        raise EstimationError(
            f"sample of length {sample.n} is too short for {d - len(frozen)} parameters"
        )
    if any(i < 0 or i >= d for i in frozen):
        raise DimensionError(f"frozen indices out of range: {frozen}")
    for i in frozen:
        if not (space.lo[i] <= 0.0 <= space.hi[i]):
            raise AcxError(
                f"component {spec.layout[i]} cannot be frozen: 0 is outside its bounds"
            )
    if starts < 1:
        raise AcxError("starts must be >= 1")

    base = np.zeros(d)
    fixed_box = space.lo == space.hi
    base[fixed_box] = space.lo[fixed_box]
    free = np.array(
        [i for i in range(d) if i not in frozen and not fixed_box[i]], dtype=int
    )

    def assemble(v: np.ndarray) -> np.ndarray:
        full = base.copy()
        full[free] = v
        return full

    fast_negloglik = make_negloglik(spec, space, sample)

    def negloglik(v: np.ndarray) -> float:
        try:
            return fast_negloglik(assemble(v))
        except (NumericsError, InvertibilityError):
            return BARRIER

    value_and_grad_full = make_negloglik_and_grad(spec, space, sample)
    if value_and_grad_full is None:
        negloglik_jac = None
    else:

        def negloglik_jac(v: np.ndarray):
            try:
                val, g = value_and_grad_full(assemble(v))
                return val, g[free]
            except (NumericsError, InvertibilityError):
                return BARRIER, np.zeros(free.size)

    if free.size == 0:
        theta = base
        ll = eval_loglik(spec, space, theta, sample).loglik
        return FitResult(
            theta_hat=theta,
            loglik=ll,
            converged=True,
            n_starts_used=0,
            active_bounds=_active_set(theta, space, sample.n),
            frozen=frozen,
            method="fixed",
        )

    start_list = _starting_points(spec, space, free, starts, seed)
    if extra_starts:
        for t in extra_starts:
            t = np.asarray(t, dtype=float)
            if t.shape != (d,):
                raise DimensionError("extra_starts entries must be full-length")
            start_list.append(np.clip(t[free], space.lo[free], space.hi[free]))

    bounds = list(zip(space.lo[free], space.hi[free]))
    best = None
    for v0 in start_list:
        res, method = _one_run(negloglik, v0, bounds, jac_fun=negloglik_jac)
        if res is None:
            continue
        if best is None or res.fun < best[0].fun:
            best = (res, method)
    if best is None or best[0].fun >= BARRIER:
        raise EstimationError("no start produced a finite likelihood")

    res, method = best
    theta_hat = assemble(np.clip(res.x, space.lo[free], space.hi[free]))
    ll = eval_loglik(spec, space, theta_hat, sample).loglik
    converged = _converged(spec, space, theta_hat, sample, free, res, method)
    return FitResult(
        theta_hat=theta_hat,
        loglik=ll,
        converged=converged,
        n_starts_used=len(start_list),
        active_bounds=_active_set(theta_hat, space, sample.n),
        frozen=frozen,
        method=method,
        message=str(getattr(res, "message", "")),
    )


def fit_submodel(
    spec: ModelSpec,
    space: ParamSpace,
    sample: Sample,
    m: tuple[int, ...] | set[int],
    starts: int = DEFAULT_STARTS,
    seed: int = 0,
    extra_starts: list[np.ndarray] | None = None,
) -> FitResult:
    """QMLE over the submodel with support ``m`` (complement frozen at 0)."""
    support = set(int(i) for i in m)
    if any(i < 0 or i >= spec.d for i in support):
        raise DimensionError(f"support indices out of range: {sorted(support)}")
    frozen = tuple(i for i in range(spec.d) if i not in support)
    return fit_qmle(
        spec, space, sample, frozen=frozen, starts=starts, seed=seed,
        extra_starts=extra_starts,
    )


def _starting_points(spec, space, free, starts, seed) -> list[np.ndarray]:
    mid = space.midpoint()
    vi = spec.variance_intercept_index
    if vi is not None:
        mid[vi] = min(max(mid[vi], 10.0 * space.h_floor), space.hi[vi])
    points = [mid[free]]
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(0x7F17,)))
    )
    lo, hi = space.lo[free], space.hi[free]
    p_ar = spec.orders[0] + spec.orders[1] if spec.family == "armax" else 0
    for _ in range(starts - 1):
        for _try in range(50):
            v = lo + (hi - lo) * rng.uniform(size=free.size)
            if spec.family != "armax":
                break
            # keep ARMAX draws inside the invertible region
            full = np.zeros(spec.d)
            full[free] = v
            if np.sum(np.abs(full[:p_ar])) < 0.98:
                break
        points.append(v)
    return points


def _one_run(negloglik, v0, bounds, jac_fun=None):
    try:
        if jac_fun is not None:
            res = minimize(
                jac_fun,
                v0,
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": 500, "maxfun": 10000, "ftol": 1e-11, "gtol": 1e-7},
            )
        else:
            res = minimize(
                negloglik,
                v0,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": 500, "maxfun": 10000, "ftol": 1e-11, "gtol": 1e-7},
            )
        if np.isfinite(res.fun) and res.fun < BARRIER:
            return res, "lbfgsb"
    except (ValueError, FloatingPointError):
        pass
    try:
        res = minimize(
            negloglik,
            v0,
            method="Nelder-Mead",
            bounds=bounds,
            options={"maxiter": 4000, "xatol": 1e-9, "fatol": 1e-11},
        )
        if np.isfinite(res.fun) and res.fun < BARRIER:
            return res, "nelder-mead"
    except (ValueError, FloatingPointError):
        pass
    return None, ""


def _converged(spec, space, theta_hat, sample, free, res, method) -> bool:
    try:
        g = score_fd(spec, space, theta_hat, sample)
    except NumericsError:
        return False
    pg = _projected_gradient(g, theta_hat, space)
    if float(np.max(np.abs(pg[free]), initial=0.0)) <= 1e-5 * sample.n:
        return True
    if method == "nelder-mead":
        simplex = getattr(res, "final_simplex", None)
        if simplex is not None:
            verts = simplex[0]
            diam = float(np.max(np.linalg.norm(verts - verts[0], axis=1)))
            return diam <= 1e-8
    return False


def _projected_gradient(g, theta, space, edge_tol=1e-9):
    """Ascent-direction gradient with components blocked by the box removed."""
    pg = g.copy()
    scale = np.maximum(1.0, np.abs(theta))
    at_lo = theta - space.lo <= edge_tol * scale
    at_hi = space.hi - theta <= edge_tol * scale
    pg[at_lo] = np.maximum(pg[at_lo], 0.0)
    pg[at_hi] = np.minimum(pg[at_hi], 0.0)
    return pg


def _active_set(theta, space, n) -> tuple[int, ...]:
    tol = activity_tolerance(n)
    hit = (np.abs(theta - space.lo) <= tol) | (np.abs(theta - space.hi) <= tol)
    return tuple(int(i) for i in np.flatnonzero(hit))
