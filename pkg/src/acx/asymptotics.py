"""Sandwich covariance estimation and cone projection.

The limit distribution of the QMLE is the F-metric projection of a
Gaussian vector onto a convex cone determined by which constrained
components of the true parameter sit on a bound.  This module estimates
the Hessian scale F, the score outer-product scale G and the sandwich
Sigma = F^-1 G F^-1, and projects vectors onto axis-aligned cones in the
inner product induced by F.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve

from .errors import AcxError, DimensionError, SingularMatrixError
from .likelihood import per_obs_scores
from .models import ModelSpec, ParamSpace
from .simulate import Sample

HESSIAN_FD_EPS = 1e-4
CONE_ENUM_LIMIT = 12

FREE = 0
NON_NEGATIVE = 1
NON_POSITIVE = -1


@dataclass(frozen=True)
class SandwichEstimate:
    """F (Hessian scale), G (score scale) and Sigma = F^-1 G F^-1."""

    F: np.ndarray
    G: np.ndarray
    Sigma: np.ndarray
    condition_F: float
    jitter: float = 0.0

    def to_json(self) -> dict:
        return {
            "F": _matrix_doc(self.F),
            "G": _matrix_doc(self.G),
            "Sigma": _matrix_doc(self.Sigma),
            "condition_F": self.condition_F,
            "jitter": self.jitter,
        }


def _matrix_doc(m: np.ndarray) -> dict:
    return {"rows": m.shape[0], "cols": m.shape[1], "data": [float(v) for v in m.ravel()]}


@dataclass(frozen=True)
class Cone:
    """Product of lines and half-lines, one kind per component.

    Kinds: 0 free (all of R), +1 non-negative (component at its lower
    bound), -1 non-positive (component at its upper bound).
    """

    kinds: np.ndarray

    def __post_init__(self):
        kinds = np.asarray(self.kinds, dtype=np.int8).copy()
        if kinds.ndim != 1:
            raise DimensionError("kinds must be a vector")
        if not np.all(np.isin(kinds, (-1, 0, 1))):
            raise AcxError("cone kinds must be -1, 0 or +1")
        kinds.setflags(write=False)
        object.__setattr__(self, "kinds", kinds)

    @property
    def d(self) -> int:
        return self.kinds.size

    @property
    def constrained_indices(self) -> np.ndarray:
        return np.flatnonzero(self.kinds != FREE)

    def contains(self, z: np.ndarray, tol: float = 0.0) -> bool:
        s = self.kinds * np.asarray(z, dtype=float)
        return bool(np.all(s[self.kinds != FREE] >= -tol))


def all_free_cone(d: int) -> Cone:
    return Cone(np.zeros(d, dtype=np.int8))


def estimate_sandwich(
    spec: ModelSpec,
    space: ParamSpace,
    sample: Sample,
    theta_hat: np.ndarray,
    score_eps: float = 1e-6,
    hessian_eps: float = HESSIAN_FD_EPS,
    cond_tol: float = 1e8,
) -> SandwichEstimate:
    """Plug-in sandwich at the estimate.

    F averages the per-observation Hessians of q_t (finite differences of
    the per-observation scores, symmetrized); G averages the score outer
    products.  Sigma is obtained with Cholesky solves; a small diagonal
    jitter is escalated up to three times before F is declared singular.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    n = sample.n
    d = spec.d
    if theta_hat.shape != (d,):
        raise DimensionError(f"theta_hat must have length {d}")

    rows = per_obs_scores(spec, space, theta_hat, sample, eps=score_eps)
    G = rows.T @ rows / n

    # Hessian of (1/n) sum q_t: differentiate the summed per-obs scores.
    total_score = lambda t: per_obs_scores(spec, space, t, sample, eps=score_eps).sum(
        axis=0
    )
    H = np.empty((d, d))
    for j in range(d):
        H[:, j] = _fd_column(total_score, theta_hat, j, space, hessian_eps)
    F = (H + H.T) / (2.0 * n)

    condition_F = float(np.linalg.cond(F))
    if not np.isfinite(condition_F) or condition_F > cond_tol:
        raise SingularMatrixError(
            f"F is singular beyond tolerance (condition number {condition_F:.3g}); "
            "the model may be overparameterized or a covariate collinear",
            condition=condition_F,
        )
    jitter = 0.0
    scale = float(np.trace(F)) / d if d else 1.0
    last_err: Exception | None = None
    for attempt in range(4):
        try:
            c, low = cho_factor(F + jitter * np.eye(d))
            inv_g = cho_solve((c, low), G)
            Sigma = cho_solve((c, low), inv_g.T).T
            Sigma = (Sigma + Sigma.T) / 2.0
            return SandwichEstimate(
                F=F, G=G, Sigma=Sigma, condition_F=condition_F, jitter=jitter
            )
        except np.linalg.LinAlgError as err:  # pragma: no cover - rare path
            last_err = err
        except ValueError as err:
            last_err = err
        jitter = 1e-10 * abs(scale) * 10**attempt if scale else 1e-10
    raise SingularMatrixError(
        f"F is singular beyond jitter repair (condition number {condition_F:.3g}); "
        "the model may be overparameterized or a covariate collinear",
        condition=condition_F,
    )


def _fd_column(fun, theta, j, space, eps):
    h = eps * max(1.0, abs(theta[j]))
    up_ok = theta[j] + h <= space.hi[j]
    dn_ok = theta[j] - h >= space.lo[j]
    tp = theta.copy()
    tm = theta.copy()
    if up_ok and dn_ok:
        tp[j] += h
        tm[j] -= h
        return (fun(tp) - fun(tm)) / (2.0 * h)
    if up_ok:
        tp[j] += h
        return (fun(tp) - fun(theta)) / h
    if dn_ok:
        tm[j] -= h
        return (fun(theta) - fun(tm)) / h
    raise AcxError(f"box too tight for a Hessian step at component {j}")


def build_cone(
    space: ParamSpace, theta_ref: np.ndarray, activity: tuple[int, ...] | set[int]
) -> Cone:
    """Cone from a reference parameter and a set of active components.

    Components in ``activity`` must be flagged constrained in the space;
    the half-line direction is read off which bound the reference value
    sits on.  An empty activity set yields all of R^d.
    """
    theta_ref = np.asarray(theta_ref, dtype=float)
    kinds = np.zeros(space.d, dtype=np.int8)
    for i in set(int(i) for i in activity):
        if i < 0 or i >= space.d:
            raise DimensionError(f"activity index {i} out of range")
        if not space.constrained[i]:
            raise AcxError(f"component {i} is not flagged constrained")
        dist_lo = abs(theta_ref[i] - space.lo[i])
        dist_hi = abs(theta_ref[i] - space.hi[i])
        kinds[i] = NON_NEGATIVE if dist_lo <= dist_hi else NON_POSITIVE
    return Cone(kinds)


def cone_project(z: np.ndarray, F: np.ndarray, cone: Cone) -> np.ndarray:
    """F-orthogonal projection of z onto the cone.

    Solves argmin_{c in C} (c - z)' F (c - z).  Sign-constrained blocks of
    size <= 12 are handled by KKT active-set enumeration; larger blocks by
    accelerated projected gradient with an active-set polish.
    """
    z = np.asarray(z, dtype=float)
    return cone_project_many(z[None, :], F, cone)[0]


def cone_project_many(Z: np.ndarray, F: np.ndarray, cone: Cone) -> np.ndarray:
    """Row-wise F-projection of many vectors onto one cone."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    d = cone.d
    if Z.shape[1] != d or F.shape != (d, d):
        raise DimensionError("z, F and cone dimensions disagree")
    sidx = cone.constrained_indices
    if sidx.size == 0:
        return Z.copy()
    try:
        cho_factor(F)
    except (np.linalg.LinAlgError, ValueError) as err:
        raise SingularMatrixError("F must be positive definite") from err
    if sidx.size <= CONE_ENUM_LIMIT:
        return _project_enumerate(Z, F, cone, sidx)
    return np.vstack([_project_pg(z, F, cone) for z in Z])


def _project_enumerate(Z, F, cone, sidx):
    m, d = Z.shape
    signs = cone.kinds[sidx].astype(float)
    best_obj = np.full(m, np.inf)
    best = np.zeros_like(Z)
    scale = np.maximum(np.linalg.norm(Z, axis=1), 1.0)
    ktol = 1e-9

    for r in range(sidx.size + 1):
        for active in combinations(range(sidx.size), r):
            a_idx = sidx[list(active)]
            b_mask = np.ones(d, dtype=bool)
            b_mask[a_idx] = False
            b_idx = np.flatnonzero(b_mask)
            C = np.zeros_like(Z)
            if b_idx.size:
                if a_idx.size:
                    # stationarity over the inactive block with c_A = 0
                    M = solve(F[np.ix_(b_idx, b_idx)], F[np.ix_(b_idx, a_idx)])
                    C[:, b_idx] = Z[:, b_idx] + Z[:, a_idx] @ M.T
                else:
                    C[:, b_idx] = Z[:, b_idx]
            diff = C - Z
            grad = 2.0 * diff @ F
            ok = np.ones(m, dtype=bool)
            # primal feasibility on inactive sign-constrained coordinates
            inactive = np.setdiff1d(sidx, a_idx)
            if inactive.size:
                s_in = cone.kinds[inactive].astype(float)
                ok &= np.all(C[:, inactive] * s_in >= -ktol * scale[:, None], axis=1)
            # dual feasibility on the active coordinates
            if a_idx.size:
                s_ac = cone.kinds[a_idx].astype(float)
                ok &= np.all(grad[:, a_idx] * s_ac >= -ktol * scale[:, None], axis=1)
            if not np.any(ok):
                continue
            obj = np.einsum("ij,jk,ik->i", diff, F, diff)
            better = ok & (obj < best_obj)
            best_obj[better] = obj[better]
            best[better] = C[better]
    if not np.all(np.isfinite(best_obj)):
        raise AcxError("cone projection found no KKT point; F may be indefinite")
    # exact zeros on coordinates clamped by the cone
    snap = np.abs(best) <= 1e-13 * scale[:, None]
    best[snap] = 0.0
    return best


def _project_pg(z, F, cone, max_iter=20000, tol=1e-12):
    """Accelerated projected gradient, then an active-set polish."""
    eigmax = float(np.linalg.eigvalsh(F)[-1])
    step = 0.5 / eigmax  # objective Hessian is 2F
    c = _clip_to_cone(z, cone)
    v = c.copy()
    t_prev = 1.0
    obj_prev = np.inf
    for _ in range(max_iter):
        grad = 2.0 * F @ (v - z)
        c_new = _clip_to_cone(v - step * grad, cone)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_prev**2))
        v = c_new + ((t_prev - 1.0) / t_new) * (c_new - c)
        c, t_prev = c_new, t_new
        obj = float((c - z) @ F @ (c - z))
        if abs(obj_prev - obj) <= tol * max(1.0, abs(obj)):
            break
        obj_prev = obj
    # polish: solve exactly on the predicted active set
    a_idx = np.flatnonzero((cone.kinds != FREE) & (np.abs(c) <= 1e-9))
    b_mask = np.ones(cone.d, dtype=bool)
    b_mask[a_idx] = False
    b_idx = np.flatnonzero(b_mask)
    out = np.zeros_like(z)
    if b_idx.size:
        if a_idx.size:
            M = solve(F[np.ix_(b_idx, b_idx)], F[np.ix_(b_idx, a_idx)])
            out[b_idx] = z[b_idx] + M @ z[a_idx]
        else:
            out[b_idx] = z[b_idx]
    if cone.contains(out, tol=1e-9 * max(1.0, float(np.linalg.norm(z)))):
        obj_out = float((out - z) @ F @ (out - z))
        if obj_out <= float((c - z) @ F @ (c - z)) + 1e-12:
            return out
    return c


def _clip_to_cone(v, cone):
    out = v.copy()
    neg = cone.kinds == NON_NEGATIVE
    pos = cone.kinds == NON_POSITIVE
    out[neg] = np.maximum(out[neg], 0.0)
    out[pos] = np.minimum(out[pos], 0.0)
    return out
