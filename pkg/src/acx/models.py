"""Model families, parameter spaces and stationarity checks.

Four observation-driven families are supported, all of the form

    Y_t = f(past Y, past X; theta) + xi_t * M(past Y, past X; theta),

with conditional variance H = M**2:

* ``armax``      -- linear ARMA with lagged exogenous regressors in the mean,
  constant unit variance.
* ``archx``      -- zero mean, variance linear in lagged squared responses
  and lagged (non-negative) covariates.
* ``arxgarch11`` -- AR(1) mean with covariates and GARCH(1,1) errors.
* ``fdarx``      -- double autoregression: both the mean and the variance
  are driven by the lagged response and lagged covariates.

Evaluation always uses the truncated convention: values before the first
observation are replaced by zero, so every conditional moment is an explicit
function of the observed sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import AcxError, DimensionError, InvertibilityError

FAMILIES = ("armax", "archx", "arxgarch11", "fdarx")

# Truncation length for the AR(infinity) expansion of the ARMAX mean.
# Coefficients decay geometrically on the invertible region, so the tail
# beyond 100 lags is below 1e-15 for |ma| sums up to ~0.7.
DEFAULT_PSI_TRUNCATION = 100


@dataclass(frozen=True)
class ModelSpec:
    """A model family instance: family tag, lag orders and covariate width.

    Use the classmethod constructors (:meth:`armax`, :meth:`arch_x`,
    :meth:`arx_garch11`, :meth:`fdar_x`) rather than the raw constructor.
    """

    family: str
    orders: tuple[int, ...]
    d_x: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise AcxError(f"unknown family {self.family!r}")
        if any(k < 0 for k in self.orders):
            raise AcxError("lag orders must be non-negative")
        if self.d_x < 0:
            raise AcxError("d_x must be non-negative")
        if self.d_x == 0 and self._uses_covariates():
            raise AcxError(f"{self.family} with covariate terms needs d_x >= 1")
        if self.family == "fdarx" and self.orders[0] > 0 and self.d_x != 1:
            raise AcxError("fdarx supports a single covariate (d_x = 1)")

    def _uses_covariates(self) -> bool:
        if self.family == "armax":
            return self.orders[2] > 0
        if self.family == "fdarx":
            return self.orders[0] > 0
        if self.family == "archx":
            return self.orders[0] > 0
        return True  # arxgarch11 always carries a covariate block

    # -- constructors ------------------------------------------------------

    @classmethod
    def armax(cls, p: int, q: int, s: int, d_x: int = 1) -> "ModelSpec":
        """ARMAX(p, q, s): p AR lags, q MA lags, s covariate lags."""
        return cls("armax", (p, q, s), d_x if s > 0 else max(d_x, 0))

    @classmethod
    def arch_x(cls, q: int, d_x: int = 1) -> "ModelSpec":
        """ARCH-X(q): variance intercept plus q lags of Y^2 and of X."""
        return cls("archx", (q,), d_x)

    @classmethod
    def arx_garch11(cls, d_x: int = 1) -> "ModelSpec":
        """ARX(1)-GARCH(1,1)."""
        return cls("arxgarch11", (), d_x)

    @classmethod
    def fdar_x(cls, q: int) -> "ModelSpec":
        """Double autoregression with q covariate lags in mean and variance."""
        return cls("fdarx", (q,), 1)

    # -- layout ------------------------------------------------------------

    @property
    def d(self) -> int:
        """Total parameter dimension."""
        if self.family == "armax":
            p, q, s = self.orders
            return p + q + s * self.d_x
        if self.family == "archx":
            (q,) = self.orders
            return 1 + q + q * self.d_x
        if self.family == "arxgarch11":
            return 4 + self.d_x
        (q,) = self.orders
        return 4 + 2 * q

    @property
    def layout(self) -> tuple[str, ...]:
        """Ordered component names."""

        def xnames(stem: str, lag: int) -> list[str]:
            if self.d_x == 1:
                return [f"{stem}{lag}"]
            return [f"{stem}{lag}_{j + 1}" for j in range(self.d_x)]

        names: list[str] = []
        if self.family == "armax":
            p, q, s = self.orders
            names += [f"ar{i + 1}" for i in range(p)]
            names += [f"ma{i + 1}" for i in range(q)]
            for i in range(s):
                names += xnames("exog", i + 1)
        elif self.family == "archx":
            (q,) = self.orders
            names.append("var_const")
            names += [f"var_ar{i + 1}" for i in range(q)]
            for i in range(q):
                names += xnames("var_exog", i + 1)
        elif self.family == "arxgarch11":
            names += ["ar1", "var_const", "var_arch1", "var_garch1"]
            if self.d_x == 1:
                names.append("exog1")
            else:
                names += [f"exog1_{j + 1}" for j in range(self.d_x)]
        else:  # fdarx
            (q,) = self.orders
            names += ["const", "ar1", "var_const", "var_ar1"]
            names += [f"exog{i + 1}" for i in range(q)]
            names += [f"var_exog{i + 1}" for i in range(q)]
        return tuple(names)

    @property
    def variance_intercept_index(self) -> int | None:
        """Index of the variance intercept, if the family has one."""
        if self.family == "archx":
            return 0
        if self.family == "arxgarch11":
            return 1
        if self.family == "fdarx":
            return 2
        return None

    def to_dict(self) -> dict:
        if self.family == "armax":
            orders = {"p": self.orders[0], "q": self.orders[1], "s": self.orders[2]}
        elif self.family in ("archx", "fdarx"):
            orders = {"q": self.orders[0]}
        else:
            orders = {}
        return {"family": self.family, "orders": orders, "d_x": self.d_x}

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelSpec":
        family = doc["family"]
        orders = doc.get("orders", {})
        d_x = int(doc.get("d_x", 1))
        if family == "armax":
            return cls.armax(int(orders["p"]), int(orders["q"]), int(orders["s"]), d_x)
        if family == "archx":
            return cls.arch_x(int(orders["q"]), d_x)
        if family == "arxgarch11":
            return cls.arx_garch11(d_x)
        if family == "fdarx":
            return cls.fdar_x(int(orders["q"]))
        raise AcxError(f"unknown family {family!r}")


@dataclass(frozen=True)
class ParamSpace:
    """Box bounds with boundary-constraint flags.

    ``constrained[i]`` marks components whose true value is allowed to sit on
    an endpoint of its interval (variance coefficients, covariate effects
    tested for nullity).  ``h_floor`` is the positive lower bound applied to
    the conditional variance before logs and divisions.
    """

    lo: np.ndarray
    hi: np.ndarray
    constrained: np.ndarray
    h_floor: float = 1e-8

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).copy()
        hi = np.asarray(self.hi, dtype=float).copy()
        con = np.asarray(self.constrained, dtype=bool).copy()
        if lo.shape != hi.shape or lo.shape != con.shape or lo.ndim != 1:
            raise DimensionError("lo, hi and constrained must be equal-length vectors")
        if np.any(lo > hi):
            bad = int(np.argmax(lo > hi))
            raise AcxError(f"lo > hi at component {bad}")
        if not self.h_floor > 0:
            raise AcxError("h_floor must be strictly positive")
        for arr in (lo, hi, con):
            arr.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "constrained", con)

    @property
    def d(self) -> int:
        return self.lo.size

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def to_dict(self) -> dict:
        return {
            "lo": self.lo.tolist(),
            "hi": self.hi.tolist(),
            "constrained": self.constrained.tolist(),
            "h_floor": self.h_floor,
        }


@dataclass(frozen=True)
class PsiWeights:
    """Truncated AR(infinity) weights of an ARMAX mean.

    ``phi[k-1]`` multiplies Y_{t-k}; ``varphi[k-1]`` (a d_x row) multiplies
    X_{t-k}; both sequences are cut at ``k_trunc`` terms.
    """

    phi: np.ndarray
    varphi: np.ndarray
    k_trunc: int = field(default=DEFAULT_PSI_TRUNCATION)

    def __post_init__(self):
        if self.k_trunc < 1:
            raise AcxError("k_trunc must be >= 1")
        if not (np.all(np.isfinite(self.phi)) and np.all(np.isfinite(self.varphi))):
            raise AcxError("non-finite AR(infinity) weights")


def default_space(spec: ModelSpec) -> ParamSpace:
    """Family default bounds matching the admissible regions of each model."""
    if spec.family == "fdarx":
        (q,) = spec.orders
        lo = np.r_[[-2.0, -0.99, 1e-4, 0.0], np.zeros(q), np.zeros(q)]
        hi = np.r_[[2.0, 0.99, 5.0, 0.99], np.full(q, 2.0), np.full(q, 2.0)]
        con = np.r_[[False, False, False, True], np.ones(2 * q, dtype=bool)]
        return ParamSpace(lo, hi, con)
    if spec.family == "archx":
        (q,) = spec.orders
        nx = q * spec.d_x
        lo = np.r_[[1e-4], np.zeros(q), np.zeros(nx)]
        hi = np.r_[[5.0], np.full(q, 0.99), np.full(nx, 2.0)]
        con = np.r_[[False], np.ones(q + nx, dtype=bool)]
        return ParamSpace(lo, hi, con)
    if spec.family == "arxgarch11":
        lo = np.r_[[-0.99, 1e-4, 0.0, 0.0], np.full(spec.d_x, -2.0)]
        hi = np.r_[[0.99, 5.0, 0.99, 0.98], np.full(spec.d_x, 2.0)]
        con = np.r_[[False, False, True, True], np.zeros(spec.d_x, dtype=bool)]
        return ParamSpace(lo, hi, con)
    # armax: coefficient box inside the invertibility region is enforced at
    # evaluation time; the box itself only caps individual coefficients.
    p, q, s = spec.orders
    npoly = p + q
    nx = s * spec.d_x
    lo = np.r_[np.full(npoly, -0.99), np.full(nx, -2.0)]
    hi = np.r_[np.full(npoly, 0.99), np.full(nx, 2.0)]
    con = np.zeros(npoly + nx, dtype=bool)
    return ParamSpace(lo, hi, con, h_floor=1.0)


def check_space(spec: ModelSpec, space: ParamSpace) -> None:
    """Validate family-specific admissibility of a parameter space."""
    if space.d != spec.d:
        raise DimensionError(f"space has {space.d} components, model needs {spec.d}")
    names = spec.layout
    vi = spec.variance_intercept_index
    if vi is not None and space.lo[vi] < space.h_floor:
        raise AcxError(
            f"lower bound of {names[vi]} must be >= h_floor ({space.h_floor})"
        )
    if spec.family in ("archx", "fdarx", "arxgarch11"):
        for i, name in enumerate(names):
            if name.startswith("var_") and space.lo[i] < 0:
                raise AcxError(f"variance coefficient {name} needs lo >= 0")


def validate_theta(
    spec: ModelSpec, space: ParamSpace, theta: np.ndarray
) -> tuple[bool, list[str]]:
    """Check box membership; returns (ok, names of violated components)."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.d,) or space.d != spec.d:
        raise DimensionError(
            f"theta has shape {theta.shape}, model dimension is {spec.d}"
        )
    bad = (theta < space.lo) | (theta > space.hi)
    names = [spec.layout[i] for i in np.flatnonzero(bad)]
    return not names, names


def armax_psi_weights(
    theta: np.ndarray,
    p: int,
    q: int,
    s: int,
    k_trunc: int = DEFAULT_PSI_TRUNCATION,
    d_x: int | None = None,
) -> PsiWeights:
    """Expand an ARMAX mean into truncated AR(infinity) weights.

    With A(L) = 1 - sum alpha_i L^i, B(L) = 1 + sum beta_j L^j and
    C(L) = sum gamma_k' L^k, computes the first ``k_trunc`` coefficients of
    A/B = 1 - sum phi_k L^k and C/B = sum varphi_k' L^k by polynomial long
    division.  Requires sum |alpha| + sum |beta| < 1 so that B is invertible
    and the weights are absolutely summable.
    """
    theta = np.asarray(theta, dtype=float)
    if k_trunc < 1:
        raise AcxError("k_trunc must be >= 1")
    if d_x is None:
        d_x = (theta.size - p - q) // s if s > 0 else 1
    if theta.size != p + q + s * d_x:
        raise DimensionError("theta length does not match (p, q, s, d_x)")
    alpha = theta[:p]
    beta = theta[p : p + q]
    gamma = theta[p + q :].reshape(s, d_x) if s > 0 else np.zeros((0, d_x))
    total = np.sum(np.abs(alpha)) + np.sum(np.abs(beta))
    if total >= 1.0:
        raise InvertibilityError(
            f"sum |ar| + sum |ma| = {total:.6g} >= 1: outside the invertible region"
        )

    # series c(L) = A(L)/B(L), c_0 = 1; phi_k = -c_k
    c = np.zeros(k_trunc + 1)
    c[0] = 1.0
    for k in range(1, k_trunc + 1):
        a_k = -alpha[k - 1] if k <= p else 0.0
        acc = a_k
        for j in range(1, min(k, q) + 1):
            acc -= beta[j - 1] * c[k - j]
        c[k] = acc
    phi = -c[1:]

    # series e(L) = C(L)/B(L), e_0 = 0; varphi_k = e_k
    e = np.zeros((k_trunc + 1, d_x))
    for k in range(1, k_trunc + 1):
        g_k = gamma[k - 1] if k <= s else np.zeros(d_x)
        acc_v = g_k.astype(float).copy()
        for j in range(1, min(k, q) + 1):
            acc_v -= beta[j - 1] * e[k - j]
        e[k] = acc_v
    return PsiWeights(phi=phi, varphi=e[1:], k_trunc=k_trunc)


def stationarity_margin(
    spec: ModelSpec,
    theta: np.ndarray,
    alpha_g: float,
    r: float = 2.0,
    noise_moment: float | None = None,
    k_trunc: int = DEFAULT_PSI_TRUNCATION,
) -> float:
    """One minus the family's contraction sum; positive means stable.

    ``alpha_g`` is the declared Lipschitz sum of the covariate recursion,
    treated as concentrated at lag one (exact for AR(1) covariates).
    ``noise_moment`` is the L_r norm of the innovation; it defaults to 1
    for r = 2 (unit variance) and must be supplied for r > 2.
    """
    theta = np.asarray(theta, dtype=float)
    if not 0.0 <= alpha_g < 1.0:
        raise AcxError("alpha_g must lie in [0, 1)")
    if r < 1:
        raise AcxError("r must be >= 1")
    if noise_moment is None:
        if r == 2.0:
            noise_moment = 1.0
        else:
            raise AcxError("noise_moment must be supplied for r != 2")

    if spec.family == "armax":
        p, q, s = spec.orders
        w = armax_psi_weights(theta, p, q, s, k_trunc=k_trunc, d_x=max(spec.d_x, 1))
        aphi = np.abs(w.phi)
        head = max(alpha_g, aphi[0]) if aphi.size else alpha_g
        return 1.0 - (head + float(np.sum(aphi[1:])))
    if spec.family == "fdarx":
        phi1 = theta[1]
        alpha1 = theta[3]
        lip = abs(phi1) + noise_moment * np.sqrt(max(alpha1, 0.0))
        return 1.0 - max(alpha_g, float(lip))
    if spec.family == "arxgarch11":
        a, _, c1, dd = theta[:4]
        if dd >= 1.0:
            return -np.inf
        head = max(alpha_g, abs(a) + c1 * noise_moment)
        tail = c1 * (dd + abs(a)) * noise_moment / (1.0 - dd)
        return 1.0 - (head + tail)
    # archx: variance is Lipschitz in the squared responses, so the noise
    # moment enters squared.
    (q,) = spec.orders
    a = theta[1 : 1 + q]
    head = max(alpha_g, a[0]) if a.size else alpha_g
    return 1.0 - noise_moment**2 * (head + float(np.sum(a[1:])))


def conditional_moments(
    spec: ModelSpec,
    theta: np.ndarray,
    y: np.ndarray,
    x: np.ndarray,
    k_trunc: int = DEFAULT_PSI_TRUNCATION,
) -> tuple[np.ndarray, np.ndarray]:
    """Truncated conditional mean and raw (unfloored) conditional variance.

    Pre-sample values are zero, so row t uses y[:t] and x[:t] only.
    Returns ``(fhat, hraw)`` of length n.
    """
    theta = np.asarray(theta, dtype=float)
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    n = y.size
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != n:
        raise DimensionError("y and x must have equal length")
    if theta.shape != (spec.d,):
        raise DimensionError(f"theta must have length {spec.d}")

    if spec.family == "fdarx":
        (q,) = spec.orders
        phi0, phi1, a0, a1 = theta[:4]
        psi = theta[4 : 4 + q]
        beta = theta[4 + q :]
        ylag = _lag(y, 1)
        f = phi0 + phi1 * ylag
        h = a0 + a1 * ylag**2
        x1 = x[:, 0] if x.shape[1] else np.zeros(n)
        for i in range(q):
            xl = _lag(x1, i + 1)
            f = f + psi[i] * xl
            h = h + beta[i] * xl**2
        return f, h

    if spec.family == "armax":
        p, q, s = spec.orders
        w = armax_psi_weights(theta, p, q, s, k_trunc=k_trunc, d_x=max(spec.d_x, 1))
        kernel = np.r_[0.0, w.phi]
        f = np.convolve(y, kernel)[:n]
        for j in range(x.shape[1] if s > 0 else 0):
            f = f + np.convolve(x[:, j], np.r_[0.0, w.varphi[:, j]])[:n]
        return f, np.ones(n)

    if spec.family == "archx":
        (q,) = spec.orders
        a0 = theta[0]
        a = theta[1 : 1 + q]
        g = theta[1 + q :].reshape(q, spec.d_x) if q > 0 else np.zeros((0, spec.d_x))
        h = np.full(n, a0)
        for k in range(q):
            h = h + a[k] * _lag(y, k + 1) ** 2 + _lag2(x, k + 1) @ g[k]
        return np.zeros(n), h

    # arxgarch11
    a = theta[0]
    c0, c1, dd = theta[1:4]
    gam = theta[4:]
    xlag = _lag2(x, 1)
    f = a * _lag(y, 1) + xlag @ gam
    eps = y - f
    u = c0 + c1 * _lag(eps, 1) ** 2
    if dd == 0.0:
        h = u.copy()
    else:
        h = lfilter([1.0], [1.0, -dd], u)
        h = h + dd ** np.arange(1, n + 1) * (c0 / (1.0 - dd))
    return f, h


def _lag(v: np.ndarray, k: int) -> np.ndarray:
    """Shift a series back by k steps, padding the head with zeros."""
    out = np.zeros_like(v, dtype=float)
    if k < v.size:
        out[k:] = v[: v.size - k]
    return out


def _lag2(m: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((m.shape[0], m.shape[1]), dtype=float)
    if k < m.shape[0]:
        out[k:] = m[: m.shape[0] - k]
    return out


def space_to_json(spec: ModelSpec, space: ParamSpace) -> dict:
    """Serialize a (spec, space) pair; field names are part of the contract."""
    doc = spec.to_dict()
    doc.update(space.to_dict())
    return doc


def space_from_json(doc: dict) -> tuple[ModelSpec, ParamSpace]:
    spec = ModelSpec.from_dict(doc)
    space = ParamSpace(
        lo=np.asarray(doc["lo"], dtype=float),
        hi=np.asarray(doc["hi"], dtype=float),
        constrained=np.asarray(doc["constrained"], dtype=bool),
        h_floor=float(doc.get("h_floor", 1e-8)),
    )
    check_space(spec, space)
    return spec, space
