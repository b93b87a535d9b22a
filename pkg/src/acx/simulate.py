"""Path simulation for the model families and their AR(1) covariate.

Randomness is counter-based (Philox): a (seed, stream_id) pair fully
determines a stream, so replication r of a study reproduces identically no
matter how many replications run, or in what order.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AcxError, DimensionError, NumericsError
from .models import ModelSpec, conditional_moments, stationarity_margin

DEFAULT_BURN_IN = 500

NOISE_LAWS = ("normal", "student_t", "zero")


@dataclass(frozen=True)
class NoiseConfig:
    """Innovation law plus the (seed, stream) pair that addresses a stream.

    ``normal`` and ``student_t`` have mean zero and unit variance (the
    Student t is rescaled by sqrt((df-2)/df)).  ``zero`` is a degenerate
    test hook producing a constant 0 sequence.
    """

    law: str = "normal"
    seed: int = 0
    stream_id: int = 0
    df: float = 5.0

    def __post_init__(self):
        if self.law not in NOISE_LAWS:
            raise AcxError(f"unknown noise law {self.law!r}")
        if self.law == "student_t" and self.df <= 2:
            raise AcxError("student_t law needs df > 2 for unit variance")

    def substream(self, offset: int) -> "NoiseConfig":
        return NoiseConfig(self.law, self.seed, self.stream_id + offset, self.df)

    def make_rng(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.law == "normal":
            return rng.standard_normal(n)
        if self.law == "student_t":
            scale = np.sqrt((self.df - 2.0) / self.df)
            return scale * rng.standard_t(self.df, size=n)
        return np.zeros(n)


@dataclass(frozen=True)
class Sample:
    """Observed response series and aligned covariate matrix.

    Row t of ``x`` is the covariate vector available to the conditional
    moments of observation t+1.
    """

    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).copy()
        x = np.asarray(self.x, dtype=float).copy()
        if x.ndim == 1:
            x = x[:, None]
        if y.ndim != 1 or y.size < 1:
            raise DimensionError("y must be a non-empty vector")
        if x.shape[0] != y.size:
            raise DimensionError("y and x must have equal length")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise NumericsError("sample contains non-finite entries")
        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def d_x(self) -> int:
        return self.x.shape[1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "y"] + [f"x{j + 1}" for j in range(self.d_x)])
            for t in range(self.n):
                writer.writerow(
                    [t + 1, repr(float(self.y[t]))]
                    + [repr(float(v)) for v in self.x[t]]
                )

    @classmethod
    def from_csv(cls, path) -> "Sample":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[:2] != ["t", "y"]:
                raise AcxError(f"bad sample header in {path}: {header}")
            width = len(header)
            ys, xs = [], []
            for row in reader:
                if len(row) != width:
                    raise AcxError(f"ragged sample row in {path}: {row}")
                ys.append(float(row[1]))
                xs.append([float(v) for v in row[2:]])
        if not ys:
            raise AcxError(f"empty sample file {path}")
        return cls(np.array(ys), np.array(xs).reshape(len(ys), width - 2))


def simulate_covariates(
    n: int, phi0: float, phi1: float, noise: NoiseConfig
) -> np.ndarray:
    """AR(1) covariate path X_t = phi0 + phi1 X_{t-1} + eta_t, t = 1..n.

    X_0 is drawn from the stationary Gaussian law
    N(phi0 / (1 - phi1), 1 / (1 - phi1^2)).
    """
    if abs(phi1) >= 1.0:
        raise AcxError(f"|phi1| = {abs(phi1)} >= 1: no stationary AR(1) law")
    if n < 1:
        raise AcxError("n must be >= 1")
    rng = noise.make_rng()
    x0 = phi0 / (1.0 - phi1) + rng.standard_normal() / np.sqrt(1.0 - phi1**2)
    eta = noise.draw(n, rng)
    x = np.empty(n)
    prev = x0
    for t in range(n):
        prev = phi0 + phi1 * prev + eta[t]
        x[t] = prev
    return x


def simulate_response(
    spec: ModelSpec,
    theta: np.ndarray,
    x: np.ndarray,
    n: int,
    burn_in: int = DEFAULT_BURN_IN,
    noise: NoiseConfig = NoiseConfig(),
    alpha_g: float | None = None,
) -> Sample:
    """Simulate n observations of the family recursion after a burn-in.

    ``x`` must hold n + burn_in covariate rows; the recursion starts from
    zeros and the first ``burn_in`` pairs are discarded.  When ``alpha_g``
    is given the stability margin is checked and a warning (not an error)
    is emitted if it is non-positive.
    """
    theta = np.asarray(theta, dtype=float)
    if burn_in < 0:
        raise AcxError("burn_in must be >= 0")
    total = n + burn_in
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != total:
        raise DimensionError(f"need {total} covariate rows, got {x.shape[0]}")
    if alpha_g is not None:
        margin = stationarity_margin(spec, theta, alpha_g)
        if margin <= 0:
            warnings.warn(
                f"stability margin {margin:.4g} <= 0: the simulated path may "
                "be explosive",
                stacklevel=2,
            )

    rng = noise.make_rng()
    xi = noise.draw(total, rng)
    y = np.zeros(total)

    if spec.family == "fdarx":
        (q,) = spec.orders
        phi0, phi1, a0, a1 = theta[:4]
        psi = theta[4 : 4 + q]
        beta = theta[4 + q :]
        x1 = x[:, 0] if x.shape[1] else np.zeros(total)
        yprev = 0.0
        for t in range(total):
            f = phi0 + phi1 * yprev
            h = a0 + a1 * yprev**2
            for i in range(q):
                xv = x1[t - i - 1] if t - i - 1 >= 0 else 0.0
                f += psi[i] * xv
                h += beta[i] * xv**2
            if h < 0:
                raise NumericsError(f"negative conditional variance at step {t + 1}")
            yprev = f + xi[t] * np.sqrt(h)
            y[t] = yprev
    elif spec.family == "armax":
        p, q, s = spec.orders
        alpha = theta[:p]
        beta = theta[p : p + q]
        gamma = (
            theta[p + q :].reshape(s, spec.d_x) if s > 0 else np.zeros((0, max(spec.d_x, 1)))
        )
        for t in range(total):
            acc = xi[t]
            for i in range(p):
                if t - i - 1 >= 0:
                    acc += alpha[i] * y[t - i - 1]
            for j in range(q):
                if t - j - 1 >= 0:
                    acc += beta[j] * xi[t - j - 1]
            for k in range(s):
                if t - k - 1 >= 0:
                    acc += float(gamma[k] @ x[t - k - 1])
            y[t] = acc
    elif spec.family == "archx":
        (q,) = spec.orders
        a0 = theta[0]
        a = theta[1 : 1 + q]
        g = theta[1 + q :].reshape(q, spec.d_x) if q > 0 else np.zeros((0, spec.d_x))
        for t in range(total):
            h = a0
            for k in range(q):
                if t - k - 1 >= 0:
                    h += a[k] * y[t - k - 1] ** 2 + float(g[k] @ x[t - k - 1])
            if h < 0:
                raise NumericsError(
                    f"negative conditional variance at step {t + 1}; "
                    "archx requires non-negative covariates"
                )
            y[t] = xi[t] * np.sqrt(h)
    else:  # arxgarch11
        a = theta[0]
        c0, c1, dd = theta[1:4]
        gam = theta[4:]
        sig2 = c0 / (1.0 - dd) if dd < 1.0 else c0
        eps_prev = 0.0
        yprev = 0.0
        for t in range(total):
            sig2 = c0 + c1 * eps_prev**2 + dd * sig2 if t > 0 else sig2
            if sig2 < 0:
                raise NumericsError(f"negative conditional variance at step {t + 1}")
            eps = xi[t] * np.sqrt(sig2)
            xrow = x[t - 1] if t - 1 >= 0 else np.zeros(x.shape[1])
            yprev = a * yprev + float(gam @ xrow) + eps
            y[t] = yprev
            eps_prev = eps

    if not np.all(np.isfinite(y)):
        bad = int(np.argmax(~np.isfinite(y)))
        raise NumericsError(f"simulated path diverged at step {bad + 1}")
    return Sample(y[burn_in:], x[burn_in:])
