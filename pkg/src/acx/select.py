"""Penalized model selection over a finite collection of supports.

Each candidate model is a support set within one parameter layout; its
off-support components are frozen at zero and the rest fitted by QMLE.
The chosen model minimizes deviance + kappa_n * |support|, where the
penalty weight kappa_n is log n (BIC) or c log log n (Hannan-Quinn).
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import AcxError, EstimationError
from .estimate import FitResult, fit_submodel
from .models import ModelSpec, ParamSpace
from .simulate import Sample


@dataclass(frozen=True)
class PenaltySchedule:
    """Penalty weight as a function of the sample size."""

    kind: str
    c: float = 1.0
    fn: Callable[[int], float] | None = None

    @classmethod
    def bic(cls) -> "PenaltySchedule":
        return cls("bic")

    @classmethod
    def hqc(cls, c: float) -> "PenaltySchedule":
        if c <= 0:
            raise AcxError("hqc constant c must be positive")
        return cls("hqc", c=c)

    @classmethod
    def custom(cls, fn: Callable[[int], float], name: str = "custom") -> "PenaltySchedule":
        return cls(name, fn=fn)

    def kappa(self, n: int) -> float:
        if n < 3:
            raise AcxError("penalty needs n >= 3")
        if self.kind == "bic":
            return math.log(n)
        if self.kind == "hqc":
            return self.c * math.log(math.log(n))
        if self.fn is None:
            raise AcxError(f"penalty {self.kind!r} has no kappa function")
        return float(self.fn(n))

    @property
    def label(self) -> str:
        return self.kind if self.kind != "hqc" else f"hqc({self.c:g})"


def criterion(deviance: float, kappa_n: float, dim: int) -> float:
    """Penalized contrast deviance + kappa_n * dim."""
    if dim < 0:
        raise AcxError("dim must be >= 0")
    return deviance + kappa_n * dim


def parse_penalty(label: str) -> PenaltySchedule:
    """Parse 'bic' or 'hqc(c)' labels."""
    label = label.strip()
    if label == "bic":
        return PenaltySchedule.bic()
    if label.startswith("hqc(") and label.endswith(")"):
        return PenaltySchedule.hqc(float(label[4:-1]))
    raise AcxError(f"unknown penalty {label!r}")


@dataclass(frozen=True)
class SelectionRow:
    model_index: int
    support: tuple[int, ...]
    dim: int
    deviance: float
    criterion: float
    error: str = ""


@dataclass(frozen=True)
class SelectionResult:
    chosen: int
    table: tuple[SelectionRow, ...]
    penalty: PenaltySchedule

    @property
    def chosen_support(self) -> tuple[int, ...]:
        return self.table[self.chosen].support

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["m_id", "support", "dim", "deviance", "criterion", "chosen"])
            for row in self.table:
                writer.writerow(
                    [
                        row.model_index,
                        " ".join(str(i) for i in row.support),
                        row.dim,
                        repr(float(row.deviance)),
                        repr(float(row.criterion)),
                        int(row.model_index == self.chosen),
                    ]
                )


class FitCache:
    """Memoizes submodel fits per (sample, support, starts, seed)."""

    def __init__(self):
        self._store: dict[tuple, FitResult] = {}

    @staticmethod
    def _sample_key(sample: Sample) -> str:
        h = hashlib.sha1()
        h.update(sample.y.tobytes())
        h.update(sample.x.tobytes())
        return h.hexdigest()

    def get_or_fit(self, spec, space, sample, support, starts, seed, extra_starts=None):
        key = (self._sample_key(sample), tuple(sorted(support)), starts, seed)
        if key not in self._store:
            self._store[key] = fit_submodel(
                spec, space, sample, support, starts=starts, seed=seed,
                extra_starts=extra_starts,
            )
        return self._store[key]


def fit_collection(
    spec: ModelSpec,
    space: ParamSpace,
    sample: Sample,
    supports: Sequence[Sequence[int]],
    starts: int = 5,
    seed: int = 0,
    cache: FitCache | None = None,
) -> list[tuple[tuple[int, ...], FitResult | None, str]]:
    """Fit every support; nested chains warm-start from smaller members.

    Returns (support, fit-or-None, error message) triples in input order.
    """
    if not supports:
        raise AcxError("the model collection is empty")
    cache = cache or FitCache()
    out: list[tuple[tuple[int, ...], FitResult | None, str]] = []
    fitted: list[tuple[set, FitResult]] = []
    for support in supports:
        sup = tuple(sorted(set(int(i) for i in support)))
        warm = [
            f.theta_hat
            for prev, f in fitted
            if prev <= set(sup) and len(prev) < len(sup)
        ]
        try:
            fit = cache.get_or_fit(
                spec, space, sample, sup, starts, seed, extra_starts=warm or None
            )
            fitted.append((set(sup), fit))
            out.append((sup, fit, ""))
        except (EstimationError, AcxError) as err:
            out.append((sup, None, str(err)))
    return out


def select_model(
    spec: ModelSpec,
    space: ParamSpace,
    sample: Sample,
    supports: Sequence[Sequence[int]],
    penalty: PenaltySchedule,
    starts: int = 5,
    seed: int = 0,
    cache: FitCache | None = None,
) -> SelectionResult:
    """Fit the collection and pick the penalized-criterion minimizer.

    Hard fit failures exclude a model with a recorded reason; ties go to
    the smallest support, then lexicographic support order.
    """
    fits = fit_collection(spec, space, sample, supports, starts, seed, cache)
    return select_from_fits(fits, penalty, sample.n)


def select_from_fits(
    fits: Sequence[tuple[tuple[int, ...], FitResult | None, str]],
    penalty: PenaltySchedule,
    n: int,
) -> SelectionResult:
    """Apply one penalty schedule to an existing fit table."""
    kappa_n = penalty.kappa(n)
    rows = []
    for idx, (support, fit, err) in enumerate(fits):
        if fit is None:
            rows.append(
                SelectionRow(idx, support, len(support), math.inf, math.inf, err)
            )
            continue
        dev = fit.deviance
        rows.append(
            SelectionRow(idx, support, len(support), dev, criterion(dev, kappa_n, len(support)))
        )
    usable = [r for r in rows if math.isfinite(r.criterion)]
    if not usable:
        raise EstimationError("every model in the collection failed to fit")
    best = min(usable, key=lambda r: (r.criterion, r.dim, r.support))
    return SelectionResult(chosen=best.model_index, table=tuple(rows), penalty=penalty)


def fdarx_order_supports(spec: ModelSpec, q_values: Sequence[int]) -> list[tuple[int, ...]]:
    """Supports for an order family: q covariate lags inside a max-order layout.

    The host spec must be fdarx with order q_max >= max(q_values); order q
    keeps the four base components plus the first q mean and variance
    covariate lags.
    """
    if spec.family != "fdarx":
        raise AcxError("order supports are defined for the fdarx family")
    (q_max,) = spec.orders
    supports = []
    for q in q_values:
        if q < 0 or q > q_max:
            raise AcxError(f"order {q} outside 0..{q_max}")
        sup = list(range(4))
        sup += [4 + i for i in range(q)]
        sup += [4 + q_max + i for i in range(q)]
        supports.append(tuple(sup))
    return supports
