"""Cohen's kappa with unweighted, linear and quadratic agreement weights."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidClassError, OrdregError, ShapeError, UndefinedKappaError

# p_c closer to 1 than this is treated as the degenerate case
_PC_ATOL = 1e-12


class Weighting(str, enum.Enum):
    UNWEIGHTED = "unweighted"
    LINEAR = "linear"
    QUADRATIC = "quadratic"

    @property
    def short_name(self) -> str:
        return {"unweighted": "Unweight.", "linear": "Lin.", "quadratic": "Quad."}[self.value]


def weight(weighting: Weighting, i: int, j: int, K: int) -> float:
    """Agreement weight of true class ``i`` vs predicted class ``j`` (1 on the diagonal)."""
    weighting = Weighting(weighting)
    if weighting is Weighting.UNWEIGHTED:
        return 1.0 if i == j else 0.0
    if weighting is Weighting.LINEAR:
        return 1.0 - abs(i - j) / (K - 1)
    return 1.0 - (i - j) ** 2 / (K - 1) ** 2


def weight_matrix(weighting: Weighting, K: int) -> np.ndarray:
    idx = np.arange(1, K + 1)
    diff = idx[:, None] - idx[None, :]
    weighting = Weighting(weighting)
    if weighting is Weighting.UNWEIGHTED:
        return (diff == 0).astype(np.float64)
    if weighting is Weighting.LINEAR:
        return 1.0 - np.abs(diff) / (K - 1)
    return 1.0 - diff.astype(np.float64) ** 2 / (K - 1) ** 2


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts indexed ``[true - 1, predicted - 1]``."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 2:
            raise ShapeError(f"confusion matrix must be KxK with K >= 2, got {c.shape}")
        if np.any(c < 0):
            raise ValueError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @classmethod
    def from_labels(cls, true, predicted, K: int) -> "ConfusionMatrix":
        true = np.asarray(true, dtype=np.int64)
        predicted = np.asarray(predicted, dtype=np.int64)
        if true.shape != predicted.shape:
            raise ShapeError("true and predicted label arrays differ in shape")
        for arr in (true, predicted):
            if arr.size and (arr.min() < 1 or arr.max() > K):
                raise InvalidClassError(f"labels outside 1..{K}")
        counts = np.zeros((K, K), dtype=np.int64)
        np.add.at(counts, (true - 1, predicted - 1), 1)
        return cls(counts)

    @property
    def K(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def proportions(self) -> np.ndarray:
        return self.counts / self.total

    def __eq__(self, other):
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)


@dataclass(frozen=True)
class KappaResult:
    value: float
    p_o: float
    p_c: float


def kappa(confusion: ConfusionMatrix, weighting: Weighting = Weighting.UNWEIGHTED) -> KappaResult:
    if confusion.total <= 0:
        raise UndefinedKappaError("confusion matrix is empty")
    p = confusion.proportions()
    w = weight_matrix(weighting, confusion.K)
    p_o = float(np.sum(w * p))
    chance = np.outer(p.sum(axis=1), p.sum(axis=0))
    p_c = float(np.sum(w * chance))
    if abs(1.0 - p_c) <= _PC_ATOL:
        raise UndefinedKappaError(f"chance agreement p_c = {p_c!r}; kappa undefined")
    return KappaResult(value=(p_o - p_c) / (1.0 - p_c), p_o=p_o, p_c=p_c)


def macro_average(kappas) -> float:
    values = np.asarray(list(kappas), dtype=np.float64)
    if values.size == 0:
        raise OrdregError("macro_average of an empty list")
    if not np.all(np.isfinite(values)):
        raise ValueError("macro_average needs finite values")
    return float(values.mean())


def fold_spread(values) -> tuple[float, float]:
    """Mean and sample standard deviation (n - 1 denominator)."""
    values = np.asarray(list(values), dtype=np.float64)
    if values.size < 2:
        raise OrdregError(f"fold_spread needs at least 2 values, got {values.size}")
    return float(values.mean()), float(values.std(ddof=1))
