"""Ordinal scales and target encodings.

A target encoding maps an ordinal class ``k`` (1-based, ascending severity)
to the vector a model is trained to emit for that class.  Six encodings are
provided: one-hot, Gaussian, continuous, progress-bar, soft-progress-bar and
binary-number.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidClassError, InvalidScaleError

DEFAULT_LABELS_K5 = ("None", "(+)", "+", "++", "+++")


class EncodingKind(str, enum.Enum):
    ONE_HOT = "one_hot"
    GAUSSIAN = "gaussian"
    CONTINUOUS = "continuous"
    PROGRESS_BAR = "progress_bar"
    SOFT_PROGRESS_BAR = "soft_progress_bar"
    BINARY_NUMBER = "binary_number"

    @property
    def display_name(self) -> str:
        return _DISPLAY_NAMES[self]

    @property
    def stable_id(self) -> int:
        return list(EncodingKind).index(self)


_DISPLAY_NAMES = {
    EncodingKind.ONE_HOT: "One-Hot",
    EncodingKind.GAUSSIAN: "Gauss",
    EncodingKind.CONTINUOUS: "Continuous",
    EncodingKind.PROGRESS_BAR: "Prog-Bar",
    EncodingKind.SOFT_PROGRESS_BAR: "Soft-Prog-Bar",
    EncodingKind.BINARY_NUMBER: "Bin-Num",
}


@dataclass(frozen=True)
class OrdinalScale:
    """Ordered classes ``1..class_count`` with display labels."""

    class_count: int = 5
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not isinstance(self.class_count, (int, np.integer)) or self.class_count < 2:
            raise InvalidScaleError(f"class_count must be an integer >= 2, got {self.class_count!r}")
        labels = tuple(self.labels)
        if not labels:
            if self.class_count == 5:
                labels = DEFAULT_LABELS_K5
            else:
                labels = tuple(str(k) for k in range(1, self.class_count + 1))
        if len(labels) != self.class_count:
            raise InvalidScaleError(
                f"expected {self.class_count} labels, got {len(labels)}")
        object.__setattr__(self, "class_count", int(self.class_count))
        object.__setattr__(self, "labels", labels)

    @property
    def K(self) -> int:
        return self.class_count

    def classes(self) -> range:
        return range(1, self.class_count + 1)

    def check_class(self, k) -> int:
        if isinstance(k, (bool, np.bool_)) or not isinstance(k, (int, np.integer)):
            raise InvalidClassError(f"class index must be an integer, got {k!r}")
        if not 1 <= k <= self.class_count:
            raise InvalidClassError(f"class {k} outside 1..{self.class_count}")
        return int(k)


@dataclass(frozen=True)
class Encoding:
    """A target function: its kind plus the Gaussian variance (ignored otherwise)."""

    kind: EncodingKind
    sigma_squared: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", EncodingKind(self.kind))
        if not (self.sigma_squared > 0 and math.isfinite(self.sigma_squared)):
            raise ConfigError(f"sigma_squared must be positive, got {self.sigma_squared!r}")

    @property
    def name(self) -> str:
        return self.kind.display_name

    def to_json(self):
        if self.kind is EncodingKind.GAUSSIAN:
            return {"kind": self.kind.value, "sigma_squared": self.sigma_squared}
        return self.kind.value

    @classmethod
    def from_json(cls, obj) -> "Encoding":
        if isinstance(obj, str):
            return cls(_parse_kind(obj))
        if isinstance(obj, dict):
            unknown = set(obj) - {"kind", "sigma_squared"}
            if unknown:
                raise ConfigError(f"unknown encoding keys: {sorted(unknown)}")
            if "kind" not in obj:
                raise ConfigError("encoding object needs a 'kind'")
            return cls(_parse_kind(obj["kind"]), float(obj.get("sigma_squared", 1.0)))
        raise ConfigError(f"cannot parse encoding from {obj!r}")


def _parse_kind(text: str) -> EncodingKind:
    try:
        return EncodingKind(text)
    except ValueError:
        pass
    for kind in EncodingKind:
        if kind.display_name.lower() == str(text).lower():
            return kind
    raise ConfigError(f"unknown encoding kind {text!r}")


@dataclass(frozen=True, eq=False)
class TargetMatrix:
    """Row ``k - 1`` holds the target vector of class ``k``."""

    encoding: Encoding
    K: int
    rows: np.ndarray

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def row(self, k: int) -> np.ndarray:
        return self.rows[k - 1]


def _as_k(K) -> int:
    if isinstance(K, OrdinalScale):
        return K.class_count
    if isinstance(K, (bool, np.bool_)) or not isinstance(K, (int, np.integer)) or K < 2:
        raise InvalidScaleError(f"K must be an integer >= 2, got {K!r}")
    return int(K)


def vector_length(encoding: Encoding, K) -> int:
    """Length ``d`` of the target vectors of ``encoding`` on a ``K``-class scale."""
    K = _as_k(K)
    kind = encoding.kind
    if kind in (EncodingKind.ONE_HOT, EncodingKind.GAUSSIAN, EncodingKind.SOFT_PROGRESS_BAR):
        return K
    if kind is EncodingKind.CONTINUOUS:
        return 1
    if kind is EncodingKind.PROGRESS_BAR:
        return K - 1
    if kind is EncodingKind.BINARY_NUMBER:
        # bits needed for the largest class index K
        return K.bit_length()
    raise ConfigError(f"unhandled encoding {kind}")


def encode(encoding: Encoding, scale: OrdinalScale, k: int) -> np.ndarray:
    """Target vector of class ``k`` as a float64 array of length ``d``."""
    k = scale.check_class(k)
    K = scale.class_count
    d = vector_length(encoding, K)
    kind = encoding.kind
    i = np.arange(1, d + 1, dtype=np.float64)

    if kind is EncodingKind.ONE_HOT:
        return (i == k).astype(np.float64)
    if kind is EncodingKind.GAUSSIAN:
        s2 = encoding.sigma_squared
        return np.exp(-((i - k) ** 2) / (2.0 * s2)) / math.sqrt(2.0 * math.pi * s2)
    if kind is EncodingKind.CONTINUOUS:
        return np.array([(k - 1) / (K - 1)], dtype=np.float64)
    if kind is EncodingKind.PROGRESS_BAR:
        return (i < k).astype(np.float64)
    if kind is EncodingKind.SOFT_PROGRESS_BAR:
        return np.where(i < k, 1.0, np.where(i == k, 0.5, 0.0))
    if kind is EncodingKind.BINARY_NUMBER:
        # most significant bit first
        return np.array([(k >> (d - 1 - b)) & 1 for b in range(d)], dtype=np.float64)
    raise ConfigError(f"unhandled encoding {kind}")


def target_matrix(encoding: Encoding, scale: OrdinalScale) -> TargetMatrix:
    rows = np.stack([encode(encoding, scale, k) for k in scale.classes()])
    rows.setflags(write=False)
    return TargetMatrix(encoding=encoding, K=scale.class_count, rows=rows)


def encode_labels(encoding: Encoding, scale: OrdinalScale, labels: np.ndarray) -> np.ndarray:
    """Concatenated per-finding targets for an ``(n, L)`` array of 1-based labels.

    Returns an ``(n, L * d)`` array; finding ``j`` occupies columns
    ``j*d : (j+1)*d``.
    """
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise InvalidClassError(f"labels must be 2-D (samples, findings), got shape {labels.shape}")
    if labels.size and (labels.min() < 1 or labels.max() > scale.class_count):
        raise InvalidClassError(f"labels outside 1..{scale.class_count}")
    rows = target_matrix(encoding, scale).rows
    n, L = labels.shape
    return rows[labels.astype(np.intp) - 1].reshape(n, L * rows.shape[1])
