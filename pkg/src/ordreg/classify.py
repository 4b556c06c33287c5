"""Decoders mapping a model output vector back to an ordinal class.

Three decoders are available: argmax, nearest target under the L1 distance,
and nearest target under cosine similarity (normalised dot product).  Ties
always resolve to the smallest class index.
"""

from __future__ import annotations

import enum

import numpy as np

from .encodings import Encoding, EncodingKind, TargetMatrix
from .errors import CompatibilityError, ConfigError, DegenerateOutputError, ShapeError


class ClassifierKind(str, enum.Enum):
    ARGMAX = "argmax"
    L1_NEAREST = "l1"
    DOT_NEAREST = "dot"

    @property
    def display_name(self) -> str:
        return {"argmax": "Argmax", "l1": "L1", "dot": "DP"}[self.value]

    @classmethod
    def parse(cls, text) -> "ClassifierKind":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower()
        aliases = {
            "argmax": cls.ARGMAX,
            "l1": cls.L1_NEAREST,
            "l1_nearest": cls.L1_NEAREST,
            "dot": cls.DOT_NEAREST,
            "dp": cls.DOT_NEAREST,
            "dot_nearest": cls.DOT_NEAREST,
        }
        if key not in aliases:
            raise ConfigError(f"unknown classifier {text!r}")
        return aliases[key]


_ARGMAX_OK = {EncodingKind.ONE_HOT, EncodingKind.GAUSSIAN}
# A length-1 target cannot be normalised meaningfully and the progress-bar
# target of class 1 is the zero vector.
_DOT_EXCLUDED = {EncodingKind.CONTINUOUS, EncodingKind.PROGRESS_BAR}


def is_compatible(encoding: Encoding | EncodingKind, classifier: ClassifierKind) -> bool:
    kind = encoding.kind if isinstance(encoding, Encoding) else EncodingKind(encoding)
    classifier = ClassifierKind.parse(classifier)
    if classifier is ClassifierKind.ARGMAX:
        return kind in _ARGMAX_OK
    if classifier is ClassifierKind.DOT_NEAREST:
        return kind not in _DOT_EXCLUDED
    return True


def compatible_classifiers(encoding: Encoding) -> list[ClassifierKind]:
    return [c for c in ClassifierKind if is_compatible(encoding, c)]


def classify_batch(classifier: ClassifierKind, outputs: np.ndarray, targets: TargetMatrix) -> np.ndarray:
    """Decode every row of an ``(n, d)`` output array; returns 1-based int classes."""
    classifier = ClassifierKind.parse(classifier)
    if not is_compatible(targets.encoding, classifier):
        raise CompatibilityError(
            f"{classifier.display_name} cannot decode {targets.encoding.name} targets")
    y = np.asarray(outputs, dtype=np.float64)
    if y.ndim != 2 or y.shape[1] != targets.d:
        raise ShapeError(f"expected outputs of shape (n, {targets.d}), got {y.shape}")

    # np.argmax / np.argmin return the first extremum, i.e. the smallest class.
    if classifier is ClassifierKind.ARGMAX:
        idx = np.argmax(y, axis=1)
    elif classifier is ClassifierKind.L1_NEAREST:
        dist = np.abs(y[:, None, :] - targets.rows[None, :, :]).sum(axis=2)
        idx = np.argmin(dist, axis=1)
    else:
        norms = np.linalg.norm(y, axis=1)
        if np.any(norms == 0):
            bad = int(np.flatnonzero(norms == 0)[0])
            raise DegenerateOutputError(f"output row {bad} has zero norm; cosine similarity undefined")
        row_norms = np.linalg.norm(targets.rows, axis=1)
        sim = (y @ targets.rows.T) / (norms[:, None] * row_norms[None, :])
        idx = np.argmax(sim, axis=1)
    return idx.astype(np.int64) + 1


def classify(classifier: ClassifierKind, y, targets: TargetMatrix) -> int:
    """Decode a single output vector ``y`` of length ``d`` into a class ``k``."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ShapeError(f"expected a 1-D output vector, got shape {y.shape}")
    return int(classify_batch(classifier, y[None, :], targets)[0])
