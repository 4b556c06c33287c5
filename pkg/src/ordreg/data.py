"""Synthetic ordinal-severity data, JSON-Lines persistence and patient-wise splits."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConfigError, DataError, DataParseError, SchemaError

DEFAULT_FINDINGS = (
    "congestion",
    "effusion_left",
    "effusion_right",
    "infiltrates_left",
    "infiltrates_right",
    "atelectasis_left",
    "atelectasis_right",
)


def default_findings(n: int) -> tuple[str, ...]:
    if n == len(DEFAULT_FINDINGS):
        return DEFAULT_FINDINGS
    return tuple(f"finding_{j + 1}" for j in range(n))


@dataclass(frozen=True)
class Sample:
    patient_id: int
    features: np.ndarray
    labels: dict[str, int]


@dataclass(eq=False)
class Dataset:
    """Column store of samples: ids ``(n,)``, features ``(n, p)``, labels ``(n, L)``."""

    patient_ids: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    findings: tuple[str, ...]

    def __post_init__(self):
        self.findings = tuple(self.findings)
        self.patient_ids = np.asarray(self.patient_ids, dtype=np.int64).reshape(-1)
        n = self.patient_ids.shape[0]
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != n:
            features = features.reshape(n, -1) if n else np.zeros((0, 0))
        self.features = features
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(n, len(self.findings))

    def __len__(self) -> int:
        return self.patient_ids.shape[0]

    def __iter__(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield Sample(int(self.patient_ids[i]), self.features[i].copy(),
                         {f: int(self.labels[i, j]) for j, f in enumerate(self.findings)})

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.findings == other.findings
                and np.array_equal(self.patient_ids, other.patient_ids)
                and self.features.shape == other.features.shape
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels))

    @property
    def n_findings(self) -> int:
        return len(self.findings)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def patients(self) -> np.ndarray:
        return np.unique(self.patient_ids)

    def subset(self, patient_ids) -> "Dataset":
        mask = np.isin(self.patient_ids, np.fromiter(patient_ids, dtype=np.int64))
        return Dataset(self.patient_ids[mask], self.features[mask], self.labels[mask], self.findings)

    @classmethod
    def from_samples(cls, samples, findings=None) -> "Dataset":
        samples = list(samples)
        if findings is None:
            findings = tuple(samples[0].labels) if samples else ()
        findings = tuple(findings)
        for s in samples:
            missing = [f for f in findings if f not in s.labels]
            if missing:
                raise SchemaError(f"sample of patient {s.patient_id} lacks findings {missing}")
        ids = [s.patient_id for s in samples]
        feats = np.array([np.asarray(s.features, dtype=np.float64) for s in samples]) if samples \
            else np.zeros((0, 0))
        labels = [[s.labels[f] for f in findings] for s in samples]
        return cls(np.array(ids, dtype=np.int64), feats, np.array(labels, dtype=np.int64), findings)


@dataclass(frozen=True)
class SynthConfig:
    n_patients: int = 200
    samples_per_patient: int = 10
    n_findings: int = 7
    K: int = 5
    feature_dim: int = 16
    feature_noise_sd: float = 0.1
    label_noise_prob: float = 0.0
    seed: int = 0
    findings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        for name in ("n_patients", "samples_per_patient", "n_findings", "feature_dim"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.K < 2:
            raise ConfigError("K must be >= 2")
        if self.feature_noise_sd < 0:
            raise ConfigError("feature_noise_sd must be >= 0")
        if not 0.0 <= self.label_noise_prob <= 1.0:
            raise ConfigError("label_noise_prob must lie in [0, 1]")
        findings = tuple(self.findings) or default_findings(self.n_findings)
        if len(findings) != self.n_findings:
            raise ConfigError(f"{len(findings)} finding names for n_findings={self.n_findings}")
        object.__setattr__(self, "findings", findings)

    @classmethod
    def from_json(cls, obj: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown synth config keys: {sorted(unknown)}")
        obj = dict(obj)
        if "findings" in obj:
            obj["findings"] = tuple(obj["findings"])
        return cls(**obj)

    def to_json(self) -> dict:
        return {name: (list(v) if isinstance(v, tuple) else v)
                for name, v in ((f, getattr(self, f)) for f in self.__dataclass_fields__)}


def generate_with_latents(config: SynthConfig) -> tuple[Dataset, np.ndarray]:
    """Like :func:`generate`, also returning the ``(n, L)`` latent severities in [0, 1).

    The random stream is consumed in a fixed order (mixing matrix, latents,
    feature noise, label-noise coins, shift directions) independent of the
    noise settings, so configs that differ only in noise share latents.
    """
    rng = np.random.default_rng(config.seed)
    L, K, p = config.n_findings, config.K, config.feature_dim
    n = config.n_patients * config.samples_per_patient

    mixing = rng.normal(0.0, 1.0 / np.sqrt(L), size=(L, p))
    latent = rng.uniform(0.0, 1.0, size=(n, L))
    noise = rng.normal(0.0, 1.0, size=(n, p))
    flip = rng.uniform(0.0, 1.0, size=(n, L)) < config.label_noise_prob
    direction = np.where(rng.uniform(0.0, 1.0, size=(n, L)) < 0.5, -1, 1)

    features = latent @ mixing + config.feature_noise_sd * noise
    true_class = np.minimum(1 + np.floor(latent * K).astype(np.int64), K)
    # a shift that would leave 1..K is reflected, so flipped labels always move by one
    shifted = true_class + direction
    shifted = np.where((shifted < 1) | (shifted > K), true_class - direction, shifted)
    labels = np.where(flip, shifted, true_class)

    patient_ids = np.repeat(np.arange(config.n_patients, dtype=np.int64), config.samples_per_patient)
    return Dataset(patient_ids, features, labels, config.findings), latent


def generate(config: SynthConfig) -> Dataset:
    """Seeded synthetic dataset.

    Per sample and finding a latent severity ``z ~ U(0, 1)`` gives the class
    ``1 + floor(z K)``.  Features are a fixed random linear map of the stacked
    latents plus Gaussian noise; with probability ``label_noise_prob`` the
    stored label moves one class up or down.
    """
    return generate_with_latents(config)[0]


def _format_float(x: float) -> str:
    return format(float(x), ".17g")


def dumps_sample(patient_id: int, features, labels: dict) -> str:
    feats = ", ".join(_format_float(x) for x in features)
    return (f'{{"patient_id": {int(patient_id)}, "features": [{feats}], '
            f'"labels": {json.dumps({k: int(v) for k, v in labels.items()})}}}')


def save(dataset: Dataset, path) -> None:
    """Write one JSON object per line: ``patient_id``, ``features``, ``labels``."""
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(dataset)):
            labels = {f: dataset.labels[i, j] for j, f in enumerate(dataset.findings)}
            fh.write(dumps_sample(dataset.patient_ids[i], dataset.features[i], labels))
            fh.write("\n")


def load(path, findings=None) -> Dataset:
    """Read a JSON-Lines dataset.

    The finding names are taken from the first record unless given; every
    record must carry all of them.
    """
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataParseError(f"invalid JSON ({exc.msg})", lineno) from exc
            if not isinstance(rec, dict):
                raise DataParseError("record is not a JSON object", lineno)
            missing = {"patient_id", "features", "labels"} - set(rec)
            if missing:
                raise SchemaError(f"line {lineno}: missing fields {sorted(missing)}")
            if not isinstance(rec["labels"], dict) or not isinstance(rec["features"], list):
                raise SchemaError(f"line {lineno}: 'features' must be a list and 'labels' an object")
            if findings is None:
                findings = tuple(rec["labels"])
            absent = [f for f in findings if f not in rec["labels"]]
            if absent:
                raise SchemaError(f"line {lineno}: missing findings {absent}")
            try:
                feats = np.array(rec["features"], dtype=np.float64)
                labels = {f: int(rec["labels"][f]) for f in findings}
                pid = int(rec["patient_id"])
            except (TypeError, ValueError) as exc:
                raise DataParseError(f"bad value ({exc})", lineno) from exc
            if samples and feats.shape != samples[0].features.shape:
                raise SchemaError(f"line {lineno}: feature length {feats.shape[0]} differs from line 1")
            samples.append(Sample(pid, feats, labels))
    return Dataset.from_samples(samples, findings or ())


@dataclass(frozen=True)
class SplitPlan:
    test_patient_ids: frozenset[int]
    folds: tuple[frozenset[int], ...]

    @property
    def n_folds(self) -> int:
        return len(self.folds)

    def train_patients(self, fold: int) -> frozenset[int]:
        """Non-test patients outside ``fold``: the training portion of that fold."""
        return frozenset().union(*(f for i, f in enumerate(self.folds) if i != fold))

    def validate(self, patient_ids=None) -> None:
        parts = [self.test_patient_ids, *self.folds]
        seen: set[int] = set()
        for part in parts:
            if seen & part:
                raise DataError("split partitions overlap")
            seen |= part
        if patient_ids is not None and seen != set(int(p) for p in patient_ids):
            raise DataError("split does not cover exactly the dataset's patients")

    def to_json(self) -> dict:
        return {"test_patient_ids": sorted(self.test_patient_ids),
                "folds": [sorted(f) for f in self.folds]}

    @classmethod
    def from_json(cls, obj: dict) -> "SplitPlan":
        unknown = set(obj) - {"test_patient_ids", "folds"}
        if unknown:
            raise SchemaError(f"unknown split keys {sorted(unknown)}")
        try:
            plan = cls(frozenset(int(p) for p in obj["test_patient_ids"]),
                       tuple(frozenset(int(p) for p in f) for f in obj["folds"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed split plan ({exc})") from exc
        plan.validate()
        return plan


def split(dataset: Dataset, test_fraction: float = 0.2, n_folds: int = 5, seed: int = 0) -> SplitPlan:
    """Patient-wise holdout plus patient-wise folds.

    Patients are shuffled; the first ``floor(test_fraction * n)`` (at least
    one) form the test set and the rest are dealt round-robin into folds.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError("test_fraction must lie in (0, 1)")
    if n_folds < 2:
        raise ConfigError("n_folds must be >= 2")
    patients = dataset.patients()
    if patients.size < n_folds + 1:
        raise DataError(f"need at least {n_folds + 1} patients, got {patients.size}")
    order = np.random.default_rng(seed).permutation(patients)
    n_test = max(1, int(np.floor(test_fraction * patients.size)))
    if patients.size - n_test < n_folds:
        raise DataError(f"{patients.size} patients leave fewer than {n_folds} for the folds")
    rest = order[n_test:]
    plan = SplitPlan(frozenset(int(p) for p in order[:n_test]),
                     tuple(frozenset(int(p) for p in rest[i::n_folds]) for i in range(n_folds)))
    return plan
