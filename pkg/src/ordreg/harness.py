"""Experiment grid: train per encoding and fold, decode, score, rank, render."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import data as data_mod
from .classify import ClassifierKind, classify_batch, is_compatible
from .encodings import Encoding, EncodingKind, OrdinalScale, target_matrix, vector_length
from .errors import ConfigError, OrdregError, TrainingDivergedError, UndefinedKappaError
from .metrics import ConfusionMatrix, Weighting, fold_spread, kappa, macro_average
from .model import MlpConfig, ModelParams, TrainConfig, forward, train

log = logging.getLogger(__name__)

WEIGHTINGS = (Weighting.UNWEIGHTED, Weighting.LINEAR, Weighting.QUADRATIC)
ALL_LABEL = "All"
FAILED = "—"
PLUS_MINUS = "±"

DEFAULT_ENCODING_ORDER = (
    EncodingKind.ONE_HOT,
    EncodingKind.GAUSSIAN,
    EncodingKind.PROGRESS_BAR,
    EncodingKind.SOFT_PROGRESS_BAR,
    EncodingKind.CONTINUOUS,
    EncodingKind.BINARY_NUMBER,
)


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    scale: OrdinalScale = field(default_factory=OrdinalScale)
    findings: tuple[str, ...] | None = None
    encodings: tuple[Encoding, ...] = tuple(Encoding(k) for k in DEFAULT_ENCODING_ORDER)
    classifiers: tuple[ClassifierKind, ...] = tuple(ClassifierKind)
    hidden_dims: tuple[int, ...] = (64, 64)
    init_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: data_mod.SynthConfig | None = None
    dataset_path: str | None = None
    test_fraction: float = 0.2
    n_folds: int = 5
    split_seed: int = 0
    run_seed: int = 0

    def __post_init__(self):
        if (self.synth is None) == (self.dataset_path is None):
            raise ConfigError("give exactly one of 'synth' and 'dataset_path'")
        if not self.encodings or not self.classifiers:
            raise ConfigError("need at least one encoding and one classifier")
        if not any(is_compatible(e, c) for e in self.encodings for c in self.classifiers):
            raise ConfigError("no compatible (encoding, classifier) pair requested")
        if self.synth is not None and self.synth.K != self.scale.class_count:
            raise ConfigError(f"synth K={self.synth.K} differs from scale K={self.scale.class_count}")

    _KEYS = {"scale", "findings", "encodings", "classifiers", "mlp", "train", "synth",
             "dataset_path", "test_fraction", "n_folds", "split_seed", "run_seed"}

    @classmethod
    def from_json(cls, obj: dict, base_dir=None) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(obj) - cls._KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        if "scale" in obj:
            s = obj["scale"]
            _reject_unknown(s, {"class_count", "labels"}, "scale")
            kw["scale"] = OrdinalScale(s.get("class_count", 5), tuple(s.get("labels") or ()))
        if obj.get("findings") is not None:
            kw["findings"] = tuple(obj["findings"])
        if "encodings" in obj:
            kw["encodings"] = tuple(Encoding.from_json(e) for e in obj["encodings"])
        if "classifiers" in obj:
            kw["classifiers"] = tuple(ClassifierKind.parse(c) for c in obj["classifiers"])
        if "mlp" in obj:
            m = obj["mlp"]
            _reject_unknown(m, {"hidden_dims", "init_seed"}, "mlp")
            if "hidden_dims" in m:
                kw["hidden_dims"] = tuple(int(h) for h in m["hidden_dims"])
            if "init_seed" in m:
                kw["init_seed"] = int(m["init_seed"])
        if "train" in obj:
            t = obj["train"]
            _reject_unknown(t, set(TrainConfig.__dataclass_fields__) - {"seed"}, "train")
            kw["train"] = TrainConfig(**t)
        if obj.get("synth") is not None:
            kw["synth"] = data_mod.SynthConfig.from_json(obj["synth"])
        if obj.get("dataset_path") is not None:
            path = Path(obj["dataset_path"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            kw["dataset_path"] = str(path)
        for key in ("test_fraction",):
            if key in obj:
                kw[key] = float(obj[key])
        for key in ("n_folds", "split_seed", "run_seed"):
            if key in obj:
                kw[key] = int(obj[key])
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> dict:
        return {
            "scale": {"class_count": self.scale.class_count, "labels": list(self.scale.labels)},
            "findings": list(self.findings) if self.findings is not None else None,
            "encodings": [e.to_json() for e in self.encodings],
            "classifiers": [c.value for c in self.classifiers],
            "mlp": {"hidden_dims": list(self.hidden_dims), "init_seed": self.init_seed},
            "train": {k: v for k, v in asdict(self.train).items() if k != "seed"},
            "synth": self.synth.to_json() if self.synth is not None else None,
            "dataset_path": self.dataset_path,
            "test_fraction": self.test_fraction,
            "n_folds": self.n_folds,
            "split_seed": self.split_seed,
            "run_seed": self.run_seed,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _reject_unknown(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"'{where}' must be a JSON object")
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in '{where}': {sorted(unknown)}")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_json(obj, base_dir=path.parent)


# --------------------------------------------------------------------------
# results
# --------------------------------------------------------------------------

@dataclass
class MethodResult:
    target_fn: str
    class_fn: str
    # weighting -> (mean, sd); None marks a failed row
    stats: dict[Weighting, tuple[float, float] | None] = field(default_factory=dict)
    ranks: dict[Weighting, int | None] = field(default_factory=dict)
    fold_values: dict[Weighting, list[float]] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return f"{self.target_fn}-{self.class_fn}"

    def mean(self, weighting: Weighting) -> float | None:
        s = self.stats.get(weighting)
        return None if s is None else s[0]


@dataclass
class ResultTable:
    methods: list[MethodResult] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    # (target_fn, classifier value, fold) -> per-finding confusion matrices
    confusions: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict)


def rank_values(means) -> list[int | None]:
    """Competition ranking, higher is better; ``None`` entries get no rank."""
    valid = [m for m in means if m is not None]
    return [None if m is None else 1 + sum(1 for o in valid if o > m) for m in means]


def rank(table: ResultTable, weighting: Weighting) -> list[int | None]:
    return rank_values([m.mean(weighting) for m in table.methods])


def assign_ranks(table: ResultTable) -> ResultTable:
    for w in WEIGHTINGS:
        for method, r in zip(table.methods, rank(table, w)):
            method.ranks[w] = r
    return table


# --------------------------------------------------------------------------
# evaluation of one model
# --------------------------------------------------------------------------

def predict_classes(outputs: np.ndarray, encoding: Encoding, scale: OrdinalScale,
                    classifier: ClassifierKind) -> np.ndarray:
    """Decode ``(n, L * d)`` network outputs into ``(n, L)`` classes."""
    targets = target_matrix(encoding, scale)
    n = outputs.shape[0]
    per_finding = outputs.reshape(n, -1, targets.d)
    preds = [classify_batch(classifier, per_finding[:, j, :], targets)
             for j in range(per_finding.shape[1])]
    return np.stack(preds, axis=1) if preds else np.zeros((n, 0), dtype=np.int64)


def confusion_matrices(true_labels: np.ndarray, predicted: np.ndarray, K: int) -> list[ConfusionMatrix]:
    return [ConfusionMatrix.from_labels(true_labels[:, j], predicted[:, j], K)
            for j in range(true_labels.shape[1])]


def macro_kappas(confusions: list[ConfusionMatrix]) -> dict[Weighting, float]:
    """Kappa per weighting, macro-averaged over findings."""
    return {w: macro_average(kappa(cm, w).value for cm in confusions) for w in WEIGHTINGS}


def evaluate_model(params: ModelParams, encoding: Encoding, scale: OrdinalScale,
                   dataset: data_mod.Dataset, classifiers=None) -> dict:
    """Per-classifier confusion matrices and kappas of a trained model on ``dataset``."""
    classifiers = [ClassifierKind.parse(c) for c in (classifiers or ClassifierKind)]
    outputs = forward(params, dataset.features)
    report = {}
    for clf in classifiers:
        if not is_compatible(encoding, clf):
            continue
        preds = predict_classes(outputs, encoding, scale, clf)
        cms = confusion_matrices(dataset.labels, preds, scale.class_count)
        per_finding = {}
        for name, cm in zip(dataset.findings, cms):
            per_finding[name] = {w.value: _safe_kappa(cm, w) for w in WEIGHTINGS}
        report[clf] = {"confusions": cms, "per_finding": per_finding}
    return report


def _safe_kappa(cm, w):
    try:
        return kappa(cm, w).value
    except UndefinedKappaError:
        return None


# --------------------------------------------------------------------------
# the grid
# --------------------------------------------------------------------------

@dataclass
class _FoldOutcome:
    encoding_index: int
    fold: int
    params: ModelParams | None
    loss_history: list[float]
    error: str | None = None


def _fold_rng(run_seed: int, encoding: Encoding, fold: int) -> np.random.Generator:
    return np.random.default_rng([run_seed, encoding.kind.stable_id, fold])


def resolve_dataset(config: ExperimentConfig) -> data_mod.Dataset:
    if config.synth is not None:
        ds = data_mod.generate(config.synth)
    else:
        ds = data_mod.load(config.dataset_path)
    if config.findings is not None:
        missing = [f for f in config.findings if f not in ds.findings]
        if missing:
            raise data_mod.SchemaError(f"dataset lacks findings {missing}")
        cols = [ds.findings.index(f) for f in config.findings]
        ds = data_mod.Dataset(ds.patient_ids, ds.features, ds.labels[:, cols], config.findings)
    if ds.labels.size and (ds.labels.min() < 1 or ds.labels.max() > config.scale.class_count):
        raise data_mod.SchemaError(f"dataset labels exceed 1..{config.scale.class_count}")
    return ds


def _requested_pairs(config: ExperimentConfig):
    return [(ei, enc, clf) for ei, enc in enumerate(config.encodings)
            for clf in config.classifiers if is_compatible(enc, clf)]


def run_experiment(config: ExperimentConfig, jobs: int = 1, keep_models: bool = False,
                   dataset: data_mod.Dataset | None = None) -> ResultTable:
    """Train ``n_folds`` models per encoding and score every compatible decoder.

    Every fold-model is evaluated on the same patient-wise held-out test set;
    rows report mean and sample SD over the fold-models of the macro-averaged
    (over findings) kappa.  Output does not depend on ``jobs``.
    """
    ds = dataset if dataset is not None else resolve_dataset(config)
    plan = data_mod.split(ds, config.test_fraction, config.n_folds, config.split_seed)
    test = ds.subset(plan.test_patient_ids)
    scale = config.scale
    L = ds.n_findings

    def job(ei: int, fold: int) -> _FoldOutcome:
        enc = config.encodings[ei]
        mlp = MlpConfig(ds.feature_dim, config.hidden_dims,
                        vector_length(enc, scale.class_count) * L, config.init_seed)
        train_ds = ds.subset(plan.train_patients(fold))
        try:
            res = train(mlp, config.train, train_ds, enc, scale,
                        rng=_fold_rng(config.run_seed, enc, fold))
        except TrainingDivergedError as exc:
            log.warning("%s fold %d diverged: %s", enc.name, fold, exc)
            return _FoldOutcome(ei, fold, None, [], str(exc))
        return _FoldOutcome(ei, fold, res.params, res.loss_history)

    grid = [(ei, fold) for ei in range(len(config.encodings)) for fold in range(config.n_folds)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(lambda a: job(*a), grid))
    else:
        outcomes = [job(*a) for a in grid]

    table = ResultTable()
    failed_cells = []
    by_encoding: dict[int, list[_FoldOutcome]] = {}
    for oc in outcomes:
        by_encoding.setdefault(oc.encoding_index, []).append(oc)
        if oc.error is not None:
            failed_cells.append({"encoding": config.encodings[oc.encoding_index].name,
                                 "fold": oc.fold, "error": oc.error})
    for ei, ocs in by_encoding.items():
        if all(oc.params is None for oc in ocs):
            raise TrainingDivergedError(f"every fold of {config.encodings[ei].name} diverged")

    # decode and score
    fold_scores: dict[tuple[int, ClassifierKind], dict[Weighting, list[float]]] = {}
    for ei, enc, clf in _requested_pairs(config):
        scores = {w: [] for w in WEIGHTINGS}
        for oc in by_encoding[ei]:
            if oc.params is None:
                continue
            outputs = forward(oc.params, test.features)
            preds = predict_classes(outputs, enc, scale, clf)
            cms = confusion_matrices(test.labels, preds, scale.class_count)
            table.confusions[(enc.name, clf.value, oc.fold)] = cms
            try:
                macro = macro_kappas(cms)
            except UndefinedKappaError as exc:
                failed_cells.append({"encoding": enc.name, "classifier": clf.display_name,
                                     "fold": oc.fold, "error": str(exc)})
                continue
            for w in WEIGHTINGS:
                scores[w].append(macro[w])
        fold_scores[(ei, clf)] = scores
        if keep_models:
            for oc in by_encoding[ei]:
                table.models[(enc.name, oc.fold)] = oc.params

    collapsed = _one_hot_collapse(config, table)
    for ei, enc, clf in _requested_pairs(config):
        if ei in collapsed and clf is not config.classifiers[0]:
            continue
        class_fn = ALL_LABEL if ei in collapsed else clf.display_name
        method = MethodResult(enc.name, class_fn)
        for w, values in fold_scores[(ei, clf)].items():
            method.fold_values[w] = values
            method.stats[w] = fold_spread(values) if len(values) >= 2 else None
        table.methods.append(method)

    assign_ranks(table)
    table.metadata = {
        "config_hash": config.config_hash(),
        "split_seed": config.split_seed,
        "run_seed": config.run_seed,
        "init_seed": config.init_seed,
        "n_samples": len(ds),
        "n_test_samples": len(test),
        "test_patient_ids": sorted(plan.test_patient_ids),
        "failed_cells": failed_cells,
        "one_hot_collapsed": bool(collapsed),
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    return table


def _one_hot_collapse(config: ExperimentConfig, table: ResultTable) -> set[int]:
    """Encoding indices whose one-hot rows merge into a single "All" row.

    Merging requires all three decoders to be requested and to give identical
    confusion matrices on every fold; otherwise the rows stay separate.
    """
    if set(config.classifiers) != set(ClassifierKind):
        return set()
    merged = set()
    for ei, enc in enumerate(config.encodings):
        if enc.kind is not EncodingKind.ONE_HOT:
            continue
        same = True
        for fold in range(config.n_folds):
            ref = table.confusions.get((enc.name, ClassifierKind.ARGMAX.value, fold))
            for clf in (ClassifierKind.L1_NEAREST, ClassifierKind.DOT_NEAREST):
                other = table.confusions.get((enc.name, clf.value, fold))
                if (ref is None) != (other is None) or (ref is not None and ref != other):
                    same = False
        if same:
            merged.add(ei)
        else:
            log.warning("one-hot decoders disagree; keeping separate rows")
    return merged


# --------------------------------------------------------------------------
# rendering
# --------------------------------------------------------------------------

CSV_HEADER = ["target_fn", "class_fn",
              "unweighted_kappa", "unweighted_rank",
              "linear_kappa", "linear_rank",
              "quadratic_kappa", "quadratic_rank"]


def format_sd(sd: float) -> str:
    """Scientific notation with 2 decimals and a bare exponent: ``1.09e-3``."""
    mantissa, exponent = f"{sd:.2e}".split("e")
    return f"{mantissa}e{int(exponent)}"


def format_cell(stats) -> str:
    if stats is None:
        return FAILED
    mean, sd = stats
    return f"{mean:.3f}{PLUS_MINUS}{format_sd(sd)}"


def parse_cell(text: str):
    if text == FAILED:
        return None
    mean, sd = text.split(PLUS_MINUS)
    return float(mean), float(sd)


def _rank_text(r) -> str:
    return FAILED if r is None else str(r)


def render(table: ResultTable, fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for m in table.methods:
            row = [m.target_fn, m.class_fn]
            for w in WEIGHTINGS:
                row += [format_cell(m.stats.get(w)), _rank_text(m.ranks.get(w))]
            writer.writerow(row)
        return buf.getvalue()
    if fmt in ("md", "markdown"):
        head = ["Targ.-fn", "Class.-fn"]
        for w in WEIGHTINGS:
            head += [f"{w.short_name} κ", "#"]
        lines = ["| " + " | ".join(head) + " |",
                 "|" + "|".join([":--", "--:"] + [":-:"] * 6) + "|"]
        for m in table.methods:
            cells = [m.target_fn, m.class_fn]
            for w in WEIGHTINGS:
                cells += [format_cell(m.stats.get(w)), _rank_text(m.ranks.get(w))]
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"
    raise ConfigError(f"unknown format {fmt!r}")


def parse_csv(text: str) -> ResultTable:
    """Inverse of ``render(table, "csv")`` (values at their rendered precision)."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_HEADER:
        raise data_mod.SchemaError("not a result CSV: header mismatch")
    table = ResultTable()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise data_mod.DataParseError(f"expected {len(CSV_HEADER)} columns", lineno)
        m = MethodResult(row[0], row[1])
        try:
            for k, w in enumerate(WEIGHTINGS):
                m.stats[w] = parse_cell(row[2 + 2 * k])
                r = row[3 + 2 * k]
                m.ranks[w] = None if r == FAILED else int(r)
        except ValueError as exc:
            raise data_mod.DataParseError(f"bad cell ({exc})", lineno) from exc
        table.methods.append(m)
    return table


# --------------------------------------------------------------------------
# rank change between weightings
# --------------------------------------------------------------------------

@dataclass
class RankChangeReport:
    # one (method, rank per weighting) entry per method, table order
    entries: list[tuple[str, dict[Weighting, int | None]]]

    def column(self, weighting: Weighting) -> list[str]:
        """Method names ordered by rank under ``weighting`` (unranked last)."""
        order = sorted(range(len(self.entries)),
                       key=lambda i: (self.entries[i][1][weighting] is None,
                                      self.entries[i][1][weighting] or 0, i))
        return [self.entries[i][0] for i in order]

    def deltas(self, name: str) -> tuple[int | None, int | None]:
        """Rank improvement unweighted->linear and linear->quadratic (negative = worse)."""
        ranks = dict(self.entries)[name]
        out = []
        for a, b in zip(WEIGHTINGS[:-1], WEIGHTINGS[1:]):
            ra, rb = ranks[a], ranks[b]
            out.append(None if ra is None or rb is None else ra - rb)
        return tuple(out)

    def to_text(self) -> str:
        ranks = dict(self.entries)
        cols = [self.column(w) for w in WEIGHTINGS]
        width = max([len(n) for n, _ in self.entries] + [10]) + 12

        def cell(name, w_idx):
            r = ranks[name][WEIGHTINGS[w_idx]]
            text = f"{_rank_text(r):>2} {name}"
            if w_idx > 0:
                d = self.deltas(name)[w_idx - 1]
                text += f" ({FAILED if d is None else f'{d:+d}'})"
            return text

        titles = ["Unweighted kappa", "Linear kappa", "Quadratic kappa"]
        lines = ["".join(t.ljust(width) for t in titles).rstrip()]
        for pos in range(len(self.entries)):
            lines.append("".join(cell(cols[k][pos], k).ljust(width) for k in range(3)).rstrip())
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", "unweighted_rank", "linear_rank", "quadratic_rank",
                         "delta_unweighted_linear", "delta_linear_quadratic"])
        for name, ranks in self.entries:
            d1, d2 = self.deltas(name)
            writer.writerow([name] + [_rank_text(ranks[w]) for w in WEIGHTINGS]
                            + [_rank_text(d1), _rank_text(d2)])
        return buf.getvalue()


def rank_change_report(table: ResultTable) -> RankChangeReport:
    for w in WEIGHTINGS:
        if any(w not in m.ranks for m in table.methods):
            assign_ranks(table)
            break
    return RankChangeReport([(m.name, {w: m.ranks[w] for w in WEIGHTINGS}) for m in table.methods])


def write_outputs(table: ResultTable, out_dir, fmt: str = "csv") -> dict[str, Path]:
    """Write the result table, the rank-change report and run metadata to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    paths["table"] = out / ("results.csv" if fmt == "csv" else "results.md")
    paths["table"].write_text(render(table, fmt), encoding="utf-8")
    if fmt != "csv":
        paths["csv"] = out / "results.csv"
        paths["csv"].write_text(render(table, "csv"), encoding="utf-8")
    report = rank_change_report(table)
    paths["rank_text"] = out / "rank_change.txt"
    paths["rank_text"].write_text(report.to_text(), encoding="utf-8")
    paths["rank_csv"] = out / "rank_change.csv"
    paths["rank_csv"].write_text(report.to_csv(), encoding="utf-8")
    paths["meta"] = out / "run_meta.json"
    paths["meta"].write_text(json.dumps(table.metadata, indent=2, default=str), encoding="utf-8")
    return paths


def is_finite_table(table: ResultTable) -> bool:
    return all(s is not None and math.isfinite(s[0]) and math.isfinite(s[1])
               for m in table.methods for s in m.stats.values())
