"""Command line entry point: ``ordreg {generate,split,experiment,evaluate,report}``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 training failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import data as data_mod
from . import harness
from .encodings import Encoding, OrdinalScale
from .errors import ConfigError, DataError, TrainingDivergedError
from .model import load_checkpoint, save_checkpoint

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAINING = 0, 1, 2, 3

log = logging.getLogger("ordreg")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def cmd_generate(args) -> int:
    cfg = data_mod.SynthConfig.from_json(_read_json(args.config)) if args.config else data_mod.SynthConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = data_mod.generate(cfg)
    path = out / "dataset.jsonl"
    data_mod.save(ds, path)
    print(f"wrote {len(ds)} samples ({len(ds.patients())} patients) to {path}")
    return EXIT_OK


def cmd_split(args) -> int:
    ds = data_mod.load(args.dataset)
    plan = data_mod.split(ds, args.test_fraction, args.n_folds, args.seed if args.seed is not None else 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "split.json"
    path.write_text(json.dumps(plan.to_json()))
    sizes = ", ".join(str(len(f)) for f in plan.folds)
    print(f"test patients: {len(plan.test_patient_ids)}; fold sizes: {sizes}; wrote {path}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    if not args.config:
        raise ConfigError("experiment needs --config")
    cfg = harness.load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, run_seed=args.seed)
    table = harness.run_experiment(cfg, jobs=args.jobs, keep_models=args.save_checkpoints)
    paths = harness.write_outputs(table, args.out, args.format)
    if args.save_checkpoints:
        ckpt_dir = Path(args.out) / "checkpoints"
        ckpt_dir.mkdir(exist_ok=True)
        findings = list(cfg.findings) if cfg.findings else list(harness.resolve_dataset(cfg).findings)
        for (enc_name, fold), params in sorted(table.models.items()):
            if params is None:
                continue
            enc = next(e for e in cfg.encodings if e.name == enc_name)
            mlp = harness.MlpConfig(params.weights[0].shape[0], cfg.hidden_dims,
                                    params.weights[-1].shape[1], cfg.init_seed)
            save_checkpoint(ckpt_dir / f"{enc.kind.value}_fold{fold}.json", params, mlp, extra={
                "encoding": enc.to_json(),
                "scale": {"class_count": cfg.scale.class_count, "labels": list(cfg.scale.labels)},
                "findings": findings,
                "fold": fold,
                "config_hash": table.metadata["config_hash"],
                "run_seed": cfg.run_seed,
            })
    print(harness.render(table, args.format), end="")
    print()
    print(harness.rank_change_report(table).to_text(), end="")
    log.info("outputs: %s", ", ".join(str(p) for p in paths.values()))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    params, mlp, extra = load_checkpoint(args.checkpoint)
    try:
        encoding = Encoding.from_json(extra["encoding"])
        scale = OrdinalScale(extra["scale"]["class_count"], tuple(extra["scale"].get("labels") or ()))
        findings = extra.get("findings")
    except (KeyError, TypeError) as exc:
        raise DataError(f"checkpoint lacks encoding/scale metadata ({exc})") from exc
    ds = data_mod.load(args.dataset, findings=findings)
    if ds.feature_dim != mlp.input_dim:
        raise DataError(f"dataset feature_dim {ds.feature_dim} != model input_dim {mlp.input_dim}")
    report = harness.evaluate_model(params, encoding, scale, ds)
    rows = []
    for clf, res in report.items():
        macro = {}
        for w in harness.WEIGHTINGS:
            vals = [v[w.value] for v in res["per_finding"].values() if v[w.value] is not None]
            macro[w.value] = harness.macro_average(vals) if vals else None
        rows.append({"classifier": clf.display_name, "macro": macro, "per_finding": res["per_finding"]})
    if args.format == "csv":
        print("classifier,finding,unweighted,linear,quadratic")
        for row in rows:
            for name, vals in [("macro", row["macro"]), *row["per_finding"].items()]:
                cells = ["" if vals[w.value] is None else f"{vals[w.value]:.6f}" for w in harness.WEIGHTINGS]
                print(",".join([row["classifier"], name, *cells]))
    else:
        print(f"{encoding.name} model on {len(ds)} samples")
        print("| Class.-fn | Unweight. κ | Lin. κ | Quad. κ |")
        print("|:--|:-:|:-:|:-:|")
        for row in rows:
            cells = ["—" if row["macro"][w.value] is None else f"{row['macro'][w.value]:.3f}"
                     for w in harness.WEIGHTINGS]
            print(f"| {row['classifier']} | " + " | ".join(cells) + " |")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        text = Path(args.results).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(str(exc)) from exc
    table = harness.parse_csv(text)
    report = harness.rank_change_report(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / ("results.md" if args.format == "md" else "results.csv")).write_text(
            harness.render(table, args.format), encoding="utf-8")
        (out / "rank_change.txt").write_text(report.to_text(), encoding="utf-8")
        (out / "rank_change.csv").write_text(report.to_csv(), encoding="utf-8")
    print(harness.render(table, args.format), end="")
    print()
    print(report.to_text() if args.format == "md" else report.to_csv(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ordreg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic dataset (JSON Lines)")
    p.add_argument("--config", help="JSON SynthConfig document")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("split", help="patient-wise holdout and folds for a dataset")
    p.add_argument("dataset")
    p.add_argument("--seed", type=int)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--n-folds", type=int, default=5)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("experiment", help="run the encoding x classifier grid")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="overrides run_seed")
    p.add_argument("--out", default="results")
    p.add_argument("--format", choices=("csv", "md"), default="csv")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--save-checkpoints", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("evaluate", help="kappas of a saved checkpoint on a dataset")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--format", choices=("csv", "md"), default="md")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="re-render a result CSV and its rank-change report")
    p.add_argument("results")
    p.add_argument("--format", choices=("csv", "md"), default="md")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergedError as exc:
        print(f"training failure: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
