"""``ltml`` command line: datagen, train, eval, ablation, gradcurves.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import statistics
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .core import ClassStats, DegenerateClass, ShapeMismatch, sigmoid
from .datagen import InfeasiblePrevalence, SyntheticDataset, generate
from .llr import LLA, LLM, OFF
from .losses import ANR, NR, adaptive_lambda
from .metrics import AGGREGATES, METRICS
from .trainer import NonFiniteLoss, Trainer, evaluate, load_model, save_model

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
DATASET_FILES = ("features.csv", "labels_clean.csv", "labels_noisy.csv", "noise_mask.csv", "splits.csv")
SUMMARY_COLUMNS = [f"{m}_{a}" for m in METRICS for a in AGGREGATES]

# the four rows of the ablation table: (name, loss kind, LLR mode)
ABLATION = (("NR", NR, OFF), ("ANR", ANR, OFF), ("ANR-LLA", ANR, LLA), ("ANR-LLM", ANR, LLM))


class DataError(Exception):
    pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, command: str, config: dict, inputs: dict[str, Path], outputs) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "inputs": {name: sha256_file(p) for name, p in sorted(inputs.items())},
        "outputs": {name: sha256_file(out / name) for name in sorted(outputs)},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_dataset(directory) -> SyntheticDataset:
    d = Path(directory)
    missing = [f for f in DATASET_FILES if not (d / f).exists()]
    if missing:
        raise DataError(f"dataset directory {d} is missing {', '.join(missing)}")
    try:
        return SyntheticDataset.load(d)
    except (ValueError, ShapeMismatch) as exc:
        raise DataError(f"cannot read dataset in {d}: {exc}") from None


def dataset_inputs(directory) -> dict[str, Path]:
    d = Path(directory)
    return {f"data/{f}": d / f for f in DATASET_FILES}


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def write_summary_csv(path, rows: list[dict], key_columns: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(key_columns + SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow([row[k] for k in key_columns] + [_fmt(row[c]) for c in SUMMARY_COLUMNS])


def run_training(dataset: SyntheticDataset, cfg: ExperimentConfig, out: Path, label: str) -> dict:
    """Train, log epochs, evaluate on test; returns the Table-1 style summary row."""
    out.mkdir(parents=True, exist_ok=True)
    trainer = Trainer(dataset, cfg.train)
    trainer.stats.save(out / "class_stats.json")
    log_path = out / "epochs.jsonl"
    with open(log_path, "w") as fh:
        def on_epoch(log):
            fh.write(json.dumps(log, sort_keys=True) + "\n")
        try:
            trainer.fit(on_epoch=on_epoch)
        except NonFiniteLoss as exc:
            (out / "nonfinite_dump.json").write_text(json.dumps(exc.diagnostics, indent=2) + "\n")
            raise
    save_model(out / "model.bin", trainer.model, {"config": cfg.to_dict(), "config_sha256": cfg.train.digest()})
    table = trainer.evaluate("test")
    table.write_csv(out / "metrics_test.csv")
    table.write_json(out / "metrics_test.json")
    row = {"method": label, **table.summary_row()}
    write_summary_csv(out / "summary.csv", [row], ["method"])
    return row


def method_label(cfg: ExperimentConfig) -> str:
    loss, llr = cfg.train.loss.kind, cfg.train.llr.mode
    return loss if llr == OFF else f"{loss}-{llr}"


def cmd_datagen(args, cfg: ExperimentConfig) -> None:
    out = Path(args.out or Path(cfg.output_dir) / "data")
    try:
        dataset = generate(cfg.data)
    except InfeasiblePrevalence as exc:
        raise ConfigError(str(exc)) from None
    dataset.save(out)
    print(f"wrote dataset to {out}: {dataset.features.shape[0]} samples, {dataset.num_classes} classes, "
          f"{int(dataset.noise_mask.sum())} flipped labels")


def cmd_train(args, cfg: ExperimentConfig) -> None:
    dataset = load_dataset(args.data)
    out = Path(args.out or Path(cfg.output_dir) / "train")
    row = run_training(dataset, cfg, out, method_label(cfg))
    write_manifest(out, "train", cfg.to_dict(), dataset_inputs(args.data),
                   ["class_stats.json", "epochs.jsonl", "model.bin", "metrics_test.csv",
                    "metrics_test.json", "summary.csv"])
    print(f"{row['method']}: test BACC {row['bacc_Total']:.4f}  AUC {row['auc_Total']:.4f}  -> {out}")


def cmd_eval(args, cfg: ExperimentConfig) -> None:
    dataset = load_dataset(args.data)
    model_path = Path(args.model)
    if not model_path.exists():
        raise DataError(f"model file {model_path} not found")
    model, header = load_model(model_path)
    stats_path = Path(args.stats) if args.stats else model_path.with_name("class_stats.json")
    if not stats_path.exists():
        raise DataError(f"class statistics {stats_path} not found")
    stats = ClassStats.load(stats_path)
    run_cfg = header.get("config", {})
    use_bias = run_cfg.get("loss", {}).get("use_bias", True)
    threshold = run_cfg.get("metrics", {}).get("threshold", 0.0) if args.threshold is None else args.threshold
    table = evaluate(model, dataset, stats, args.split, use_bias=use_bias, threshold=threshold)
    out = Path(args.out or model_path.parent)
    out.mkdir(parents=True, exist_ok=True)
    table.write_csv(out / f"metrics_{args.split}.csv")
    table.write_json(out / f"metrics_{args.split}.json")
    row = table.summary_row()
    print(f"{args.split}: BACC {row['bacc_Total']:.4f}  AUC {row['auc_Total']:.4f}")


def cmd_ablation(args, cfg: ExperimentConfig) -> None:
    dataset = load_dataset(args.data)
    out = Path(args.out or Path(cfg.output_dir) / "ablation")
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [cfg.seed]
    rows = []
    for seed in seeds:
        for name, kind, mode in ABLATION:
            train = dataclasses.replace(
                cfg.train,
                seed=seed,
                loss=dataclasses.replace(cfg.train.loss, kind=kind),
                llr=dataclasses.replace(cfg.train.llr, mode=mode),
                sampler=dataclasses.replace(cfg.train.sampler, seed=seed),
            )
            run_cfg = dataclasses.replace(cfg, train=train, seed=seed)
            row = run_training(dataset, run_cfg, out / f"seed{seed}" / name, name)
            rows.append({"seed": seed, **row})
            print(f"seed {seed} {name:8s} BACC {row['bacc_Total']:.4f}  AUC {row['auc_Total']:.4f}")
    write_summary_csv(out / "ablation.csv", rows, ["method", "seed"])
    outputs = ["ablation.csv"]
    if len(seeds) > 1:
        medians = []
        for name, _, _ in ABLATION:
            mine = [r for r in rows if r["method"] == name]
            medians.append({"method": name, **{c: _median([r[c] for r in mine]) for c in SUMMARY_COLUMNS}})
        write_summary_csv(out / "ablation_median.csv", medians, ["method"])
        outputs.append("ablation_median.csv")
    write_manifest(out, "ablation", {**cfg.to_dict(), "seeds": seeds}, dataset_inputs(args.data), outputs)


def _median(values):
    values = [v for v in values if v is not None]
    return statistics.median(values) if values else None


def gradient_curves(beta: float, lambda_nr: float, u: np.ndarray, pos_logits) -> dict[str, np.ndarray]:
    """Negative-branch gradients d(loss)/du for BCE, NR and ANR, plus the softmax-CE companion.

    For a two-logit softmax with the positive logit fixed at ``P``, the CE
    gradient with respect to the negative logit ``u`` is ``sigmoid(u - P)``.
    """
    u = np.asarray(u, dtype=np.float64)
    cols = {
        "u": u,
        "grad_bce": sigmoid(u),
        "grad_nr": sigmoid(lambda_nr * u),
        "grad_anr": sigmoid(adaptive_lambda(u, beta) * u),
    }
    for pos in pos_logits:
        cols[f"grad_ce_pos{pos:g}"] = sigmoid(u - pos)
    return cols


def cmd_gradcurves(args, cfg: ExperimentConfig) -> None:
    if args.steps < 2:
        raise ConfigError("--steps must be >= 2")
    if args.beta < 0 or args.lambda_nr < 1:
        raise ConfigError("--beta must be >= 0 and --lambda-nr >= 1")
    u = np.linspace(args.u_min, args.u_max, args.steps)
    pos = [float(p) for p in args.pos_logits.split(",")] if args.pos_logits else []
    cols = gradient_curves(args.beta, args.lambda_nr, u, pos)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(cols))
        for i in range(len(u)):
            writer.writerow([repr(float(c[i])) for c in cols.values()])
    print(f"wrote {len(u)} rows to {out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ltml", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="TOML experiment config")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value, e.g. --set loss.beta=5 (repeatable)")
        p.add_argument("--out", help="output directory (default: derived from output_dir)")
        return p

    p = with_config(sub.add_parser("datagen", help="generate a synthetic dataset"))
    p.set_defaults(func=cmd_datagen)

    p = with_config(sub.add_parser("train", help="train one configuration and evaluate on test"))
    p.add_argument("--data", required=True, help="dataset directory written by datagen")
    p.set_defaults(func=cmd_train)

    p = with_config(sub.add_parser("eval", help="evaluate a saved model"))
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--stats", help="class_stats.json (default: next to the model)")
    p.add_argument("--split", default="test", choices=["val", "test"])
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_eval)

    p = with_config(sub.add_parser("ablation", help="NR / ANR / ANR-LLA / ANR-LLM on one dataset"))
    p.add_argument("--data", required=True)
    p.add_argument("--seeds", help="comma-separated training seeds (default: config seed)")
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("gradcurves", help="negative-logit gradient curves as CSV")
    p.add_argument("--beta", type=float, default=10.0)
    p.add_argument("--lambda-nr", type=float, default=2.0)
    p.add_argument("--u-min", type=float, default=-10.0)
    p.add_argument("--u-max", type=float, default=10.0)
    p.add_argument("--steps", type=int, default=201)
    p.add_argument("--pos-logits", default="0,2,5", help="positive logits for the softmax-CE companion")
    p.add_argument("--out", default="gradcurves.csv")
    p.set_defaults(func=cmd_gradcurves, config=None, overrides=[])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DegenerateClass, ShapeMismatch, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteLoss, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
