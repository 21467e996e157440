"""Command-line entry point: ``heal train | eval | export-structure | gradcheck``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from heal.checkpoint import load_checkpoint, save_checkpoint
from heal.config import BRANCH_MODES, TrainConfig, load_config
from heal.data import GraphCollection, cycles_vs_stars, make_splits, parse_tudataset
from heal.errors import ContractError, HealError, IngestError, ShapeError
from heal.gradcheck import run_gradcheck
from heal.structure import learned_structure, to_dot
from heal.trainer import EpochMetrics, evaluate, train

logger = logging.getLogger("heal")

SYNTHETIC = "CYCLES_STARS"
GRADCHECK_TOLERANCE = 1e-4
METRIC_FIELDS = ("epoch", "l_sup", "l_con", "train_acc", "val_acc")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def load_dataset(directory, name: str, degree_cap: int = 10) -> GraphCollection:
    """Parse ``name`` from ``directory``; the built-in synthetic set needs no files."""
    if name == SYNTHETIC and (directory is None or not Path(directory, f"{name}_A.txt").exists()):
        return cycles_vs_stars(200, seed=0, degree_cap=degree_cap)
    if directory is None:
        raise IngestError(f"--dataset-dir is required for dataset {name}")
    if not Path(directory).is_dir():
        raise IngestError(f"dataset directory {directory} does not exist")
    return parse_tudataset(directory, name, degree_cap)


def resolve_config(args) -> TrainConfig:
    overrides = {
        "seed": args.seed,
        "beta": args.beta,
        "label_ratio": args.label_ratio,
        "branch_mode": args.branch_mode,
    }
    return load_config(args.config, overrides)


def check_compatible(model, collection: GraphCollection) -> None:
    if model.feature_dim != collection.feature_dim or model.num_classes != collection.num_classes:
        raise ShapeError(
            f"checkpoint expects {model.feature_dim} features and {model.num_classes} classes, "
            f"dataset {collection.name} has {collection.feature_dim} features and {collection.num_classes} classes"
        )


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def cmd_train(args) -> int:
    config = resolve_config(args)
    collection = load_dataset(args.dataset_dir, args.dataset, config.degree_cap)
    splits = make_splits(collection, config.seed, config.label_ratio)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "metrics": out / "metrics.csv",
        "summary": out / "summary.json",
        "checkpoint": out / "checkpoint.heal",
        "manifest": out / "manifest.json",
    }
    manifest = {
        "config": config.to_dict(),
        "dataset": args.dataset,
        "dataset_dir": None if args.dataset_dir is None else str(args.dataset_dir),
        "seed": config.seed,
        "started_at": _now(),
        "files": {k: str(v) for k, v in paths.items()},
    }
    _write_json(paths["manifest"], manifest)

    with paths["metrics"].open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_FIELDS)

        def log_epoch(m: EpochMetrics) -> None:
            writer.writerow([m.epoch, repr(m.l_sup), repr(m.l_con), repr(m.train_acc), repr(m.val_acc)])
            fh.flush()
            logger.info("epoch %d l_sup=%.4f l_con=%.4f train=%.4f val=%.4f",
                        m.epoch, m.l_sup, m.l_con, m.train_acc, m.val_acc)

        result = train(config, collection, splits, on_epoch=log_epoch)

    test = evaluate(result.model, collection, splits.test)
    save_checkpoint(result.model, paths["checkpoint"])
    _write_json(paths["summary"], {
        "split": "test",
        "accuracy": test.accuracy,
        "correct": test.correct,
        "total": test.total,
        "best_epoch": result.best_epoch,
        "per_class": {str(c): list(v) for c, v in test.per_class.items()},
    })
    manifest["finished_at"] = _now()
    _write_json(paths["manifest"], manifest)
    print(f"test accuracy: {test.accuracy:.4f}")
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    collection = load_dataset(args.dataset_dir, args.dataset, model.config.degree_cap)
    check_compatible(model, collection)
    splits = make_splits(collection, model.config.seed, model.config.label_ratio)
    result = evaluate(model, collection, splits.get(args.split))
    out = Path(args.out_dir) if args.out_dir else Path(args.checkpoint).parent
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "eval_summary.json", {
        "checkpoint": str(args.checkpoint),
        "dataset": args.dataset,
        "split": args.split,
        "accuracy": result.accuracy,
        "correct": result.correct,
        "total": result.total,
    })
    print(f"accuracy: {result.accuracy:.4f}")
    return 0


def cmd_export_structure(args) -> int:
    model = load_checkpoint(args.checkpoint)
    collection = load_dataset(args.dataset_dir, args.dataset, model.config.degree_cap)
    check_compatible(model, collection)
    if not 0 <= args.graph_index < len(collection):
        raise ContractError(f"graph index {args.graph_index} outside [0, {len(collection)})")
    structure = learned_structure(model, collection[args.graph_index])
    Path(args.out).write_text(to_dot(structure, args.graph_index, model.config.threshold))
    print(f"wrote {args.out}: {len(structure.hyperedges)} hyperedges, {len(structure.line_edges)} line-graph edges")
    return 0


def cmd_gradcheck(args) -> int:
    config = resolve_config(args)
    report = run_gradcheck(config)
    for name, err in report.items():
        print(f"{name:24s} {err:.3e}")
    worst = max(report.values())
    ok = worst < GRADCHECK_TOLERANCE
    print(f"max relative error: {worst:.3e} ({'ok' if ok else 'FAILED'}, tolerance {GRADCHECK_TOLERANCE:g})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heal", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def config_flags(p):
        p.add_argument("--config", type=Path, help="flat key = value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--beta", type=float)
        p.add_argument("--label-ratio", type=float)
        p.add_argument("--branch-mode", choices=BRANCH_MODES)

    def data_flags(p):
        p.add_argument("--dataset-dir", type=Path)
        p.add_argument("--dataset", required=True, help=f"dataset name ({SYNTHETIC} is built in)")

    p = sub.add_parser("train", help="train a model and write metrics, summary and checkpoint")
    data_flags(p)
    config_flags(p)
    p.add_argument("--out-dir", type=Path, default=Path("runs/latest"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    data_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split", default="test",
                   choices=("test", "validation", "labeled-train", "unlabeled-train"))
    p.add_argument("--out-dir", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-structure", help="write one graph's learned hypergraph and line graph")
    data_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--graph-index", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_export_structure)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full loss on a toy problem")
    config_flags(p)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (HealError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
