"""Command line entry point.

    scamgraph <subcommand> [--config PATH] [--seed N] [--threshold X]
              [--resample-scope {train-only,pre-split}] [--out DIR] ...

Exit status: 0 ok, 1 usage/config error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .balance import ResampleError
from .config import RESAMPLE_SCOPES, ConfigError, PipelineConfig, load_config, validate_config
from .contractize import KindError
from .evaluation import SplitError
from .ingest import IngestError
from .nn import NumericError, ShapeError, VersionMismatchError
from .pipeline import (
    StageInputError,
    run_pipeline,
    stage_contractize,
    stage_evaluate,
    stage_featurize,
    stage_ingest,
    stage_predict,
    stage_resample,
    stage_train,
)
from .synth import SynthConfig, SynthConfigError, generate, write_world

log = logging.getLogger("scamgraph")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SUBCOMMANDS = ("ingest", "featurize", "contractize", "resample", "train", "evaluate", "predict", "synth",
               "pipeline", "validate-config")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON")
    common.add_argument("--out", help="output directory for artifacts")
    common.add_argument("--seed", type=int)
    common.add_argument("--threshold", type=float)
    common.add_argument("--resample-scope", choices=RESAMPLE_SCOPES)
    common.add_argument("--smote-k", type=int)
    common.add_argument("--enn-k", type=int)
    common.add_argument("--target-ratio", type=float)
    common.add_argument("--transactions", help="transactions.csv (default: <out>/transactions.csv)")
    common.add_argument("--kinds", help="kinds.csv (default: <out>/kinds.csv)")
    common.add_argument("--labels", help="labels.csv (default: <out>/labels.csv)")
    common.add_argument("--mlp-epochs", type=int)
    common.add_argument("--gcn-epochs", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="scamgraph", description=__doc__.splitlines()[0] if __doc__ else None)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("ingest", "featurize", "contractize", "resample", "evaluate", "pipeline", "validate-config"):
        sub.add_parser(name, parents=[common])
    t = sub.add_parser("train", parents=[common])
    t.add_argument("model", choices=("mlp", "gcn"))
    pr = sub.add_parser("predict", parents=[common])
    pr.add_argument("--model", required=True, help="model_mlp.json or model_gcn.json")
    pr.add_argument("--output", help="predictions CSV (default: <out>/predictions_<kind>.csv)")
    s = sub.add_parser("synth", parents=[common])
    s.add_argument("--n-eoa", type=int)
    s.add_argument("--n-contract", type=int)
    s.add_argument("--n-scam", type=int)
    s.add_argument("--fan-in", type=int, dest="scam_fan_in")
    return p


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    overrides = {
        "out_dir": args.out,
        "seed": args.seed,
        "threshold": args.threshold,
        "resample_scope": args.resample_scope,
        "smote_k": args.smote_k,
        "enn_k": args.enn_k,
        "target_ratio": args.target_ratio,
        "transactions": args.transactions,
        "kinds": args.kinds,
        "labels": args.labels,
    }
    cfg = dataclasses.replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    if args.mlp_epochs is not None:
        cfg.mlp = dataclasses.replace(cfg.mlp, epochs=args.mlp_epochs)
    if args.gcn_epochs is not None:
        cfg.gcn = dataclasses.replace(cfg.gcn, epochs=args.gcn_epochs)
    if args.command == "synth":
        synth_over = {k: getattr(args, k) for k in ("n_eoa", "n_contract", "n_scam", "scam_fan_in")
                      if getattr(args, k) is not None}
        if args.seed is not None:
            synth_over["seed"] = args.seed
        cfg.synth = dataclasses.replace(cfg.synth, **synth_over)
    problems = validate_config(cfg.to_dict())
    if problems:
        raise ConfigError("; ".join(problems))
    return cfg


def dispatch(args: argparse.Namespace, cfg: PipelineConfig) -> None:
    cmd = args.command
    if cmd == "validate-config":
        print("config ok")
    elif cmd == "synth":
        world = generate(cfg.synth)
        paths = write_world(world, cfg.out_dir, cfg.synth)
        print(f"wrote {len(world.transactions)} transactions to {paths['transactions']}")
    elif cmd == "ingest":
        print(json.dumps(stage_ingest(cfg)))
    elif cmd == "featurize":
        m = stage_featurize(cfg)
        print(f"featurized {len(m.addresses)} nodes")
    elif cmd == "contractize":
        ds = stage_contractize(cfg)
        print(f"{len(ds)} contracts, {len(ds.edges)} shared-EOA edges")
    elif cmd == "resample":
        doc = stage_resample(cfg)
        print(json.dumps(doc["class_counts"]))
    elif cmd == "train":
        bundle = stage_train(cfg, args.model)
        last = bundle.history["loss"][-1] if bundle.history.get("loss") else None
        print(f"trained {args.model}: final loss {last}")
    elif cmd == "evaluate":
        sys.stdout.write(_metrics_lines(stage_evaluate(cfg)))
    elif cmd == "predict":
        out = stage_predict(cfg, Path(args.model), Path(args.output) if args.output else None)
        print(f"wrote {out}")
    elif cmd == "pipeline":
        sys.stdout.write(_metrics_lines(run_pipeline(cfg)))


def _metrics_lines(report_text: str) -> str:
    doc = json.loads(report_text)
    lines = []
    for m in doc["models"]:
        v = m["metrics"]
        lines.append(f"{m['model']}: accuracy={v['accuracy']:.4f} precision={v['precision']:.4f} "
                     f"recall={v['recall']:.4f} f1={v['f1']:.4f}")
    return "\n".join(lines) + "\n"


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        dispatch(args, cfg)
    except (ConfigError, SynthConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StageInputError, FileNotFoundError) as exc:
        print(f"error: missing file {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (IngestError, VersionMismatchError, ResampleError, SplitError, KindError, ShapeError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
