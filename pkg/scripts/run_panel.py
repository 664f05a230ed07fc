"""Run the full pipeline on a panel of synthetic worlds and print per-seed F1.

    python3 scripts/run_panel.py --seeds 0 1 2 3 4 --mlp-epochs 1000 --gcn-epochs 200
    python3 scripts/run_panel.py --resample-scope pre-split
"""
import argparse
import dataclasses
import json
import logging
import statistics
import tempfile

from scamgraph.config import RESAMPLE_SCOPES, PipelineConfig
from scamgraph.experiments import run_panel
from scamgraph.synth import SynthConfig


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--out", help="root directory for per-seed artifacts (default: a temp dir)")
    p.add_argument("--mlp-epochs", type=int, default=1000)
    p.add_argument("--gcn-epochs", type=int, default=200)
    p.add_argument("--resample-scope", choices=RESAMPLE_SCOPES, default="train-only")
    p.add_argument("--n-eoa", type=int, default=2000)
    p.add_argument("--n-contract", type=int, default=300)
    p.add_argument("--n-scam", type=int, default=15)
    p.add_argument("--json", action="store_true", help="print results as JSON")
    args = p.parse_args()
    logging.basicConfig(level=logging.WARNING)

    base = PipelineConfig()
    base = dataclasses.replace(
        base,
        resample_scope=args.resample_scope,
        mlp=dataclasses.replace(base.mlp, epochs=args.mlp_epochs),
        gcn=dataclasses.replace(base.gcn, epochs=args.gcn_epochs),
    )
    synth = SynthConfig(n_eoa=args.n_eoa, n_contract=args.n_contract, n_scam=args.n_scam)
    root = args.out or tempfile.mkdtemp(prefix="panel-")
    runs = run_panel(args.seeds, root, base, synth)

    rows = [{"seed": r.seed, **{f"{k}_f1": v for k, v in r.f1.items()}, "seconds": round(r.seconds, 2)} for r in runs]
    if args.json:
        print(json.dumps(rows, indent=1))
        return
    print(f"artifacts under {root}")
    print("seed   mlp_f1   gcn_f1   seconds")
    for r in rows:
        print(f"{r['seed']:>4}   {r['mlp_f1']:.3f}    {r['gcn_f1']:.3f}    {r['seconds']:.1f}")
    mlp = statistics.mean(r["mlp_f1"] for r in rows)
    gcn = statistics.mean(r["gcn_f1"] for r in rows)
    print(f"mean   {mlp:.3f}    {gcn:.3f}    margin {mlp - gcn:+.3f}")


if __name__ == "__main__":
    main()
