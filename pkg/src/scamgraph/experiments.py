"""Seed-panel runs: synthesize a world per seed, run the full pipeline, collect metrics."""
from __future__ import annotations

import dataclasses
import json
import time
from pathlib import Path

from .config import PipelineConfig
from .pipeline import run_pipeline
from .synth import SynthConfig, generate, write_world


@dataclasses.dataclass
class PanelRun:
    seed: int
    out_dir: Path
    f1: dict[str, float]
    seconds: float


def run_seed(seed: int, out_dir: str | Path, base: PipelineConfig | None = None,
             synth: SynthConfig | None = None) -> PanelRun:
    base = base or PipelineConfig()
    synth = dataclasses.replace(synth or base.synth, seed=seed)
    out = Path(out_dir)
    t0 = time.perf_counter()
    write_world(generate(synth), out, synth)
    cfg = dataclasses.replace(base, out_dir=str(out), seed=seed, synth=synth,
                              transactions=None, kinds=None, labels=None)
    report = json.loads(run_pipeline(cfg))
    f1 = {m["model"]: m["metrics"]["f1"] for m in report["models"]}
    return PanelRun(seed, out, f1, time.perf_counter() - t0)


def run_panel(seeds, out_root: str | Path, base: PipelineConfig | None = None,
              synth: SynthConfig | None = None) -> list[PanelRun]:
    return [run_seed(s, Path(out_root) / f"seed{s}", base, synth) for s in seeds]
