"""Pipeline configuration: one JSON document, built-in defaults, CLI overrides."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .nn import TrainConfig
from .synth import SynthConfig

RESAMPLE_SCOPES = ("train-only", "pre-split")
PATH_FIELDS = ("transactions", "kinds", "labels", "out_dir")


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    transactions: str | None = None  # default: <out_dir>/transactions.csv
    kinds: str | None = None
    labels: str | None = None
    out_dir: str = "out"
    seed: int = 0
    min_total_degree: int = 2
    pagerank_damping: float = 0.85
    link_tol: float = 1e-10
    link_max_iter: int = 200
    test_fraction: float = 0.2
    threshold: float = 0.5
    smote_k: int = 5
    enn_k: int = 3
    target_ratio: float = 1.0
    resample_scope: str = "train-only"
    gcn_batch_size: int = 8
    gcn_minority_fraction: float = 0.5
    gcn_radius: int = 2
    gcn_batches_per_epoch: int = 1
    mlp: TrainConfig = field(default_factory=TrainConfig.mlp)
    gcn: TrainConfig = field(default_factory=TrainConfig.gcn)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def input_path(self, name: str) -> Path:
        explicit = getattr(self, name)
        return Path(explicit) if explicit else Path(self.out_dir) / f"{name}.csv"

    def to_dict(self) -> dict:
        return asdict(self)

    def hyperparameters(self) -> dict:
        """Everything except file locations; what the report echoes and hashes."""
        d = self.to_dict()
        for k in PATH_FIELDS:
            d.pop(k)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.hyperparameters(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def stage_seeds(self) -> dict[str, int]:
        s = self.seed
        return {"split": s, "smote": s + 1, "mlp": s + 2, "gcn": s + 3}

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        problems = validate_config(doc)
        if problems:
            raise ConfigError("; ".join(problems))
        doc = dict(doc)
        nested = {
            "mlp": lambda d: TrainConfig.mlp(**d),
            "gcn": lambda d: TrainConfig.gcn(**d),
            "synth": lambda d: SynthConfig(**d),
        }
        for k, make in nested.items():
            if k in doc:
                doc[k] = make(doc[k])
        return cls(**doc)


def load_config(path: str | Path) -> PipelineConfig:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(p))
    text = p.read_text()
    problems = validate_config(text)
    if problems:
        raise ConfigError("; ".join(problems))
    return PipelineConfig.from_dict(json.loads(text))


_TOP_FIELDS = {f.name: f for f in fields(PipelineConfig)}
_NESTED = {"mlp": TrainConfig, "gcn": TrainConfig, "synth": SynthConfig}


def _number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _integer(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _train_rules(prefix: str, d: dict) -> list[str]:
    out = []
    rules = [
        ("hidden_dim", lambda v: _integer(v) and v >= 1, "hidden_dim integer >= 1"),
        ("n_layers", lambda v: _integer(v) and v >= 1, "n_layers integer >= 1"),
        ("dropout", lambda v: _number(v) and 0 <= v < 1, "dropout ∈ [0,1)"),
        ("learning_rate", lambda v: _number(v) and v > 0, "learning_rate > 0"),
        ("weight_decay", lambda v: _number(v) and v >= 0, "weight_decay >= 0"),
        ("epochs", lambda v: _integer(v) and v >= 0, "epochs integer >= 0"),
        ("beta1", lambda v: _number(v) and 0 <= v < 1, "beta1 ∈ [0,1)"),
        ("beta2", lambda v: _number(v) and 0 <= v < 1, "beta2 ∈ [0,1)"),
        ("eps", lambda v: _number(v) and v > 0, "eps > 0"),
        ("seed", _integer, "seed integer"),
        ("eval_every", lambda v: _integer(v) and v >= 0, "eval_every integer >= 0"),
    ]
    for name, ok, msg in rules:
        if name in d and not ok(d[name]):
            out.append(f"{prefix}.{name}: {msg} (got {d[name]!r})")
    return out


_TOP_RULES = [
    ("seed", _integer, "seed integer"),
    ("min_total_degree", lambda v: _integer(v) and v >= 0, "min_total_degree integer >= 0"),
    ("pagerank_damping", lambda v: _number(v) and 0 < v < 1, "pagerank_damping ∈ (0,1)"),
    ("link_tol", lambda v: _number(v) and v > 0, "link_tol > 0"),
    ("link_max_iter", lambda v: _integer(v) and v >= 1, "link_max_iter integer >= 1"),
    ("test_fraction", lambda v: _number(v) and 0 < v < 1, "test_fraction ∈ (0,1)"),
    ("threshold", lambda v: _number(v) and 0 < v < 1, "threshold ∈ (0,1)"),
    ("smote_k", lambda v: _integer(v) and v >= 1, "smote_k integer >= 1"),
    ("enn_k", lambda v: _integer(v) and v >= 1, "enn_k integer >= 1"),
    ("target_ratio", lambda v: _number(v) and v > 0, "target_ratio > 0"),
    ("resample_scope", lambda v: v in RESAMPLE_SCOPES, f"resample_scope ∈ {set(RESAMPLE_SCOPES)}"),
    ("gcn_batch_size", lambda v: _integer(v) and v >= 1, "gcn_batch_size integer >= 1"),
    ("gcn_minority_fraction", lambda v: _number(v) and 0 <= v <= 1, "gcn_minority_fraction ∈ [0,1]"),
    ("gcn_radius", lambda v: _integer(v) and v >= 0, "gcn_radius integer >= 0"),
    ("gcn_batches_per_epoch", lambda v: _integer(v) and v >= 1, "gcn_batches_per_epoch integer >= 1"),
    ("out_dir", lambda v: isinstance(v, str) and v != "", "out_dir non-empty string"),
]


def validate_config(doc: dict | str) -> list[str]:
    """Return violations, each naming the field and the rule; empty means valid."""
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            return [f"parse: config is not valid JSON ({exc})"]
    if not isinstance(doc, dict):
        return ["parse: config must be a JSON object"]
    out = []
    for k in doc:
        if k not in _TOP_FIELDS:
            out.append(f"{k}: unknown field")
    for name, ok, msg in _TOP_RULES:
        if name in doc and not ok(doc[name]):
            out.append(f"{name}: {msg} (got {doc[name]!r})")
    for k in ("transactions", "kinds", "labels"):
        if doc.get(k) is not None and not isinstance(doc[k], str):
            out.append(f"{k}: path string or null")
    for k, cls in _NESTED.items():
        if k not in doc:
            continue
        sub = doc[k]
        if not isinstance(sub, dict):
            out.append(f"{k}: must be an object")
            continue
        known = {f.name for f in fields(cls)}
        out.extend(f"{k}.{s}: unknown field" for s in sub if s not in known)
        if cls is TrainConfig:
            out.extend(_train_rules(k, sub))
        else:
            bad_types = [s for s in sub if s in known and not _number(sub[s])]
            out.extend(f"{k}.{s}: must be a number" for s in bad_types)
            if not bad_types and not any(s not in known for s in sub):
                out.extend(f"{k}: {e}" for e in SynthConfig(**sub).validate())
    return out
