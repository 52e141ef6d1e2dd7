"""Run configuration: JSON schema, validation, and round-trip serialization.

The schema is strict: unknown keys are rejected with a JSON-pointer path;
a free-form "description" string is allowed in every object.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigurationError

EXPERIMENT_KINDS = ("seminorm", "patch", "layer", "geometry", "averaging", "threshold", "almost")

_TOP_KEYS = {"experiments", "output_dir", "seed", "node_budget", "worker_count", "description"}

_EXPERIMENT_KEYS = {
    "seminorm": {"kind", "name", "map", "s", "p", "ell", "spacing", "description"},
    "patch": {"kind", "name", "s", "p", "ell", "n_values", "shift_count", "description"},
    "layer": {"kind", "name", "s", "p", "ell", "n", "description"},
    "geometry": {"kind", "name", "lemma", "ell", "n_min", "n_max", "samples", "seed", "description"},
    "averaging": {"kind", "name", "s", "p", "ell", "alpha", "n_mc", "seed", "spacing",
                  "refine", "selftest_samples", "description"},
    "threshold": {"kind", "name", "s_values", "p_values", "ell", "n_max", "description"},
    "almost": {"kind", "name", "s", "p", "alpha", "n_min", "n_max", "xi_side", "description"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    options: dict

    @property
    def name(self) -> str:
        return self.options.get("name", self.kind)


@dataclass(frozen=True)
class RunConfig:
    experiments: tuple[ExperimentConfig, ...] = ()
    output_dir: str = "reports"
    seed: int = 7
    node_budget: int = 4_000_000
    worker_count: int = 1
    description: str = ""

    def to_dict(self) -> dict:
        out = {
            "experiments": [dict(e.options, kind=e.kind) for e in self.experiments],
            "output_dir": self.output_dir,
            "seed": self.seed,
            "node_budget": self.node_budget,
            "worker_count": self.worker_count,
        }
        if self.description:
            out["description"] = self.description
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _check_keys(obj: dict, allowed: set, pointer: str):
    for key in obj:
        if key not in allowed:
            raise ConfigurationError(f"unknown key at {pointer}/{key}")


def validate_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be an object at /")
    _check_keys(data, _TOP_KEYS, "")
    experiments = []
    raw = data.get("experiments", [])
    if not isinstance(raw, list):
        raise ConfigurationError("expected a list at /experiments")
    for i, entry in enumerate(raw):
        ptr = f"/experiments/{i}"
        if not isinstance(entry, dict):
            raise ConfigurationError(f"expected an object at {ptr}")
        kind = entry.get("kind")
        if kind not in EXPERIMENT_KINDS:
            raise ConfigurationError(f"unknown experiment kind {kind!r} at {ptr}/kind")
        _check_keys(entry, _EXPERIMENT_KEYS[kind], ptr)
        options = {k: v for k, v in entry.items() if k != "kind"}
        experiments.append(ExperimentConfig(kind=kind, options=options))
    cfg = RunConfig(
        experiments=tuple(experiments),
        output_dir=str(data.get("output_dir", "reports")),
        seed=int(data.get("seed", 7)),
        node_budget=int(data.get("node_budget", 4_000_000)),
        worker_count=int(data.get("worker_count", 1)),
        description=str(data.get("description", "")),
    )
    if cfg.worker_count < 1:
        raise ConfigurationError("worker_count must be >= 1 at /worker_count")
    if cfg.node_budget < 1000:
        raise ConfigurationError("node_budget must be >= 1000 at /node_budget")
    return cfg


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config file {p} does not exist")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON in {p}: {exc}") from exc
    return validate_config(data)


def roundtrip(cfg: RunConfig) -> RunConfig:
    """Config -> JSON -> config; the result compares equal to the input."""
    return validate_config(json.loads(cfg.to_json()))
