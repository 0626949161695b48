"""Run configuration: JSON loading, schema checks and default resolution.

A configuration file is a JSON object. Only ``model.model_kind`` is
required; every other key has a default that is written back into the
echoed ``config.json`` of the run::

    {
      "model": {"model_kind": "logistic_regression", "n_train": 2000},
      "backends": ["rwm"],
      "n_trials": 4,
      "chain": {"n_warmup": 500, "n_samples": 500},
      "seed": 7
    }

A backend entry is either the name of a built-in sampler, an object
``{"backend": <built-in>, "backend_id": <str>, "chain": {...}}`` that runs a
built-in under another id with overridden chain settings, or an external
adapter ``{"backend_id": <str>, "command": [...], "timeout_seconds": <int>}``.
"""

from __future__ import annotations

import dataclasses
import json
import os
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

import jsonschema

from .. import __version__
from ..errors import ConfigError
from ..inference import BACKENDS, COMPATIBLE, ChainSettings
from ..models import MODEL_KINDS, ModelConfig

DEFAULT_BACKENDS = {
    "logistic_regression": ("rwm",),
    "robust_regression": ("rwm",),
    "crowdsourced_annotation": ("rwm",),
    "noisy_or_topic": ("rwm_within_gibbs", "relaxed_rwm"),
}
DEFAULT_TIMEOUT_SECONDS = 3600
DEFAULT_OUTPUT_DIR = "bayesbench-run"
SEED_MAX = 2**64 - 1


def load_schema(name: str) -> dict:
    """Load one of the JSON schemas shipped with the package."""
    text = resources.files(__package__).joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


@dataclass(frozen=True)
class BuiltinSpec:
    backend: str
    backend_id: str
    chain_overrides: dict = field(default_factory=dict)

    def settings(self, base: ChainSettings) -> ChainSettings:
        return dataclasses.replace(base, **self.chain_overrides)

    def to_dict(self) -> dict:
        out = {"backend": self.backend, "backend_id": self.backend_id}
        if self.chain_overrides:
            out["chain"] = dict(self.chain_overrides)
        return out


@dataclass(frozen=True)
class AdapterSpec:
    """External sampler reached through the samples-file protocol."""

    backend_id: str
    command: tuple
    timeout_seconds: int = DEFAULT_TIMEOUT_SECONDS

    def problems(self, where: str) -> list[str]:
        out = []
        if not self.command:
            out.append(f"{where}.command: must not be empty")
        if self.backend_id in BACKENDS:
            out.append(f"{where}.backend_id: {self.backend_id!r} is reserved for a built-in backend")
        if self.timeout_seconds < 1:
            out.append(f"{where}.timeout_seconds: must be a positive integer, got {self.timeout_seconds}")
        return out

    def to_dict(self) -> dict:
        return {"backend_id": self.backend_id, "command": list(self.command),
                "timeout_seconds": self.timeout_seconds}


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    backends: tuple = ()
    n_trials: int = 4
    chain: ChainSettings = ChainSettings()
    seed: int = 0
    include_warmup_in_plot: bool = False
    output_dir: str = DEFAULT_OUTPUT_DIR
    report_rhat: bool = True
    max_workers: int | None = None

    @property
    def backend_ids(self) -> list[str]:
        return [b.backend_id for b in self.backends]

    def problems(self) -> list[str]:
        out = list(self.model.problems())
        out += self.chain.problems()
        if self.n_trials < 1:
            out.append(f"n_trials: must be a positive integer, got {self.n_trials}")
        elif self.report_rhat and self.n_trials < 2:
            out.append("n_trials: R-hat needs at least 2 trials; set report_rhat to false "
                       "to run a single trial")
        if not 0 <= self.seed <= SEED_MAX:
            out.append(f"seed: must be a 64-bit unsigned integer, got {self.seed}")
        if self.max_workers is not None and self.max_workers < 1:
            out.append(f"max_workers: must be a positive integer, got {self.max_workers}")
        if not self.backends:
            out.append("backends: at least one backend is required")
        seen = set()
        for i, spec in enumerate(self.backends):
            where = f"backends[{i}]"
            if spec.backend_id in seen:
                out.append(f"{where}.backend_id: duplicate id {spec.backend_id!r}")
            seen.add(spec.backend_id)
            if isinstance(spec, AdapterSpec):
                out += spec.problems(where)
                continue
            if spec.backend not in BACKENDS:
                out.append(f"{where}: unknown backend {spec.backend!r}; "
                           f"choose from {', '.join(BACKENDS)}")
            elif self.model.model_kind in MODEL_KINDS \
                    and self.model.model_kind not in COMPATIBLE[spec.backend]:
                out.append(f"{where}: backend {spec.backend!r} cannot sample "
                           f"{self.model.model_kind!r}")
            if spec.chain_overrides:
                overridden = tuple(f"chain.{k}:" for k in spec.chain_overrides)
                out += [f"{where}.{p}" for p in spec.settings(self.chain).problems()
                        if p.startswith(overridden)]
        return out

    def to_dict(self) -> dict:
        """Fully resolved configuration, as echoed to ``config.json``."""
        chain = self.chain.to_dict()
        for private in ("seed", "keep_warmup"):
            chain.pop(private)
        out = {
            "model": self.model.resolved().to_dict(),
            "backends": [b.to_dict() for b in self.backends],
            "n_trials": self.n_trials,
            "report_rhat": self.report_rhat,
            "chain": chain,
            "seed": self.seed,
            "include_warmup_in_plot": self.include_warmup_in_plot,
            "output_dir": self.output_dir,
        }
        if self.max_workers is not None:
            out["max_workers"] = self.max_workers
        return out


def load_config(path) -> RunConfig:
    """Read, check and resolve a JSON run configuration.

    Raises
    ------
    ConfigError
        Missing file, invalid JSON (with line and column), unknown keys,
        wrong types or out-of-domain values. Every problem found is listed.
    """
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1] if exc.lineno <= len(text.splitlines()) else ""
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}",
                          [f"line {exc.lineno}: {line.strip()}"] if line.strip() else None) from None
    return config_from_dict(obj, source=path)


def _schema_problems(obj) -> tuple[list[str], list]:
    """Schema violations as messages, plus the paths of offending values."""
    validator = jsonschema.Draft202012Validator(load_schema("config"))
    out, bad_paths = [], []
    for err in sorted(validator.iter_errors(obj), key=lambda e: list(map(str, e.absolute_path))):
        path = list(err.absolute_path)
        where = _key_path(path) or "<root>"
        if err.validator == "additionalProperties":
            known = set(err.schema.get("properties", {}))
            for key in sorted(set(err.instance) - known):
                out.append(f"{_join(where, key)}: unknown key")
                bad_paths.append(path + [key])
            continue
        if err.validator == "oneOf" and path[:1] == ["backends"]:
            out.append(f"{where}: must be a built-in backend name, a built-in override "
                       "object with 'backend', or an adapter object with 'backend_id' and "
                       "'command'")
        else:
            out.append(f"{where}: {err.message}")
        bad_paths.append(path)
    return out, bad_paths


_DROPPED = object()


def _without(obj, paths):
    """Deep copy of ``obj`` with the values at ``paths`` removed."""
    obj = json.loads(json.dumps(obj))
    for path in sorted(paths, key=len, reverse=True):
        if not path:
            continue
        node = obj
        try:
            for key in path[:-1]:
                node = node[key]
            if isinstance(node, list):
                node[path[-1]] = _DROPPED
            else:
                node.pop(path[-1], None)
        except (KeyError, IndexError, TypeError):
            continue
    kept = []
    if isinstance(obj, dict) and isinstance(obj.get("backends"), list):
        kept = [i for i, b in enumerate(obj["backends"]) if b is not _DROPPED]
        obj["backends"] = [obj["backends"][i] for i in kept]
    return obj, kept


def _key_path(parts) -> str:
    s = ""
    for p in parts:
        s += f"[{p}]" if isinstance(p, int) else (f".{p}" if s else str(p))
    return s


def _join(where, key):
    return key if where == "<root>" else f"{where}.{key}"


def config_from_dict(obj: Any, source: str = "<config>") -> RunConfig:
    """Build a :class:`RunConfig` from parsed JSON, applying defaults.

    Schema violations (unknown keys, wrong types) and domain violations are
    collected together; the offending values are set aside so that the
    remaining keys can still be checked.
    """
    problems, bad_paths = _schema_problems(obj)
    clean, kept = _without(obj, bad_paths)
    if not isinstance(clean, dict) or not isinstance(clean.get("model"), dict) \
            or "model_kind" not in clean["model"]:
        raise ConfigError(f"{source}: invalid configuration", problems)
    cfg = _build(clean)
    reported = {p.split(":", 1)[0] for p in problems}
    for p in cfg.problems():
        # point backend messages back at the original list positions
        p = re.sub(r"^backends\[(\d+)\]", lambda m: f"backends[{kept[int(m.group(1))]}]", p)
        if p.split(":", 1)[0] not in reported:
            problems.append(p)
    if problems:
        raise ConfigError(f"{source}: invalid configuration", problems)
    return cfg


def _build(obj: dict) -> RunConfig:
    model = ModelConfig(**obj["model"])
    backends = []
    for entry in obj.get("backends", DEFAULT_BACKENDS.get(model.model_kind, ())):
        if isinstance(entry, str):
            backends.append(BuiltinSpec(entry, entry))
        elif "command" in entry:
            backends.append(AdapterSpec(entry["backend_id"], tuple(entry["command"]),
                                        entry.get("timeout_seconds", DEFAULT_TIMEOUT_SECONDS)))
        else:
            backends.append(BuiltinSpec(entry["backend"], entry.get("backend_id", entry["backend"]),
                                        dict(entry.get("chain", {}))))
    return RunConfig(
        model=model,
        backends=tuple(backends),
        n_trials=obj.get("n_trials", 4),
        chain=ChainSettings(**obj.get("chain", {})),
        seed=obj.get("seed", 0),
        include_warmup_in_plot=obj.get("include_warmup_in_plot", False),
        output_dir=obj.get("output_dir", DEFAULT_OUTPUT_DIR),
        report_rhat=obj.get("report_rhat", True),
        max_workers=obj.get("max_workers"),
    )


def echo_config(cfg: RunConfig) -> dict:
    out = cfg.to_dict()
    out["tool_version"] = __version__
    return out
