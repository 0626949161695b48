"""Shared types for the benchmark models."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, ClassVar

import numpy as np

from ..errors import ConfigError

MODEL_KINDS = (
    "logistic_regression",
    "robust_regression",
    "noisy_or_topic",
    "crowdsourced_annotation",
)

# A point in constrained parameter space: name -> numpy array (0-d for scalars).
ParamPoint = dict


@dataclass(frozen=True)
class ModelConfig:
    """Size and hyperparameters of one model; irrelevant fields are ignored.

    ``n_test=None`` resolves to the training size of the model
    (``n_train`` for regressions, ``n_items`` for crowdsourcing).
    """

    model_kind: str
    n_train: int = 20000
    n_test: int | None = None
    k_covariates: int = 10
    n_topics: int = 30
    n_words: int = 300
    n_items: int = 500
    n_labelers: int = 50
    n_categories: int = 3
    j_loc: float = 2.5
    gamma_conc: float = 10.0
    rho_correct: float = 0.5

    def problems(self) -> list[str]:
        out = []
        if self.model_kind not in MODEL_KINDS:
            out.append(f"model.model_kind: {self.model_kind!r} is not one of {', '.join(MODEL_KINDS)}")
        for name in ("n_train", "k_covariates", "n_topics", "n_words", "n_items", "n_labelers"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                out.append(f"model.{name}: must be a positive integer, got {v!r}")
        if self.n_test is not None and (isinstance(self.n_test, bool)
                                        or not isinstance(self.n_test, (int, np.integer))
                                        or self.n_test < 1):
            out.append(f"model.n_test: must be a positive integer, got {self.n_test!r}")
        c = self.n_categories
        if isinstance(c, bool) or not isinstance(c, (int, np.integer)) or c < 2:
            out.append(f"model.n_categories: must be an integer >= 2, got {c!r}")
        for name in ("j_loc", "gamma_conc"):
            v = getattr(self, name)
            if not _is_real(v) or not v > 0:
                out.append(f"model.{name}: must be a positive real, got {v!r}")
        r = self.rho_correct
        if not _is_real(r) or not 0.0 < r < 1.0:
            out.append(f"model.rho_correct: must lie in the open interval (0, 1), got {r!r}")
        return out

    def validate(self) -> "ModelConfig":
        problems = self.problems()
        if problems:
            raise ConfigError("invalid model configuration", problems)
        return self

    def resolved(self) -> "ModelConfig":
        if self.n_test is not None:
            return self
        n = self.n_items if self.model_kind == "crowdsourced_annotation" else self.n_train
        return dataclasses.replace(self, n_test=n)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _is_real(v) -> bool:
    return (isinstance(v, (int, float, np.integer, np.floating))
            and not isinstance(v, bool) and np.isfinite(v))


@dataclass(frozen=True)
class ParamSpec:
    """One named parameter block: ``kind`` is real, positive, simplex or binary.

    For ``simplex`` the last axis of ``shape`` is the simplex dimension.
    """

    name: str
    shape: tuple
    kind: str

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=int))

    @property
    def continuous(self) -> bool:
        return self.kind != "binary"

    @property
    def free_size(self) -> int:
        if self.kind == "simplex":
            return self.size // self.shape[-1] * (self.shape[-1] - 1)
        return self.size if self.continuous else 0


@dataclass(frozen=True)
class ModelInstance:
    config: ModelConfig
    ground_truth: dict
    structure: Any = None
    assignment: Any = None


@dataclass(frozen=True)
class Dataset:
    """Train/test observation blocks for one run.

    ``hidden`` keeps simulated latents that are part of the ground truth but
    must not be handed to inference (e.g. the true class of each item).
    """

    train: dict
    test: dict
    hidden: dict = field(default_factory=dict)


def check_support(layout, point, tol=1e-9) -> str | None:
    """Return a description of the first violated constraint, or ``None``."""
    for spec in layout:
        if spec.name not in point:
            return f"{spec.name}: missing"
        v = np.asarray(point[spec.name], dtype=float)
        if v.shape != spec.shape:
            return f"{spec.name}: shape {v.shape} != {spec.shape}"
        bad = _violation(spec, v, tol)
        if bad is not None:
            return bad
    return None


def _violation(spec, v, tol):
    if spec.kind == "binary":
        idx = _argwhere((v != 0) & (v != 1))
    elif not np.all(np.isfinite(v)):
        idx = _argwhere(~np.isfinite(v))
    elif spec.kind == "positive":
        idx = _argwhere(v <= 0)
    elif spec.kind == "simplex":
        idx = _argwhere(v < 0)
        if not len(idx):
            off = np.abs(v.sum(axis=-1) - 1.0) > tol
            if np.any(off):
                row = np.argwhere(off)[0] if off.ndim else ()
                return f"{spec.name}{_fmt_index(row)}: simplex row does not sum to 1"
    else:
        return None
    if len(idx):
        return f"{spec.name}{_fmt_index(idx[0])}: violates {spec.kind} constraint"
    return None


def _argwhere(mask):
    """``np.argwhere`` that also reports a true 0-d mask (as an empty index)."""
    mask = np.asarray(mask)
    if mask.ndim == 0:
        return np.zeros((1, 0), dtype=int) if mask else np.zeros((0, 0), dtype=int)
    return np.argwhere(mask)


def _fmt_index(idx) -> str:
    return "".join(f"[{int(i)}]" for i in idx)


def flatten_names(spec: ParamSpec) -> list[str]:
    """Scalar coordinate names, e.g. ``beta[3]`` or ``theta[2][1][0]``."""
    if spec.shape == ():
        return [spec.name]
    return [spec.name + _fmt_index(ix) for ix in np.ndindex(*spec.shape)]


class Model:
    """Interface every benchmark model implements.

    Observation blocks are plain dicts of numpy arrays; their keys are model
    specific. Parameter points are dicts keyed by the names in :meth:`layout`.
    """

    kind: ClassVar[str]
    config_keys: ClassVar[tuple] = ()   # ModelConfig fields this model reads

    def layout(self, instance: ModelInstance) -> list[ParamSpec]:
        raise NotImplementedError

    def instantiate(self, config: ModelConfig, rng) -> ModelInstance:
        raise NotImplementedError

    def simulate(self, instance: ModelInstance, rng) -> Dataset:
        raise NotImplementedError

    def sample_prior(self, instance: ModelInstance, rng) -> ParamPoint:
        raise NotImplementedError

    def log_prior(self, instance: ModelInstance, point: ParamPoint) -> float:
        raise NotImplementedError

    def log_likelihood(self, instance: ModelInstance, block: dict, point: ParamPoint) -> float:
        raise NotImplementedError

    # -- JSON round trip for dataset.json --------------------------------------
    def block_to_json(self, block: dict) -> dict:
        return {k: np.asarray(v).tolist() for k, v in block.items()}

    def block_from_json(self, obj: dict) -> dict:
        raise NotImplementedError

    def instance_to_json(self, instance: ModelInstance) -> dict:
        return {"ground_truth": point_to_json(instance.ground_truth)}

    def instance_from_json(self, config: ModelConfig, obj: dict) -> ModelInstance:
        return ModelInstance(config, self.point_from_json(config, obj["ground_truth"]))

    def point_from_json(self, config: ModelConfig, obj: dict) -> ParamPoint:
        lay = self.layout(ModelInstance(config, {}))
        return {s.name: np.asarray(obj[s.name], dtype=np.int64 if s.kind == "binary" else float)
                for s in lay}


def point_to_json(point: ParamPoint) -> dict:
    return {k: np.asarray(v).tolist() for k, v in point.items()}
