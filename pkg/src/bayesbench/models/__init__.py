"""The four benchmark models behind one functional interface."""

from __future__ import annotations

import numpy as np

from . import transforms
from .base import (
    MODEL_KINDS,
    Dataset,
    Model,
    ModelConfig,
    ModelInstance,
    ParamSpec,
    check_support,
    flatten_names,
    point_to_json,
)
from .crowd import CrowdsourcedAnnotation, build_alpha_matrix, collapsed_item_loglik
from .noisy_or import GraphStructure, NoisyOrTopic, activation_probability
from .regression import LogisticRegression, RobustRegression
from ..errors import ConfigError

MODELS: dict[str, Model] = {
    m.kind: m
    for m in (LogisticRegression(), RobustRegression(), NoisyOrTopic(), CrowdsourcedAnnotation())
}

__all__ = [
    "MODEL_KINDS", "MODELS", "Dataset", "GraphStructure", "ModelConfig", "ModelInstance",
    "ParamSpec", "activation_probability", "build_alpha_matrix", "check_support",
    "collapsed_item_loglik", "flatten_names", "from_unconstrained", "get_model",
    "instantiate", "layout", "log_joint", "point_to_json", "simulate", "test_pred_loglik",
    "to_unconstrained",
]


def get_model(kind_or_instance) -> Model:
    kind = getattr(getattr(kind_or_instance, "config", None), "model_kind", kind_or_instance)
    try:
        return MODELS[kind]
    except KeyError:
        raise ConfigError(f"unknown model kind {kind!r}") from None


def instantiate(config: ModelConfig, rng) -> ModelInstance:
    config.validate()
    return get_model(config.model_kind).instantiate(config, rng)


def simulate(instance: ModelInstance, rng) -> Dataset:
    return get_model(instance).simulate(instance, rng)


def layout(instance: ModelInstance) -> list[ParamSpec]:
    return get_model(instance).layout(instance)


def log_joint(instance: ModelInstance, train: dict, point: dict) -> float:
    """Unnormalised log posterior; ``-inf`` when ``point`` is off the support."""
    model = get_model(instance)
    if check_support(model.layout(instance), point) is not None:
        return -np.inf
    lp = model.log_prior(instance, point)
    if not np.isfinite(lp):
        return -np.inf
    out = lp + model.log_likelihood(instance, train, point)
    return float(out) if not np.isnan(out) else -np.inf


def test_pred_loglik(instance: ModelInstance, test: dict, point: dict) -> float:
    """``log P(test | point)``; ``-inf`` when ``point`` is off the support."""
    model = get_model(instance)
    if check_support(model.layout(instance), point) is not None:
        return -np.inf
    out = model.log_likelihood(instance, test, point)
    return float(out) if not np.isnan(out) else -np.inf


test_pred_loglik.__test__ = False  # keep pytest from collecting it by name


def to_unconstrained(instance: ModelInstance, point: dict) -> np.ndarray:
    return transforms.to_unconstrained(layout(instance), point)


def from_unconstrained(instance: ModelInstance, vector, discrete=None):
    return transforms.from_unconstrained(layout(instance), vector, discrete)
