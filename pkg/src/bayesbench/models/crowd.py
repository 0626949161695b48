"""Crowdsourced annotation model with per-labeler confusion matrices.

The true class of each item is summed out of the likelihood, so the sampled
state is only the class prevalence ``pi`` (C,) and the confusion tensor
``theta`` (labelers, C, C) where ``theta[l, m, n]`` is the probability that
labeler ``l`` reports class ``n`` for an item of class ``m``.

An observation block stores the labels flat: ``item``, ``labeler`` and
``label`` arrays of equal length plus ``n_items``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .. import distributions as dist
from ..errors import InputError, ParameterError
from .base import Dataset, Model, ModelInstance, ParamSpec

MAX_SIZE_REDRAWS = 1000


def build_alpha_matrix(n_categories: int, gamma_conc: float, rho_correct: float) -> np.ndarray:
    """Dirichlet parameters for each confusion row: ``gamma*rho`` on the diagonal,
    ``gamma*(1-rho)/(C-1)`` elsewhere. Row ``m`` belongs to true class ``m``."""
    c = int(n_categories)
    if c < 2:
        raise ParameterError("need at least two categories")
    if not gamma_conc > 0:
        raise ParameterError("gamma_conc must be > 0")
    if not 0.0 < rho_correct < 1.0:
        raise ParameterError(f"rho_correct must lie in (0, 1), got {rho_correct}")
    off = gamma_conc * (1.0 - rho_correct) / (c - 1)
    alpha = np.full((c, c), off)
    np.fill_diagonal(alpha, gamma_conc * rho_correct)
    return alpha


def collapsed_item_loglik(pi, theta, labels) -> float:
    """``log sum_m pi[m] * prod_{(l, y) in labels} theta[l, m, y]``."""
    labels = list(labels)
    if not labels:
        raise InputError("item has no labels")
    with np.errstate(divide="ignore"):
        acc = np.log(np.asarray(pi, dtype=float))
        log_theta = np.log(np.asarray(theta, dtype=float))
    for l, y in labels:
        acc = acc + log_theta[l, :, y]
    return float(logsumexp(acc))


def item_logliks(pi, theta, block) -> np.ndarray:
    """Collapsed log-likelihood of every item in ``block`` (vectorised)."""
    n = int(block["n_items"])
    c = len(pi)
    with np.errstate(divide="ignore"):
        per_label = np.log(np.asarray(theta)[block["labeler"], :, block["label"]])
        log_pi = np.log(np.asarray(pi, dtype=float))
    sums = np.empty((n, c))
    for m in range(c):
        sums[:, m] = np.bincount(block["item"], weights=per_label[:, m], minlength=n)
    return logsumexp(sums + log_pi, axis=1)


@dataclass(frozen=True)
class LabelerAssignment:
    train: list   # per train item, array of distinct labeler ids
    test: list

    def to_json(self):
        return {"train": [a.tolist() for a in self.train], "test": [a.tolist() for a in self.test]}


def sample_assignment(rng, n_items, n_labelers, j_loc) -> list[np.ndarray]:
    size_rng = rng.derive("sizes")
    gen = rng.derive("labelers").generator
    out = []
    for _ in range(n_items):
        for _ in range(MAX_SIZE_REDRAWS):
            k = dist.sample_poisson(size_rng, j_loc)
            if 1 <= k <= n_labelers:
                break
        else:
            k = min(max(k, 1), n_labelers)
        out.append(np.sort(gen.choice(n_labelers, size=k, replace=False)).astype(np.int64))
    return out


def _flatten(assign, labels):
    lengths = np.array([len(a) for a in assign], dtype=np.int64)
    return {
        "n_items": len(assign),
        "item": np.repeat(np.arange(len(assign), dtype=np.int64), lengths),
        "labeler": np.concatenate(assign) if assign else np.zeros(0, np.int64),
        "label": np.asarray(labels, dtype=np.int64),
    }


class CrowdsourcedAnnotation(Model):
    kind = "crowdsourced_annotation"
    config_keys = ("n_items", "n_test", "n_labelers", "n_categories", "j_loc", "gamma_conc",
                   "rho_correct")

    def layout(self, instance):
        cfg = instance.config
        c = cfg.n_categories
        return [ParamSpec("pi", (c,), "simplex"),
                ParamSpec("theta", (cfg.n_labelers, c, c), "simplex")]

    @staticmethod
    def alpha(instance):
        cfg = instance.config
        return build_alpha_matrix(cfg.n_categories, cfg.gamma_conc, cfg.rho_correct)

    def sample_prior(self, instance, rng):
        cfg = instance.config
        c = cfg.n_categories
        alpha = self.alpha(instance)
        pi = dist.sample_dirichlet(rng.derive("pi"), np.full(c, 1.0 / c))
        theta = dist.sample_dirichlet(rng.derive("theta"),
                                      np.broadcast_to(alpha, (cfg.n_labelers, c, c)))
        return {"pi": pi, "theta": theta}

    def instantiate(self, config, rng):
        config = config.resolved()
        stub = ModelInstance(config, {})
        truth = self.sample_prior(stub, rng.derive("params"))
        assignment = LabelerAssignment(
            train=sample_assignment(rng.derive("assign_train"), config.n_items,
                                    config.n_labelers, config.j_loc),
            test=sample_assignment(rng.derive("assign_test"), config.n_test,
                                   config.n_labelers, config.j_loc),
        )
        return ModelInstance(config, truth, assignment=assignment)

    def simulate(self, instance, rng):
        gt = instance.ground_truth
        blocks, hidden = {}, {}
        for part in ("train", "test"):
            stream = rng.derive(part)
            assign = getattr(instance.assignment, part)
            z = dist.sample_categorical(stream.derive("z"), gt["pi"], size=len(assign))
            z = np.atleast_1d(np.asarray(z, dtype=np.int64))
            flat = _flatten(assign, [])
            rows = gt["theta"][flat["labeler"], z[flat["item"]]]
            flat["label"] = np.asarray(
                dist.sample_categorical(stream.derive("y"), rows), dtype=np.int64) if len(rows) \
                else np.zeros(0, np.int64)
            blocks[part] = flat
            hidden[f"z_{part}"] = z
        return Dataset(train=blocks["train"], test=blocks["test"], hidden=hidden)

    def log_prior(self, instance, point):
        c = instance.config.n_categories
        lp = dist.log_pdf_dirichlet(point["pi"], np.full(c, 1.0 / c))
        lp += np.sum(dist.log_pdf_dirichlet(point["theta"], self.alpha(instance)))
        return float(lp)

    def log_likelihood(self, instance, block, point):
        return float(np.sum(item_logliks(point["pi"], point["theta"], block)))

    def block_to_json(self, block):
        starts = np.searchsorted(block["item"], np.arange(block["n_items"] + 1))
        return {
            "J": [block["labeler"][a:b].tolist() for a, b in zip(starts[:-1], starts[1:])],
            "y": [block["label"][a:b].tolist() for a, b in zip(starts[:-1], starts[1:])],
        }

    def block_from_json(self, obj):
        assign = [np.asarray(a, dtype=np.int64) for a in obj["J"]]
        labels = [y for row in obj["y"] for y in row]
        if any(len(a) != len(y) for a, y in zip(assign, obj["y"])) or len(assign) != len(obj["y"]):
            raise InputError("J and y must have matching ragged shapes")
        return _flatten(assign, labels)

    def instance_to_json(self, instance):
        out = super().instance_to_json(instance)
        out["alpha"] = self.alpha(instance).tolist()
        out["assignment"] = instance.assignment.to_json()
        return out

    def instance_from_json(self, config, obj):
        a = obj["assignment"]
        assignment = LabelerAssignment(
            train=[np.asarray(x, dtype=np.int64) for x in a["train"]],
            test=[np.asarray(x, dtype=np.int64) for x in a["test"]],
        )
        return ModelInstance(config, self.point_from_json(config, obj["ground_truth"]),
                             assignment=assignment)


def labels_of_item(block, i) -> list[tuple[int, int]]:
    mask = block["item"] == i
    return list(zip(block["labeler"][mask].tolist(), block["label"][mask].tolist()))
