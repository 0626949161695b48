"""Noisy-or topic network: latent topics over observed words.

Nodes ``0 .. n_topics-1`` are topics, the following ``n_words`` nodes are
words. Every node has an always-on leak parent. Topic ``i`` may point to
topics with a larger index or to any word, so index order is a topological
order. Edge weights are kept in a dense ``(n_topics, n_nodes)`` matrix with
zeros where there is no edge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import distributions as dist
from ..errors import ParameterError
from .base import Dataset, Model, ModelInstance, ParamSpec

CHILDREN_RATE = 3.0
LEAK_RATE = 0.1
EDGE_RATE = 1.0


def activation_probability(leak_w, edge_ws, parent_states) -> float:
    """``1 - exp(-leak_w - sum(edge_ws * parent_states))``."""
    w = np.asarray(edge_ws, dtype=float)
    z = np.asarray(parent_states, dtype=float)
    if w.shape != z.shape:
        raise ParameterError(f"edge weights {w.shape} and parent states {z.shape} differ in shape")
    if leak_w < 0 or np.any(w < 0):
        raise ParameterError("noisy-or weights must be non-negative")
    return float(-np.expm1(-(leak_w + np.dot(w, z))))


def bernoulli_rate_loglik(values, rates):
    """Sum of ``log P(x)`` where ``P(x=1) = 1 - exp(-rate)``."""
    values = np.asarray(values)
    rates = np.asarray(rates, dtype=float)
    with np.errstate(divide="ignore"):
        on = np.log(-np.expm1(-rates))
    return float(np.sum(np.where(values == 1, on, -rates)))


@dataclass(frozen=True, eq=False)
class GraphStructure:
    n_topics: int
    n_words: int
    leak_weight: np.ndarray   # (n_nodes,)
    weights: np.ndarray       # (n_topics, n_nodes), 0 where no edge

    @property
    def n_nodes(self) -> int:
        return self.n_topics + self.n_words

    @property
    def node_role(self) -> list[str]:
        return ["topic"] * self.n_topics + ["word"] * self.n_words

    @property
    def parents(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.weights[:, j]) for j in range(self.n_nodes)]

    def __post_init__(self):
        kids = [np.flatnonzero(row) for row in self.weights]
        object.__setattr__(self, "_children", kids)
        object.__setattr__(self, "_child_weights", [self.weights[i, k] for i, k in enumerate(kids)])

    def children(self, topic: int) -> np.ndarray:
        return self._children[topic]

    def child_weights(self, topic: int) -> np.ndarray:
        return self._child_weights[topic]

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        src, dst = np.nonzero(self.weights)
        return [(int(i), int(j), float(self.weights[i, j])) for i, j in zip(src, dst)]

    def rates(self, z_topics) -> np.ndarray:
        """Per-node noisy-or rate ``leak + sum_i W_ij z_i``; ``z`` may be soft."""
        return self.leak_weight + np.asarray(z_topics, dtype=float) @ self.weights

    @classmethod
    def from_edges(cls, n_topics, n_words, leak_weight, edges):
        """Build from ``(parent_topic, child_node, weight)`` triples."""
        n = n_topics + n_words
        leak = np.asarray(leak_weight, dtype=float)
        if leak.shape != (n,) or np.any(leak <= 0):
            raise ParameterError("need one positive leak weight per node")
        w = np.zeros((n_topics, n))
        for i, j, wij in edges:
            if not (0 <= i < n_topics) or not (i < j < n):
                raise ParameterError(f"edge {i}->{j} breaks the topic ordering")
            if wij <= 0:
                raise ParameterError("edge weights must be positive")
            w[i, j] = wij
        return cls(n_topics, n_words, leak, w)

    def to_json(self) -> dict:
        return {
            "n_topics": self.n_topics,
            "n_words": self.n_words,
            "leak_weight": self.leak_weight.tolist(),
            "edges": [list(e) for e in self.edges],
        }

    @classmethod
    def from_json(cls, obj):
        return cls.from_edges(obj["n_topics"], obj["n_words"], obj["leak_weight"],
                              [(int(i), int(j), float(w)) for i, j, w in obj["edges"]])


def sample_structure(rng, n_topics, n_words) -> GraphStructure:
    n = n_topics + n_words
    gen = rng.derive("children").generator
    count_rng = rng.derive("counts")
    edge_rng = rng.derive("edge_weights")
    weights = np.zeros((n_topics, n))
    for i in range(n_topics):
        pool = np.arange(i + 1, n)
        count = min(dist.sample_poisson(count_rng, CHILDREN_RATE), pool.size)
        if count:
            kids = gen.choice(pool, size=count, replace=False)
            weights[i, kids] = dist.sample_exponential(edge_rng, EDGE_RATE, size=count)
    leak = dist.sample_exponential(rng.derive("leak"), LEAK_RATE, size=n)
    return GraphStructure(n_topics, n_words, leak, weights)


def sample_topics(structure: GraphStructure, rng) -> np.ndarray:
    """Draw topic states top-down in index order."""
    t = structure.n_topics
    u = dist.sample_uniform(rng, t)
    z = np.zeros(t, dtype=np.int64)
    for j in range(t):
        rate = structure.leak_weight[j] + z @ structure.weights[:, j]
        z[j] = int(u[j] < -np.expm1(-rate))
    return z


class NoisyOrTopic(Model):
    kind = "noisy_or_topic"
    config_keys = ("n_topics", "n_words")

    def layout(self, instance):
        return [ParamSpec("z_topics", (instance.config.n_topics,), "binary")]

    def instantiate(self, config, rng):
        config = config.resolved()
        structure = sample_structure(rng.derive("structure"), config.n_topics, config.n_words)
        z = sample_topics(structure, rng.derive("topics"))
        return ModelInstance(config, {"z_topics": z}, structure=structure)

    def simulate(self, instance, rng):
        s = instance.structure
        rates = s.rates(instance.ground_truth["z_topics"])[s.n_topics:]
        p = -np.expm1(-rates)

        def words(stream):
            return (dist.sample_uniform(stream, s.n_words) < p).astype(np.int64)

        return Dataset(train={"words": words(rng.derive("train"))},
                       test={"words": words(rng.derive("test"))})

    def sample_prior(self, instance, rng):
        return {"z_topics": sample_topics(instance.structure, rng)}

    def log_prior(self, instance, point):
        s = instance.structure
        z = np.asarray(point["z_topics"])
        return bernoulli_rate_loglik(z, s.rates(z)[:s.n_topics])

    def log_likelihood(self, instance, block, point):
        s = instance.structure
        rates = s.rates(point["z_topics"])[s.n_topics:]
        return bernoulli_rate_loglik(block["words"], rates)

    def block_from_json(self, obj):
        return {"words": np.asarray(obj["words"], dtype=np.int64)}

    def instance_to_json(self, instance):
        out = super().instance_to_json(instance)
        out["structure"] = instance.structure.to_json()
        return out

    def instance_from_json(self, config, obj):
        return ModelInstance(config, self.point_from_json(config, obj["ground_truth"]),
                             structure=GraphStructure.from_json(obj["structure"]))
