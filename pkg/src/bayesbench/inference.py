"""Built-in posterior samplers and the single-chain runner.

Backends
--------
``rwm``
    Adaptive random-walk Metropolis on the unconstrained continuous
    parameters (regressions, crowdsourcing with classes summed out).
``rwm_within_gibbs``
    Noisy-or only. The topic states are binary, so each iteration is one
    systematic-scan Gibbs sweep; there are no continuous coordinates left
    for the random-walk part.
``relaxed_rwm``
    Noisy-or only. Each topic is replaced by a binary Concrete
    (Gumbel-softmax) variable; the chain moves the per-topic logit
    ``log(X_true / X_false)`` with adaptive random-walk Metropolis and reports
    hard states ``logit > 0``.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logsumexp

from . import distributions as dist
from . import models
from .distributions import RngStream
from .errors import ConfigError, InitializationError, ParameterError
from .models.noisy_or import bernoulli_rate_loglik

BACKENDS = ("rwm", "rwm_within_gibbs", "relaxed_rwm")
COMPATIBLE = {
    "rwm": ("logistic_regression", "robust_regression", "crowdsourced_annotation"),
    "rwm_within_gibbs": ("noisy_or_topic",),
    "relaxed_rwm": ("noisy_or_topic",),
}
MAX_INIT_ATTEMPTS = 100
ADAPT_EXPONENT = 0.6


@dataclass(frozen=True)
class ChainSettings:
    n_warmup: int = 1000
    n_samples: int = 1000
    target_accept: float = 0.35
    init_scale: float = 0.1
    temperature: float = 0.1
    seed: int = 0
    keep_warmup: bool = False
    init_optimize_evals: int = 1000

    def problems(self) -> list[str]:
        out = []
        if not _is_int(self.n_warmup) or self.n_warmup < 0:
            out.append(f"chain.n_warmup: must be a non-negative integer, got {self.n_warmup!r}")
        if not _is_int(self.n_samples) or self.n_samples < 1:
            out.append(f"chain.n_samples: must be a positive integer, got {self.n_samples!r}")
        if not _is_num(self.target_accept) or not 0.0 < self.target_accept < 1.0:
            out.append(f"chain.target_accept: must lie in the open interval (0, 1), got {self.target_accept!r}")
        if not _is_int(self.init_optimize_evals) or self.init_optimize_evals < 0:
            out.append("chain.init_optimize_evals: must be a non-negative integer, "
                       f"got {self.init_optimize_evals!r}")
        for name in ("init_scale", "temperature"):
            v = getattr(self, name)
            if not _is_num(v) or not v > 0:
                out.append(f"chain.{name}: must be a positive real, got {v!r}")
        return out

    def to_dict(self):
        return dataclasses.asdict(self)


def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


@dataclass
class Chain:
    """Post-warmup draws of one trial in constrained space.

    ``samples`` maps each parameter name to an array whose leading axis is
    the draw index.
    """

    samples: dict
    accept_rate: float
    inference_seconds: float
    backend_id: str
    warmup_samples: dict | None = None
    timing_source: str = "wall_clock"

    def __len__(self):
        return len(next(iter(self.samples.values()))) if self.samples else 0

    def point(self, i: int) -> dict:
        return {k: v[i] for k, v in self.samples.items()}

    def points(self):
        return (self.point(i) for i in range(len(self)))

    def warmup_points(self):
        if not self.warmup_samples:
            return iter(())
        n = len(next(iter(self.warmup_samples.values())))
        return ({k: v[i] for k, v in self.warmup_samples.items()} for i in range(n))


# -- random-walk Metropolis ------------------------------------------------------

def _metropolis(target, state, log_p, scale, rng, chol=None):
    eps = rng.generator.standard_normal(state.shape)
    if chol is not None:
        eps = chol @ eps
    proposal = state + scale * eps
    log_q = target(proposal)
    log_u = math.log(dist.sample_uniform(rng))
    if log_q == -np.inf or np.isnan(log_q) or not log_u < log_q - log_p:
        return state, log_p, False
    return proposal, log_q, True


def rwm_step(target: Callable, state, scale: float, rng: RngStream, chol=None):
    """One Metropolis step with a Gaussian random-walk proposal.

    The proposal is ``state + scale * eps`` with ``eps`` standard normal, or
    ``state + scale * chol @ eps`` when a Cholesky factor is supplied.
    Returns ``(new_state, accepted)``; on rejection ``new_state is state``.
    """
    state = np.asarray(state, dtype=float)
    log_p = target(state)
    if not np.isfinite(log_p):
        raise InitializationError("target density is not finite at the current state")
    new_state, _, accepted = _metropolis(target, state, log_p, scale, rng, chol)
    return new_state, accepted


def adapt_scale(scale: float, accepted: bool, step_index: int, target_accept: float) -> float:
    """Robbins-Monro update of the proposal scale on the log scale."""
    gain = step_index ** -ADAPT_EXPONENT
    return scale * math.exp(gain * (float(accepted) - target_accept))


def warmup_windows(n_warmup: int, min_size: int = 10):
    """Covariance-estimation windows ``[(start, end), ...]`` inside warmup.

    The first 40% of warmup only tunes the scale, because draws from the
    transient toward the typical set give a misleading covariance. The span
    up to 90% is cut into two windows of relative length 1:2; the last 10%
    re-tunes the scale for the final proposal.
    """
    start = int(0.4 * n_warmup)
    stop = n_warmup - int(0.1 * n_warmup)
    if stop - start < 3 * min_size:
        return []
    mid = start + (stop - start) // 3
    return [(start, mid), (mid, stop)]


def _regularised_cholesky(samples):
    n, d = samples.shape
    cov = np.atleast_2d(np.cov(samples, rowvar=False))
    cov = (n / (n + 5.0)) * cov + 1e-3 * (5.0 / (n + 5.0)) * np.eye(d)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return np.diag(np.sqrt(np.maximum(np.diag(cov), 1e-12)))


def run_rwm(target, init, settings: ChainSettings, rng: RngStream):
    """Adaptive warmup followed by frozen-proposal sampling.

    During warmup the log-scale follows a Robbins-Monro recursion toward
    ``settings.target_accept``. At the end of each window from
    :func:`warmup_windows` the proposal covariance is replaced by the
    (regularised) covariance of that window's draws, the scale is reset to
    ``2.38 / sqrt(d)`` and the recursion restarts from step one.

    Returns ``(warmup_states, states, accept_rate, seconds)`` with states as
    2-d arrays of unconstrained vectors.
    """
    state = np.asarray(init, dtype=float)
    log_p = target(state)
    if not np.isfinite(log_p):
        raise InitializationError("target density is not finite at the initial state")
    d = state.size
    scale = settings.init_scale
    chol = None
    ends = {end: start for start, end in warmup_windows(settings.n_warmup)} if d else {}
    warm = np.empty((settings.n_warmup, d))
    draws = np.empty((settings.n_samples, d))
    n_acc = 0
    step = 0
    t0 = time.perf_counter()
    for i in range(settings.n_warmup):
        state, log_p, acc = _metropolis(target, state, log_p, scale, rng, chol)
        step += 1
        scale = adapt_scale(scale, acc, step, settings.target_accept)
        warm[i] = state
        if i + 1 in ends:
            chol = _regularised_cholesky(warm[ends[i + 1]:i + 1])
            scale = 2.38 / math.sqrt(d)
            step = 0
    for i in range(settings.n_samples):
        state, log_p, acc = _metropolis(target, state, log_p, scale, rng, chol)
        n_acc += acc
        draws[i] = state
    seconds = time.perf_counter() - t0
    return warm, draws, n_acc / settings.n_samples, seconds


# -- noisy-or Gibbs ------------------------------------------------------------------

def _node_values(instance, train, z):
    return np.concatenate([np.asarray(z, dtype=np.int64), np.asarray(train["words"], dtype=np.int64)])


def _local_logits(structure, values, rates, j):
    """Log-probabilities of ``Z_j = 0`` and ``Z_j = 1`` from the factors touching j."""
    kids = structure.children(j)
    w = structure.child_weights(j)
    base = rates[kids] - w * values[j]
    on = values[kids] == 1
    r = rates[j]
    own_on = math.log(-math.expm1(-r)) if r > 0 else -math.inf
    with np.errstate(divide="ignore"):
        lp0 = -r + float(np.sum(np.where(on, np.log(-np.expm1(-base)), -base)))
        hi = base + w
        lp1 = own_on + float(np.sum(np.where(on, np.log(-np.expm1(-hi)), -hi)))
    return lp0, lp1


def _prob_one(lp0, lp1):
    if lp1 == -math.inf:
        return 0.0
    d = lp0 - lp1
    return 1.0 / (1.0 + math.exp(d)) if d < 700 else 0.0


def topic_conditional(instance, train, point, j: int) -> float:
    """``P(Z_j = 1 | everything else)`` computed from local factors only."""
    s = instance.structure
    values = _node_values(instance, train, point["z_topics"])
    rates = s.rates(values[:s.n_topics])
    return _prob_one(*_local_logits(s, values, rates, j))


def gibbs_flip_step(instance, train, point, rng: RngStream) -> dict:
    """One systematic-scan Gibbs sweep over all topics, in index order."""
    s = instance.structure
    values = _node_values(instance, train, point["z_topics"])
    rates = s.rates(values[:s.n_topics])
    u = dist.sample_uniform(rng, s.n_topics)
    for j in range(s.n_topics):
        new = int(u[j] < _prob_one(*_local_logits(s, values, rates, j)))
        if new != values[j]:
            rates += (new - values[j]) * s.weights[j]
            values[j] = new
    return {"z_topics": values[:s.n_topics].copy()}


# -- Gumbel-softmax relaxation ---------------------------------------------------------

def gumbel_softmax_relax(log_alpha, tau: float, gumbels) -> np.ndarray:
    """Concrete sample ``softmax((log_alpha + gumbels) / tau)``."""
    if not tau > 0:
        raise ParameterError(f"temperature must be > 0, got {tau}")
    logits = (np.asarray(log_alpha, dtype=float) + np.asarray(gumbels, dtype=float)) / tau
    return np.exp(logits - logsumexp(logits, axis=-1, keepdims=True))


def _log_expm1(x):
    """``log(exp(x) - 1)`` for ``x > 0``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(x > 30.0, x + np.log1p(-np.exp(-x)), np.log(np.expm1(x)))


def relaxed_log_density(instance, train, logits, tau: float) -> float:
    """Log density of the relaxed noisy-or over per-topic Concrete logits.

    Topic ``j`` has soft state ``sigmoid(logits[j])``; parents enter the
    noisy-or rate through their soft states. In logit coordinates a binary
    Concrete variable with odds ``a`` has density
    ``tau * sigmoid(u) * sigmoid(-u)`` with ``u = tau * logit - log(a)``.
    """
    s = instance.structure
    soft = expit(logits)
    rates = s.rates(soft)
    # odds of activation: (1 - exp(-r)) / exp(-r) = expm1(r)
    u = tau * logits - _log_expm1(rates[:s.n_topics])
    prior = np.sum(math.log(tau) + dist.log_sigmoid(u) + dist.log_sigmoid(-u))
    return float(prior + bernoulli_rate_loglik(train["words"], rates[s.n_topics:]))


def sample_relaxed_prior(instance, tau: float, rng: RngStream) -> np.ndarray:
    """Draw Concrete logits top-down, each from its parents' soft states."""
    s = instance.structure
    t = s.n_topics
    logits = np.zeros(t)
    soft = np.zeros(t)
    g = dist.sample_gumbel(rng, (t, 2))
    for j in range(t):
        rate = s.leak_weight[j] + soft @ s.weights[:, j]
        log_alpha = np.array([math.log(-math.expm1(-rate)), -rate])
        logits[j] = (log_alpha[0] + g[j, 0] - log_alpha[1] - g[j, 1]) / tau
        soft[j] = gumbel_softmax_relax(log_alpha, tau, g[j])[0]
    return logits


# -- chain runner -----------------------------------------------------------------------

def run_chain(instance, dataset, backend: str, settings: ChainSettings | None = None,
              rng: RngStream | None = None) -> Chain:
    """Run one single-threaded chain and return its post-warmup draws."""
    settings = settings or ChainSettings()
    problems = settings.problems()
    if problems:
        raise ConfigError("invalid chain settings", problems)
    kind = instance.config.model_kind
    if backend not in COMPATIBLE:
        raise ConfigError(f"unknown backend {backend!r}; choose from {', '.join(BACKENDS)}")
    if kind not in COMPATIBLE[backend]:
        raise ConfigError(f"backend {backend!r} cannot sample model {kind!r}")
    rng = rng or RngStream(settings.seed)
    runner = {"rwm": _run_rwm, "rwm_within_gibbs": _run_gibbs, "relaxed_rwm": _run_relaxed}[backend]
    return runner(instance, dataset.train, settings, rng, backend)


def _stack(points, names):
    return {k: np.stack([p[k] for p in points]) if points else np.zeros((0,)) for k in names}


def polish_start(target, init, max_evals: int):
    """Move a prior draw uphill with Powell's derivative-free method.

    Random-walk proposals gain only a few nats per step, so a start tens of
    thousands of nats below the typical set (common for the regressions)
    would not be left within a short warmup. The budget bounds the cost;
    whatever point is reached is returned if it improves on ``init``.
    """
    if max_evals <= 0 or init.size == 0:
        return init

    def loss(v):
        val = target(v)
        return -val if np.isfinite(val) else np.inf

    with np.errstate(all="ignore"):
        res = minimize(loss, init, method="Powell",
                       options={"maxfev": int(max_evals), "xtol": 1e-4, "ftol": 1e-10})
    if np.all(np.isfinite(res.x)) and np.isfinite(res.fun) and res.fun < loss(init):
        return np.asarray(res.x, dtype=float)
    return init


def _run_rwm(instance, train, settings, rng, backend):
    model = models.get_model(instance)
    lay = model.layout(instance)

    def target(v):
        point, log_jac = models.transforms.from_unconstrained(lay, v)
        lj = models.log_joint(instance, train, point)
        return lj + log_jac if lj > -np.inf else -np.inf

    init = None
    for attempt in range(MAX_INIT_ATTEMPTS):
        v = models.transforms.to_unconstrained(lay, model.sample_prior(instance, rng.derive("init").derive(attempt)))
        if np.isfinite(target(v)):
            init = v
            break
    if init is None:
        raise InitializationError(f"no finite starting point after {MAX_INIT_ATTEMPTS} prior draws")

    t0 = time.perf_counter()
    init = polish_start(target, init, settings.init_optimize_evals)
    polish_secs = time.perf_counter() - t0
    warm, draws, acc, secs = run_rwm(target, init, settings, rng.derive("mcmc"))
    secs += polish_secs

    def constrained(rows):
        pts = [models.transforms.from_unconstrained(lay, r)[0] for r in rows]
        return _stack(pts, [s.name for s in lay])

    return Chain(constrained(draws), acc, secs, backend,
                 constrained(warm) if settings.keep_warmup else None)


def _run_gibbs(instance, train, settings, rng, backend):
    model = models.get_model(instance)
    point = model.sample_prior(instance, rng.derive("init"))
    sweep_rng = rng.derive("mcmc")
    warm, draws = [], []
    t0 = time.perf_counter()
    for _ in range(settings.n_warmup):
        point = gibbs_flip_step(instance, train, point, sweep_rng)
        warm.append(point)
    for _ in range(settings.n_samples):
        point = gibbs_flip_step(instance, train, point, sweep_rng)
        draws.append(point)
    secs = time.perf_counter() - t0
    return Chain(_stack(draws, ["z_topics"]), 1.0, secs, backend,
                 _stack(warm, ["z_topics"]) if settings.keep_warmup else None)


def _run_relaxed(instance, train, settings, rng, backend):
    tau = settings.temperature

    def target(v):
        return relaxed_log_density(instance, train, v, tau)

    init = None
    for attempt in range(MAX_INIT_ATTEMPTS):
        v = sample_relaxed_prior(instance, tau, rng.derive("init").derive(attempt))
        if np.isfinite(target(v)):
            init = v
            break
    if init is None:
        raise InitializationError(f"no finite starting point after {MAX_INIT_ATTEMPTS} prior draws")

    warm, draws, acc, secs = run_rwm(target, init, settings, rng.derive("mcmc"))

    def hard(rows):
        return {"z_topics": (rows > 0).astype(np.int64)}

    return Chain(hard(draws), acc, secs, backend, hard(warm) if settings.keep_warmup else None)
