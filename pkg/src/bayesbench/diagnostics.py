"""Convergence and efficiency metrics computed from stored chains.

Trials are treated as independent chains: R-hat and ESS are computed across
trials for every scalar coordinate of every queried parameter.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from . import models
from .errors import DegenerateVarianceError, InputError

ESS_CAP = 1.5
DEGENERATE = "degenerate_variance"
SINGLE_TRIAL = "rhat_needs_two_trials"
TOO_SHORT = "too_few_draws"


# -- predictive log likelihood ---------------------------------------------------------

def pll_at_n(test_logliks, n: int) -> float:
    """``log(mean(exp(test_logliks[:n])))``."""
    x = np.asarray(test_logliks, dtype=float)
    if n < 1:
        raise InputError("n must be at least 1")
    if n > x.size:
        raise InputError(f"need {n} log-likelihoods, got {x.size}")
    return float(logsumexp(x[:n]) - math.log(n))


def running_pll(test_logliks) -> np.ndarray:
    """``pll_at_n`` for every prefix length at once."""
    x = np.asarray(test_logliks, dtype=float)
    return np.logaddexp.accumulate(x) - np.log(np.arange(1, x.size + 1))


@dataclass
class PllCurve:
    """Per draw index: min, mean and max of PLL(n) across trials.

    When ``n_warmup`` > 0 the first ``n_warmup`` indices come from warmup.
    """

    backend_id: str
    pll_min: np.ndarray
    pll_mean: np.ndarray
    pll_max: np.ndarray
    n_warmup: int = 0

    def __len__(self):
        return len(self.pll_mean)

    def rows(self):
        for i in range(len(self)):
            yield (self.backend_id, i + 1, float(self.pll_min[i]),
                   float(self.pll_mean[i]), float(self.pll_max[i]))


def curve_from_logliks(backend_id: str, logliks: Sequence, n_warmup: int = 0) -> PllCurve:
    """Aggregate per-trial log-likelihood sequences into a :class:`PllCurve`."""
    if not len(logliks):
        raise InputError("need at least one trial")
    lengths = {len(x) for x in logliks}
    if len(lengths) != 1:
        raise InputError(f"trials have different numbers of draws: {sorted(lengths)}")
    curves = np.vstack([running_pll(x) for x in logliks])
    with np.errstate(invalid="ignore"):
        mean = curves.mean(axis=0)
    mean = np.where(np.all(curves == -np.inf, axis=0), -np.inf, mean)
    return PllCurve(backend_id, curves.min(axis=0), mean, curves.max(axis=0), n_warmup)


def chain_test_logliks(chain, instance, test, include_warmup=False) -> np.ndarray:
    pts = list(chain.warmup_points()) if include_warmup else []
    pts += list(chain.points())
    return np.array([models.test_pred_loglik(instance, test, p) for p in pts])


def pll_curve(chains, instance, test, include_warmup=False) -> PllCurve:
    """PLL-versus-draws curve over a list of trials of one backend."""
    if not chains:
        raise InputError("need at least one chain")
    if len({len(c) for c in chains}) != 1:
        raise InputError("chains have different lengths")
    n_warm = 0
    if include_warmup:
        counts = {sum(1 for _ in c.warmup_points()) for c in chains}
        n_warm = counts.pop() if len(counts) == 1 else 0
        include_warmup = n_warm > 0
    logliks = [chain_test_logliks(c, instance, test, include_warmup) for c in chains]
    return curve_from_logliks(chains[0].backend_id, logliks, n_warm)


# -- R-hat / ESS -----------------------------------------------------------------------

def _as_chains(chains) -> np.ndarray:
    arrs = [np.asarray(c, dtype=float).ravel() for c in chains]
    if not arrs:
        raise InputError("need at least one chain")
    if len({a.size for a in arrs}) != 1:
        raise InputError("chains must have equal length")
    return np.vstack(arrs)


def split_rhat(chains) -> float:
    """Classic split potential scale reduction factor.

    Each chain is cut into two halves (the middle draw is dropped for odd
    lengths) and the between/within variance ratio is computed over the
    halves: ``sqrt((n-1)/n + B/(n*W))`` with ``n`` the half length.
    """
    x = _as_chains(chains)
    m, total = x.shape
    if total < 4:
        raise InputError("each chain needs at least 4 draws")
    half = total // 2
    parts = np.vstack([x[:, :half], x[:, total - half:]])
    within = parts.var(axis=1, ddof=1).mean()
    if not within > 0:
        raise DegenerateVarianceError("chains have zero within-chain variance")
    between = half * parts.mean(axis=1).var(ddof=1)
    return float(math.sqrt((half - 1) / half + between / (half * within)))


def _autocov(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of each row, by FFT."""
    n = x.shape[-1]
    centered = x - x.mean(axis=-1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centered, size)
    return np.fft.irfft(f * np.conj(f), size)[..., :n] / n


def ess(chains) -> float:
    """Multi-chain effective sample size with Geyer's initial monotone sequence.

    Autocorrelations are estimated per chain, combined through the pooled
    variance estimate ``var+``, summed in consecutive pairs while the pair
    sums stay positive, and forced to be non-increasing. The result is capped
    at ``1.5 * m * n``.
    """
    x = _as_chains(chains)
    m, n = x.shape
    if n < 8:
        raise InputError("each chain needs at least 8 draws")
    acov = _autocov(x)
    mean_var = acov[:, 0].mean() * n / (n - 1)
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if not var_plus > 0:
        raise DegenerateVarianceError("series is constant")
    rho = 1.0 - (mean_var - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0

    # initial positive sequence over pairs (rho_2k + rho_2k+1)
    kept = np.zeros(n)
    kept[:2] = rho[:2]
    t = 1
    even, odd = rho[0], rho[1]
    while t < n - 3 and even + odd > 0:
        even, odd = rho[t + 1], rho[t + 2]
        if even + odd >= 0:
            kept[t + 1], kept[t + 2] = even, odd
        t += 2
    max_t = t - 2
    if even > 0:
        kept[max_t + 1] = even
    # initial monotone sequence
    t = 1
    while t <= max_t - 2:
        prev = kept[t - 1] + kept[t]
        if kept[t + 1] + kept[t + 2] > prev:
            kept[t + 1] = kept[t + 2] = prev / 2.0
        t += 2
    tau = -1.0 + 2.0 * kept[:max_t + 1].sum() + kept[max_t + 1]
    cap = ESS_CAP * m * n
    if tau <= 0:
        return cap
    return float(min(m * n / tau, cap))


# -- run summary -------------------------------------------------------------------------

@dataclass
class VariableDiagnostics:
    name: str
    r_hat: float | None
    ess: float | None
    ess_per_sec: float | None
    flag: str | None = None


@dataclass
class BackendMetrics:
    backend_id: str
    status: str = "ok"
    failure: dict | None = None
    inference_seconds: list = field(default_factory=list)
    final_pll: list = field(default_factory=list)
    variables: list = field(default_factory=list)
    ess_per_sec: dict = field(default_factory=lambda: {"min": None, "median": None, "max": None})
    r_hat_omitted: bool = False
    extra: dict = field(default_factory=dict)

    def to_json(self):
        return _jsonable(asdict(self))


@dataclass
class RunMetrics:
    model_kind: str
    n_trials: int
    backends: list

    def to_json(self):
        return {"model_kind": self.model_kind, "n_trials": self.n_trials,
                "backends": [b.to_json() for b in self.backends]}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def min_median_max(values) -> dict:
    vals = [float(v) for v in values if v is not None and math.isfinite(v)]
    if not vals:
        return {"min": None, "median": None, "max": None}
    return {"min": min(vals), "median": statistics.median(vals), "max": max(vals)}


def variable_diagnostics(chains, layout) -> list[VariableDiagnostics]:
    """R-hat, ESS and ESS/s for every scalar coordinate, trials as chains."""
    seconds = sum(c.inference_seconds for c in chains)
    out = []
    for spec in layout:
        names = models.flatten_names(spec)
        stacked = np.stack([np.asarray(c.samples[spec.name], dtype=float).reshape(len(c), -1)
                            for c in chains])          # (trials, draws, coords)
        for k, name in enumerate(names):
            series = stacked[:, :, k]
            flag = None
            try:
                e = ess(series)
            except DegenerateVarianceError:
                out.append(VariableDiagnostics(name, None, None, None, DEGENERATE))
                continue
            except InputError:
                out.append(VariableDiagnostics(name, None, None, None, TOO_SHORT))
                continue
            r = None
            if len(chains) >= 2:
                try:
                    r = split_rhat(series)
                except DegenerateVarianceError:
                    flag = DEGENERATE
                except InputError:
                    flag = TOO_SHORT
            else:
                flag = SINGLE_TRIAL
            eps = e / seconds if seconds > 0 else None
            out.append(VariableDiagnostics(name, r, e, eps, flag))
    return out


def summarize(chains_by_backend: Mapping[str, list], layout, final_pll=None,
              failures=None, extra=None) -> list[BackendMetrics]:
    """Per-backend metrics rows in configuration order.

    ``final_pll`` maps backend id to the per-trial PLL at the last draw;
    ``failures`` maps backend id to a failure record for backends that did
    not produce usable chains.
    """
    final_pll = final_pll or {}
    failures = failures or {}
    extra = extra or {}
    rows = []
    for bid in list(dict.fromkeys(list(chains_by_backend) + list(failures))):
        if bid in failures:
            rows.append(BackendMetrics(bid, status="failed", failure=failures[bid]))
            continue
        chains = chains_by_backend[bid]
        variables = variable_diagnostics(chains, layout)
        rows.append(BackendMetrics(
            backend_id=bid,
            inference_seconds=[c.inference_seconds for c in chains],
            final_pll=list(final_pll.get(bid, [])),
            variables=variables,
            ess_per_sec=min_median_max(v.ess_per_sec for v in variables),
            r_hat_omitted=len(chains) < 2,
            extra=extra.get(bid, {}),
        ))
    return rows


# -- model-specific metric hook ---------------------------------------------------------

MetricFn = Callable[..., dict]
EXTRA_METRICS: dict[str, dict[str, MetricFn]] = {kind: {} for kind in models.MODEL_KINDS}


def register_metric(model_kind: str, name: str, fn: MetricFn) -> None:
    """Register ``fn(instance, dataset, chains) -> dict`` for one model kind.

    Results appear under ``extra`` in each backend's metrics row.
    """
    if model_kind not in EXTRA_METRICS:
        raise InputError(f"unknown model kind {model_kind!r}")
    EXTRA_METRICS[model_kind][name] = fn


def extra_metrics(instance, dataset, chains) -> dict:
    return {name: fn(instance, dataset, chains)
            for name, fn in EXTRA_METRICS[instance.config.model_kind].items()}
