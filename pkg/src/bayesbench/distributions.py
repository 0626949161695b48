"""Seeded random streams plus the samplers and log-densities the models use.

Every sampler takes an explicit :class:`RngStream` and an optional ``size``;
every log-density is vectorised over numpy arrays and returns ``-inf`` for
arguments outside the support instead of raising.

Conventions: ``Normal(loc, scale)`` uses the standard deviation,
``Gamma(shape, rate)`` and ``Exponential(rate)`` use rates.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np
from scipy.special import gammaln

from .errors import ParameterError

__all__ = [
    "RngStream",
    "UNIFORM_EPS",
    "sample_uniform",
    "sample_normal",
    "log_pdf_normal",
    "sample_gamma",
    "log_pdf_gamma",
    "sample_exponential",
    "log_pdf_exponential",
    "sample_student_t",
    "logpdf_student_t",
    "sample_poisson",
    "sample_dirichlet",
    "log_pdf_dirichlet",
    "sample_categorical",
    "sample_gumbel",
    "gumbel_from_uniform",
    "log_sigmoid",
]

UNIFORM_EPS = 1e-15
_LOG_2PI = math.log(2.0 * math.pi)
_MASK64 = (1 << 64) - 1


def _derive_id(stream_id: int, key) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(f"{stream_id}/{type(key).__name__}:{key}".encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


class RngStream:
    """A reproducible stream of random numbers addressed by ``(seed, stream_id)``.

    Streams form a tree: :meth:`derive` hashes the parent id together with a
    key (an int or a string) into a new 64-bit id, so the data stream of a run
    is unaffected by how many trial streams are derived next to it.

    The underlying bit generator is Philox seeded through ``SeedSequence``;
    draws are consumed lazily and the object is therefore *stateful*. Do not
    share one stream between threads.
    """

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id: int = 0):
        seed = int(seed)
        stream_id = int(stream_id)
        if not (0 <= seed <= _MASK64) or not (0 <= stream_id <= _MASK64):
            raise ParameterError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = seed
        self.stream_id = stream_id
        self._gen = None

    def derive(self, key) -> "RngStream":
        """Return the child stream named ``key`` (independent of this stream)."""
        if not isinstance(key, (int, str)) or isinstance(key, bool):
            raise TypeError(f"stream key must be int or str, got {type(key).__name__}")
        return RngStream(self.seed, _derive_id(self.stream_id, key))

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
            self._gen = np.random.Generator(np.random.Philox(ss))
        return self._gen

    def fresh(self) -> "RngStream":
        """Same address, rewound to the start of the sequence."""
        return RngStream(self.seed, self.stream_id)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id:#018x})"


def _check_positive(name, value):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ParameterError(f"{name} must be finite and > 0, got {value!r}")
    return arr


def _check_finite(name, value):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} must be finite, got {value!r}")
    return arr


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def sample_uniform(rng: RngStream, size=None):
    """Uniform draws on ``[UNIFORM_EPS, 1 - UNIFORM_EPS]``."""
    u = rng.generator.random(size)
    return np.clip(u, UNIFORM_EPS, 1.0 - UNIFORM_EPS)


# -- Normal ------------------------------------------------------------------

def sample_normal(rng: RngStream, loc=0.0, scale=1.0, size=None):
    loc = _check_finite("loc", loc)
    scale = _check_positive("scale", scale)
    return _scalar(loc + scale * rng.generator.standard_normal(size))


def log_pdf_normal(x, loc=0.0, scale=1.0):
    scale = _check_positive("scale", scale)
    z = (np.asarray(x, dtype=float) - loc) / scale
    return _scalar(-0.5 * _LOG_2PI - np.log(scale) - 0.5 * z * z)


# -- Gamma / Exponential -------------------------------------------------------

def sample_gamma(rng: RngStream, shape, rate=1.0, size=None):
    shape = _check_positive("shape", shape)
    rate = _check_positive("rate", rate)
    return _scalar(rng.generator.standard_gamma(shape, size) / rate)


def log_pdf_gamma(x, shape, rate=1.0):
    shape = _check_positive("shape", shape)
    rate = _check_positive("rate", rate)
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x
    return _scalar(np.where(x > 0, out, -np.inf))


def sample_exponential(rng: RngStream, rate=1.0, size=None):
    """Inverse-CDF draw ``-log(U) / rate`` from a clamped uniform."""
    rate = _check_positive("rate", rate)
    return _scalar(-np.log(sample_uniform(rng, size)) / rate)


def log_pdf_exponential(x, rate=1.0):
    rate = _check_positive("rate", rate)
    x = np.asarray(x, dtype=float)
    return _scalar(np.where(x >= 0, np.log(rate) - rate * x, -np.inf))


# -- Student-t -----------------------------------------------------------------

def sample_student_t(rng: RngStream, nu, loc=0.0, scale=1.0, size=None):
    nu = _check_positive("nu", nu)
    loc = _check_finite("loc", loc)
    scale = _check_positive("scale", scale)
    return _scalar(loc + scale * rng.generator.standard_t(nu, size))


def logpdf_student_t(x, nu, loc=0.0, scale=1.0):
    nu = _check_positive("nu", nu)
    scale = _check_positive("scale", scale)
    z = (np.asarray(x, dtype=float) - loc) / scale
    half = 0.5 * (nu + 1.0)
    # log1p(z^2 / nu) in a form that cannot overflow for huge |z|
    with np.errstate(divide="ignore"):
        log_kernel = np.logaddexp(0.0, 2.0 * np.log(np.abs(z)) - np.log(nu))
    out = (gammaln(half) - gammaln(0.5 * nu) - 0.5 * np.log(nu * math.pi)
           - np.log(scale) - half * log_kernel)
    return _scalar(out)


# -- Discrete ------------------------------------------------------------------

def sample_poisson(rng: RngStream, lam, size=None):
    lam = _check_positive("lambda", lam)
    out = rng.generator.poisson(lam, size)
    return int(out) if np.ndim(out) == 0 else out


def sample_categorical(rng: RngStream, probs, size=None):
    """Draw indices with probability proportional to ``probs``.

    ``probs`` may be a single vector or a stack of vectors (last axis are the
    categories); in the stacked case one index per row is returned.
    """
    p = np.asarray(probs, dtype=float)
    if p.ndim == 0 or p.shape[-1] == 0:
        raise ParameterError("probs must have at least one category")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ParameterError("probs must be finite and non-negative")
    total = p.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise ParameterError("probs must not sum to zero")
    cdf = np.cumsum(p / total, axis=-1)
    if p.ndim == 1:
        u = rng.generator.random(size)
        idx = np.searchsorted(cdf, u * cdf[-1], side="right")
        idx = np.minimum(idx, p.shape[-1] - 1)
        return int(idx) if np.ndim(idx) == 0 else idx
    if size is not None:
        raise ParameterError("size is not supported for stacked probability rows")
    u = rng.generator.random(p.shape[:-1])[..., None]
    idx = (u * cdf[..., -1:] >= cdf).sum(axis=-1)
    return np.minimum(idx, p.shape[-1] - 1)


# -- Dirichlet -----------------------------------------------------------------

def sample_dirichlet(rng: RngStream, alpha, size=None):
    """Normalised independent ``Gamma(alpha_i, 1)`` draws.

    ``alpha`` may be a stack of parameter vectors; one simplex is drawn per
    row.  Small concentrations can underflow every gamma draw to zero, in
    which case the sample falls back to a one-hot vector on the category with
    the largest log-gamma draw.
    """
    alpha = _check_positive("alpha", alpha)
    if alpha.ndim == 0:
        raise ParameterError("alpha must be a vector")
    shape = alpha.shape if size is None else tuple(np.atleast_1d(size)) + alpha.shape
    g = rng.generator.standard_gamma(np.broadcast_to(alpha, shape))
    total = g.sum(axis=-1, keepdims=True)
    bad = (total[..., 0] <= 0) | ~np.isfinite(total[..., 0])
    if np.any(bad):
        onehot = np.zeros_like(g)
        # log G ~ log U / alpha for tiny alpha; pick the dominant component
        logu = np.log(sample_uniform(rng, g.shape)) / np.broadcast_to(alpha, shape)
        np.put_along_axis(onehot, np.argmax(logu, axis=-1)[..., None], 1.0, axis=-1)
        g = np.where(bad[..., None], onehot, g)
        total = g.sum(axis=-1, keepdims=True)
    x = g / total
    # push exact zeros off the boundary so the log-density stays finite
    x = np.maximum(x, np.finfo(float).tiny)
    return x / x.sum(axis=-1, keepdims=True)


def log_pdf_dirichlet(x, alpha):
    """Dirichlet log-density over the last axis; ``-inf`` off the simplex."""
    alpha = _check_positive("alpha", alpha)
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        norm = gammaln(alpha.sum(axis=-1)) - gammaln(alpha).sum(axis=-1)
        body = ((alpha - 1.0) * np.log(x)).sum(axis=-1)
    on_simplex = np.all(x > 0, axis=-1) & (np.abs(x.sum(axis=-1) - 1.0) <= 1e-9)
    return _scalar(np.where(on_simplex, norm + body, -np.inf))


# -- Gumbel --------------------------------------------------------------------

def gumbel_from_uniform(u):
    u = np.clip(np.asarray(u, dtype=float), UNIFORM_EPS, 1.0 - UNIFORM_EPS)
    return _scalar(-np.log(-np.log(u)))


def sample_gumbel(rng: RngStream, size=None):
    """Standard Gumbel(0, 1) draw by inversion of a clamped uniform."""
    return gumbel_from_uniform(sample_uniform(rng, size))


def log_sigmoid(x):
    """``log(1 / (1 + exp(-x)))`` without overflow for large ``|x|``."""
    x = np.asarray(x, dtype=float)
    return _scalar(np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x))))
