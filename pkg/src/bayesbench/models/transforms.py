"""Bijections between constrained parameter blocks and a flat real vector.

* ``real``      identity
* ``positive``  ``x = exp(y)``, log-Jacobian ``y``
* ``simplex``   softmax with the last logit anchored at zero (additive
                log-ratio); log-Jacobian ``sum(log x)`` over all C components
* ``binary``    not part of the vector; carried through unchanged
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from ..errors import TransformError


def free_size(layout) -> int:
    return sum(spec.free_size for spec in layout)


def to_unconstrained(layout, point) -> np.ndarray:
    parts = []
    for spec in layout:
        if not spec.continuous:
            continue
        x = np.asarray(point[spec.name], dtype=float)
        if x.shape != spec.shape:
            raise TransformError(f"{spec.name}: shape {x.shape} != {spec.shape}")
        if not np.all(np.isfinite(x)):
            raise TransformError(f"{spec.name}: non-finite value")
        with np.errstate(divide="ignore"):
            if spec.kind == "positive":
                y = np.log(x)
            elif spec.kind == "simplex":
                logx = np.log(x)
                y = logx[..., :-1] - logx[..., -1:]
            else:
                y = x
        if not np.all(np.isfinite(y)):
            raise TransformError(f"{spec.name}: value on the boundary of its support")
        parts.append(np.ravel(y))
    return np.concatenate(parts) if parts else np.zeros(0)


def from_unconstrained(layout, vector, discrete=None):
    """Map ``vector`` back to a parameter point.

    Returns ``(point, log_jacobian)``. Binary blocks are copied from
    ``discrete`` when given.
    """
    v = np.asarray(vector, dtype=float)
    if v.ndim != 1 or v.size != free_size(layout):
        raise TransformError(f"expected a vector of length {free_size(layout)}, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise TransformError("non-finite unconstrained coordinate")
    point = {}
    log_jac = 0.0
    pos = 0
    for spec in layout:
        if not spec.continuous:
            if discrete is not None and spec.name in discrete:
                point[spec.name] = discrete[spec.name]
            continue
        n = spec.free_size
        y = v[pos:pos + n]
        pos += n
        if spec.kind == "positive":
            with np.errstate(over="ignore"):
                point[spec.name] = np.exp(y).reshape(spec.shape)
            log_jac += float(y.sum())
        elif spec.kind == "simplex":
            c = spec.shape[-1]
            y = y.reshape(spec.shape[:-1] + (c - 1,))
            logits = np.concatenate([y, np.zeros(y.shape[:-1] + (1,))], axis=-1)
            logx = logits - logsumexp(logits, axis=-1, keepdims=True)
            point[spec.name] = np.exp(logx)
            log_jac += float(logx.sum())
        else:
            point[spec.name] = y.reshape(spec.shape).copy()
    return point, log_jac
