"""Log-domain accumulation helpers.

Zero is represented by ``-inf``.  ``np.logaddexp(x, -inf)`` returns ``x``
unchanged, so folding a sequence that contains sentinels gives the same bits
as folding only its finite members.
"""

from __future__ import annotations

import math

import numpy as np

NEG_INF = -np.inf


def logsumexp(values, axis=None):
    """Max-shifted log of a sum of exponentials; all ``-inf`` gives ``-inf``."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        return NEG_INF if axis is None else np.full(np.delete(x.shape, axis), NEG_INF)
    top = np.max(x, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - shift), axis=axis, keepdims=True)) + shift
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def fold(terms) -> np.ndarray:
    """Left-to-right pairwise ``logaddexp`` over a sequence of arrays."""
    acc = None
    for t in terms:
        acc = t if acc is None else np.logaddexp(acc, t)
    return acc


def log_add(a: float, b: float) -> float:
    """Scalar ``log(exp(a) + exp(b))`` via the standard library."""
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))
