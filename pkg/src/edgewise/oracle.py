"""Brute-force references for small domains.

Nothing here shares code with the dynamic programme beyond the data
container: family scores use their own count tables and ``math.lgamma``,
orders are enumerated with :func:`itertools.permutations`, and sums are
plain left-to-right log additions.
"""

from __future__ import annotations

import math
from collections import Counter
from itertools import combinations, permutations
from typing import Optional

import numpy as np

from .logspace import log_add
from .scoring import DataMatrix, PriorSpec

MAX_ORDER_VARS = 8
MAX_NAIVE_VARS = 16


class OracleTooLarge(ValueError):
    pass


def dirichlet_multinomial_loglik(data: DataMatrix, i: int, parents: tuple[int, ...], prior: PriorSpec) -> float:
    """Log marginal likelihood summed over every parent configuration."""
    r = data.arity[i - 1]
    q = math.prod(data.arity[p - 1] for p in parents)
    counts = Counter()
    for row in data.cells.tolist():
        counts[(tuple(row[p - 1] for p in parents), row[i - 1])] += 1
    if prior.kind == "k2":
        a_cell = 1.0
    else:
        a_cell = prior.ess / (r * q)
    a_cfg = a_cell * r
    total = 0.0
    configs = {cfg for cfg, _ in counts}
    for cfg in configs:
        n_cfg = 0
        for x in range(r):
            c = counts.get((cfg, x), 0)
            n_cfg += c
            total += math.lgamma(a_cell + c) - math.lgamma(a_cell)
        total += math.lgamma(a_cfg) - math.lgamma(a_cfg + n_cfg)
    return total


def _family_logscore(data: DataMatrix, i: int, parents: tuple[int, ...], prior: PriorSpec) -> float:
    n = data.n
    log_rho = 0.0 if prior.rho == "one" else -math.log(math.comb(n - 1, len(parents)))
    return log_rho + dirichlet_multinomial_loglik(data, i, parents, prior)


def posterior_by_order_enumeration(
    data: DataMatrix,
    prior: Optional[PriorSpec] = None,
    d: Optional[int] = None,
    feature: Optional[tuple[int, int]] = None,
) -> tuple[float, float]:
    """``(log P(f, D), P(f | D))`` by summing over all ``n!`` orders.

    ``feature=(u, v)`` is the edge ``u -> v``; ``None`` is the trivial
    feature, for which the ratio is 1.
    """
    joint = all_edge_joints(data, prior, d, [feature] if feature else [])
    log_pd = joint[None]
    log_pf = joint[feature] if feature else log_pd
    return log_pf, math.exp(log_pf - log_pd)


def all_edge_joints(data, prior=None, d=None, features=None) -> dict:
    """Log joint ``P(f, D)`` for the trivial feature (key ``None``) and each edge.

    ``features=None`` means every ordered pair.
    """
    prior = prior or PriorSpec()
    n = data.n
    if n > MAX_ORDER_VARS:
        raise OracleTooLarge(f"order enumeration is limited to n <= {MAX_ORDER_VARS}, got {n}")
    d = n - 1 if d is None else d
    if features is None:
        features = [(u, v) for u in range(1, n + 1) for v in range(1, n + 1) if u != v]
    scores = {
        (i, G): _family_logscore(data, i, G, prior)
        for i in range(1, n + 1)
        for size in range(min(d, n - 1) + 1)
        for G in combinations([j for j in range(1, n + 1) if j != i], size)
    }

    local = {}

    def node_sum(i, preds, required):
        key = (i, preds, required)
        if key not in local:
            acc = -math.inf
            for size in range(min(d, len(preds)) + 1):
                for G in combinations(preds, size):
                    if required is None or required in G:
                        acc = log_add(acc, scores[(i, G)])
            local[key] = acc
        return local[key]

    totals = {f: -math.inf for f in [None, *features]}
    for order in permutations(range(1, n + 1)):
        preds = {i: tuple(sorted(order[:pos])) for pos, i in enumerate(order)}
        base = [node_sum(i, preds[i], None) for i in range(1, n + 1)]
        totals[None] = log_add(totals[None], math.fsum(base))
        for u, v in features:
            terms = list(base)
            terms[v - 1] = node_sum(v, preds[v], u)
            totals[(u, v)] = log_add(totals[(u, v)], math.fsum(terms))
    return totals


def edge_posterior_matrix(data, prior=None, d=None) -> tuple[np.ndarray, float]:
    """Every edge posterior by order enumeration, plus ``log P(D)``."""
    n = data.n
    joint = all_edge_joints(data, prior, d)
    out = np.full((n, n), np.nan)
    for (u, v), val in ((f, j) for f, j in joint.items() if f is not None):
        out[u - 1, v - 1] = math.exp(val - joint[None])
    return out, joint[None]


def naive_truncated_sums(s, d: int, direction: str) -> np.ndarray:
    """Literal subset sums (``"up"``) or superset sums (``"down"``) in log space.

    Downward entries with ``|T| > d`` are ``-inf``.
    """
    s = np.asarray(s, dtype=np.float64)
    size = len(s)
    n = size.bit_length() - 1
    if 1 << n != size:
        raise ValueError("table length must be a power of two")
    if n > MAX_NAIVE_VARS:
        raise OracleTooLarge(f"naive sums are limited to n <= {MAX_NAIVE_VARS}")
    S = np.arange(size, dtype=np.int64)
    card = np.array([bin(x).count("1") for x in range(size)])
    out = np.full(size, -np.inf)
    for T in range(size):
        if direction == "up":
            sel = ((S & ~T) == 0) & (card <= d)
        elif direction == "down":
            if card[T] > d:
                continue
            sel = (S & T) == T
        else:
            raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")
        vals = s[sel]
        top = vals.max() if vals.size else -np.inf
        if np.isfinite(top):
            out[T] = top + math.log(float(np.sum(np.exp(vals - top))))
    return out
