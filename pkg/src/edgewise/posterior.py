"""Posterior probabilities of all directed edges.

The whole pipeline runs as one program per fabric endpoint:

1. score the families whose parent set the worker owns, then A_i by the
   upward transform for every node i;
2. F on the forward placement, R on the mirrored one;
3. for each head v: pull R(V - {v} - S) next to F(S), take the downward
   transform of q F R over supersets inside V - {v}, weight by B_v, and
   reduce per-tail partial sums onto the all-ones endpoint, which also
   holds F(V) = log P(D).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lattice import backward_program, forward_program, serial_F_R
from .logspace import NEG_INF, logsumexp
from .runtime import Endpoint, HypercubeFabric, reduce_program, spawn
from .scoring import BlockScorer, DataMatrix, PriorSpec, build_family_scores
from .varset import bit, full_mask, popcount_array, worker_masks
from .zeta import downward_program, downward_zeta_serial, upward_program, upward_zeta_serial


@dataclass
class EdgePosteriorMatrix:
    """``values[u-1, v-1] = P(u -> v | D)``; the diagonal is NaN."""

    values: np.ndarray
    log_evidence: float
    names: tuple = ()
    trivial: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, edge: tuple[int, int]) -> float:
        u, v = edge
        if u == v:
            raise KeyError("no self edges")
        return float(self.values[u - 1, v - 1])

    def edges(self) -> list[tuple[int, int, float]]:
        """``(u, v, p)`` for every edge, highest posterior first."""
        out = [(u, v, self[u, v]) for u in range(1, self.n + 1) for v in range(1, self.n + 1) if u != v]
        return sorted(out, key=lambda e: (-e[2], e[0], e[1]))


def _tail_partials(n: int, masks: np.ndarray, weighted: np.ndarray) -> np.ndarray:
    partial = np.full(n, NEG_INF)
    for u in range(1, n + 1):
        sel = (masks & bit(u)) != 0
        if sel.any():
            partial[u - 1] = logsumexp(weighted[sel])
    return partial


def compute_A_program(ep: Endpoint, n: int, d: int, B: np.ndarray, prior: PriorSpec):
    """A_i on the forward placement for every node ``i``."""
    S = worker_masks(n, ep.k, ep.rank)
    A = ep.track("A", np.empty_like(B))
    for i in range(1, n + 1):
        t = yield from upward_program(ep, n, B[i - 1], d, tag=("A", i))
        t[(S & bit(i)) != 0] = NEG_INF
        A[i - 1] = t + prior.log_q(i, 0)
    return A


def exchange_R_program(ep: Endpoint, n: int, v: int, F: np.ndarray, R: np.ndarray, prior: PriorSpec):
    """``log q_v(S) + F(S) + R(V - {v} - S)`` for each held ``S`` without ``v``."""
    k, r = ep.k, ep.rank
    nb = len(F)
    idx = np.arange(nb, dtype=np.int64)
    hmask = nb - 1
    log_q = prior.log_q(v, 0)
    qFR = np.full(nb, NEG_INF)
    if v <= k:
        bv = bit(v)
        if r & bv:
            ep.neighbor_send(v, ("R-swap", v), R, address=("R", "all"))
        else:
            R_other = yield ep.neighbor_recv(v, ("R-swap", v))
            ep.track("R_other", R_other)
            qFR = log_q + F + R_other[~idx & hmask]
            ep.release("R_other")
    else:
        hv = 1 << (v - k - 1)
        ok = (idx & hv) == 0
        partner = (~idx & hmask) ^ hv
        qFR[ok] = log_q + F[ok] + R[partner[ok]]
    return ep.track("qFR", qFR)


def edge_program(ep: Endpoint, scorer: BlockScorer, granularity: str = "level"):
    data, prior, d = scorer.data, scorer.prior, scorer.d
    n, k = data.n, ep.k
    S = worker_masks(n, k, ep.rank)

    ep.stage = "scores"
    B = ep.track("B", scorer.scores(S))
    ep.stage = "compute_A"
    A = yield from compute_A_program(ep, n, d, B, prior)
    ep.stage = "compute_F"
    F = yield from forward_program(ep, n, A, granularity)
    ep.stage = "compute_R"
    R = yield from backward_program(ep, n, A, granularity)
    ep.release("A")

    log_pd = float(F[-1]) if ep.is_root else None
    post = np.full((n, n), np.nan) if ep.is_root else None
    trivial = np.full(n, np.nan) if ep.is_root else None
    for v in range(1, n + 1):
        ep.stage = f"exchange_R(v={v})"
        qFR = yield from exchange_R_program(ep, n, v, F, R, prior)
        ep.stage = f"compute_Gamma(v={v})"
        gamma = yield from downward_program(ep, n, qFR, d, tag=("Gamma", v), exclude=v)
        ep.track("Gamma", gamma)
        weighted = B[v - 1] + gamma
        # entry n holds the unfiltered sum: the trivial-feature check
        partial = np.append(_tail_partials(n, S, weighted), logsumexp(weighted))
        ep.stage = f"reduce(v={v})"
        total = yield from reduce_program(ep, partial, tag=("reduce", v))
        if ep.is_root:
            p = np.exp(total[:n] - log_pd)
            p[v - 1] = np.nan
            post[:, v - 1] = p
            trivial[v - 1] = np.exp(total[n] - log_pd)
    ep.stage = None
    return post, log_pd, trivial


def _check_args(data: DataMatrix, d: Optional[int]) -> int:
    n = data.n
    if d is None:
        d = n - 1
    if not 0 <= d <= n - 1:
        raise ValueError(f"indegree bound must be in [0, {n - 1}], got {d}")
    return d


def edge_posteriors(
    data: DataMatrix,
    prior: Optional[PriorSpec] = None,
    d: Optional[int] = None,
    k: int = 0,
    backend: str = "sim",
    fabric: Optional[HypercubeFabric] = None,
    granularity: str = "level",
) -> EdgePosteriorMatrix:
    """Posterior of every edge ``u -> v`` on a ``2**k``-worker fabric.

    Pass ``fabric`` to reuse one and inspect its counters afterwards; then
    ``k`` and ``backend`` are taken from it.
    """
    prior = prior or PriorSpec()
    d = _check_args(data, d)
    if fabric is None:
        fabric = spawn(k, backend)
    if fabric.k > data.n:
        raise ValueError(f"need k <= n, got k={fabric.k}, n={data.n}")
    scorer = BlockScorer(data, prior, d)
    results = fabric.run(edge_program, scorer=scorer, granularity=granularity)
    post, log_pd, trivial = results[fabric.size - 1]
    return EdgePosteriorMatrix(post, log_pd, data.names, trivial)


def edge_posteriors_serial(
    data: DataMatrix, prior: Optional[PriorSpec] = None, d: Optional[int] = None
) -> EdgePosteriorMatrix:
    """Single-address-space forward-backward pass on dense ``2**n`` tables."""
    prior = prior or PriorSpec()
    d = _check_args(data, d)
    n = data.n
    S = np.arange(1 << n, dtype=np.int64)
    B = BlockScorer(data, prior, d).scores(S)
    A = np.empty_like(B)
    for i in range(1, n + 1):
        t = upward_zeta_serial(B[i - 1], n, d)
        t[(S & bit(i)) != 0] = NEG_INF
        A[i - 1] = t + prior.log_q(i, 0)
    F, R = serial_F_R(A)
    full = full_mask(n)
    log_pd = float(F[full])
    post = np.full((n, n), np.nan)
    trivial = np.full(n, np.nan)
    for v in range(1, n + 1):
        ok = (S & bit(v)) == 0
        qFR = np.full(len(S), NEG_INF)
        qFR[ok] = prior.log_q(v, 0) + F[ok] + R[(full ^ bit(v)) ^ S[ok]]
        gamma = downward_zeta_serial(qFR, n, d, exclude=v)
        weighted = B[v - 1] + gamma
        p = np.exp(_tail_partials(n, S, weighted) - log_pd)
        p[v - 1] = np.nan
        post[:, v - 1] = p
        trivial[v - 1] = np.exp(logsumexp(weighted) - log_pd)
    return EdgePosteriorMatrix(post, log_pd, data.names, trivial)


def _forward_evidence(data: DataMatrix, prior: PriorSpec, d: int, feature) -> float:
    n = data.n
    A = np.full((n, 1 << n), NEG_INF)
    S = np.arange(1 << n, dtype=np.int64)
    for i in range(1, n + 1):
        table = build_family_scores(data, i, d, prior, feature)
        t = upward_zeta_serial(table.dense(), n, d)
        t[(S & bit(i)) != 0] = NEG_INF
        A[i - 1] = t + prior.log_q(i, 0)
    F, _ = serial_F_R(A)
    return float(F[-1])


def edge_posterior_forward(
    data: DataMatrix, u: int, v: int, prior: Optional[PriorSpec] = None, d: Optional[int] = None
) -> float:
    """P(u -> v | D) for one edge from two forward passes (feature and trivial)."""
    prior = prior or PriorSpec()
    d = _check_args(data, d)
    if u == v:
        raise ValueError("no self edges")
    joint = _forward_evidence(data, prior, d, (u, v))
    evidence = _forward_evidence(data, prior, d, None)
    return math.exp(joint - evidence)
