"""Truncated upward and downward zeta transforms in log space.

Upward:   t(T) = log sum_{S <= T, |S| <= d} exp s(S)          for all T
Downward: t(T) = log sum_{T <= S <= V}      exp s(S)          for |T| <= d

Both run as an ``n``-pass in-place sweep over dimensions.  On a ``k``-D
fabric the first ``k`` passes pair entries held by neighbouring workers and
the rest pair entries inside one worker's block table.  Serial and parallel
paths apply the same ``logaddexp(local, neighbour)`` to the same operands,
so their outputs agree bit for bit.  Entries cut by a truncation guard are
set to ``-inf``.
"""

from __future__ import annotations

from collections import Counter
from typing import Hashable, Optional

import numpy as np

from .logspace import NEG_INF
from .runtime import Endpoint, HypercubeFabric
from .varset import popcount_array, worker_masks


def _upward_update(t, nbr, S, j, d):
    b = 1 << (j - 1)
    guard = popcount_array(S >> j) <= d
    keep = popcount_array(S >> (j - 1)) <= d
    new = np.where(keep, t, NEG_INF)
    add = guard & ((S & b) != 0) if nbr is not None else np.zeros_like(guard)
    if add.any():
        new[add] = np.logaddexp(new[add], nbr[add])
    new[~guard] = NEG_INF
    return new, guard, add


def _downward_update(t, nbr, S, j, d):
    b = 1 << (j - 1)
    guard = popcount_array(S & (b - 1 | b)) <= d
    new = np.where(guard, t, NEG_INF)
    add = guard & ((S & b) == 0) if nbr is not None else np.zeros_like(guard)
    if add.any():
        new[add] = np.logaddexp(new[add], nbr[add])
    return new, guard, add


def _dims(n: int, exclude: Optional[int]):
    return [j for j in range(1, n + 1) if j != exclude]


def upward_zeta_serial(s, n: int, d: int, ops: Optional[Counter] = None, audit: bool = False) -> np.ndarray:
    """Dense truncated upward transform of ``s`` (length ``2**n``).

    With ``audit`` set, ``ops["guard_reads"]`` counts reads of entries a
    previous pass had cut; the truncation is only sound if this stays 0.
    """
    if not 0 <= d <= n:
        raise ValueError(f"need 0 <= d <= n, got d={d}, n={n}")
    S = np.arange(1 << n, dtype=np.int64)
    t = np.where(popcount_array(S) <= d, np.asarray(s, dtype=np.float64), NEG_INF)
    ops = ops if ops is not None else Counter()
    cut = np.zeros(len(S), dtype=bool)
    for j in range(1, n + 1):
        partner = S ^ (1 << (j - 1))
        prev = t
        t, guard, add = _upward_update(prev, prev[partner], S, j, d)
        ops["up_visits"] += int(guard.sum())
        ops["up_adds"] += int(add.sum())
        if audit:
            keep = popcount_array(S >> (j - 1)) <= d
            ops["guard_reads"] += int(cut[keep].sum() + cut[partner[add]].sum())
            cut = ~guard
    return t


def downward_zeta_serial(s, n: int, d: int, exclude: Optional[int] = None,
                         ops: Optional[Counter] = None) -> np.ndarray:
    """Dense truncated downward transform; entries with ``|T| > d`` are ``-inf``.

    ``exclude=v`` runs over the ground set without ``v``: that pass is
    skipped and every entry containing ``v`` is ``-inf``.
    """
    if not 0 <= d <= n:
        raise ValueError(f"need 0 <= d <= n, got d={d}, n={n}")
    S = np.arange(1 << n, dtype=np.int64)
    t = np.asarray(s, dtype=np.float64).copy()
    if exclude is not None:
        t[(S & (1 << (exclude - 1))) != 0] = NEG_INF
    ops = ops if ops is not None else Counter()
    for j in _dims(n, exclude):
        t, guard, add = _downward_update(t, t[S ^ (1 << (j - 1))], S, j, d)
        ops["down_visits"] += int(guard.sum())
        ops["down_adds"] += int(add.sum())
    t[popcount_array(S) > d] = NEG_INF
    return t


def upward_program(ep: Endpoint, n: int, block, d: int, tag: Hashable = "up"):
    """Worker side of the parallel upward transform (mapping by low bits)."""
    k, r = ep.k, ep.rank
    S = worker_masks(n, k, r)
    idx = np.arange(len(S), dtype=np.int64)
    t = np.where(popcount_array(S) <= d, np.asarray(block, dtype=np.float64), NEG_INF)
    for j in range(1, n + 1):
        b = 1 << (j - 1)
        if j <= k:
            if r & b:
                nbr = yield ep.neighbor_recv(j, (tag, j))
            else:
                # every held set lacks j: ship the whole table
                ep.neighbor_send(j, (tag, j), t, address=("pass", j))
                nbr = None
        else:
            nbr = t[idx ^ (1 << (j - k - 1))]
        t, guard, add = _upward_update(t, nbr, S, j, d)
        ep.ops["up_visits"] += int(guard.sum())
        ep.ops["up_adds"] += int(add.sum())
    return t


def downward_program(ep: Endpoint, n: int, block, d: int, tag: Hashable = "down",
                     exclude: Optional[int] = None):
    """Worker side of the parallel downward transform."""
    k, r = ep.k, ep.rank
    S = worker_masks(n, k, r)
    idx = np.arange(len(S), dtype=np.int64)
    t = np.asarray(block, dtype=np.float64).copy()
    if exclude is not None:
        t[(S & (1 << (exclude - 1))) != 0] = NEG_INF
    for j in _dims(n, exclude):
        b = 1 << (j - 1)
        if j <= k:
            if r & b:
                ep.neighbor_send(j, (tag, j), t, address=("pass", j))
                nbr = None
            else:
                nbr = yield ep.neighbor_recv(j, (tag, j))
        else:
            nbr = t[idx ^ (1 << (j - k - 1))]
        t, guard, add = _downward_update(t, nbr, S, j, d)
        ep.ops["down_visits"] += int(guard.sum())
        ep.ops["down_adds"] += int(add.sum())
    t[popcount_array(S) > d] = NEG_INF
    return t


def scatter(dense, n: int, k: int, mirror: bool = False) -> list[np.ndarray]:
    """Split a dense ``2**n`` table into per-worker block tables."""
    dense = np.asarray(dense)
    return [dense[worker_masks(n, k, r, mirror)] for r in range(1 << k)]


def gather(blocks, n: int, k: int, mirror: bool = False) -> np.ndarray:
    out = np.empty(1 << n, dtype=np.asarray(blocks[0]).dtype)
    for r, blk in enumerate(blocks):
        out[worker_masks(n, k, r, mirror)] = blk
    return out


def upward_zeta_parallel(fabric: HypercubeFabric, blocks, n: int, d: int) -> list[np.ndarray]:
    if not 0 <= d <= n:
        raise ValueError(f"need 0 <= d <= n, got d={d}, n={n}")
    return fabric.run(upward_program, n=n, d=d, per_worker=[{"block": b} for b in blocks])


def downward_zeta_parallel(fabric: HypercubeFabric, blocks, n: int, d: int,
                           exclude: Optional[int] = None) -> list[np.ndarray]:
    if not 0 <= d <= n:
        raise ValueError(f"need 0 <= d <= n, got d={d}, n={n}")
    return fabric.run(downward_program, n=n, d=d, exclude=exclude,
                      per_worker=[{"block": b} for b in blocks])
