"""Forward sum F and backward function R over the subset lattice.

F(S) = sum_{i in S} A_i(S - {i}) F(S - {i}),      F(empty) = 1
R(S) = sum_{i in S} A_i(V - S)   R(S - {i}),      R(empty) = 1

On a ``k``-D fabric the ``n``-D lattice is cut into ``2**(n-k)`` sub-cubes
named by their high-bit prefix.  Worker ``r`` owns the node with low bits
``r`` in every sub-cube for F, and low bits ``~r`` for R, so R(S) sits next
to F(V - S).  Sub-cubes are activated in (popcount, value) order.  A worker
processes a group of its blocks, sends the results it owes to neighbours,
and moves on without waiting for the rest of the sub-cube.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .logspace import NEG_INF
from .runtime import Endpoint, HypercubeFabric
from .varset import full_mask, popcount_array, worker_masks


@dataclass(frozen=True)
class LatticeSchedule:
    """Activation order of sub-cube prefixes.

    ``granularity="block"`` activates one prefix per step (the fine-grained
    pipeline, ``2**(n-k) + k`` steps); ``"level"`` activates all prefixes of
    equal popcount together, which vectorises well and gives ``n + 1``
    steps.  Both respect the same order, and results are identical.
    """

    n: int
    k: int
    granularity: str = "level"

    def __post_init__(self):
        if not 0 <= self.k <= self.n:
            raise ValueError(f"need 0 <= k <= n, got k={self.k}, n={self.n}")
        if self.granularity not in ("level", "block"):
            raise ValueError(f"unknown granularity {self.granularity!r}")

    @property
    def prefixes(self) -> np.ndarray:
        h = np.arange(1 << (self.n - self.k), dtype=np.int64)
        return h[np.lexsort((h, popcount_array(h)))]

    def groups(self) -> Iterator[np.ndarray]:
        order = self.prefixes
        if self.granularity == "block":
            for h in order:
                yield order[order == h]
            return
        pc = popcount_array(order)
        for level in range(self.n - self.k + 1):
            yield order[pc == level]

    @property
    def depth(self) -> int:
        """Logical steps for a full run: groups plus the ``k`` pipeline fill."""
        groups = (1 << (self.n - self.k)) if self.granularity == "block" else self.n - self.k + 1
        return groups + self.k

    def activation_step(self, prefix: int, worker: int) -> int:
        """Step at which ``worker`` starts sub-cube ``prefix`` in an ideal pipeline."""
        if self.granularity == "block":
            pos = int(np.flatnonzero(self.prefixes == prefix)[0])
        else:
            pos = int(popcount_array(np.array([prefix]))[0])
        return pos + bin(worker).count("1")


def _group_tag(stage: str, group: np.ndarray, granularity: str):
    return (stage, int(group[0])) if granularity == "block" else (stage, "level", int(popcount_array(group[:1])[0]))


def forward_program(ep: Endpoint, n: int, A: np.ndarray, granularity: str = "level", log: list | None = None):
    """Compute F on the blocks this worker owns.

    ``A`` has shape ``(n, 2**(n-k))`` with ``A[i-1, b] = log A_i(S_b)``.
    The sender forms ``A_j(S) + F(S)`` for each ``j`` not in ``S``.
    """
    k, r = ep.k, ep.rank
    sched = LatticeSchedule(n, k, granularity)
    nb = 1 << (n - k)
    F = ep.track("F", np.full(nb, NEG_INF))
    out = ep.track("F_out", np.full((n, nb), NEG_INF))
    for group in sched.groups():
        tag = _group_tag("F", group, granularity)
        remote = {}
        for i in range(1, k + 1):
            if r & (1 << (i - 1)):
                remote[i] = yield ep.neighbor_recv(i, tag)
        acc = np.full(len(group), NEG_INF)
        for i in range(1, n + 1):
            if i <= k:
                if i not in remote:
                    continue
                term = remote[i]
            else:
                hb = 1 << (i - k - 1)
                has = (group & hb) != 0
                term = np.where(has, out[i - 1, group ^ hb], NEG_INF)
            acc = np.logaddexp(acc, term)
        if r == 0 and group[0] == 0:
            acc[0] = 0.0
        if log is not None:
            log.append((ep.step, [int(h) for h in group]))
        F[group] = acc
        out[:, group] = A[:, group] + acc
        ep.step += 1
        for j in range(1, k + 1):
            if not r & (1 << (j - 1)):
                ep.neighbor_send(j, tag, out[j - 1, group], address=(tag, "prefixes"))
    ep.release("F_out")
    return F


def backward_program(ep: Endpoint, n: int, A: np.ndarray, granularity: str = "level", log: list | None = None):
    """Compute R on the mirrored placement.

    The worker holding R(S) also holds A(V - S) in its forward-placed
    ``A`` table at block ``~b``, so the product is formed by the receiver.
    """
    k, r = ep.k, ep.rank
    sched = LatticeSchedule(n, k, granularity)
    nb = 1 << (n - k)
    hmask = nb - 1
    comp = ~r & full_mask(k)
    R = ep.track("R", np.full(nb, NEG_INF))
    for group in sched.groups():
        tag = _group_tag("R", group, granularity)
        remote = {}
        for i in range(1, k + 1):
            if comp & (1 << (i - 1)):
                remote[i] = yield ep.neighbor_recv(i, tag)
        a_rows = A[:, ~group & hmask]
        acc = np.full(len(group), NEG_INF)
        for i in range(1, n + 1):
            if i <= k:
                if i not in remote:
                    continue
                prev = remote[i]
            else:
                hb = 1 << (i - k - 1)
                prev = np.where((group & hb) != 0, R[group ^ hb], NEG_INF)
            acc = np.logaddexp(acc, a_rows[i - 1] + prev)
        if comp == 0 and group[0] == 0:
            acc[0] = 0.0
        if log is not None:
            log.append((ep.step, [int(h) for h in group]))
        R[group] = acc
        ep.step += 1
        for j in range(1, k + 1):
            if r & (1 << (j - 1)):
                ep.neighbor_send(j, tag, acc, address=(tag, "prefixes"))
    return R


def serial_F_R(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Level-by-level F and R over dense tables ``A[i-1, S]`` (shape ``(n, 2**n)``).

    Uses the same per-entry operations and summation order as the fabric
    programs, so results are bit-identical to theirs.
    """
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    size = 1 << n
    if A.shape != (n, size):
        raise ValueError(f"A must have shape (n, 2**n), got {A.shape}")
    full = size - 1
    F = np.full(size, NEG_INF)
    R = np.full(size, NEG_INF)
    S_all = np.arange(size, dtype=np.int64)
    pc = popcount_array(S_all)
    F[0] = 0.0
    R[0] = 0.0
    for level in range(1, n + 1):
        S = S_all[pc == level]
        acc_f = np.full(len(S), NEG_INF)
        acc_r = np.full(len(S), NEG_INF)
        comp = full ^ S
        for i in range(1, n + 1):
            b = 1 << (i - 1)
            has = (S & b) != 0
            prev = S ^ b
            acc_f = np.logaddexp(acc_f, np.where(has, A[i - 1, prev] + F[prev], NEG_INF))
            acc_r = np.logaddexp(acc_r, A[i - 1, comp] + np.where(has, R[prev], NEG_INF))
        F[S] = acc_f
        R[S] = acc_r
    return F, R


def compute_F(fabric: HypercubeFabric, A_blocks, n: int, granularity: str = "level") -> list[np.ndarray]:
    return fabric.run(forward_program, n=n, granularity=granularity,
                      per_worker=[{"A": a} for a in A_blocks])


def compute_R(fabric: HypercubeFabric, A_blocks, n: int, granularity: str = "level") -> list[np.ndarray]:
    return fabric.run(backward_program, n=n, granularity=granularity,
                      per_worker=[{"A": a} for a in A_blocks])


def required_bytes(n: int, k: int = 0) -> int:
    """Score-table bytes per worker for the full edge pipeline.

    Resident tables: B and A (``n`` rows each), F, R, the exchanged R,
    the combined ``q F R`` table and the transform output, plus the ``n``
    forward products while F is being built.
    """
    return 8 * (1 << (n - k)) * (3 * n + 5)
