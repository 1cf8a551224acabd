"""Bitmask subsets of the variable index set.

Variable ``i`` (1-based) is bit ``i - 1`` of an integer mask, counted from the
least-significant end.  A subset mask doubles as a lattice node id; its low
``k`` bits name the worker that owns it and the remaining ``n - k`` high bits
index the block inside that worker's table.
"""

from __future__ import annotations

from itertools import combinations
from typing import Iterable, Iterator, NamedTuple

import numpy as np

MAX_VARS = 64


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def popcount_array(masks: np.ndarray) -> np.ndarray:
    return np.bitwise_count(np.asarray(masks, dtype=np.int64)).astype(np.int64)


def full_mask(n: int) -> int:
    return (1 << n) - 1


def bit(i: int) -> int:
    """Mask of the single variable ``i`` (1-based)."""
    return 1 << (i - 1)


def from_vars(variables: Iterable[int]) -> int:
    mask = 0
    for i in variables:
        mask |= bit(i)
    return mask


def to_vars(mask: int) -> list[int]:
    out = []
    i = 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def check_domain(n: int) -> None:
    if not 1 <= n <= MAX_VARS:
        raise ValueError(f"domain size must be in [1, {MAX_VARS}], got {n}")


def subsets_upto(base: int, d: int) -> Iterator[int]:
    """Yield every subset of ``base`` with at most ``d`` elements.

    Order is ascending cardinality, then ascending mask value.
    """
    if d < 0:
        raise ValueError("cardinality bound must be non-negative")
    members = [1 << p for p in range(base.bit_length()) if base >> p & 1]
    for size in range(min(d, len(members)) + 1):
        level = sorted(sum(c) for c in combinations(members, size))
        yield from level


def levels(n_bits: int) -> list[np.ndarray]:
    """Group ``range(2**n_bits)`` by popcount, each group ascending."""
    idx = np.arange(1 << n_bits, dtype=np.int64)
    pc = popcount_array(idx)
    return [idx[pc == level] for level in range(n_bits + 1)]


class HypercubeAddress(NamedTuple):
    worker: int
    block: int


def split_address(mask: int, n: int, k: int, mirror: bool = False) -> HypercubeAddress:
    """Map a subset to ``(worker, block)``.

    The worker id is the low ``k`` bits of the mask, or their complement when
    ``mirror`` is set (the placement used for the backward function).
    """
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    low = mask & full_mask(k)
    worker = (~low & full_mask(k)) if mirror else low
    return HypercubeAddress(worker, mask >> k)


def join_address(addr: HypercubeAddress, k: int, mirror: bool = False) -> int:
    low = (~addr.worker & full_mask(k)) if mirror else addr.worker
    return (addr.block << k) | low


def worker_masks(n: int, k: int, worker: int, mirror: bool = False) -> np.ndarray:
    """Subset masks held by ``worker``, indexed by block."""
    low = (~worker & full_mask(k)) if mirror else worker
    return (np.arange(1 << (n - k), dtype=np.int64) << k) | low


def neighbors(worker: int, k: int) -> list[int]:
    return [worker ^ (1 << j) for j in range(k)]


def worker_label(worker: int, k: int) -> str:
    return format(worker, f"0{k}b") if k else ""
