"""Synthetic data, benchmark sweeps and the optimal worker-count estimate."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .lattice import required_bytes
from .posterior import edge_posteriors, edge_posteriors_serial
from .runtime import spawn
from .scoring import DataMatrix, PriorSpec

DEFAULT_MEM_LIMIT = 4 << 30

BENCH_COLUMNS = (
    "n", "d", "k", "wall_seconds", "speedup", "efficiency",
    "peak_bytes_per_worker", "msgs_per_worker",
)


class ResourceRefusal(RuntimeError):
    pass


def k_star(n: int, d: int) -> float:
    """Hypercube dimension minimising ``k 2**k (n-k)**d`` (continuous relaxation)."""
    if n <= 0:
        raise ValueError("n must be positive")
    if d < 0:
        raise ValueError("d must be non-negative")
    c = math.log(2) + 1
    return n * c / (c + d)


def check_memory(n: int, k: int, limit: int) -> int:
    """Return the per-worker estimate, or refuse if it exceeds ``limit``."""
    need = required_bytes(n, k)
    if need > limit:
        raise ResourceRefusal(
            f"estimated score-table memory per worker is {need} bytes "
            f"({need / 2**30:.2f} GiB) for n={n}, k={k}, above the limit of {limit} bytes; "
            "process overhead is not included"
        )
    return need


def synthetic_data(n: int, samples: int = 500, d: int = 2, arity: int = 2,
                   seed: int = 0) -> tuple[DataMatrix, dict[int, tuple[int, ...]]]:
    """Ancestral samples from a random DAG with at most ``d`` parents per node.

    Conditional distributions are Dirichlet(1) rows.  Returns the data and
    the generating parent sets (1-based).
    """
    rng = np.random.default_rng(seed)
    order = rng.permutation(n) + 1
    parents: dict[int, tuple[int, ...]] = {}
    for pos, node in enumerate(order):
        size = int(rng.integers(0, min(d, pos) + 1))
        chosen = rng.choice(order[:pos], size=size, replace=False) if size else []
        parents[int(node)] = tuple(sorted(int(p) for p in chosen))
    cells = np.zeros((samples, n), dtype=np.int64)
    for node in order:
        pa = parents[int(node)]
        q = arity ** len(pa)
        table = rng.dirichlet(np.ones(arity), size=q)
        cfg = np.zeros(samples, dtype=np.int64)
        for p in pa:
            cfg = cfg * arity + cells[:, p - 1]
        u = rng.random(samples)
        cum = np.cumsum(table[cfg], axis=1)
        cells[:, node - 1] = np.minimum((u[:, None] > cum).sum(axis=1), arity - 1)
    # a constant column would be rejected by the loaders; nudge one row
    for j in range(n):
        if np.all(cells[:, j] == cells[0, j]):
            cells[-1, j] = (cells[0, j] + 1) % arity
    data = DataMatrix(cells, (arity,) * n, tuple(f"X{j + 1}" for j in range(n)))
    return data, parents


@dataclass
class BenchRow:
    n: int
    d: int
    k: int
    wall_seconds: float
    speedup: float
    efficiency: float
    peak_bytes_per_worker: int
    msgs_per_worker: float

    def as_tuple(self):
        return tuple(getattr(self, c) for c in BENCH_COLUMNS)


def run_bench(
    n_list: Iterable[int],
    d_list: Iterable[int],
    k_list: Iterable[int],
    samples: int = 500,
    seed: int = 0,
    backend: str = "sim",
    prior: Optional[PriorSpec] = None,
    mem_limit: int = DEFAULT_MEM_LIMIT,
    repeats: int = 1,
) -> list[BenchRow]:
    """Time the serial pass and the fabric pass for every ``(n, d, k)``.

    Each timing is the best of ``repeats`` runs.
    """
    prior = prior or PriorSpec()
    rows = []
    for n in n_list:
        for d in d_list:
            if d > n - 1:
                continue
            data, _ = synthetic_data(n, samples, d, seed=seed)
            check_memory(n, 0, mem_limit)
            serial = min(_timed(lambda: edge_posteriors_serial(data, prior, d)) for _ in range(repeats))
            for k in k_list:
                if k > n:
                    continue
                check_memory(n, k, mem_limit)
                best = math.inf
                for _ in range(repeats):
                    fabric = spawn(k, backend)
                    best = min(best, _timed(lambda: edge_posteriors(data, prior, d, fabric=fabric)))
                peak = max(ep.peak_table_bytes for ep in fabric.endpoints)
                msgs = sum(ep.counters.sent_msgs for ep in fabric.endpoints) / fabric.size
                rows.append(BenchRow(n, d, k, best, serial / best, serial / (fabric.size * best), peak, msgs))
    return rows


def _timed(fn) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def bench_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for r in rows:
        w.writerow([r.n, r.d, r.k, f"{r.wall_seconds:.6f}", f"{r.speedup:.4f}",
                    f"{r.efficiency:.4f}", r.peak_bytes_per_worker, f"{r.msgs_per_worker:.1f}"])
    return buf.getvalue()
