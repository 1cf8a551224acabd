"""Discrete data ingestion and local family scores.

A family score is ``log rho_i(G) + log p(x_i | x_G, G)`` with a conjugate
Dirichlet-multinomial marginal likelihood (BDeu or K2).  Edge features are
applied by masking: a family that violates the feature scores ``-inf``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .logspace import NEG_INF
from .varset import bit, full_mask, popcount, popcount_array, subsets_upto

DEFAULT_CONFIG_CAP = 1 << 20


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


@dataclass(frozen=True)
class DataMatrix:
    cells: np.ndarray
    arity: tuple[int, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        if cells.ndim != 2:
            raise DataError("data must be a 2-d array of category codes")
        if len(self.arity) != cells.shape[1]:
            raise DataError("one arity per column is required")
        for j, r in enumerate(self.arity):
            if r < 2:
                raise DataError(f"column {j + 1} has arity {r} < 2")
            col = cells[:, j]
            if col.size and (col.min() < 0 or col.max() >= r):
                raise DataError(f"column {j + 1} has codes outside [0, {r})")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "arity", tuple(int(r) for r in self.arity))
        if not self.names:
            names = tuple(f"X{j + 1}" for j in range(cells.shape[1]))
            object.__setattr__(self, "names", names)

    @property
    def m(self) -> int:
        return self.cells.shape[0]

    @property
    def n(self) -> int:
        return self.cells.shape[1]

    @classmethod
    def from_codes(cls, cells, names: Sequence[str] = ()) -> "DataMatrix":
        """Build from integer codes, taking arity as ``max + 1`` per column."""
        cells = np.asarray(cells, dtype=np.int64)
        arity = tuple(int(c.max()) + 1 if c.size else 0 for c in cells.T)
        return cls(cells, arity, tuple(names))


def _encode_column(labels: list[str]) -> tuple[list[int], int]:
    try:
        values = [int(x) for x in labels]
    except ValueError:
        values = None
    if values is not None:
        order = {v: c for c, v in enumerate(sorted(set(values)))}
        return [order[v] for v in values], len(order)
    order: dict[str, int] = {}
    for x in labels:
        order.setdefault(x, len(order))
    return [order[x] for x in labels], len(order)


def load_csv(path) -> DataMatrix:
    """Read a comma-separated file with a header row of variable names.

    Integer columns are coded by sorted value, other columns by first
    appearance.  Arity is the number of distinct labels seen.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise DataError("empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataError("empty file: header but no data rows")
    for line, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"row width mismatch at line {line}")
    columns = []
    arity = []
    for j, name in enumerate(header):
        codes, r = _encode_column([row[j].strip() for row in body])
        if r < 2:
            raise DataError(f"constant column {name!r}")
        columns.append(codes)
        arity.append(r)
    cells = np.array(columns, dtype=np.int64).T
    return DataMatrix(cells, tuple(arity), tuple(header))


@dataclass(frozen=True)
class PriorSpec:
    """Score and structure-prior choice.

    ``kind`` is ``"bdeu"`` or ``"k2"``; ``rho`` is ``"uniform"`` (weight
    ``1 / C(n-1, |G|)`` per parent set) or ``"one"``.  The order weight
    ``q`` is the constant one.
    """

    kind: str = "bdeu"
    ess: float = 1.0
    rho: str = "uniform"
    q: str = "one"
    config_cap: int = DEFAULT_CONFIG_CAP

    def __post_init__(self):
        if self.kind not in ("bdeu", "k2"):
            raise ValueError(f"unknown score kind {self.kind!r}")
        if self.kind == "bdeu" and not self.ess > 0:
            raise ValueError("BDeu equivalent sample size must be positive")
        if self.rho not in ("uniform", "one"):
            raise ValueError(f"unknown rho {self.rho!r}")
        if self.q != "one":
            raise ValueError("only the constant-one order prior q is supported")

    @classmethod
    def parse(cls, text: str) -> "PriorSpec":
        """Parse ``"k2"``, ``"bdeu"`` or ``"bdeu:<ess>"``."""
        kind, _, arg = text.strip().lower().partition(":")
        if kind == "k2" and not arg:
            return cls(kind="k2")
        if kind == "bdeu":
            return cls(kind="bdeu", ess=float(arg) if arg else 1.0)
        raise ValueError(f"cannot parse score {text!r}; expected k2 or bdeu:<ess>")

    def log_rho(self, n: int, size: int) -> float:
        if self.rho == "one":
            return 0.0
        return -math.log(math.comb(n - 1, size))

    def log_q(self, i: int, mask: int) -> float:
        return 0.0


def _parent_configs(data: DataMatrix, parents: Sequence[int], cap: int) -> tuple[np.ndarray, int]:
    q = 1
    codes = np.zeros(data.m, dtype=np.int64)
    for p in parents:
        r = data.arity[p - 1]
        q *= r
        if q > cap:
            raise DataError(
                f"parent configuration count exceeds cap {cap} for parents {list(parents)}"
            )
        codes = codes * r + data.cells[:, p - 1]
    return codes, q


def _family_loglik(data: DataMatrix, i: int, codes: np.ndarray, q: int, prior: PriorSpec) -> float:
    r = data.arity[i - 1]
    joint = codes * r + data.cells[:, i - 1]
    # only observed configurations contribute; unobserved ones cancel
    _, cfg_counts = np.unique(codes, return_counts=True)
    _, cell_counts = np.unique(joint, return_counts=True)
    if prior.kind == "k2":
        a_cell, a_cfg = 1.0, float(r)
    else:
        a_cell, a_cfg = prior.ess / (r * q), prior.ess / q
    score = np.sum(gammaln(a_cfg) - gammaln(a_cfg + cfg_counts))
    score += np.sum(gammaln(a_cell + cell_counts) - gammaln(a_cell))
    return float(score)


def local_marginal_loglik(data: DataMatrix, i: int, G: int, prior: PriorSpec) -> float:
    """Log marginal likelihood of column ``i`` given parent set mask ``G``."""
    if G & bit(i):
        raise ValueError(f"node {i} cannot be its own parent")
    parents = [p for p in range(1, data.n + 1) if G & bit(p)]
    codes, q = _parent_configs(data, parents, prior.config_cap)
    return _family_loglik(data, i, codes, q, prior)


@dataclass
class FamilyScoreTable:
    """Scores ``B_i(G)`` for every ``G`` in ``V - {i}`` with ``|G| <= d``."""

    node: int
    d: int
    n: int
    masks: np.ndarray
    scores: np.ndarray
    _index: dict = field(default=None, repr=False)

    def __post_init__(self):
        self._index = {int(g): j for j, g in enumerate(self.masks)}

    def __len__(self):
        return len(self.masks)

    def __getitem__(self, G: int) -> float:
        return float(self.scores[self._index[G]])

    def __contains__(self, G: int) -> bool:
        return G in self._index

    def dense(self) -> np.ndarray:
        """Scores over all ``2**n`` masks, ``-inf`` outside the table."""
        out = np.full(1 << self.n, NEG_INF)
        out[self.masks] = self.scores
        return out


def family_score(data: DataMatrix, i: int, G: int, prior: PriorSpec) -> float:
    return prior.log_rho(data.n, popcount(G)) + local_marginal_loglik(data, i, G, prior)


def build_family_scores(
    data: DataMatrix,
    i: int,
    d: int,
    prior: PriorSpec,
    feature: Optional[tuple[int, int]] = None,
) -> FamilyScoreTable:
    """Score all admissible parent sets of node ``i``.

    ``feature=(u, v)`` restricts node ``v`` to parent sets containing ``u``;
    violating entries score ``-inf``.  ``None`` is the trivial feature.
    """
    n = data.n
    if not 0 <= d <= n - 1:
        raise ValueError(f"indegree bound must be in [0, {n - 1}], got {d}")
    others = full_mask(n) & ~bit(i)
    masks = np.fromiter(subsets_upto(others, d), dtype=np.int64)
    scores = np.array([family_score(data, i, int(G), prior) for G in masks])
    if feature is not None:
        u, v = feature
        if v == i:
            scores[(masks & bit(u)) == 0] = NEG_INF
    return FamilyScoreTable(i, d, n, masks, scores)


class BlockScorer:
    """Scores families for an arbitrary set of candidate parent masks.

    Each worker asks only for the masks it owns, so scoring work is split
    the same way as every other table.
    """

    def __init__(self, data: DataMatrix, prior: PriorSpec, d: int):
        if not 0 <= d <= max(data.n - 1, 0):
            raise ValueError(f"indegree bound must be in [0, {data.n - 1}], got {d}")
        self.data = data
        self.prior = prior
        self.d = d

    def scores(self, masks: np.ndarray) -> np.ndarray:
        """Array of shape ``(n, len(masks))``; ``-inf`` where inadmissible."""
        n = self.data.n
        out = np.full((n, len(masks)), NEG_INF)
        sizes = popcount_array(masks)
        for col, (G, size) in enumerate(zip(masks.tolist(), sizes.tolist())):
            if size > self.d:
                continue
            parents = [p for p in range(1, n + 1) if G & bit(p)]
            codes, q = _parent_configs(self.data, parents, self.prior.config_cap)
            log_rho = self.prior.log_rho(n, size)
            for i in range(1, n + 1):
                if not G & bit(i):
                    out[i - 1, col] = log_rho + _family_loglik(self.data, i, codes, q, self.prior)
        return out
