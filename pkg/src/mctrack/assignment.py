"""Minimum-cost linear assignment with reproducible tie-breaking.

scipy's solver provides optimality; on top of it, ties between equally
optimal matchings are resolved to the lexicographically smallest
(row, col) pair sequence so that every caller sees one canonical
matching.  Small matrices take a brute-force path that enumerates
candidate pair sequences directly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import EmptyMatrix

# Relative slack when comparing assignment totals for optimality.
_TIE_RTOL = 1e-9

# Matrices at most this big go through exhaustive enumeration.
_BRUTE_FORCE_MIN_SIDE = 4
_BRUTE_FORCE_MAX_SIDE = 6


@dataclass(frozen=True)
class CostMatrix:
    values: np.ndarray
    direction: str = "minimize"  # or "maximize"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.size == 0:
            raise EmptyMatrix(
                f"cost matrix must be 2D and non-empty, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("cost matrix contains non-finite values")
        if self.direction not in ("minimize", "maximize"):
            raise ValueError(f"unknown direction {self.direction!r}")
        object.__setattr__(self, "values", values)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Matching:
    pairs: tuple = field(default_factory=tuple)  # ((row, col), ...) sorted by row
    total: float = 0.0

    def as_dict(self) -> dict:
        return dict(self.pairs)


def solve_lap(costs: CostMatrix) -> Matching:
    """Optimal assignment of min(rows, cols) pairs.

    Rectangular matrices leave the surplus side unmatched.  Among all
    optimal matchings, the one whose (row, col) sequence is
    lexicographically smallest is returned.
    """
    values = costs.values
    if costs.direction == "maximize":
        values = -values
    n_rows, n_cols = values.shape
    if min(n_rows, n_cols) <= _BRUTE_FORCE_MIN_SIDE and \
            max(n_rows, n_cols) <= _BRUTE_FORCE_MAX_SIDE:
        pairs = _brute_force_pairs(values)
    else:
        pairs = _refined_pairs(values)
    total = float(sum(costs.values[r, c] for r, c in pairs))
    return Matching(pairs=tuple(pairs), total=total)


def _tol(values: np.ndarray) -> float:
    scale = float(np.abs(values).max()) if values.size else 1.0
    return _TIE_RTOL * max(scale, 1.0) * values.shape[0]


def _pair_sequences(n_rows: int, n_cols: int):
    """All maximal injective pair sequences, in lexicographic order."""
    k = min(n_rows, n_cols)
    for rows in itertools.combinations(range(n_rows), k):
        for cols in itertools.permutations(range(n_cols), k):
            yield list(zip(rows, cols))


_SEQUENCE_CACHE: dict = {}


def _cached_sequences(n_rows: int, n_cols: int):
    key = (n_rows, n_cols)
    cached = _SEQUENCE_CACHE.get(key)
    if cached is None:
        seqs = list(_pair_sequences(n_rows, n_cols))
        rows = np.array([[r for r, _ in s] for s in seqs])
        cols = np.array([[c for _, c in s] for s in seqs])
        cached = (seqs, rows, cols)
        _SEQUENCE_CACHE[key] = cached
    return cached


def _brute_force_pairs(values: np.ndarray) -> list:
    n_rows, n_cols = values.shape
    seqs, rows, cols = _cached_sequences(n_rows, n_cols)
    totals = values[rows, cols].sum(axis=1)
    ties = np.flatnonzero(totals <= totals.min() + _tol(values))
    if n_rows <= n_cols:
        # A single row subset: enumeration order is lexicographic and the
        # first tie names the canonical matching.
        return seqs[int(ties[0])]
    return min(seqs[int(i)] for i in ties)


def _refined_pairs(values: np.ndarray) -> list:
    """Greedy lexicographic construction, validated against the optimum.

    A pair (r, c) is fixed iff an optimal completion of the remaining
    subproblem exists; rows are considered in ascending order and left
    unmatched only when no column admits an optimal completion.
    """
    n_rows, n_cols = values.shape
    k = min(n_rows, n_cols)
    sp_rows, sp_cols = linear_sum_assignment(values)
    optimum = float(values[sp_rows, sp_cols].sum())
    tol = _tol(values)

    def rest_total(rs: list, cs: list) -> float:
        if not rs or not cs:
            return 0.0
        sub = values[np.ix_(rs, cs)]
        sr, sc = linear_sum_assignment(sub)
        return float(sub[sr, sc].sum())

    pairs: list = []
    free_rows = list(range(n_rows))
    free_cols = list(range(n_cols))
    fixed = 0.0
    while len(pairs) < k:
        advanced = False
        for r in list(free_rows):
            for c in free_cols:
                rs = [x for x in free_rows if x != r]
                cs = [x for x in free_cols if x != c]
                if fixed + values[r, c] + rest_total(rs, cs) <= optimum + tol:
                    pairs.append((r, c))
                    fixed += values[r, c]
                    free_rows.remove(r)
                    free_cols.remove(c)
                    advanced = True
                    break
            if advanced:
                break
            # No column works: r must stay unmatched (surplus row).
            if len(free_rows) - 1 >= k - len(pairs):
                rs = [x for x in free_rows if x != r]
                if fixed + rest_total(rs, free_cols) <= optimum + tol:
                    free_rows.remove(r)
                    advanced = True
                    break
        if not advanced:
            # Unreachable in exact arithmetic; keep scipy's answer.
            return sorted((int(a), int(b)) for a, b in zip(sp_rows, sp_cols))
    return sorted(pairs)
