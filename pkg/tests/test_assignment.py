"""Assignment solver tests with an exhaustive permutation oracle."""

import itertools

import numpy as np
import pytest

from mctrack.assignment import CostMatrix, Matching, solve_lap
from mctrack.errors import EmptyMatrix


def brute_force_min(values: np.ndarray) -> float:
    """Exhaustive minimum over all maximal injective assignments."""
    n_rows, n_cols = values.shape
    k = min(n_rows, n_cols)
    best = None
    for rows in itertools.combinations(range(n_rows), k):
        for cols in itertools.permutations(range(n_cols), k):
            total = sum(values[r, c] for r, c in zip(rows, cols))
            if best is None or total < best:
                best = total
    return best


def test_single_cell():
    m = solve_lap(CostMatrix(np.array([[5.0]])))
    assert m.pairs == ((0, 0),)
    assert m.total == 5.0


def test_diagonal_dominance():
    m = solve_lap(CostMatrix(np.array([[1.0, 10.0], [10.0, 1.0]])))
    assert m.pairs == ((0, 0), (1, 1))
    assert m.total == 2.0


def test_empty_matrix_rejected():
    with pytest.raises(EmptyMatrix):
        CostMatrix(np.zeros((0, 3)))


def test_random_matches_enumeration_oracle():
    rng = np.random.default_rng(123)
    for _ in range(100):
        n = int(rng.integers(1, 7))
        m = int(rng.integers(1, 7))
        values = rng.uniform(-10, 10, size=(n, m))
        got = solve_lap(CostMatrix(values))
        assert abs(got.total - brute_force_min(values)) < 1e-9
        rows = [r for r, _ in got.pairs]
        cols = [c for _, c in got.pairs]
        assert len(set(rows)) == len(rows)
        assert len(set(cols)) == len(cols)
        assert len(got.pairs) == min(n, m)


def test_maximize_equals_minimize_negated():
    rng = np.random.default_rng(5)
    for _ in range(50):
        values = rng.uniform(-5, 5, size=(4, 5))
        as_max = solve_lap(CostMatrix(values, direction="maximize"))
        as_min = solve_lap(CostMatrix(-values, direction="minimize"))
        assert as_max.pairs == as_min.pairs


def test_row_permutation_equivariance():
    rng = np.random.default_rng(6)
    for _ in range(30):
        values = rng.uniform(0, 1, size=(5, 5))
        base = solve_lap(CostMatrix(values)).as_dict()
        perm = rng.permutation(5)
        permuted = solve_lap(CostMatrix(values[perm])).as_dict()
        for new_row, old_row in enumerate(perm):
            assert permuted[new_row] == base[old_row]


def test_lexicographic_tie_break():
    # all-equal costs: the canonical matching is the identity
    m = solve_lap(CostMatrix(np.ones((3, 3))))
    assert m.pairs == ((0, 0), (1, 1), (2, 2))
    # two optimal matchings: (0,0),(1,1) and (0,1),(1,0) both cost 2
    values = np.array([[1.0, 1.0], [1.0, 1.0]])
    assert solve_lap(CostMatrix(values)).pairs == ((0, 0), (1, 1))


def test_lexicographic_tie_break_large_matrix():
    # ties on a matrix big enough to exercise the refinement path
    values = np.ones((8, 8))
    m = solve_lap(CostMatrix(values))
    assert m.pairs == tuple((i, i) for i in range(8))


def test_brute_force_and_refined_paths_agree():
    from mctrack.assignment import _brute_force_pairs, _refined_pairs

    rng = np.random.default_rng(9)
    for _ in range(200):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 6))
        # quantized values make exact ties common
        values = np.round(rng.uniform(0, 3, size=(n, m)))
        assert _brute_force_pairs(values) == _refined_pairs(values)


def test_rectangular_leaves_surplus_unmatched():
    values = np.array([[1.0], [0.5], [2.0]])
    m = solve_lap(CostMatrix(values))
    assert m.pairs == ((1, 0),)
    assert m.total == 0.5
