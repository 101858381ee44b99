import numpy as np
import pytest

from posepipe import PoseError
from posepipe.assignment import assignment_total, solve_greedy, solve_hungarian

from oracles import brute_force_assignment


def test_two_by_two_example():
    assert solve_hungarian([[1, 2], [2, 1]]) == {0: 0, 1: 1}
    assert assignment_total([[1, 2], [2, 1]], {0: 0, 1: 1}) == 2.0


def test_zero_diagonal():
    cost = np.ones((4, 4))
    np.fill_diagonal(cost, 0.0)
    assert solve_hungarian(cost) == {i: i for i in range(4)}


def test_single_cell():
    assert solve_hungarian([[7.0]]) == {0: 0}
    assert solve_greedy([[7.0]]) == {0: 0}


def test_greedy_divergence_case():
    cost = [[0, 1], [1, 10]]
    g = solve_greedy(cost)
    h = solve_hungarian(cost)
    assert g == {0: 0, 1: 1} and assignment_total(cost, g) == 10.0
    assert h == {0: 1, 1: 0} and assignment_total(cost, h) == 2.0


def test_greedy_matches_hungarian_on_agreeing_case():
    assert solve_greedy([[1, 2], [2, 1]]) == solve_hungarian([[1, 2], [2, 1]])


def test_rejects_bad_input():
    with pytest.raises(PoseError):
        solve_hungarian([[np.inf, 1.0]])
    with pytest.raises(PoseError):
        solve_hungarian(np.zeros(3))


def test_empty_matrix():
    assert solve_hungarian(np.zeros((0, 3))) == {}
    assert solve_greedy(np.zeros((3, 0))) == {}


def test_hungarian_matches_brute_force_square():
    rng = np.random.default_rng(7)
    for trial in range(120):
        n = int(rng.integers(1, 7))
        if trial % 2:
            cost = rng.integers(0, 7, (n, n)).astype(float)   # heavy ties
        else:
            cost = rng.normal(size=(n, n)) * 5
        got = solve_hungarian(cost)
        want, want_total = brute_force_assignment(cost)
        assert got == want
        assert assignment_total(cost, got) == pytest.approx(want_total, abs=1e-9)


def test_hungarian_matches_brute_force_rectangular():
    rng = np.random.default_rng(8)
    for _ in range(80):
        r = int(rng.integers(1, 6))
        c = int(rng.integers(1, 6))
        cost = rng.integers(-5, 9, (r, c)).astype(float)
        got = solve_hungarian(cost)
        want, want_total = brute_force_assignment(cost)
        assert got == want
        assert len(got) == min(r, c)


def test_hungarian_never_worse_than_greedy():
    rng = np.random.default_rng(9)
    for _ in range(100):
        n = int(rng.integers(1, 7))
        cost = rng.random((n, n)) * 10
        h = assignment_total(cost, solve_hungarian(cost))
        g = assignment_total(cost, solve_greedy(cost))
        assert h <= g + 1e-9


def test_hungarian_equals_greedy_on_diagonal_dominant():
    rng = np.random.default_rng(10)
    for _ in range(30):
        n = int(rng.integers(2, 6))
        cost = rng.uniform(5, 9, (n, n))
        cost[np.arange(n), np.arange(n)] = rng.uniform(0, 1, n)
        h = solve_hungarian(cost)
        g = solve_greedy(cost)
        assert assignment_total(cost, h) == pytest.approx(
            assignment_total(cost, g))


def test_lexicographic_tie_break():
    # every assignment costs 2: the lexicographically smallest must win
    cost = np.ones((3, 3)) * (2 / 3)
    assert solve_hungarian(cost) == {0: 0, 1: 1, 2: 2}
    # two optimal assignments: {0:0, 1:1} and {0:1, 1:0}; prefer 0 -> 0
    cost = np.array([[1.0, 1.0], [1.0, 1.0]])
    assert solve_hungarian(cost) == {0: 0, 1: 1}


def test_greedy_tie_break_by_row_col():
    cost = np.zeros((2, 2))
    assert solve_greedy(cost) == {0: 0, 1: 1}
