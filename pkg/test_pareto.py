#!/usr/bin/env python3
"""
Tests for dominance, non-dominated sorting, crowding distance and SPEA2 fitness
"""
import numpy as np
import pytest

from errors import InvalidArgumentError
from pareto import (crowding_distance, dominates, front_ranks, non_dominated_sort, spea2_components,
                    spea2_fitness)


def brute_force_fronts(points):
    """Peel fronts with a plain pairwise dominance check"""
    remaining = list(range(len(points)))
    fronts = []
    while remaining:
        front = [i for i in remaining
                 if not any(dominates(points[j], points[i]) for j in remaining if j != i)]
        fronts.append(front)
        remaining = [i for i in remaining if i not in front]
    return fronts


@pytest.mark.parametrize('a, b, expected', [
    ((2, 2), (1, 1), True),
    ((1, 2), (2, 1), False),
    ((2, 1), (1, 2), False),
    ((1, 1), (1, 1), False),
    ((1, 1), (1, 0), True),
])
def test_dominates(a, b, expected):
    assert dominates(a, b) is expected


def test_dominates_needs_equal_dimensions():
    with pytest.raises(InvalidArgumentError):
        dominates((1, 2), (1, 2, 3))


def test_dominance_is_irreflexive_and_transitive():
    generator = np.random.default_rng(8)
    chains = 0
    for a, b, c in generator.integers(0, 3, size=(2000, 3, 3)):
        assert not dominates(a, a)
        if dominates(a, b) and dominates(b, c):
            chains += 1
            assert dominates(a, c)
    assert chains > 0


def test_sort_small_example():
    fronts = non_dominated_sort([(1, 1), (2, 2), (3, 0)])
    assert fronts == [[1, 2], [0]]


def test_sort_single_and_identical_points():
    assert non_dominated_sort([(4, 4)]) == [[0]]
    assert non_dominated_sort([(1, 1)] * 5) == [[0, 1, 2, 3, 4]]


def test_sort_rejects_empty_input():
    with pytest.raises(InvalidArgumentError):
        non_dominated_sort(np.zeros((0, 2)))


@pytest.mark.parametrize('seed', range(100))
def test_sort_matches_brute_force(seed):
    points = np.random.default_rng(seed).integers(0, 6, size=(200, 3)).astype(float)
    assert non_dominated_sort(points) == brute_force_fronts(points)


def test_front_ranks():
    assert front_ranks([(1, 1), (2, 2), (3, 0)]).tolist() == [1, 0, 0]


def test_crowding_distance_examples():
    assert crowding_distance([(0, 2), (1, 1), (2, 0)]).tolist() == [np.inf, 2.0, np.inf]
    assert crowding_distance([(0, 1), (1, 0)]).tolist() == [np.inf, np.inf]


def test_crowding_distance_identical_points():
    distances = crowding_distance([(1, 1)] * 4)
    assert np.isinf(distances).sum() == 2
    assert np.all(distances[np.isfinite(distances)] == 0.0)


def test_spea2_strength_and_raw():
    strength, raw = spea2_components([(2, 2), (1, 1), (0, 0)])
    assert strength.tolist() == [2, 1, 0]
    assert raw.tolist() == [0, 2, 3]


def test_spea2_density():
    fitness = spea2_fitness([(0, 1), (1, 1)], k=1)
    # (1, 1) dominates (0, 1): raw 0 and 1, both at distance 1
    assert fitness.tolist() == pytest.approx([1 + 1 / 3, 1 / 3])


def test_spea2_non_dominated_below_one():
    points = np.random.default_rng(0).random((30, 2))
    fitness = spea2_fitness(points, k=3)
    front = set(non_dominated_sort(points)[0])
    assert {i for i in range(30) if fitness[i] < 1} == front


def test_spea2_k_must_be_positive():
    with pytest.raises(InvalidArgumentError):
        spea2_fitness([(0, 0)], k=0)
