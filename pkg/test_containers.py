#!/usr/bin/env python3
"""
Tests for tessellations, CVT centroids and the two repertoire kinds
"""
import numpy as np
import pytest

from containers import (CvtSpec, Elite, GridSpec, MomeRepertoire, Population, Repertoire, compute_cvt_centroids,
                        cvt_cell_index, grid_cell_index, make_repertoire, mome_cell_add, repertoire_add,
                        repertoire_sample)
from core import ScoringResult
from errors import ConfigurationError, EmitterError, InvalidArgumentError, ScoringError
from pareto import dominates, hypervolume
from rng import RngStream
from tasks import make_task

UNIT_GRID = GridSpec([10, 10], [0, 0], [1, 1])


@pytest.mark.parametrize('descriptor, cell', [
    ((0.5, 0.5), 55),
    ((1.0, 0.3), 93),
    ((0.0, 0.0), 0),
    ((-3.0, 7.0), 9),
])
def test_grid_cell_index(descriptor, cell):
    assert grid_cell_index(descriptor, UNIT_GRID) == cell


def test_grid_rejects_bad_configuration():
    with pytest.raises(ConfigurationError):
        GridSpec([10], [0, 0], [1, 1])
    with pytest.raises(ConfigurationError):
        GridSpec([10, 10], [0, 1], [1, 1])


def test_cell_index_rejects_non_finite_descriptor():
    with pytest.raises(ScoringError):
        UNIT_GRID.cell_index((np.nan, 0.5))


@pytest.mark.parametrize('descriptor, cell', [
    ((0.1, 0.1), 0),
    ((0.5, 0.5), 0),
    ((0.9, 0.8), 1),
])
def test_cvt_cell_index(descriptor, cell):
    spec = CvtSpec([(0, 0), (1, 1)], [0, 0], [1, 1])
    assert cvt_cell_index(descriptor, spec) == cell


def test_cvt_spec_validation():
    with pytest.raises(ConfigurationError):
        CvtSpec([(0.5, 0.5), (0.5, 0.5)], [0, 0], [1, 1])
    with pytest.raises(ConfigurationError):
        CvtSpec([(1.5, 0.5)], [0, 0], [1, 1])



def test_cvt_cell_index_matches_exhaustive_search():
    spec = compute_cvt_centroids(50, 3, ([0, 0, 0], [1, 1, 1]), 5_000, 5, RngStream.from_seed(6))
    descriptors = np.random.default_rng(6).random((2_000, 3))
    for descriptor in descriptors:
        distances = [np.sum((descriptor - centroid) ** 2) for centroid in spec.centroids]
        assert cvt_cell_index(descriptor, spec) == int(np.argmin(distances))


def test_single_centroid_sits_at_the_center():
    spec = compute_cvt_centroids(1, 2, ([0, 0], [1, 1]), 100_000, 10, RngStream.from_seed(0))
    assert np.allclose(spec.centroids[0], [0.5, 0.5], atol=0.02)


def test_two_centroids_on_the_line():
    spec = compute_cvt_centroids(2, 1, ([0], [1]), 100_000, 50, RngStream.from_seed(1))
    assert np.allclose(np.sort(spec.centroids[:, 0]), [0.25, 0.75], atol=0.02)


def test_centroids_are_deterministic():
    first = compute_cvt_centroids(16, 2, ([0, 0], [1, 1]), 5_000, 10, RngStream.from_seed(3))
    second = compute_cvt_centroids(16, 2, ([0, 0], [1, 1]), 5_000, 10, RngStream.from_seed(3))
    assert first == second


def test_centroid_arguments_are_checked():
    with pytest.raises(InvalidArgumentError):
        compute_cvt_centroids(0, 2, ([0, 0], [1, 1]), 100, 1, RngStream.from_seed(0))
    with pytest.raises(InvalidArgumentError):
        compute_cvt_centroids(200, 2, ([0, 0], [1, 1]), 100, 1, RngStream.from_seed(0))


def test_add_to_empty_cell():
    repertoire = Repertoire(UNIT_GRID, 2)
    accepted = repertoire.add([[0.3, 0.4]], [1.0], [[0.05, 0.35]])
    assert accepted.tolist() == [True]
    assert repertoire.occupied[3]
    assert repertoire.genotypes[3].tolist() == [0.3, 0.4]


def test_equal_fitness_keeps_incumbent():
    repertoire = Repertoire(UNIT_GRID, 1)
    repertoire.add([[1.0]], [1.0], [[0.5, 0.5]])
    accepted = repertoire.add([[2.0]], [1.0], [[0.51, 0.51]])
    assert not accepted.any()
    assert repertoire.genotypes[55].tolist() == [1.0]


def test_first_of_equal_candidates_wins_within_a_batch():
    repertoire = Repertoire(UNIT_GRID, 1)
    accepted = repertoire.add([[1.0], [2.0], [3.0]], [1.0, 2.0, 2.0], [[0.5, 0.5]] * 3)
    assert accepted.tolist() == [False, True, False]
    assert repertoire.genotypes[55].tolist() == [2.0]


def test_non_finite_fitness_is_rejected():
    with pytest.raises(ScoringError):
        Repertoire(UNIT_GRID, 1).add([[0.0]], [np.inf], [[0.5, 0.5]])



def test_readding_stored_elites_changes_nothing():
    task = make_task('rastrigin', 3)
    generator = np.random.default_rng(9)
    repertoire = Repertoire(GridSpec([8, 8], task.descriptor_lower, task.descriptor_upper), 3)
    genotypes = generator.uniform(task.lower, task.upper, size=(500, 3))
    results = [task.evaluate(x) for x in genotypes]
    repertoire.add(genotypes, [r.fitness for r in results], [r.descriptor for r in results])
    before = repertoire.copy()
    cells = repertoire.occupied_cells()
    accepted = repertoire.add(repertoire.genotypes[cells], repertoire.fitnesses[cells], repertoire.descriptors[cells])
    assert not accepted.any()
    assert repertoire == before


def brute_force_archive(cells, fitnesses, n_cells):
    best = {}
    for i, (cell, fitness) in enumerate(zip(cells, fitnesses)):
        if cell not in best or fitness > fitnesses[best[cell]]:
            best[cell] = i
    return best


@pytest.mark.parametrize('tessellation', [
    GridSpec([20, 20], [0, 0], [1, 1]),
    compute_cvt_centroids(100, 2, ([0, 0], [1, 1]), 10_000, 10, RngStream.from_seed(0)),
], ids=['grid', 'cvt'])
def test_archive_matches_brute_force_in_any_order(tessellation):
    task = make_task('sphere', 4)
    generator = np.random.default_rng(11)
    genotypes = generator.uniform(task.lower, task.upper, size=(10_000, 4))
    results = [task.evaluate(x) for x in genotypes]
    fitnesses = np.array([r.fitness for r in results])
    descriptors = np.array([r.descriptor for r in results])
    cells = tessellation.cell_indices(descriptors)
    oracle = brute_force_archive(cells.tolist(), fitnesses, tessellation.n_cells)

    for shuffle_seed in range(3):
        order = np.random.default_rng(shuffle_seed).permutation(len(genotypes))
        repertoire = Repertoire(tessellation, 4)
        for chunk in np.array_split(order, 7):
            repertoire.add(genotypes[chunk], fitnesses[chunk], descriptors[chunk])
        assert sorted(repertoire.occupied_cells().tolist()) == sorted(oracle)
        for cell, index in oracle.items():
            assert repertoire.fitnesses[cell] == fitnesses[index]


def test_repertoire_add_pairs():
    repertoire = Repertoire(UNIT_GRID, 2)
    repertoire_add(repertoire, [(np.array([0.1, 0.2]), ScoringResult(1.0, np.array([0.05, 0.35])))])
    assert repertoire.occupied_cells().tolist() == [3]


def test_sample_single_elite():
    repertoire = Repertoire(UNIT_GRID, 1)
    repertoire.add([[7.0]], [1.0], [[0.5, 0.5]])
    samples = repertoire_sample(repertoire, 5, RngStream.from_seed(0))
    assert [s.tolist() for s in samples] == [[7.0]] * 5


def test_sample_is_uniform_over_cells():
    repertoire = Repertoire(UNIT_GRID, 1)
    repertoire.add([[0.0], [1.0]], [1.0, 1.0], [[0.05, 0.05], [0.95, 0.95]])
    samples = repertoire.sample(100_000, RngStream.from_seed(1))
    assert abs(np.mean(samples[:, 0]) - 0.5) < 0.01


def test_sample_edge_cases():
    repertoire = Repertoire(UNIT_GRID, 3)
    assert repertoire.sample(0, RngStream.from_seed(0)).shape == (0, 3)
    with pytest.raises(EmitterError):
        repertoire.sample(1, RngStream.from_seed(0))


def test_queries_and_copy():
    repertoire = Repertoire(UNIT_GRID, 1)
    repertoire.add([[1.0], [2.0]], [3.0, 5.0], [[0.05, 0.05], [0.95, 0.95]])
    assert repertoire.best_elite() == Elite(np.array([2.0]), 5.0, np.array([0.95, 0.95]), 99)
    assert len(repertoire.elites()) == 2
    assert repertoire.occupied_descriptors().shape == (2, 2)
    clone = repertoire.copy()
    assert clone == repertoire
    clone.add([[9.0]], [10.0], [[0.05, 0.05]])
    assert clone != repertoire


def elite(objectives, genotype=0.0):
    return Elite(np.array([genotype]), np.array(objectives, dtype=float), np.array([0.5, 0.5]), 0)


def test_mome_cell_add_examples():
    p = elite((1, 1))
    assert mome_cell_add([], p, 3) == [p]
    front = [elite((2, 2))]
    assert mome_cell_add(front, elite((1, 1)), 3) == front
    updated = mome_cell_add([elite((1, 2)), elite((2, 1))], elite((3, 3)), 2)
    assert [m.fitness.tolist() for m in updated] == [[3.0, 3.0]]


def test_mome_cell_add_rejects_duplicates_and_bad_capacity():
    front = [elite((1, 2))]
    assert mome_cell_add(front, elite((1, 2), genotype=5.0), 3) == front
    with pytest.raises(ConfigurationError):
        mome_cell_add(front, elite((3, 3)), 0)


def test_mome_cell_add_drops_least_crowded_at_capacity():
    front = [elite((0, 4)), elite((1, 3)), elite((4, 0))]
    updated = mome_cell_add(front, elite((1.1, 2.9)), 3)
    assert len(updated) == 3
    assert all(not dominates(a.fitness, b.fitness) for a in updated for b in updated)
    objectives = [m.fitness.tolist() for m in updated]
    assert [0.0, 4.0] in objectives and [4.0, 0.0] in objectives



def test_over_capacity_insert_never_shrinks_the_hypervolume():
    front = [elite((0, 4)), elite((2, 3)), elite((4, 0))]
    candidate = elite((-0.01, 4.01))
    crowded = mome_cell_add(front, candidate, 3)
    assert [m.fitness.tolist() for m in crowded] == [[2.0, 3.0], [4.0, 0.0], [-0.01, 4.01]]
    assert mome_cell_add(front, candidate, 3, reference=(-0.5, -0.5)) == front

    updated = mome_cell_add(front, elite((3, 2.5)), 3, reference=(-0.5, -0.5))
    assert [m.fitness.tolist() for m in updated] == [[0.0, 4.0], [4.0, 0.0], [3.0, 2.5]]
    assert hypervolume([m.fitness for m in updated], (-0.5, -0.5)) == pytest.approx(11.75)


def test_front_hypervolume_never_drops_with_a_reference():
    reference = (0.0, 0.0)
    generator = np.random.default_rng(13)
    front = []
    volume = 0.0
    for objectives in generator.random((3_000, 2)):
        front = mome_cell_add(front, elite(objectives), 4, reference)
        assert len(front) <= 4
        current = hypervolume([m.fitness for m in front], reference)
        assert current >= volume
        volume = current


def test_mome_repertoire_fronts_stay_non_dominated():
    repertoire = MomeRepertoire(GridSpec([4, 4], [0, 0], [1, 1]), 2, 2, front_capacity=5)
    generator = np.random.default_rng(4)
    for _ in range(20):
        repertoire.add(generator.random((50, 2)), generator.random((50, 2)), generator.random((50, 2)))
    for front in repertoire.fronts.values():
        assert len(front) <= 5
        assert all(not dominates(a.fitness, b.fitness) for a in front for b in front)
    assert repertoire.n_solutions == len(repertoire.elites())
    assert repertoire.sample(10, RngStream.from_seed(0)).shape == (10, 2)


def test_make_repertoire():
    assert isinstance(make_repertoire(UNIT_GRID, 2), Repertoire)
    mome = make_repertoire(UNIT_GRID, 2, n_objectives=2, front_capacity=4)
    assert isinstance(mome, MomeRepertoire) and mome.front_capacity == 4
    with pytest.raises(ConfigurationError):
        MomeRepertoire(UNIT_GRID, 2, 1, 4)


def test_population_capacity():
    population = Population(2, 1, 2)
    population.replace([[0.0], [1.0]], [[0, 1], [1, 0]], [[0.5], [0.5]])
    assert len(population) == 2
    assert [e.cell_id for e in population.elites()] == [0, 1]
    with pytest.raises(ConfigurationError):
        population.replace([[0.0]] * 3, [[0, 0]] * 3, [[0.5]] * 3)
