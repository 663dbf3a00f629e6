#!/usr/bin/env python3
"""
Tests for scoring, init_algorithm, update_step and the budgeted loop
"""
import os
import time

import numpy as np
import pytest

from containers import GridSpec, Repertoire, repertoire_add
from core import Scorer, init_algorithm, run_loop, uniform_genotypes, update_step
from emitters import GaEmitter
from errors import ConfigurationError, EmitterError, InvalidArgumentError
from metrics_io import archive_to_json
from rng import RngStream, split_rng
from tasks import make_task

SPHERE = make_task('sphere', 4)


def sphere_repertoire():
    return Repertoire(GridSpec([10, 10], SPHERE.descriptor_lower, SPHERE.descriptor_upper), SPHERE.n_params)


def start(seed=0, count=32, scorer=None):
    init_rng, rng = split_rng(RngStream.from_seed(seed), 2)
    genotypes = uniform_genotypes(SPHERE, count, init_rng)
    emitter = GaEmitter(SPHERE.lower, SPHERE.upper)
    repertoire, state, metrics = init_algorithm(sphere_repertoire, emitter, scorer or Scorer(SPHERE), genotypes,
                                                rng, SPHERE.qd_offset)
    return repertoire, emitter, state, metrics


def test_scoring_is_pure():
    genotypes = uniform_genotypes(SPHERE, 10, RngStream.from_seed(1))
    first, second = Scorer(SPHERE).score(genotypes), Scorer(SPHERE).score(genotypes)
    assert np.array_equal(first.fitnesses, second.fitnesses)
    assert np.array_equal(first.descriptors, second.descriptors)
    assert first.fitness_gradients.shape == (10, 4)
    assert first.descriptor_gradients.shape == (10, 2, 4)


def test_scorer_rejects_bad_input():
    with pytest.raises(InvalidArgumentError):
        Scorer(SPHERE, workers=0)
    with pytest.raises(InvalidArgumentError):
        Scorer(SPHERE).score(np.zeros((0, 4)))


def test_parallel_scoring_keeps_emission_order():
    genotypes = uniform_genotypes(SPHERE, 50, RngStream.from_seed(2))
    with Scorer(SPHERE, workers=2) as scorer:
        parallel = scorer.score(genotypes)
    serial = Scorer(SPHERE).score(genotypes)
    assert np.array_equal(parallel.genotypes, genotypes)
    assert np.array_equal(parallel.fitnesses, serial.fitnesses)
    assert np.array_equal(parallel.descriptors, serial.descriptors)


def test_init_with_32_genotypes():
    repertoire, _, _, metrics = start()
    assert 1 <= repertoire.n_occupied <= 32
    assert metrics.iteration == 0 and metrics.evaluations == 32


def test_init_rejects_empty_batch():
    with pytest.raises(InvalidArgumentError):
        init_algorithm(sphere_repertoire, GaEmitter(SPHERE.lower, SPHERE.upper), Scorer(SPHERE),
                       np.zeros((0, 4)), RngStream.from_seed(0))


def test_init_rejects_out_of_bounds_genotypes():
    with pytest.raises(InvalidArgumentError):
        init_algorithm(sphere_repertoire, GaEmitter(SPHERE.lower, SPHERE.upper), Scorer(SPHERE),
                       np.full((2, 4), 6.0), RngStream.from_seed(0))


def test_init_rejects_dimension_mismatch():
    def line():
        return Repertoire(GridSpec([10], [0], [1]), 4)

    with pytest.raises(ConfigurationError):
        init_algorithm(line, GaEmitter(SPHERE.lower, SPHERE.upper), Scorer(SPHERE), np.zeros((2, 4)),
                       RngStream.from_seed(0))


def test_init_is_deterministic():
    first, second = start(seed=5)[0], start(seed=5)[0]
    assert archive_to_json(first) == archive_to_json(second)


def test_update_step_accounting_and_monotonicity():
    repertoire, emitter, state, metrics = start()
    scorer = Scorer(SPHERE)
    for step_rng in split_rng(RngStream.from_seed(9), 20):
        previous = metrics
        repertoire, state, metrics = update_step(repertoire, emitter, state, scorer, 64, step_rng,
                                                 evaluations=previous.evaluations, iteration=previous.iteration,
                                                 qd_offset=SPHERE.qd_offset)
        assert metrics.evaluations == previous.evaluations + 64
        assert metrics.iteration == previous.iteration + 1
        assert metrics.qd_score >= previous.qd_score
        assert metrics.coverage >= previous.coverage


def test_update_step_checks_batch_size():
    repertoire, emitter, state, _ = start()
    with pytest.raises(InvalidArgumentError):
        update_step(repertoire, emitter, state, Scorer(SPHERE), 0, RngStream.from_seed(0))


def test_emitter_needs_elites():
    emitter = GaEmitter(SPHERE.lower, SPHERE.upper)
    with pytest.raises(EmitterError):
        update_step(sphere_repertoire(), emitter, None, Scorer(SPHERE), 4, RngStream.from_seed(0))


def loop(workers, seed=7, total=32 + 100 * 16):
    init_rng, rng = split_rng(RngStream.from_seed(seed), 2)
    with Scorer(SPHERE, workers) as scorer:
        return run_loop(sphere_repertoire, GaEmitter(SPHERE.lower, SPHERE.upper), scorer,
                        uniform_genotypes(SPHERE, 32, init_rng), 16, total, rng, SPHERE.qd_offset, log_every=0)


def test_worker_count_does_not_change_results():
    serial_repertoire, _, serial = loop(1)
    parallel_repertoire, _, parallel = loop(2)
    assert serial_repertoire == parallel_repertoire
    strip = [(m.iteration, m.evaluations, m.qd_score, m.coverage, m.max_fitness) for m in serial]
    assert strip == [(m.iteration, m.evaluations, m.qd_score, m.coverage, m.max_fitness) for m in parallel]
    assert len(serial) == 101


def test_loop_consumes_exact_budget():
    _, _, series = loop(1, total=32 + 16 * 3 + 5)
    assert [m.evaluations for m in series] == [32, 48, 64, 80, 85]
    assert all(a.evaluations < b.evaluations for a, b in zip(series, series[1:]))


def test_loop_rejects_budget_below_init():
    with pytest.raises(ConfigurationError):
        loop(1, total=31)


def test_loop_reports_every_record():
    seen = []
    init_rng, rng = split_rng(RngStream.from_seed(3), 2)
    run_loop(sphere_repertoire, GaEmitter(SPHERE.lower, SPHERE.upper), Scorer(SPHERE),
             uniform_genotypes(SPHERE, 8, init_rng), 8, 40, rng, on_metrics=seen.append, log_every=0)
    assert [m.evaluations for m in seen] == [8, 16, 24, 32, 40]


def test_batch_results_feed_repertoire_add():
    genotypes = uniform_genotypes(SPHERE, 12, RngStream.from_seed(4))
    batch = Scorer(SPHERE).score(genotypes)
    results = batch.results()
    assert results[3].fitness == batch.fitnesses[3]
    assert np.array_equal(results[3].fitness_gradient, -2.0 * genotypes[3])
    direct = sphere_repertoire()
    direct.add(batch.genotypes, batch.fitnesses, batch.descriptors)
    assert repertoire_add(sphere_repertoire(), list(zip(genotypes, results))) == direct


@pytest.mark.slow
@pytest.mark.skipif((os.cpu_count() or 1) < 8, reason="needs an 8-core host")
def test_eight_workers_halve_the_wall_time():
    def timed(workers):
        started = time.perf_counter()
        init_rng, rng = split_rng(RngStream.from_seed(0), 2)
        with Scorer(SPHERE, workers) as scorer:
            run_loop(sphere_repertoire, GaEmitter(SPHERE.lower, SPHERE.upper), scorer,
                     uniform_genotypes(SPHERE, 10_000, init_rng), 10_000, 1_000_000, rng, log_every=0)
        return time.perf_counter() - started

    assert timed(8) <= 0.5 * timed(1)
