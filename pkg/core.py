#!/usr/bin/env python3
"""
Core QD loop for the QD Toolkit
Scores batches on a worker pool, feeds them to the container and the emitter in
emission order and records one metrics row per step
"""
import logging
import math
import multiprocessing
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from errors import ConfigurationError, InvalidArgumentError
from metrics_io import repertoire_metrics
from rng import split_rng

logger = logging.getLogger(__name__)


@dataclass
class ScoringResult:
    """Fitness (scalar, or vector for multi-objective tasks), descriptor and optional gradients"""
    fitness: object
    descriptor: np.ndarray
    fitness_gradient: Optional[np.ndarray] = None
    descriptor_gradients: Optional[np.ndarray] = None


@dataclass(frozen=True)
class MetricsRecord:
    iteration: int
    evaluations: int
    qd_score: float
    coverage: float
    max_fitness: Optional[float]
    wall_time_ms: float


@dataclass
class ScoredBatch:
    """Stacked scoring results of one batch, rows in emission order"""
    genotypes: np.ndarray
    fitnesses: np.ndarray
    descriptors: np.ndarray
    fitness_gradients: Optional[np.ndarray] = None
    descriptor_gradients: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.genotypes)

    def result(self, index):
        return ScoringResult(
            fitness=self.fitnesses[index],
            descriptor=self.descriptors[index],
            fitness_gradient=None if self.fitness_gradients is None else self.fitness_gradients[index],
            descriptor_gradients=None if self.descriptor_gradients is None else self.descriptor_gradients[index],
        )

    def results(self):
        return [self.result(i) for i in range(len(self))]

    def slice(self, start, stop):
        def part(values):
            return None if values is None else values[start:stop]
        return ScoredBatch(self.genotypes[start:stop], self.fitnesses[start:stop], self.descriptors[start:stop],
                           part(self.fitness_gradients), part(self.descriptor_gradients))


def _score_chunk(task, chunk):
    """Score rows one at a time so a row's result never depends on its chunk"""
    results = [task.evaluate(row) for row in chunk]
    fitnesses = np.array([r.fitness for r in results], dtype=float)
    descriptors = np.array([r.descriptor for r in results], dtype=float).reshape(len(results), task.d_dims)
    if task.differentiable:
        return (fitnesses, descriptors,
                np.array([r.fitness_gradient for r in results]),
                np.array([r.descriptor_gradients for r in results]))
    return fitnesses, descriptors, None, None


class Scorer:
    """Scores genotype batches, in parallel when workers > 1.

    Results are always returned in emission order; the pool only changes how fast
    they arrive.
    """

    def __init__(self, task, workers=1):
        if int(workers) < 1:
            raise InvalidArgumentError(f"workers must be >= 1, got {workers}")
        self.task = task
        self.workers = int(workers)
        self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
        return False

    def get_pool(self):
        if self._pool is None:
            logger.debug(f"Starting worker pool with {self.workers} processes")
            self._pool = multiprocessing.Pool(self.workers)
        return self._pool

    def close(self):
        if self._pool is not None:
            self._pool.close()
            self._pool.join()
            self._pool = None

    def score(self, genotypes):
        genotypes = np.atleast_2d(np.asarray(genotypes, dtype=float))
        if len(genotypes) == 0:
            raise InvalidArgumentError("cannot score an empty batch")
        if self.workers == 1 or len(genotypes) < 2 * self.workers:
            parts = [_score_chunk(self.task, genotypes)]
        else:
            chunks = np.array_split(genotypes, self.workers * 4)
            parts = self.get_pool().starmap(_score_chunk, [(self.task, c) for c in chunks if len(c)])
        fitnesses = np.concatenate([p[0] for p in parts])
        descriptors = np.concatenate([p[1] for p in parts])
        if self.task.differentiable:
            return ScoredBatch(genotypes, fitnesses, descriptors,
                               np.concatenate([p[2] for p in parts]),
                               np.concatenate([p[3] for p in parts]))
        return ScoredBatch(genotypes, fitnesses, descriptors)


def uniform_genotypes(task, count, rng):
    """Uniform samples within the task bounds"""
    generator = rng.generator()
    return generator.uniform(task.lower, task.upper, size=(int(count), task.n_params))


def measure(repertoire, iteration, evaluations, qd_offset, started):
    qd_score, coverage, max_fitness = repertoire_metrics(repertoire, qd_offset)
    return MetricsRecord(
        iteration=iteration,
        evaluations=evaluations,
        qd_score=qd_score,
        coverage=coverage,
        max_fitness=max_fitness,
        wall_time_ms=(time.perf_counter() - started) * 1000.0,
    )


def init_algorithm(container_spec, emitter, scorer, init_genotypes, rng, qd_offset=0.0):
    """Score the initial genotypes, fill a fresh repertoire and initialize the emitter.

    `container_spec` is a callable building an empty repertoire (see
    containers.make_repertoire); returns (repertoire, emitter_state, metrics).
    """
    started = time.perf_counter()
    init_genotypes = np.atleast_2d(np.asarray(init_genotypes, dtype=float))
    if init_genotypes.size == 0 or len(init_genotypes) == 0:
        raise InvalidArgumentError("the initial batch must contain at least one genotype")
    task = scorer.task
    if init_genotypes.shape[1] != task.n_params:
        raise InvalidArgumentError(
            f"initial genotypes have {init_genotypes.shape[1]} parameters, task expects {task.n_params}")
    if np.any(init_genotypes < task.lower) or np.any(init_genotypes > task.upper):
        raise InvalidArgumentError("initial genotypes must lie within the task bounds")

    repertoire = container_spec()
    if repertoire.d_dims != task.d_dims:
        raise ConfigurationError(
            f"container has {repertoire.d_dims} descriptor dimensions, task produces {task.d_dims}")

    batch = scorer.score(init_genotypes)
    repertoire.add(batch.genotypes, batch.fitnesses, batch.descriptors)
    emitter_state = emitter.init(repertoire, rng)
    metrics = measure(repertoire, 0, len(batch), qd_offset, started)
    logger.info(f"[RUN] initialized with {len(batch)} genotypes, {repertoire.n_occupied} cells occupied")
    return repertoire, emitter_state, metrics


def update_step(repertoire, emitter, emitter_state, scorer, batch_size, rng, evaluations=0, iteration=0,
                qd_offset=0.0):
    """emit -> score -> tell emitter -> add -> measure.

    The emitter sees the repertoire as it was before this batch; the batch is then
    offered to the container in emission order. Returns (repertoire, emitter_state,
    metrics); `evaluations`/`iteration` are the counts before this step.
    """
    started = time.perf_counter()
    if int(batch_size) < 1:
        raise InvalidArgumentError(f"batch_size must be >= 1, got {batch_size}")
    emit_rng, tell_rng = split_rng(rng, 2)

    genotypes, emitter_state = emitter.emit(repertoire, emitter_state, int(batch_size), emit_rng)
    if len(genotypes) != int(batch_size):
        raise ConfigurationError(f"emitter produced {len(genotypes)} genotypes, expected {batch_size}")
    batch = scorer.score(genotypes)
    emitter_state = emitter.tell(repertoire, emitter_state, batch, tell_rng)
    repertoire.add(batch.genotypes, batch.fitnesses, batch.descriptors)

    metrics = measure(repertoire, iteration + 1, evaluations + len(batch), qd_offset, started)
    return repertoire, emitter_state, metrics


def run_loop(container_spec, emitter, scorer, init_genotypes, batch_size, total_evaluations, rng,
             qd_offset=0.0, on_metrics=None, log_every=10):
    """init_algorithm followed by update_step until the budget is spent.

    The last step is shortened so exactly `total_evaluations` are consumed.
    """
    init_count = len(init_genotypes)
    if total_evaluations < init_count:
        raise ConfigurationError(
            f"budget of {total_evaluations} evaluations is smaller than the initial batch of {init_count}")
    init_rng, rng = split_rng(rng, 2)
    repertoire, emitter_state, metrics = init_algorithm(
        container_spec, emitter, scorer, init_genotypes, init_rng, qd_offset)
    series = [metrics]
    if on_metrics is not None:
        on_metrics(metrics)

    remaining = total_evaluations - init_count
    steps = math.ceil(remaining / batch_size) if remaining else 0
    for _ in range(steps):
        step_rng, rng = split_rng(rng, 2)
        size = min(batch_size, total_evaluations - metrics.evaluations)
        repertoire, emitter_state, metrics = update_step(
            repertoire, emitter, emitter_state, scorer, size, step_rng,
            evaluations=metrics.evaluations, iteration=metrics.iteration, qd_offset=qd_offset)
        series.append(metrics)
        if on_metrics is not None:
            on_metrics(metrics)
        if log_every and metrics.iteration % log_every == 0:
            logger.info(
                f"[RUN] iteration {metrics.iteration} evaluations {metrics.evaluations} "
                f"qd_score {metrics.qd_score:.6g} coverage {metrics.coverage:.4f} "
                f"max_fitness {metrics.max_fitness} ({metrics.wall_time_ms:.1f} ms)")
    return repertoire, emitter_state, series
