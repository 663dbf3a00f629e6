#!/usr/bin/env python3
"""
Optimizers for the QD Toolkit
MAP-Elites (grid or CVT) and MOME run through the core loop; NSGA-II and SPEA2 are
population baselines sharing the Pareto utilities and the iso+line operator.
"""
import logging
import time
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from containers import GridSpec, MomeRepertoire, Population, Repertoire, compute_cvt_centroids
from core import MetricsRecord, Scorer, run_loop, uniform_genotypes
from emitters import (CmaMeEmitter, CmaMegaEmitter, CompoundEmitter, EsEmitter, GaEmitter, IsolineParams,
                      OmgMegaEmitter, isoline_batch, split_counts)
from errors import ConfigurationError
from metrics_io import load_centroids
from pareto import crowding_distance, hypervolume, non_dominated_sort, spea2_fitness
from rng import RngStream, split_rng
from tasks import make_task, task_summary

logger = logging.getLogger(__name__)

ALGORITHMS = ('map_elites', 'mome', 'nsga2', 'spea2')
CMA_EMITTERS = ('cma_me', 'cma_mega')


def run_streams(seed):
    """(centroids, init, loop) streams of a run, all derived from its seed"""
    return split_rng(RngStream.from_seed(seed), 3)


def build_tessellation(container, task, rng):
    lower, upper = container.bounds
    if container.type == 'grid':
        return GridSpec(container.dims, lower, upper)
    if container.type != 'cvt':
        raise ConfigurationError(f"container type '{container.type}' has no cells")
    if container.centroids_path:
        spec = load_centroids(container.centroids_path, lower, upper)
        if container.k is not None and spec.n_cells != container.k:
            raise ConfigurationError(
                f"{container.centroids_path} holds {spec.n_cells} centroids, config asks for {container.k}")
    else:
        spec = compute_cvt_centroids(container.k, task.d_dims, (lower, upper), container.cvt_samples,
                                     container.cvt_iters, rng)
    if spec.d_dims != task.d_dims:
        raise ConfigurationError(f"centroids are {spec.d_dims}-d, task descriptors are {task.d_dims}-d")
    return spec


def _build_single(emitter, task, batch_size):
    params = emitter.params
    if emitter.type == 'isoline':
        return GaEmitter(task.lower, task.upper, IsolineParams(params['sigma_iso'], params['sigma_line']),
                         params['variation_percentage'])
    if emitter.type in CMA_EMITTERS and batch_size < 2:
        raise ConfigurationError(
            f"a {emitter.type} emitter needs at least 2 genotypes per batch, got {batch_size}")
    if emitter.type == 'cma_me':
        return CmaMeEmitter(task.lower, task.upper, params['sigma0'], batch_size)
    if emitter.type == 'omg_mega':
        return OmgMegaEmitter(task, params['sigma_g'])
    if emitter.type == 'cma_mega':
        return CmaMegaEmitter(task, params['sigma0'], params['eta'], batch_size)
    if emitter.type == 'es':
        return EsEmitter(task, params['n_directions'], params['step_size'], params['learning_rate'],
                         params['explore_period'], params['k_novelty'])
    raise ConfigurationError(f"unknown emitter type '{emitter.type}'")


def build_emitter(emitter, task, batch_size):
    """Emitter for a config entry; CMA-based emitters use their share of the batch as lambda"""
    if emitter.type != 'compound':
        return _build_single(emitter, task, batch_size)
    proportions = [child.proportion for child in emitter.emitters]
    shares = split_counts(batch_size, proportions)
    children = [_build_single(child, task, share) for child, share in zip(emitter.emitters, shares)]
    logger.debug(f"Compound emitter split {batch_size} as {shares}")
    return CompoundEmitter(children, proportions)


def _emitter_types(emitter):
    if emitter.type == 'compound':
        return {child.type for child in emitter.emitters}
    return {emitter.type}


def _qd_loop(config, task, container_factory, workers, on_metrics):
    centroid_rng, init_rng, loop_rng = run_streams(config.seed)
    budget = config.budget
    emitter = build_emitter(config.emitter, task, budget.batch_size)
    init_genotypes = uniform_genotypes(task, budget.init_batch, init_rng)
    tessellation = build_tessellation(config.container, task, centroid_rng)
    logger.info(f"[RUN] {config.algorithm} on {task_summary(task)}, {tessellation.n_cells} cells, "
                f"{budget.total_evaluations} evaluations")
    with Scorer(task, workers or config.workers) as scorer:
        repertoire, _, series = run_loop(
            lambda: container_factory(tessellation), emitter, scorer, init_genotypes, budget.batch_size,
            budget.total_evaluations, loop_rng, config.logging.qd_offset, on_metrics, config.logging.log_every)
    return repertoire, series


def map_elites_run(config, workers=None, on_metrics=None):
    """MAP-Elites; returns (repertoire, metrics series)"""
    task = make_task(config.task.name, config.task.n_params)
    if task.n_objectives > 1:
        raise ConfigurationError(f"map_elites needs a single-objective task, '{task.name}' has "
                                 f"{task.n_objectives} objectives (use mome)")
    return _qd_loop(config, task, lambda tessellation: Repertoire(tessellation, task.n_params), workers,
                    on_metrics)


def mome_run(config, workers=None, on_metrics=None):
    """MAP-Elites over per-cell Pareto fronts; qd_offset is the hypervolume reference point"""
    task = make_task(config.task.name, config.task.n_params)
    if task.n_objectives < 2:
        raise ConfigurationError(f"mome needs a multi-objective task, '{task.name}' has one objective")
    unsupported = _emitter_types(config.emitter) - {'isoline'}
    if unsupported:
        raise ConfigurationError(f"mome only supports the isoline emitter, got {sorted(unsupported)}")
    front_capacity = config.container.front_capacity

    def factory(tessellation):
        return MomeRepertoire(tessellation, task.n_params, task.n_objectives, front_capacity,
                              config.logging.qd_offset)

    return _qd_loop(config, task, factory, workers, on_metrics)


@dataclass(frozen=True)
class Variation:
    """Iso+line operator with sigma_iso relative to each parameter's range"""
    params: IsolineParams
    lower: np.ndarray
    upper: np.ndarray

    def apply(self, parents, partners, generator):
        sigma_iso = self.params.sigma_iso * (self.upper - self.lower)
        return isoline_batch(parents, partners, sigma_iso, self.params.sigma_line, (self.lower, self.upper),
                             generator)


def ranks_and_crowding(objectives):
    fronts = non_dominated_sort(objectives)
    ranks = np.empty(len(objectives), dtype=int)
    crowding = np.empty(len(objectives))
    for rank, front in enumerate(fronts):
        ranks[front] = rank
        crowding[front] = crowding_distance(objectives[front])
    return ranks, crowding


def crowded_tournament(ranks, crowding, count, generator):
    """Binary tournament on (rank asc, crowding desc); the first contestant wins ties"""
    first = generator.integers(0, len(ranks), size=count)
    second = generator.integers(0, len(ranks), size=count)
    first_wins = (ranks[first] < ranks[second]) | (
        (ranks[first] == ranks[second]) & (crowding[first] >= crowding[second]))
    return np.where(first_wins, first, second)


def nsga2_survivors(objectives, capacity):
    """Whole fronts while they fit, then the split front by crowding distance (lowest index on ties)"""
    chosen = []
    for front in non_dominated_sort(objectives):
        front = np.asarray(front)
        if len(chosen) + len(front) <= capacity:
            chosen.extend(front.tolist())
            continue
        distances = crowding_distance(objectives[front])
        order = np.lexsort((front, -distances))
        chosen.extend(front[order[:capacity - len(chosen)]].tolist())
        break
    return np.array(sorted(chosen), dtype=int)


def _merged(population, batch):
    return (np.vstack([population.genotypes, batch.genotypes]),
            np.vstack([population.objectives, np.asarray(batch.fitnesses).reshape(len(batch), -1)]),
            np.vstack([population.descriptors, batch.descriptors]))


def nsga2_step(population, scoring, variation, rng):
    """One generation; `scoring` maps genotypes to a ScoredBatch"""
    size = population.capacity
    if size % 2:
        raise ConfigurationError(f"NSGA-II needs an even population size, got {size}")
    if len(population) != size:
        raise ConfigurationError(f"population holds {len(population)} of {size} members")
    generator = rng.generator() if hasattr(rng, 'generator') else rng
    ranks, crowding = ranks_and_crowding(population.objectives)
    parents = population.genotypes[crowded_tournament(ranks, crowding, size, generator)]
    partners = population.genotypes[crowded_tournament(ranks, crowding, size, generator)]
    batch = scoring(variation.apply(parents, partners, generator))

    genotypes, objectives, descriptors = _merged(population, batch)
    keep = nsga2_survivors(objectives, size)
    survivors = Population(size, population.n_params, population.n_objectives)
    return survivors.replace(genotypes[keep], objectives[keep], descriptors[keep])


def spea2_archive_selection(objectives, fitness, capacity):
    """Indices of the next SPEA2 archive.

    Non-dominated points (fitness < 1) are kept; past capacity the point with the
    lexicographically smallest sorted neighbor distances goes first, and a short
    archive is filled with the best dominated points.
    """
    objectives = np.asarray(objectives, dtype=float)
    nondominated = np.flatnonzero(fitness < 1.0)
    if len(nondominated) <= capacity:
        dominated = np.flatnonzero(fitness >= 1.0)
        dominated = dominated[np.lexsort((dominated, fitness[dominated]))]
        padding = dominated[:capacity - len(nondominated)]
        return np.sort(np.concatenate([nondominated, padding]).astype(int))

    keep = list(nondominated)
    distances = cdist(objectives[keep], objectives[keep])
    np.fill_diagonal(distances, np.inf)
    while len(keep) > capacity:
        neighbors = np.sort(distances, axis=1)
        keys = [np.arange(len(keep))] + [neighbors[:, c] for c in reversed(range(neighbors.shape[1]))]
        victim = int(np.lexsort(keys)[0])
        del keep[victim]
        distances = np.delete(np.delete(distances, victim, axis=0), victim, axis=1)
    return np.array(sorted(keep), dtype=int)


def fitness_tournament(fitness, count, generator):
    """Binary tournament on SPEA2 fitness (lower wins, first contestant on ties)"""
    first = generator.integers(0, len(fitness), size=count)
    second = generator.integers(0, len(fitness), size=count)
    return np.where(fitness[first] <= fitness[second], first, second)


def spea2_step(population, archive, scoring, variation, rng, k=1):
    """One generation; returns (offspring population, archive)"""
    generator = rng.generator() if hasattr(rng, 'generator') else rng
    genotypes = np.vstack([population.genotypes, archive.genotypes])
    objectives = np.vstack([population.objectives, archive.objectives])
    d_dims = population.descriptors.shape[1]
    descriptors = np.vstack([population.descriptors, archive.descriptors.reshape(len(archive), d_dims)])
    fitness = spea2_fitness(objectives, k)
    keep = spea2_archive_selection(objectives, fitness, archive.capacity)
    next_archive = Population(archive.capacity, archive.n_params, archive.n_objectives)
    next_archive.replace(genotypes[keep], objectives[keep], descriptors[keep])

    mating_fitness = fitness[keep]
    size = population.capacity
    parents = next_archive.genotypes[fitness_tournament(mating_fitness, size, generator)]
    partners = next_archive.genotypes[fitness_tournament(mating_fitness, size, generator)]
    batch = scoring(variation.apply(parents, partners, generator))
    offspring = Population(size, population.n_params, population.n_objectives)
    offspring.replace(batch.genotypes, batch.fitnesses, batch.descriptors)
    return offspring, next_archive


def population_metrics(members, reference, iteration, evaluations, started):
    """Hypervolume of the first front against the reference, its share, best first objective"""
    front = non_dominated_sort(members.objectives)[0]
    return MetricsRecord(
        iteration=iteration,
        evaluations=evaluations,
        qd_score=hypervolume(members.objectives[front], reference),
        coverage=len(front) / len(members),
        max_fitness=float(np.max(members.objectives[:, 0])),
        wall_time_ms=(time.perf_counter() - started) * 1000.0,
    )


def _population_setup(config):
    task = make_task(config.task.name, config.task.n_params)
    if task.n_objectives != 2:
        raise ConfigurationError(f"{config.algorithm} needs a bi-objective task, '{task.name}' has "
                                 f"{task.n_objectives}")
    if config.emitter.type != 'isoline':
        raise ConfigurationError(f"{config.algorithm} only supports the isoline variation operator")
    params = config.emitter.params
    variation = Variation(IsolineParams(params['sigma_iso'], params['sigma_line']), task.lower, task.upper)
    return task, variation


def _population_loop(config, step, initial_state, members_of, workers, on_metrics):
    """Shared generation loop; `step(state, scoring, rng)` advances one generation"""
    _, init_rng, loop_rng = run_streams(config.seed)
    budget = config.budget
    size = budget.init_batch
    reference = config.logging.qd_offset
    task = make_task(config.task.name, config.task.n_params)
    series = []
    with Scorer(task, workers or config.workers) as scorer:
        started = time.perf_counter()
        batch = scorer.score(uniform_genotypes(task, size, init_rng))
        state = initial_state(batch)
        series.append(population_metrics(members_of(state), reference, 0, size, started))
        if on_metrics is not None:
            on_metrics(series[-1])
        generations = (budget.total_evaluations - size) // size
        logger.info(f"[RUN] {config.algorithm} on {task_summary(task)}, population {size}, "
                    f"{generations} generations")
        for generation in range(1, generations + 1):
            started = time.perf_counter()
            step_rng, loop_rng = split_rng(loop_rng, 2)
            state = step(state, scorer.score, step_rng)
            series.append(population_metrics(members_of(state), reference, generation,
                                             size * (generation + 1), started))
            if on_metrics is not None:
                on_metrics(series[-1])
            record = series[-1]
            if config.logging.log_every and generation % config.logging.log_every == 0:
                logger.info(f"[RUN] generation {generation} evaluations {record.evaluations} "
                            f"hypervolume {record.qd_score:.6g} front share {record.coverage:.4f}")
    return state, series


def nsga2_run(config, workers=None, on_metrics=None):
    """NSGA-II with population size init_batch; returns (final population, metrics series)"""
    task, variation = _population_setup(config)
    size = config.budget.init_batch

    def initial_state(batch):
        return Population(size, task.n_params, task.n_objectives).replace(
            batch.genotypes, batch.fitnesses, batch.descriptors)

    def step(population, scoring, rng):
        return nsga2_step(population, scoring, variation, rng)

    return _population_loop(config, step, initial_state, lambda population: population, workers, on_metrics)


def spea2_run(config, workers=None, on_metrics=None):
    """SPEA2 with population size init_batch and archive size container.capacity"""
    task, variation = _population_setup(config)
    size = config.budget.init_batch
    capacity = config.container.capacity or size

    def initial_state(batch):
        population = Population(size, task.n_params, task.n_objectives).replace(
            batch.genotypes, batch.fitnesses, batch.descriptors)
        return population, Population(capacity, task.n_params, task.n_objectives)

    def step(state, scoring, rng):
        return spea2_step(state[0], state[1], scoring, variation, rng)

    def members(state):
        population, archive = state
        return archive if len(archive) else population

    state, series = _population_loop(config, step, initial_state, members, workers, on_metrics)
    return state[1] if len(state[1]) else state[0], series


RUNNERS = {
    'map_elites': map_elites_run,
    'mome': mome_run,
    'nsga2': nsga2_run,
    'spea2': spea2_run,
}


def run_algorithm(config, workers=None, on_metrics=None):
    if config.algorithm not in RUNNERS:
        raise ConfigurationError(f"unknown algorithm '{config.algorithm}', expected one of {list(ALGORITHMS)}")
    return RUNNERS[config.algorithm](config, workers, on_metrics)
