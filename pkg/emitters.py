#!/usr/bin/env python3
"""
Emitters for the QD Toolkit
Every emitter follows the same three-call protocol:

    state = emitter.init(repertoire, rng)
    genotypes, state = emitter.emit(repertoire, state, count, rng)
    state = emitter.tell(repertoire, state, batch, rng)

`rng` is an RngStream; `batch` is the ScoredBatch of the emitted genotypes and
`tell` runs before the batch is added, so improvement is judged against the
repertoire the genotypes were proposed from.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import rankdata

from cmaes import CmaesState, cmaes_ask, cmaes_init, cmaes_tell, condition_number
from core import Scorer
from errors import ConfigurationError, EmitterError, InvalidArgumentError, RestartRequired
from rng import split_rng

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-12
MAX_CONDITION = 1e14
EXPLOIT = 'exploit'
EXPLORE = 'explore'


def _generator(rng):
    return rng.generator() if hasattr(rng, 'generator') else rng


def _clip(x, bounds):
    return np.clip(x, bounds[0], bounds[1])


def _sample_elite(repertoire, generator):
    """(genotype, cell_id) of an elite drawn uniformly"""
    if repertoire.n_occupied == 0:
        raise EmitterError("cannot draw an elite from an empty repertoire")
    cells = repertoire.occupied_cells()
    cell = int(cells[generator.integers(0, len(cells))])
    return repertoire.genotypes[cell].copy(), cell


class Emitter:
    """Base emitter: stateless, emits nothing"""

    def init(self, repertoire, rng):
        return None

    def emit(self, repertoire, state, count, rng):
        raise NotImplementedError

    def tell(self, repertoire, state, batch, rng):
        return state


# Iso+line variation

@dataclass(frozen=True)
class IsolineParams:
    sigma_iso: float = 0.01
    sigma_line: float = 0.1

    def __post_init__(self):
        for name in ('sigma_iso', 'sigma_line'):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0:
                raise InvalidArgumentError(f"{name} must be finite and >= 0, got {value}")


def isoline_batch(parents, partners, sigma_iso, sigma_line, bounds, rng):
    """Row-wise iso+line offspring; sigma_iso may be a scalar or one value per axis"""
    parents = np.asarray(parents, dtype=float)
    partners = np.asarray(partners, dtype=float)
    if parents.shape != partners.shape:
        raise InvalidArgumentError(f"parent shapes differ: {parents.shape} vs {partners.shape}")
    generator = _generator(rng)
    iso = generator.standard_normal(parents.shape)
    line = generator.standard_normal((len(parents), 1))
    return _clip(parents + sigma_iso * iso + sigma_line * line * (partners - parents), bounds)


def isoline_variation(x1, x2, params, bounds, rng):
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != x2.shape:
        raise InvalidArgumentError(f"genotype lengths differ: {len(x1)} vs {len(x2)}")
    return isoline_batch(x1[None], x2[None], params.sigma_iso, params.sigma_line, bounds, rng)[0]


class GaEmitter(Emitter):
    """Iso+line crossover between random elites, Gaussian mutation for the rest of the batch.

    sigma_iso is relative to the width of each parameter's range.
    """

    def __init__(self, lower, upper, params=None, variation_percentage=1.0):
        if not 0.0 <= float(variation_percentage) <= 1.0:
            raise ConfigurationError(f"variation_percentage must be in [0, 1], got {variation_percentage}")
        self.bounds = (np.asarray(lower, dtype=float), np.asarray(upper, dtype=float))
        self.params = params or IsolineParams()
        self.variation_percentage = float(variation_percentage)
        self.sigma_iso = self.params.sigma_iso * (self.bounds[1] - self.bounds[0])

    def emit(self, repertoire, state, count, rng):
        generator = _generator(rng)
        n_variation = int(math.floor(count * self.variation_percentage))
        parents = repertoire.sample(count, generator)
        partners = repertoire.sample(n_variation, generator)
        crossed = isoline_batch(parents[:n_variation], partners, self.sigma_iso, self.params.sigma_line,
                                self.bounds, generator)
        rest = parents[n_variation:]
        mutated = _clip(rest + self.sigma_iso * generator.standard_normal(rest.shape), self.bounds)
        return np.vstack([crossed, mutated]), state


# CMA-ME improvement emitter

@dataclass
class CmaMeEmitterState:
    cmaes: CmaesState
    anchor_cell: int
    sigma0: float
    pending: Optional[np.ndarray] = field(default=None, repr=False)
    restarts: int = 0


def improvement_tiers(cells, fitnesses, repertoire):
    """(tier, key) per candidate: 0 new cell, 1 improves the incumbent, 2 neither"""
    cells = np.asarray(cells, dtype=int)
    fitnesses = np.asarray(fitnesses, dtype=float)
    occupied = repertoire.occupied[cells]
    incumbents = repertoire.fitnesses[cells]
    tiers = np.where(~occupied, 0, np.where(fitnesses > incumbents, 1, 2))
    keys = np.where(tiers == 1, fitnesses - np.where(occupied, incumbents, 0.0), fitnesses)
    return tiers, keys


def cmame_rank(batch, repertoire):
    """Permutation of (cell_id, fitness) pairs, best first, by the improvement tiers"""
    if len(batch) == 0:
        return np.zeros(0, dtype=int)
    cells = [int(cell) for cell, _ in batch]
    fitnesses = [float(fitness) for _, fitness in batch]
    tiers, keys = improvement_tiers(cells, fitnesses, repertoire)
    return np.lexsort((np.arange(len(batch)), -keys, tiers))


def _rank_batch(batch, repertoire):
    cells = repertoire.cell_indices(batch.descriptors)
    tiers, _ = improvement_tiers(cells, batch.fitnesses, repertoire)
    ranking = cmame_rank(list(zip(cells, batch.fitnesses)), repertoire)
    return ranking, bool(np.any(tiers < 2))


def _needs_restart(cmaes, batch_improved):
    if not batch_improved or cmaes.sigma < SIGMA_FLOOR:
        return True
    try:
        return condition_number(cmaes) > MAX_CONDITION
    except RestartRequired:
        return True


def _restart_cmame(state, repertoire, rng):
    genotype, cell = _sample_elite(repertoire, _generator(rng))
    logger.debug(f"CMA-ME restart #{state.restarts + 1} anchored at cell {cell}")
    return replace(state, cmaes=cmaes_init(genotype, state.sigma0, state.cmaes.params.lam), anchor_cell=cell,
                   pending=None, restarts=state.restarts + 1)


def cmame_maybe_restart(state, batch_improved, repertoire, rng):
    if not _needs_restart(state.cmaes, batch_improved):
        return state
    return _restart_cmame(state, repertoire, rng)


class CmaMeEmitter(Emitter):
    """CMA-ES that ranks its samples by how much they improve the repertoire"""

    def __init__(self, lower, upper, sigma0=0.5, batch_size=None):
        if not float(sigma0) > 0:
            raise ConfigurationError(f"sigma0 must be positive, got {sigma0}")
        self.bounds = (np.asarray(lower, dtype=float), np.asarray(upper, dtype=float))
        self.sigma0 = float(sigma0)
        self.batch_size = batch_size

    def init(self, repertoire, rng):
        genotype, cell = _sample_elite(repertoire, _generator(rng))
        return CmaMeEmitterState(cmaes_init(genotype, self.sigma0, self.batch_size), cell, self.sigma0)

    def emit(self, repertoire, state, count, rng):
        restart_rng, ask_rng = split_rng(rng, 2)
        try:
            samples = cmaes_ask(state.cmaes, max(count, 2), ask_rng)
        except RestartRequired:
            state = _restart_cmame(state, repertoire, restart_rng)
            samples = cmaes_ask(state.cmaes, max(count, 2), ask_rng)
        samples = samples[:count]
        return _clip(samples, self.bounds), replace(state, pending=samples)

    def tell(self, repertoire, state, batch, rng):
        ranking, improved = _rank_batch(batch, repertoire)
        cmaes = state.cmaes
        # a shortened final batch only feeds the restart rule
        if state.pending is not None and len(state.pending) == cmaes.params.lam:
            cmaes = cmaes_tell(cmaes, state.pending, ranking)
        return cmame_maybe_restart(replace(state, cmaes=cmaes, pending=None), improved, repertoire, rng)


# Gradient arborescence (OMG-MEGA, CMA-MEGA)

@dataclass(frozen=True)
class MegaCoefficients:
    c: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.c)):
            raise InvalidArgumentError("gradient coefficients must be finite")


def normalize_gradients(fitness_gradient, descriptor_jacobian):
    """Rows (grad f, grad d_1, ...) scaled to unit norm; zero rows stay zero"""
    rows = np.vstack([np.asarray(fitness_gradient, dtype=float)[None, :],
                      np.asarray(descriptor_jacobian, dtype=float)])
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    return np.divide(rows, norms, out=np.zeros_like(rows), where=norms > 0)


def mega_offspring(x, gradient_matrix, coefficients, bounds):
    c = coefficients.c if isinstance(coefficients, MegaCoefficients) else np.asarray(coefficients, dtype=float)
    return _clip(np.asarray(x, dtype=float) + c @ gradient_matrix, bounds)


def _require_gradients(gradient_fn):
    if gradient_fn is None:
        raise ConfigurationError("gradient emitters need a differentiable task")


def omg_mega_emit(repertoire, gradient_fn, sigma_g, batch_size, bounds, rng):
    _require_gradients(gradient_fn)
    generator = _generator(rng)
    parents = repertoire.sample(batch_size, generator)
    coefficients = generator.normal(0.0, float(sigma_g), size=(int(batch_size), 1 + repertoire.d_dims))
    coefficients[:, 0] = np.abs(coefficients[:, 0])
    offspring = np.empty_like(parents)
    for i, parent in enumerate(parents):
        gradient_matrix = normalize_gradients(*gradient_fn(parent))
        offspring[i] = mega_offspring(parent, gradient_matrix, coefficients[i], bounds)
    return offspring


def _task_gradient_fn(task):
    if not task.differentiable:
        raise ConfigurationError(f"task '{task.name}' has no gradients for a gradient emitter")
    return task.gradients


class OmgMegaEmitter(Emitter):
    def __init__(self, task, sigma_g=1.0):
        self.gradient_fn = _task_gradient_fn(task)
        self.bounds = (task.lower, task.upper)
        self.sigma_g = float(sigma_g)

    def emit(self, repertoire, state, count, rng):
        return omg_mega_emit(repertoire, self.gradient_fn, self.sigma_g, count, self.bounds, rng), state


@dataclass
class CmaMegaState:
    """CMA-ES over gradient coefficients plus the current search point x_t"""
    cmaes: CmaesState
    x_t: np.ndarray
    sigma0: float
    gradient_matrix: Optional[np.ndarray] = field(default=None, repr=False)
    pending: Optional[np.ndarray] = field(default=None, repr=False)
    restarts: int = 0


def cma_mega_emit(state, gradient_fn, count, bounds, rng):
    """Offspring x_t + c_i^T G for `count` sampled coefficient vectors"""
    _require_gradients(gradient_fn)
    gradient_matrix = normalize_gradients(*gradient_fn(state.x_t))
    coefficients = cmaes_ask(state.cmaes, max(int(count), 2), rng)[:int(count)]
    offspring = _clip(state.x_t + coefficients @ gradient_matrix, bounds)
    return offspring, replace(state, gradient_matrix=gradient_matrix, pending=coefficients)


def cma_mega_tell(state, batch, repertoire, eta, bounds, rng):
    ranking, improved = _rank_batch(batch, repertoire)
    cmaes, x_t = state.cmaes, state.x_t
    if state.pending is not None and len(state.pending) == cmaes.params.lam:
        top = state.pending[ranking[:cmaes.params.mu]]
        x_t = _clip(x_t + float(eta) * (cmaes.params.weights @ top) @ state.gradient_matrix, bounds)
        cmaes = cmaes_tell(cmaes, state.pending, ranking)
    state = replace(state, cmaes=cmaes, x_t=x_t, pending=None)
    if not _needs_restart(cmaes, improved):
        return state
    genotype, cell = _sample_elite(repertoire, _generator(rng))
    logger.debug(f"CMA-MEGA restart #{state.restarts + 1} from cell {cell}")
    return replace(state, cmaes=cmaes_init(np.zeros(len(cmaes.mean)), state.sigma0, cmaes.params.lam),
                   x_t=genotype, restarts=state.restarts + 1)


def cma_mega_step(state, x_t, gradient_fn, repertoire, eta, bounds, rng, scoring):
    """One full generation; `scoring` maps a genotype array to a ScoredBatch.

    Returns (offspring batch, updated state, new x_t).
    """
    emit_rng, tell_rng = split_rng(rng, 2)
    state = replace(state, x_t=np.asarray(x_t, dtype=float))
    offspring, state = cma_mega_emit(state, gradient_fn, state.cmaes.params.lam, bounds, emit_rng)
    batch = scoring(offspring)
    state = cma_mega_tell(state, batch, repertoire, eta, bounds, tell_rng)
    return batch, state, state.x_t


class CmaMegaEmitter(Emitter):
    def __init__(self, task, sigma0=1.0, eta=1.0, batch_size=None):
        if not float(sigma0) > 0:
            raise ConfigurationError(f"sigma0 must be positive, got {sigma0}")
        self.gradient_fn = _task_gradient_fn(task)
        self.bounds = (task.lower, task.upper)
        self.sigma0 = float(sigma0)
        self.eta = float(eta)
        self.batch_size = batch_size

    def init(self, repertoire, rng):
        genotype, _ = _sample_elite(repertoire, _generator(rng))
        cmaes = cmaes_init(np.zeros(1 + repertoire.d_dims), self.sigma0, self.batch_size)
        return CmaMegaState(cmaes, genotype, self.sigma0)

    def emit(self, repertoire, state, count, rng):
        return cma_mega_emit(state, self.gradient_fn, count, self.bounds, rng)

    def tell(self, repertoire, state, batch, rng):
        return cma_mega_tell(state, batch, repertoire, self.eta, self.bounds, rng)


# Evolution strategies with novelty (ME-ES)

@dataclass(frozen=True)
class EsEmitterState:
    search_point: np.ndarray
    step_size: float
    mode: str = EXPLOIT
    generations_in_mode: int = 0
    # perturbation evaluations; they never reach the repertoire or the budget
    auxiliary_evaluations: int = 0


def centered_ranks(values):
    """Average ranks mapped linearly onto [-0.5, 0.5]"""
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return np.zeros(len(values))
    return (rankdata(values, method='average') - 1) / (len(values) - 1) - 0.5


def es_gradient_estimate(x, directions, fitnesses, sigma):
    if not float(sigma) > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    directions = np.asarray(directions, dtype=float)
    fitnesses = np.asarray(fitnesses, dtype=float)
    if len(directions) != len(fitnesses):
        raise InvalidArgumentError(f"{len(directions)} directions but {len(fitnesses)} fitness values")
    if directions.ndim != 2 or directions.shape[1] != len(np.asarray(x)):
        raise InvalidArgumentError("directions must be rows of the genotype's length")
    return centered_ranks(fitnesses) @ directions / (len(directions) * float(sigma))


def novelty_score(descriptor, archive_descriptors, k):
    """Mean distance to the k nearest archived descriptors; inf for an empty archive"""
    if int(k) < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    archive = np.asarray(archive_descriptors, dtype=float)
    if archive.size == 0:
        return math.inf
    distances = cdist(np.asarray(descriptor, dtype=float)[None, :], archive.reshape(len(archive), -1))[0]
    nearest = np.sort(distances)[:min(int(k), len(distances))]
    return float(np.mean(nearest))


def es_emitter_step(state, repertoire, scoring, n_directions, learning_rate, explore_period, k_novelty, rng,
                    bounds):
    """One ES generation; returns (new search point, new state)"""
    if int(n_directions) < 2 or int(n_directions) % 2:
        raise InvalidArgumentError(f"n_directions must be a positive even number, got {n_directions}")
    generator = _generator(rng)
    half = generator.standard_normal((int(n_directions) // 2, len(state.search_point)))
    directions = np.vstack([half, -half])
    batch = scoring(_clip(state.search_point + state.step_size * directions, bounds))

    if state.mode == EXPLOIT:
        objective = batch.fitnesses
    else:
        archive = repertoire.occupied_descriptors()
        objective = np.array([novelty_score(d, archive, k_novelty) for d in batch.descriptors])
    gradient = es_gradient_estimate(state.search_point, directions, objective, state.step_size)
    search_point = _clip(state.search_point + float(learning_rate) * gradient, bounds)

    mode, generations = state.mode, state.generations_in_mode + 1
    if generations >= int(explore_period):
        mode, generations = (EXPLORE if mode == EXPLOIT else EXPLOIT), 0
    return search_point, replace(state, search_point=search_point, mode=mode, generations_in_mode=generations,
                                 auxiliary_evaluations=state.auxiliary_evaluations + len(batch))


class EsEmitter(Emitter):
    """One ES generation per emitted genotype; perturbations are scored in-process"""

    def __init__(self, task, n_directions=20, step_size=0.02, learning_rate=0.01, explore_period=10, k_novelty=10):
        if int(n_directions) < 2 or int(n_directions) % 2:
            raise ConfigurationError(f"n_directions must be a positive even number, got {n_directions}")
        if not float(step_size) > 0:
            raise ConfigurationError(f"step_size must be positive, got {step_size}")
        if int(explore_period) < 1:
            raise ConfigurationError(f"explore_period must be >= 1, got {explore_period}")
        self.scorer = Scorer(task, 1)
        self.bounds = (task.lower, task.upper)
        self.n_directions = int(n_directions)
        self.step_size = float(step_size)
        self.learning_rate = float(learning_rate)
        self.explore_period = int(explore_period)
        self.k_novelty = int(k_novelty)

    def init(self, repertoire, rng):
        genotype, _ = _sample_elite(repertoire, _generator(rng))
        return EsEmitterState(genotype, self.step_size)

    def emit(self, repertoire, state, count, rng):
        offspring = []
        for step_rng in split_rng(rng, count):
            point, state = es_emitter_step(state, repertoire, self.scorer.score, self.n_directions,
                                           self.learning_rate, self.explore_period, self.k_novelty,
                                           step_rng, self.bounds)
            offspring.append(point)
        return np.array(offspring).reshape(count, len(state.search_point)), state


# Compound emitter

def split_counts(total, proportions):
    """floor(p_i * total), leftover slots to the largest remainders (lowest index on ties)"""
    proportions = np.asarray(proportions, dtype=float)
    exact = proportions * int(total)
    counts = np.floor(exact).astype(int)
    leftover = int(total) - int(counts.sum())
    order = np.lexsort((np.arange(len(exact)), -(exact - counts)))
    counts[order[:leftover]] += 1
    return counts.tolist()


@dataclass
class CompoundState:
    states: list
    counts: list = field(default_factory=list)


class CompoundEmitter(Emitter):
    """Splits every batch across sub-emitters by fixed proportions, in sub-emitter order"""

    def __init__(self, emitters, proportions):
        if not emitters or len(emitters) != len(proportions):
            raise ConfigurationError("a compound emitter needs one proportion per sub-emitter")
        if any(p < 0 for p in proportions) or abs(sum(proportions) - 1.0) > 1e-9:
            raise ConfigurationError(f"emitter proportions must be >= 0 and sum to 1, got {list(proportions)}")
        self.emitters = list(emitters)
        self.proportions = [float(p) for p in proportions]

    def init(self, repertoire, rng):
        streams = split_rng(rng, len(self.emitters))
        return CompoundState([e.init(repertoire, r) for e, r in zip(self.emitters, streams)])

    def emit(self, repertoire, state, count, rng):
        counts = split_counts(count, self.proportions)
        streams = split_rng(rng, len(self.emitters))
        parts, states = [], []
        for emitter, sub_state, sub_count, stream in zip(self.emitters, state.states, counts, streams):
            if sub_count:
                genotypes, sub_state = emitter.emit(repertoire, sub_state, sub_count, stream)
                parts.append(genotypes)
            states.append(sub_state)
        return np.vstack(parts), CompoundState(states, counts)

    def tell(self, repertoire, state, batch, rng):
        streams = split_rng(rng, len(self.emitters))
        states, start = [], 0
        for emitter, sub_state, sub_count, stream in zip(self.emitters, state.states, state.counts, streams):
            if sub_count:
                sub_state = emitter.tell(repertoire, sub_state, batch.slice(start, start + sub_count), stream)
                start += sub_count
            states.append(sub_state)
        return CompoundState(states, state.counts)
