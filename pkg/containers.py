#!/usr/bin/env python3
"""
Archive containers for the QD Toolkit
Grid and CVT tessellations of descriptor space, the single-objective elite
repertoire and the per-cell Pareto-front repertoire
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.cluster.vq import vq
from scipy.spatial.distance import cdist

from errors import ConfigurationError, EmitterError, InvalidArgumentError, ScoringError
from pareto import crowding_distance, dominates, hypervolume

logger = logging.getLogger(__name__)

_CHUNK = 1024


def _as_descriptors(descriptors, d_dims):
    descriptors = np.asarray(descriptors, dtype=float).reshape(-1, d_dims)
    if not np.all(np.isfinite(descriptors)):
        raise ScoringError("descriptor has a non-finite component")
    return descriptors


def _check_bounds(lower, upper):
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape or lower.ndim != 1:
        raise ConfigurationError("descriptor bounds must be vectors of equal length")
    if not np.all(lower < upper):
        raise ConfigurationError("descriptor bounds need lower < upper on every axis")
    return lower, upper


class GridSpec:
    """Uniform grid over a descriptor box, cells flattened row-major"""

    def __init__(self, dims, lower, upper):
        self.dims = tuple(int(d) for d in dims)
        self.lower, self.upper = _check_bounds(lower, upper)
        if len(self.dims) != len(self.lower):
            raise ConfigurationError(f"grid has {len(self.dims)} axes but bounds have {len(self.lower)}")
        if any(d < 1 for d in self.dims):
            raise ConfigurationError(f"grid dims must be >= 1, got {list(self.dims)}")

    @property
    def d_dims(self):
        return len(self.dims)

    @property
    def n_cells(self):
        return int(np.prod(self.dims))

    def cell_indices(self, descriptors):
        descriptors = _as_descriptors(descriptors, self.d_dims)
        dims = np.array(self.dims)
        scaled = np.floor((descriptors - self.lower) / (self.upper - self.lower) * dims)
        axes = np.clip(scaled, 0, dims - 1).astype(np.int64)
        return np.ravel_multi_index(tuple(axes.T), self.dims)

    def cell_index(self, descriptor):
        return int(self.cell_indices(descriptor)[0])

    def to_dict(self):
        return {'type': 'grid', 'dims': list(self.dims),
                'lower': self.lower.tolist(), 'upper': self.upper.tolist()}

    def __eq__(self, other):
        return (isinstance(other, GridSpec) and self.dims == other.dims
                and np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper))


class CvtSpec:
    """Centroidal Voronoi tessellation: each cell is the region nearest its centroid"""

    def __init__(self, centroids, lower, upper):
        self.centroids = np.atleast_2d(np.asarray(centroids, dtype=float))
        self.lower, self.upper = _check_bounds(lower, upper)
        if len(self.centroids) < 1:
            raise ConfigurationError("a CVT needs at least one centroid")
        if self.centroids.shape[1] != len(self.lower):
            raise ConfigurationError(
                f"centroids have {self.centroids.shape[1]} dimensions, bounds have {len(self.lower)}")
        if np.any(self.centroids < self.lower) or np.any(self.centroids > self.upper):
            raise ConfigurationError("every centroid must lie within the descriptor bounds")
        if len(np.unique(self.centroids, axis=0)) != len(self.centroids):
            raise ConfigurationError("centroids must be pairwise distinct")

    @property
    def d_dims(self):
        return self.centroids.shape[1]

    @property
    def n_cells(self):
        return len(self.centroids)

    def cell_indices(self, descriptors):
        descriptors = _as_descriptors(descriptors, self.d_dims)
        if len(descriptors) == 0:
            return np.zeros(0, dtype=np.int64)
        # argmin keeps the first minimum, so ties go to the lowest centroid index
        return np.concatenate([
            np.argmin(cdist(descriptors[start:start + _CHUNK], self.centroids, 'sqeuclidean'), axis=1)
            for start in range(0, len(descriptors), _CHUNK)
        ])

    def cell_index(self, descriptor):
        return int(self.cell_indices(descriptor)[0])

    def to_dict(self):
        return {'type': 'cvt', 'centroids': self.centroids.tolist(),
                'lower': self.lower.tolist(), 'upper': self.upper.tolist()}

    def __eq__(self, other):
        return (isinstance(other, CvtSpec) and np.array_equal(self.centroids, other.centroids)
                and np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper))


def grid_cell_index(descriptor, spec):
    return spec.cell_index(descriptor)


def cvt_cell_index(descriptor, spec):
    return spec.cell_index(descriptor)


def compute_cvt_centroids(k, d_dims, bounds, n_samples, lloyd_iters, rng, tolerance=1e-6):
    """Lloyd's k-means on uniform samples of the descriptor box.

    Starts from k distinct samples and stops after `lloyd_iters` iterations or once
    no centroid moves by `tolerance` or more.
    """
    k, n_samples = int(k), int(n_samples)
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    if k > n_samples:
        raise InvalidArgumentError(f"k={k} centroids need at least as many samples, got {n_samples}")
    lower, upper = _check_bounds(*bounds)
    if len(lower) != int(d_dims):
        raise InvalidArgumentError(f"bounds have {len(lower)} dimensions, expected {d_dims}")

    generator = rng.generator()
    samples = generator.uniform(lower, upper, size=(n_samples, int(d_dims)))
    centroids = samples[generator.choice(n_samples, size=k, replace=False)].copy()

    for iteration in range(int(lloyd_iters)):
        codes, _ = vq(samples, centroids, check_finite=False)
        counts = np.bincount(codes, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, codes, samples)
        updated = centroids.copy()
        filled = counts > 0
        updated[filled] = sums[filled] / counts[filled, None]
        shift = float(np.max(np.linalg.norm(updated - centroids, axis=1)))
        centroids = updated
        if shift < tolerance:
            logger.debug(f"[CVT] converged after {iteration + 1} iterations")
            break
    return CvtSpec(centroids, lower, upper)


@dataclass
class Elite:
    genotype: np.ndarray
    fitness: object
    descriptor: np.ndarray
    cell_id: int

    def __eq__(self, other):
        return (isinstance(other, Elite) and self.cell_id == other.cell_id
                and np.array_equal(self.genotype, other.genotype)
                and np.array_equal(self.fitness, other.fitness)
                and np.array_equal(self.descriptor, other.descriptor))


class Repertoire:
    """At most one elite per cell; a candidate replaces the occupant only if strictly fitter"""

    n_objectives = 1

    def __init__(self, tessellation, n_params):
        self.tessellation = tessellation
        self.n_params = int(n_params)
        n_cells = tessellation.n_cells
        self.genotypes = np.zeros((n_cells, self.n_params))
        self.fitnesses = np.full(n_cells, -np.inf)
        self.descriptors = np.zeros((n_cells, tessellation.d_dims))
        self.occupied = np.zeros(n_cells, dtype=bool)

    @property
    def d_dims(self):
        return self.tessellation.d_dims

    @property
    def n_cells(self):
        return self.tessellation.n_cells

    @property
    def n_occupied(self):
        return int(self.occupied.sum())

    def occupied_cells(self):
        return np.flatnonzero(self.occupied)

    def cell_indices(self, descriptors):
        return self.tessellation.cell_indices(descriptors)

    def add(self, genotypes, fitnesses, descriptors):
        """Offer a batch in emission order; returns the boolean mask of accepted candidates"""
        genotypes = np.asarray(genotypes, dtype=float).reshape(-1, self.n_params)
        fitnesses = np.asarray(fitnesses, dtype=float).reshape(-1)
        if not np.all(np.isfinite(fitnesses)):
            raise ScoringError("fitness values must be finite")
        cells = self.cell_indices(descriptors)
        descriptors = np.asarray(descriptors, dtype=float).reshape(len(cells), self.d_dims)
        accepted = np.zeros(len(cells), dtype=bool)
        if len(cells) == 0:
            return accepted

        # Per cell keep the fittest candidate, the earliest one on ties, which is
        # what adding them one by one with strict improvement would leave behind.
        order = np.lexsort((np.arange(len(cells)), -fitnesses, cells))
        first = np.ones(len(order), dtype=bool)
        first[1:] = cells[order][1:] != cells[order][:-1]
        winners = order[first]
        target = cells[winners]
        better = ~self.occupied[target] | (fitnesses[winners] > self.fitnesses[target])
        winners, target = winners[better], target[better]

        self.genotypes[target] = genotypes[winners]
        self.fitnesses[target] = fitnesses[winners]
        self.descriptors[target] = descriptors[winners]
        self.occupied[target] = True
        accepted[winners] = True
        return accepted

    def sample(self, count, rng):
        """`count` genotypes drawn uniformly with replacement from occupied cells"""
        count = int(count)
        if count == 0:
            return np.zeros((0, self.n_params))
        cells = self.occupied_cells()
        if len(cells) == 0:
            raise EmitterError("cannot sample parents from an empty repertoire")
        generator = rng.generator() if hasattr(rng, 'generator') else rng
        picks = cells[generator.integers(0, len(cells), size=count)]
        return self.genotypes[picks].copy()

    def occupied_descriptors(self):
        return self.descriptors[self.occupied]

    def elites(self):
        return [Elite(self.genotypes[c].copy(), float(self.fitnesses[c]), self.descriptors[c].copy(), int(c))
                for c in self.occupied_cells()]

    def best_elite(self):
        if not self.occupied.any():
            return None
        cell = int(np.argmax(np.where(self.occupied, self.fitnesses, -np.inf)))
        return Elite(self.genotypes[cell].copy(), float(self.fitnesses[cell]),
                     self.descriptors[cell].copy(), cell)

    def copy(self):
        clone = Repertoire(self.tessellation, self.n_params)
        clone.genotypes = self.genotypes.copy()
        clone.fitnesses = self.fitnesses.copy()
        clone.descriptors = self.descriptors.copy()
        clone.occupied = self.occupied.copy()
        return clone

    def __eq__(self, other):
        if not isinstance(other, Repertoire) or self.tessellation != other.tessellation:
            return False
        if not np.array_equal(self.occupied, other.occupied):
            return False
        mask = self.occupied
        return (np.array_equal(self.genotypes[mask], other.genotypes[mask])
                and np.array_equal(self.fitnesses[mask], other.fitnesses[mask])
                and np.array_equal(self.descriptors[mask], other.descriptors[mask]))


def mome_cell_add(front, candidate, cap, reference=None):
    """Offer a candidate to one cell's Pareto front of at most `cap` members.

    Dominated candidates, and candidates equal to a member, leave the front as it
    is. Otherwise members the candidate dominates are dropped and, past capacity,
    the least crowded member goes (lowest index on ties). With a `reference` point
    an insert that would shrink the front's hypervolume is refused.
    """
    if int(cap) < 1:
        raise ConfigurationError(f"front capacity must be >= 1, got {cap}")
    objectives = np.asarray(candidate.fitness, dtype=float)
    for member in front:
        member_objectives = np.asarray(member.fitness, dtype=float)
        if dominates(member_objectives, objectives) or np.array_equal(member_objectives, objectives):
            return list(front)
    updated = [m for m in front if not dominates(objectives, m.fitness)]
    updated.append(candidate)
    while len(updated) > int(cap):
        distances = crowding_distance([m.fitness for m in updated])
        del updated[int(np.argmin(distances))]
    if reference is not None and (hypervolume([m.fitness for m in updated], reference)
                                  < hypervolume([m.fitness for m in front], reference)):
        return list(front)
    return updated


class MomeRepertoire:
    """Per-cell Pareto fronts, each mutually non-dominated and capped in size"""

    def __init__(self, tessellation, n_params, n_objectives, front_capacity, reference=None):
        if int(n_objectives) < 2:
            raise ConfigurationError("a multi-objective repertoire needs at least two objectives")
        if int(front_capacity) < 1:
            raise ConfigurationError(f"front capacity must be >= 1, got {front_capacity}")
        self.tessellation = tessellation
        self.n_params = int(n_params)
        self.n_objectives = int(n_objectives)
        self.front_capacity = int(front_capacity)
        self.reference = None if reference is None else np.asarray(reference, dtype=float)
        self.fronts = {}

    @property
    def d_dims(self):
        return self.tessellation.d_dims

    @property
    def n_cells(self):
        return self.tessellation.n_cells

    @property
    def n_occupied(self):
        return sum(1 for front in self.fronts.values() if front)

    @property
    def n_solutions(self):
        return sum(len(front) for front in self.fronts.values())

    def cell_indices(self, descriptors):
        return self.tessellation.cell_indices(descriptors)

    def add(self, genotypes, fitnesses, descriptors):
        genotypes = np.asarray(genotypes, dtype=float).reshape(-1, self.n_params)
        fitnesses = np.asarray(fitnesses, dtype=float).reshape(-1, self.n_objectives)
        if not np.all(np.isfinite(fitnesses)):
            raise ScoringError("objective values must be finite")
        cells = self.cell_indices(descriptors)
        descriptors = np.asarray(descriptors, dtype=float).reshape(len(cells), self.d_dims)
        accepted = np.zeros(len(cells), dtype=bool)
        for i, cell in enumerate(cells):
            cell = int(cell)
            candidate = Elite(genotypes[i].copy(), fitnesses[i].copy(), descriptors[i].copy(), cell)
            front = self.fronts.get(cell, [])
            updated = mome_cell_add(front, candidate, self.front_capacity, self.reference)
            accepted[i] = any(member is candidate for member in updated)
            self.fronts[cell] = updated
        return accepted

    def elites(self):
        return [member for cell in sorted(self.fronts) for member in self.fronts[cell]]

    def sample(self, count, rng):
        """Uniform over every stored solution, with replacement"""
        count = int(count)
        if count == 0:
            return np.zeros((0, self.n_params))
        members = self.elites()
        if not members:
            raise EmitterError("cannot sample parents from an empty repertoire")
        generator = rng.generator() if hasattr(rng, 'generator') else rng
        picks = generator.integers(0, len(members), size=count)
        return np.array([members[i].genotype for i in picks])

    def occupied_descriptors(self):
        members = self.elites()
        if not members:
            return np.zeros((0, self.d_dims))
        return np.array([m.descriptor for m in members])

    def __eq__(self, other):
        if not isinstance(other, MomeRepertoire) or self.tessellation != other.tessellation:
            return False
        if self.front_capacity != other.front_capacity or self.n_objectives != other.n_objectives:
            return False
        mine = {c: f for c, f in self.fronts.items() if f}
        theirs = {c: f for c, f in other.fronts.items() if f}
        return mine == theirs


def make_repertoire(tessellation, n_params, n_objectives=1, front_capacity=None, reference=None):
    if n_objectives > 1:
        return MomeRepertoire(tessellation, n_params, n_objectives, front_capacity or 1, reference)
    return Repertoire(tessellation, n_params)


def repertoire_add(repertoire, batch):
    """Add a list of (genotype, ScoringResult) pairs in order"""
    if not batch:
        return repertoire
    genotypes = np.array([genotype for genotype, _ in batch], dtype=float)
    fitnesses = np.array([result.fitness for _, result in batch], dtype=float)
    descriptors = np.array([result.descriptor for _, result in batch], dtype=float)
    repertoire.add(genotypes, fitnesses, descriptors)
    return repertoire


def repertoire_sample(repertoire, count, rng):
    return list(repertoire.sample(count, rng))


class Population:
    """Fixed-capacity population of (genotype, objectives) pairs for NSGA-II and SPEA2"""

    def __init__(self, capacity, n_params, n_objectives):
        if int(capacity) < 1:
            raise ConfigurationError(f"population capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self.n_params = int(n_params)
        self.n_objectives = int(n_objectives)
        self.genotypes = np.zeros((0, self.n_params))
        self.objectives = np.zeros((0, self.n_objectives))
        self.descriptors = np.zeros((0, 0))

    def __len__(self):
        return len(self.genotypes)

    def replace(self, genotypes, objectives, descriptors):
        genotypes = np.asarray(genotypes, dtype=float).reshape(-1, self.n_params)
        if len(genotypes) > self.capacity:
            raise ConfigurationError(f"{len(genotypes)} members exceed the capacity of {self.capacity}")
        self.genotypes = genotypes.copy()
        self.objectives = np.asarray(objectives, dtype=float).reshape(len(genotypes), self.n_objectives).copy()
        self.descriptors = np.asarray(descriptors, dtype=float).reshape(len(genotypes), -1).copy()
        return self

    def elites(self):
        return [Elite(self.genotypes[i].copy(), self.objectives[i].copy(), self.descriptors[i].copy(), i)
                for i in range(len(self))]

    def __eq__(self, other):
        return (isinstance(other, Population) and self.capacity == other.capacity
                and np.array_equal(self.genotypes, other.genotypes)
                and np.array_equal(self.objectives, other.objectives)
                and np.array_equal(self.descriptors, other.descriptors))
