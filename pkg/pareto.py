#!/usr/bin/env python3
"""
Pareto utilities for the QD Toolkit
Dominance, non-dominated sorting, crowding distance, SPEA2 fitness and 2-D hypervolume.
Every objective is maximized.
"""
import numpy as np
from scipy.spatial.distance import cdist

from errors import InvalidArgumentError, UnsupportedDimensionError


def _as_points(points):
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points.reshape(1, -1)
    return points


def dominates(a, b):
    """True iff a is at least as good as b everywhere and strictly better somewhere"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"objective dimensions differ: {a.shape} vs {b.shape}")
    return bool(np.all(a >= b) and np.any(a > b))


def dominance_matrix(points):
    """matrix[i, j] is True iff point i dominates point j"""
    points = _as_points(points)
    at_least = np.all(points[:, None, :] >= points[None, :, :], axis=2)
    strictly = np.any(points[:, None, :] > points[None, :, :], axis=2)
    return at_least & strictly


def non_dominated_sort(points):
    """Indices grouped into fronts, front 0 holding the maximal points"""
    points = _as_points(points)
    if len(points) == 0:
        raise InvalidArgumentError("non-dominated sort needs at least one point")
    dominated_by = dominance_matrix(points)
    remaining = np.ones(len(points), dtype=bool)
    fronts = []
    while remaining.any():
        # dominated by some point that is still in play
        dominated = np.any(dominated_by[remaining][:, remaining], axis=0)
        candidates = np.flatnonzero(remaining)
        front = candidates[~dominated]
        fronts.append(front.tolist())
        remaining[front] = False
    return fronts


def front_ranks(points):
    """Front index of every point"""
    ranks = np.empty(len(_as_points(points)), dtype=int)
    for rank, front in enumerate(non_dominated_sort(points)):
        ranks[front] = rank
    return ranks


def crowding_distance(front):
    """Crowding distance of each point of a (mutually non-dominated) front"""
    points = _as_points(front)
    n, m = points.shape
    distances = np.zeros(n)
    if n == 0:
        return distances
    for objective in range(m):
        order = np.argsort(points[:, objective], kind='stable')
        values = points[order, objective]
        distances[order[0]] = np.inf
        distances[order[-1]] = np.inf
        span = values[-1] - values[0]
        if span == 0 or n < 3:
            continue
        distances[order[1:-1]] += (values[2:] - values[:-2]) / span
    return distances


def spea2_fitness(points, k=1):
    """SPEA2 fitness: raw (sum of dominator strengths) plus density; lower is better"""
    if int(k) < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    points = _as_points(points)
    n = len(points)
    _, raw = spea2_components(points)
    if n == 1:
        kth_distance = np.zeros(1)
    else:
        distances = cdist(points, points)
        np.fill_diagonal(distances, np.inf)
        kth = min(int(k), n - 1)
        kth_distance = np.sort(distances, axis=1)[:, kth - 1]
    density = 1.0 / (kth_distance + 2.0)
    return raw.astype(float) + density


def spea2_components(points):
    """(strength, raw) used by the SPEA2 fitness, exposed for inspection"""
    dominated_by = dominance_matrix(points)
    strength = dominated_by.sum(axis=1)
    return strength, dominated_by.T.astype(int) @ strength


def hypervolume(front, reference):
    """Area dominated by a 2-objective front above the reference point"""
    reference = np.asarray(reference, dtype=float)
    points = np.asarray(front, dtype=float)
    if reference.shape != (2,):
        raise UnsupportedDimensionError(f"hypervolume is implemented for 2 objectives, got {reference.shape}")
    if points.size == 0:
        return 0.0
    if points.ndim == 1:
        points = points.reshape(1, -1)
    if points.ndim != 2 or points.shape[1] != 2:
        raise UnsupportedDimensionError(f"hypervolume is implemented for 2 objectives, got points of shape "
                                        f"{points.shape}")
    if np.any(points < reference):
        raise InvalidArgumentError("every front point must be at or above the reference point")

    # sweep from the largest first objective down, adding the newly covered strip
    order = np.lexsort((-points[:, 1], -points[:, 0]))
    volume = 0.0
    covered = reference[1]
    for x, y in points[order]:
        if y > covered:
            volume += (x - reference[0]) * (y - covered)
            covered = y
    return float(volume)
