#!/usr/bin/env python3
"""
Benchmark tasks for the QD Toolkit
Sphere, rastrigin and planar arm scoring functions with descriptors, bounds and
analytic gradients, plus the bi-objective tasks used by the multi-objective
algorithms. Every fitness is maximized.
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from core import ScoringResult
from errors import ConfigurationError, ScoringError

RASTRIGIN_BOUND = 5.12
RASTRIGIN_WIDTH = 2 * RASTRIGIN_BOUND


@dataclass(eq=False)
class TaskSpec:
    name: str
    n_params: int
    lower: np.ndarray
    upper: np.ndarray
    d_dims: int
    descriptor_lower: np.ndarray
    descriptor_upper: np.ndarray
    differentiable: bool
    n_objectives: int
    # Known minimum of each objective on the domain (QD offset / hypervolume reference)
    fitness_lower: np.ndarray
    function: Callable = field(repr=False)

    def check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_params,):
            raise ScoringError(f"{self.name} expects {self.n_params} parameters, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ScoringError(f"{self.name} received a non-finite genotype")
        if np.any(x < self.lower) or np.any(x > self.upper):
            raise ScoringError(f"{self.name} genotype outside its bounds")
        return x

    def evaluate(self, x):
        x = self.check(x)
        fitness, descriptor, fitness_gradient, descriptor_gradients = self.function(x, self.differentiable)
        if self.n_objectives > 1:
            fitness = np.asarray(fitness, dtype=float)
        else:
            fitness = float(fitness)
        return ScoringResult(fitness, descriptor, fitness_gradient, descriptor_gradients)

    def gradients(self, x):
        return task_gradients(self, x)

    @property
    def qd_offset(self):
        """Default QD-score offset: the lowest attainable fitness"""
        return float(self.fitness_lower[0])


def _leading_descriptor(x, gradients):
    """First two coordinates mapped from [-5.12, 5.12] to [0, 1]"""
    d_dims = min(len(x), 2)
    descriptor = (x[:d_dims] + RASTRIGIN_BOUND) / RASTRIGIN_WIDTH
    if not gradients:
        return descriptor, None
    jacobian = np.zeros((d_dims, len(x)))
    jacobian[np.arange(d_dims), np.arange(d_dims)] = 1.0 / RASTRIGIN_WIDTH
    return descriptor, jacobian


def _sphere(x, gradients):
    descriptor, jacobian = _leading_descriptor(x, gradients)
    fitness = -float(np.sum(x * x))
    return fitness, descriptor, (-2.0 * x if gradients else None), jacobian


def _rastrigin(x, gradients):
    descriptor, jacobian = _leading_descriptor(x, gradients)
    fitness = -float(10.0 * len(x) + np.sum(x * x - 10.0 * np.cos(2 * np.pi * x)))
    gradient = -(2.0 * x + 20.0 * np.pi * np.sin(2 * np.pi * x)) if gradients else None
    return fitness, descriptor, gradient, jacobian


def _arm(x, gradients):
    n = len(x)
    angles = np.cumsum(2 * np.pi * (x - 0.5))
    cos, sin = np.cos(angles), np.sin(angles)
    effector = np.array([np.sum(cos), np.sum(sin)]) / n
    descriptor = (effector + 1.0) / 2.0
    spread = float(np.std(x))
    if not gradients:
        return -spread, descriptor, None, None

    # d(angle_k)/d(x_i) = 2*pi for every k >= i
    tail_sin = np.cumsum(sin[::-1])[::-1]
    tail_cos = np.cumsum(cos[::-1])[::-1]
    jacobian = np.vstack([-tail_sin, tail_cos]) * (2 * np.pi / n) / 2.0
    if spread == 0.0:
        fitness_gradient = np.zeros(n)
    else:
        fitness_gradient = -(x - np.mean(x)) / (n * spread)
    return -spread, descriptor, fitness_gradient, jacobian


def _sphere_rastrigin(x, gradients):
    descriptor, _ = _leading_descriptor(x, False)
    objectives = np.array([_sphere(x, False)[0], _rastrigin(x, False)[0]])
    return objectives, descriptor, None, None


def _analytic_pair(x, gradients):
    descriptor, _ = _leading_descriptor(x, False)
    objectives = np.array([-x[0] ** 2, -(x[0] - 2.0) ** 2])
    return objectives, descriptor, None, None


def _rastrigin_box(n_params):
    return np.full(n_params, -RASTRIGIN_BOUND), np.full(n_params, RASTRIGIN_BOUND)


def make_task(name, n_params):
    """Build a registered task for the given parameter dimension"""
    n_params = int(n_params)
    if name not in TASKS:
        raise ConfigurationError(f"unknown task '{name}', expected one of {sorted(TASKS)}")
    minimum = TASKS[name]['min_params']
    if n_params < minimum:
        raise ConfigurationError(f"task '{name}' needs n_params >= {minimum}, got {n_params}")
    return TASKS[name]['build'](n_params)


def _build_sphere(n):
    lower, upper = _rastrigin_box(n)
    return TaskSpec('sphere', n, lower, upper, 2, np.zeros(2), np.ones(2), True, 1,
                    np.array([-n * RASTRIGIN_BOUND ** 2]), _sphere)


def _build_rastrigin(n):
    lower, upper = _rastrigin_box(n)
    # each term x^2 - 10 cos(2 pi x) is at most 5.12^2 + 10
    return TaskSpec('rastrigin', n, lower, upper, 2, np.zeros(2), np.ones(2), True, 1,
                    np.array([-n * (20.0 + RASTRIGIN_BOUND ** 2)]), _rastrigin)


def _build_arm(n):
    return TaskSpec('arm', n, np.zeros(n), np.ones(n), 2, np.zeros(2), np.ones(2), True, 1,
                    np.array([-0.5]), _arm)


def _build_sphere_rastrigin(n):
    lower, upper = _rastrigin_box(n)
    return TaskSpec('sphere_rastrigin', n, lower, upper, 2, np.zeros(2), np.ones(2), False, 2,
                    np.array([-n * RASTRIGIN_BOUND ** 2, -n * (20.0 + RASTRIGIN_BOUND ** 2)]),
                    _sphere_rastrigin)


def _build_analytic_pair(n):
    lower, upper = _rastrigin_box(n)
    d_dims = min(n, 2)
    return TaskSpec('analytic_pair', n, lower, upper, d_dims, np.zeros(d_dims), np.ones(d_dims), False, 2,
                    np.array([-RASTRIGIN_BOUND ** 2, -(RASTRIGIN_BOUND + 2.0) ** 2]), _analytic_pair)


TASKS = {
    'sphere': {'build': _build_sphere, 'min_params': 2},
    'rastrigin': {'build': _build_rastrigin, 'min_params': 2},
    'arm': {'build': _build_arm, 'min_params': 1},
    'sphere_rastrigin': {'build': _build_sphere_rastrigin, 'min_params': 2},
    'analytic_pair': {'build': _build_analytic_pair, 'min_params': 1},
}


def task_gradients(task, x) -> tuple:
    """(fitness gradient, descriptor jacobian d_dims x n_params) of a differentiable task"""
    if not task.differentiable:
        raise ConfigurationError(f"task '{task.name}' does not provide gradients")
    x = task.check(x)
    _, _, fitness_gradient, jacobian = task.function(x, True)
    return fitness_gradient, jacobian


def eval_sphere(x) -> ScoringResult:
    return make_task('sphere', len(x)).evaluate(x)


def eval_rastrigin(x) -> ScoringResult:
    return make_task('rastrigin', len(x)).evaluate(x)


def eval_arm(x) -> ScoringResult:
    return make_task('arm', len(x)).evaluate(x)


def task_summary(task: TaskSpec):
    """Human readable one-line description used in run logs"""
    kind = f"{task.n_objectives}-objective" if task.n_objectives > 1 else "single-objective"
    return f"{task.name} ({kind}, {task.n_params} params, {task.d_dims}-d descriptor)"
