#!/usr/bin/env python3
"""
Tests for the benchmark tasks and their analytic gradients
"""
import numpy as np
import pytest

from errors import ConfigurationError, ScoringError
from tasks import TASKS, eval_arm, eval_rastrigin, eval_sphere, make_task, task_gradients, task_summary


def test_sphere_examples():
    result = eval_sphere(np.zeros(2))
    assert result.fitness == 0.0
    assert result.descriptor.tolist() == [0.5, 0.5]
    assert eval_sphere(np.array([5.12, -5.12])).descriptor.tolist() == [1.0, 0.0]
    assert eval_sphere(np.array([1.0, 2.0])).fitness == -5.0


def test_rastrigin_examples():
    assert eval_rastrigin(np.zeros(3)).fitness == pytest.approx(0.0, abs=1e-12)
    assert eval_rastrigin(np.ones(2)).fitness == pytest.approx(-2.0, abs=1e-12)


def test_arm_examples():
    straight = eval_arm(np.full(4, 0.5))
    assert straight.fitness == 0.0
    assert np.allclose(straight.descriptor, [1.0, 0.5])
    assert np.allclose(eval_arm(np.array([0.75])).descriptor, [0.5, 1.0])


def test_out_of_bounds_genotype_fails():
    with pytest.raises(ScoringError):
        eval_sphere(np.array([6.0, 0.0]))
    with pytest.raises(ScoringError):
        eval_arm(np.array([np.nan, 0.5]))
    with pytest.raises(ScoringError):
        make_task('sphere', 3).evaluate(np.zeros(2))


def test_registry_checks():
    with pytest.raises(ConfigurationError):
        make_task('ackley', 2)
    with pytest.raises(ConfigurationError):
        make_task('sphere', 1)
    assert set(TASKS) == {'sphere', 'rastrigin', 'arm', 'sphere_rastrigin', 'analytic_pair'}


def test_sphere_gradients():
    task = make_task('sphere', 3)
    gradient, jacobian = task_gradients(task, np.array([1.0, 0.0, 0.0]))
    assert gradient.tolist() == [-2.0, 0.0, 0.0]
    assert np.allclose(jacobian, np.eye(2, 3) / 10.24)


def test_multi_objective_tasks_have_no_gradients():
    task = make_task('sphere_rastrigin', 2)
    assert task.evaluate(np.zeros(2)).fitness.tolist() == [0.0, 0.0]
    with pytest.raises(ConfigurationError):
        task_gradients(task, np.zeros(2))


def test_lower_bounds_hold():
    generator = np.random.default_rng(0)
    for name in TASKS:
        task = make_task(name, 5)
        for x in generator.uniform(task.lower, task.upper, size=(200, 5)):
            assert np.all(np.atleast_1d(task.evaluate(x).fitness) >= task.fitness_lower)


def test_descriptors_stay_inside_their_bounds():
    generator = np.random.default_rng(5)
    for name in TASKS:
        task = make_task(name, 5)
        points = generator.uniform(task.lower, task.upper, size=(20_000, 5))
        for x in np.vstack([points, [task.lower, task.upper]]):
            descriptor = task.evaluate(x).descriptor
            assert np.all(descriptor >= task.descriptor_lower) and np.all(descriptor <= task.descriptor_upper), name


def finite_difference(function, x, h=1e-6):
    columns = []
    for i in range(len(x)):
        step = np.zeros(len(x))
        step[i] = h
        columns.append((np.asarray(function(x + step)) - np.asarray(function(x - step))) / (2 * h))
    return np.array(columns).T


def relative_error(analytic, numeric):
    return np.max(np.abs(analytic - numeric)) / max(1.0, np.max(np.abs(numeric)))


@pytest.mark.parametrize('name', ['sphere', 'rastrigin', 'arm'])
def test_gradients_match_finite_differences(name):
    task = make_task(name, 6)
    generator = np.random.default_rng(17)
    margin = 1e-3 * (task.upper - task.lower)
    for x in generator.uniform(task.lower + margin, task.upper - margin, size=(50, 6)):
        gradient, jacobian = task_gradients(task, x)
        numeric_gradient = finite_difference(lambda z: task.evaluate(z).fitness, x)
        numeric_jacobian = finite_difference(lambda z: task.evaluate(z).descriptor, x)
        assert relative_error(gradient, numeric_gradient) <= 1e-5
        assert relative_error(jacobian, numeric_jacobian) <= 1e-5


def test_summary_names_the_task():
    assert task_summary(make_task('arm', 3)) == "arm (single-objective, 3 params, 2-d descriptor)"
