#!/usr/bin/env python3
"""
Experiment configuration for the QD Toolkit
Parses a JSON experiment file against a closed schema, fills every omitted field with
its documented default and checks the cross-field invariants. The resolved config is
what a run directory's config.json records.
"""
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Optional

from jsonschema import Draft7Validator
from jsonschema.exceptions import best_match

from algorithms import ALGORITHMS
from config import get_config
from errors import ConfigurationError, ValidationError
from tasks import TASKS, make_task

logger = logging.getLogger(__name__)

_INTEGER = {'type': 'integer'}
_NUMBER = {'type': 'number'}
_VECTOR = {'type': 'array', 'items': _NUMBER}
_BOUNDS = {'type': 'array', 'items': _VECTOR, 'minItems': 2, 'maxItems': 2}


def _closed(properties, required=()):
    return {'type': 'object', 'properties': properties, 'required': list(required), 'additionalProperties': False}


EXPERIMENT_SCHEMA = _closed({
    'task': _closed({'name': {'type': 'string'}, 'n_params': _INTEGER}, ['name', 'n_params']),
    'algorithm': _closed({'name': {'type': 'string'}}, ['name']),
    # container and emitter bodies depend on their type and are checked separately
    'container': {'type': 'object', 'properties': {'type': {'type': 'string'}}, 'required': ['type']},
    'emitter': {'type': 'object', 'properties': {'type': {'type': 'string'}}, 'required': ['type']},
    'budget': _closed({'init_batch': _INTEGER, 'batch_size': _INTEGER, 'total_evaluations': _INTEGER},
                      ['total_evaluations']),
    'logging': _closed({
        'qd_offset': {'anyOf': [_NUMBER, _VECTOR, {'type': 'null'}]},
        'metrics_path': {'type': 'string'},
        'archive_path': {'type': 'string'},
        'log_every': {'type': 'integer', 'minimum': 0},
        'record_wall_time': {'type': 'boolean'},
    }),
    'seed': {'type': 'integer', 'minimum': 0, 'maximum': 2 ** 64 - 1},
    'workers': {'type': 'integer', 'minimum': 1},
}, ['task', 'algorithm', 'budget', 'seed'])

_SHARED_CELLS = {'type': {'type': 'string'}, 'bounds': _BOUNDS, 'front_capacity': {'type': 'integer', 'minimum': 1}}

CONTAINER_SCHEMAS = {
    'grid': _closed({**_SHARED_CELLS, 'dims': {'type': 'array', 'items': {'type': 'integer', 'minimum': 1}}}),
    'cvt': _closed({**_SHARED_CELLS, 'k': {'type': 'integer', 'minimum': 1}, 'centroids_path': {'type': 'string'},
                    'cvt_samples': {'type': 'integer', 'minimum': 1}, 'cvt_iters': {'type': 'integer', 'minimum': 0}}),
    'population': _closed({'type': {'type': 'string'}, 'capacity': {'type': 'integer', 'minimum': 1}}),
}

EMITTER_DEFAULTS = {
    'isoline': {'sigma_iso': 0.01, 'sigma_line': 0.1, 'variation_percentage': 1.0},
    'cma_me': {'sigma0': 0.5},
    'omg_mega': {'sigma_g': 1.0},
    'cma_mega': {'sigma0': 1.0, 'eta': 1.0},
    'es': {'n_directions': 20, 'step_size': 0.02, 'learning_rate': 0.01, 'explore_period': 10, 'k_novelty': 10},
}


def _emitter_schema(kind, child):
    properties = {'type': {'type': 'string'}}
    properties.update({name: (_INTEGER if isinstance(value, int) else _NUMBER)
                       for name, value in EMITTER_DEFAULTS[kind].items()})
    if child:
        properties['proportion'] = _NUMBER
    return _closed(properties, ['proportion'] if child else [])


COMPOUND_SCHEMA = _closed({'type': {'type': 'string'}, 'emitters': {'type': 'array', 'minItems': 1}}, ['emitters'])


@dataclass(frozen=True)
class TaskConfig:
    name: str
    n_params: int


@dataclass(frozen=True)
class ContainerConfig:
    type: str
    dims: Optional[tuple] = None
    k: Optional[int] = None
    bounds: Optional[tuple] = None
    centroids_path: Optional[str] = None
    cvt_samples: Optional[int] = None
    cvt_iters: Optional[int] = None
    front_capacity: Optional[int] = None
    capacity: Optional[int] = None

    def to_dict(self):
        document = {'type': self.type}
        if self.type == 'population':
            if self.capacity is not None:
                document['capacity'] = self.capacity
            return document
        if self.bounds is not None:
            document['bounds'] = [list(self.bounds[0]), list(self.bounds[1])]
        if self.type == 'grid':
            document['dims'] = list(self.dims)
        else:
            for name in ('k', 'centroids_path', 'cvt_samples', 'cvt_iters'):
                if getattr(self, name) is not None:
                    document[name] = getattr(self, name)
        if self.front_capacity is not None:
            document['front_capacity'] = self.front_capacity
        return document


@dataclass(frozen=True)
class EmitterConfig:
    type: str
    params: dict = field(default_factory=dict)
    proportion: Optional[float] = None
    emitters: tuple = ()

    def to_dict(self):
        document = {'type': self.type, **self.params}
        if self.proportion is not None:
            document['proportion'] = self.proportion
        if self.type == 'compound':
            document['emitters'] = [child.to_dict() for child in self.emitters]
        return document


@dataclass(frozen=True)
class BudgetConfig:
    init_batch: int
    batch_size: int
    total_evaluations: int


@dataclass(frozen=True)
class LoggingConfig:
    qd_offset: object
    metrics_path: str = 'metrics.csv'
    archive_path: str = 'archive.json'
    log_every: int = 10
    record_wall_time: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    task: TaskConfig
    algorithm: str
    container: ContainerConfig
    emitter: EmitterConfig
    budget: BudgetConfig
    logging: LoggingConfig
    seed: int
    workers: int = 1

    def to_dict(self):
        offset = self.logging.qd_offset
        return {
            'task': {'name': self.task.name, 'n_params': self.task.n_params},
            'algorithm': {'name': self.algorithm},
            'container': self.container.to_dict(),
            'emitter': self.emitter.to_dict(),
            'budget': {'init_batch': self.budget.init_batch, 'batch_size': self.budget.batch_size,
                       'total_evaluations': self.budget.total_evaluations},
            'logging': {'qd_offset': list(offset) if isinstance(offset, tuple) else offset,
                        'metrics_path': self.logging.metrics_path, 'archive_path': self.logging.archive_path,
                        'log_every': self.logging.log_every, 'record_wall_time': self.logging.record_wall_time},
            'seed': self.seed,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n'


def _check_schema(document, schema, where):
    error = best_match(Draft7Validator(schema).iter_errors(document))
    if error is None:
        return
    location = '.'.join(str(p) for p in [where, *error.absolute_path] if p != '')
    raise ConfigurationError(f"{location or 'config'}: {error.message}")


def _fail(message):
    raise ValidationError(message)


def _resolve_container(document, algorithm, task, settings, base_dir):
    population_based = algorithm in ('nsga2', 'spea2')
    if document is None:
        document = {'type': 'population'} if population_based else {'type': 'grid'}
    kind = document.get('type')
    if kind not in CONTAINER_SCHEMAS:
        _fail(f"container.type '{kind}' is not one of {sorted(CONTAINER_SCHEMAS)}")
    _check_schema(document, CONTAINER_SCHEMAS[kind], 'container')
    if population_based != (kind == 'population'):
        _fail(f"algorithm '{algorithm}' cannot use a '{kind}' container")
    if kind == 'population':
        return ContainerConfig('population', capacity=document.get('capacity'))

    bounds = document.get('bounds', [task.descriptor_lower.tolist(), task.descriptor_upper.tolist()])
    if any(len(side) != task.d_dims for side in bounds):
        _fail(f"container.bounds must have {task.d_dims} entries per side")
    bounds = (tuple(float(v) for v in bounds[0]), tuple(float(v) for v in bounds[1]))
    front_capacity = document.get('front_capacity', 10) if algorithm == 'mome' else document.get('front_capacity')
    if kind == 'grid':
        dims = tuple(document.get('dims', [50] * task.d_dims))
        if len(dims) != task.d_dims:
            _fail(f"container.dims has {len(dims)} entries, task '{task.name}' has {task.d_dims} descriptors")
        return ContainerConfig('grid', dims=dims, bounds=bounds, front_capacity=front_capacity)

    centroids_path = document.get('centroids_path')
    if centroids_path is None and 'k' not in document:
        _fail("a cvt container needs k or centroids_path")
    if centroids_path is not None and not os.path.isabs(centroids_path):
        centroids_path = os.path.normpath(os.path.join(base_dir, centroids_path))
    return ContainerConfig('cvt', k=document.get('k'), bounds=bounds, centroids_path=centroids_path,
                           cvt_samples=document.get('cvt_samples', settings.CVT_SAMPLES),
                           cvt_iters=document.get('cvt_iters', settings.CVT_ITERS),
                           front_capacity=front_capacity)


def _resolve_single_emitter(document, where, child=False):
    kind = document.get('type')
    if kind not in EMITTER_DEFAULTS:
        _fail(f"{where}.type '{kind}' is not one of {sorted(EMITTER_DEFAULTS) + ['compound']}")
    _check_schema(document, _emitter_schema(kind, child), where)
    params = {name: document.get(name, default) for name, default in EMITTER_DEFAULTS[kind].items()}
    return EmitterConfig(kind, params, document.get('proportion') if child else None)


def _resolve_emitter(document):
    if document is None:
        document = {'type': 'isoline'}
    if document.get('type') != 'compound':
        return _resolve_single_emitter(document, 'emitter')
    _check_schema(document, COMPOUND_SCHEMA, 'emitter')
    children = []
    for i, child in enumerate(document['emitters']):
        if not isinstance(child, dict):
            raise ConfigurationError(f"emitter.emitters.{i}: must be an object")
        if child.get('type') == 'compound':
            _fail("compound emitters cannot be nested")
        children.append(_resolve_single_emitter(child, f"emitter.emitters.{i}", child=True))
    proportions = [c.proportion for c in children]
    if any(p < 0 for p in proportions) or not math.isclose(sum(proportions), 1.0, rel_tol=0.0, abs_tol=1e-9):
        _fail(f"emitter proportions must be >= 0 and sum to 1, got {proportions}")
    return EmitterConfig('compound', emitters=tuple(children))


def _resolve_offset(value, algorithm, task):
    if algorithm == 'map_elites':
        if value is None:
            return task.qd_offset
        if isinstance(value, list):
            _fail("logging.qd_offset must be a number for map_elites")
        return float(value)
    if value is None:
        return tuple(float(v) for v in task.fitness_lower)
    if not isinstance(value, list) or len(value) != task.n_objectives:
        _fail(f"logging.qd_offset must be a reference point with {task.n_objectives} entries for {algorithm}")
    return tuple(float(v) for v in value)


def _check_algorithm_fit(config, task):
    budget = config.budget
    multi = task.n_objectives > 1
    if config.algorithm == 'map_elites' and multi:
        _fail(f"map_elites needs a single-objective task, '{task.name}' has {task.n_objectives} objectives")
    if config.algorithm != 'map_elites' and not multi:
        _fail(f"{config.algorithm} needs a multi-objective task, '{task.name}' has one objective")
    if config.algorithm in ('nsga2', 'spea2'):
        if budget.batch_size != budget.init_batch:
            _fail(f"{config.algorithm} uses init_batch as its population size; batch_size must match it")
        if config.algorithm == 'nsga2' and budget.init_batch % 2:
            _fail(f"nsga2 needs an even population size, got {budget.init_batch}")
        if config.algorithm == 'nsga2' and config.container.capacity not in (None, budget.init_batch):
            _fail("the nsga2 population container must hold exactly init_batch members")
    if config.algorithm != 'map_elites':
        kinds = {config.emitter.type}
        if config.emitter.type == 'compound':
            kinds = {child.type for child in config.emitter.emitters}
        if kinds != {'isoline'}:
            _fail(f"{config.algorithm} only supports the isoline emitter")


def resolve_config(document, base_dir='.', settings=None):
    """ExperimentConfig from a decoded JSON document"""
    settings = settings or get_config()
    if not isinstance(document, dict):
        raise ConfigurationError("the experiment config must be a JSON object")
    _check_schema(document, EXPERIMENT_SCHEMA, '')

    task_doc = document['task']
    if task_doc['name'] not in TASKS:
        _fail(f"task.name '{task_doc['name']}' is not one of {sorted(TASKS)}")
    try:
        task = make_task(task_doc['name'], task_doc['n_params'])
    except ConfigurationError as e:
        raise ValidationError(str(e)) from e
    algorithm = document['algorithm']['name']
    if algorithm not in ALGORITHMS:
        _fail(f"algorithm.name '{algorithm}' is not one of {list(ALGORITHMS)}")

    budget_doc = document['budget']
    budget = BudgetConfig(int(budget_doc.get('init_batch', 100)), int(budget_doc.get('batch_size', 100)),
                          int(budget_doc['total_evaluations']))
    if budget.init_batch < 1:
        _fail(f"budget.init_batch must be >= 1, got {budget.init_batch}")
    if budget.batch_size < 1:
        _fail(f"budget.batch_size must be >= 1, got {budget.batch_size}")
    if budget.total_evaluations < budget.init_batch:
        _fail(f"budget.total_evaluations ({budget.total_evaluations}) is smaller than "
              f"budget.init_batch ({budget.init_batch})")

    logging_doc = document.get('logging', {})
    config = ExperimentConfig(
        task=TaskConfig(task.name, task.n_params),
        algorithm=algorithm,
        container=_resolve_container(document.get('container'), algorithm, task, settings, base_dir),
        emitter=_resolve_emitter(document.get('emitter')),
        budget=budget,
        logging=LoggingConfig(
            qd_offset=_resolve_offset(logging_doc.get('qd_offset'), algorithm, task),
            metrics_path=logging_doc.get('metrics_path', 'metrics.csv'),
            archive_path=logging_doc.get('archive_path', 'archive.json'),
            log_every=logging_doc.get('log_every', settings.PROGRESS_EVERY),
            record_wall_time=logging_doc.get('record_wall_time', False),
        ),
        seed=document['seed'],
        workers=document.get('workers', settings.WORKERS),
    )
    _check_algorithm_fit(config, task)
    return config


def parse_config(path, settings=None):
    """Read, validate and resolve an experiment config file"""
    try:
        with open(path, encoding='utf-8') as handle:
            document = json.load(handle)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path} is not valid JSON: {e.msg} (line {e.lineno}, column {e.colno})") from e
    config = resolve_config(document, os.path.dirname(os.path.abspath(path)), settings)
    logger.debug(f"Loaded {config.algorithm} config for task {config.task.name} from {path}")
    return config


def with_overrides(config, seed=None, workers=None):
    """Command-line overrides applied on top of a parsed config"""
    changes = {}
    if seed is not None:
        changes['seed'] = int(seed)
    if workers is not None:
        if int(workers) < 1:
            raise ValidationError(f"workers must be >= 1, got {workers}")
        changes['workers'] = int(workers)
    return replace(config, **changes) if changes else config
