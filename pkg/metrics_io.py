#!/usr/bin/env python3
"""
Metrics and artifact I/O for the QD Toolkit
QD score / coverage / max fitness, per-cell hypervolume summaries, the metrics CSV sink and the
JSON archive and centroid files
"""
import csv
import json
import logging
import math
import os
import tempfile

import numpy as np

from containers import CvtSpec, Elite, GridSpec, MomeRepertoire, Population, Repertoire
from errors import ArchiveParseError, ArchiveVersionError, ConfigurationError
from pareto import hypervolume, non_dominated_sort

logger = logging.getLogger(__name__)

ARCHIVE_FORMAT_VERSION = 1
METRICS_HEADER = ['iteration', 'evaluations', 'qd_score', 'coverage', 'max_fitness', 'wall_time_ms']


def compute_metrics(repertoire, qd_offset):
    """(qd_score, coverage, max_fitness) of a single-objective repertoire"""
    if repertoire.n_occupied == 0:
        return 0.0, 0.0, None
    fitnesses = repertoire.fitnesses[repertoire.occupied]
    qd_score = float(np.sum(fitnesses - float(qd_offset)))
    coverage = repertoire.n_occupied / repertoire.n_cells
    return qd_score, coverage, float(np.max(fitnesses))


def mome_metrics(repertoire, reference):
    """Per-cell hypervolume summary of a multi-objective repertoire"""
    volumes = [hypervolume([m.fitness for m in front], reference)
               for _, front in sorted(repertoire.fronts.items()) if front]
    members = repertoire.elites()
    if members:
        objectives = np.array([m.fitness for m in members])
        union = objectives[non_dominated_sort(objectives)[0]]
        global_volume = hypervolume(union, reference)
    else:
        global_volume = 0.0
    return {
        # fsum keeps the total monotone in every cell volume
        'moqd_score': math.fsum(volumes),
        'coverage': repertoire.n_occupied / repertoire.n_cells,
        'max_hypervolume': float(max(volumes)) if volumes else None,
        'global_hypervolume': global_volume,
        'n_solutions': repertoire.n_solutions,
    }


def repertoire_metrics(repertoire, qd_offset):
    """(qd_score, coverage, max_fitness) for either repertoire kind.

    For per-cell Pareto fronts `qd_offset` is the hypervolume reference point, the
    score is the summed cell hypervolume and max_fitness the largest cell volume.
    """
    if isinstance(repertoire, MomeRepertoire):
        summary = mome_metrics(repertoire, qd_offset)
        return summary['moqd_score'], summary['coverage'], summary['max_hypervolume']
    return compute_metrics(repertoire, qd_offset)


def _format_value(value):
    if value is None:
        return ''
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


class MetricsWriter:
    """Append-only metrics CSV; the header is written once, when the file is empty"""

    def __init__(self, path, record_wall_time=True, fresh=False):
        self.path = path
        self.record_wall_time = record_wall_time
        if fresh and os.path.exists(path):
            os.remove(path)

    def append(self, record):
        needs_header = not os.path.exists(self.path) or os.path.getsize(self.path) == 0
        wall_time = record.wall_time_ms if self.record_wall_time else 0.0
        row = [record.iteration, record.evaluations, record.qd_score, record.coverage,
               record.max_fitness, wall_time]
        try:
            with open(self.path, 'a', newline='', encoding='utf-8') as handle:
                writer = csv.writer(handle, lineterminator='\n')
                if needs_header:
                    writer.writerow(METRICS_HEADER)
                writer.writerow([_format_value(v) for v in row])
        except OSError as e:
            logger.error(f"Could not write metrics to {self.path}: {e}")
            raise


def append_metrics(record, sink):
    if not isinstance(sink, MetricsWriter):
        sink = MetricsWriter(sink)
    sink.append(record)


def read_metrics(path):
    """Rows of a metrics CSV as dictionaries of numbers"""
    with open(path, newline='', encoding='utf-8') as handle:
        rows = list(csv.DictReader(handle))
    parsed = []
    for row in rows:
        parsed.append({
            'iteration': int(row['iteration']),
            'evaluations': int(row['evaluations']),
            'qd_score': float(row['qd_score']),
            'coverage': float(row['coverage']),
            'max_fitness': float(row['max_fitness']) if row['max_fitness'] else None,
            'wall_time_ms': float(row['wall_time_ms']),
        })
    return parsed


def write_atomic(path, text):
    """Write through a temporary file in the same directory, then rename over `path`"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    handle = tempfile.NamedTemporaryFile('w', dir=directory, suffix='.tmp', delete=False, encoding='utf-8')
    try:
        with handle:
            handle.write(text)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(handle.name, path)
    except Exception as e:
        logger.error(f"Could not write {path}: {e}")
        if os.path.exists(handle.name):
            os.remove(handle.name)
        raise


def _container_dict(repertoire):
    if isinstance(repertoire, Population):
        container = {'type': 'population', 'capacity': repertoire.capacity,
                     'n_objectives': repertoire.n_objectives}
    else:
        container = repertoire.tessellation.to_dict()
        if isinstance(repertoire, MomeRepertoire):
            container['front_capacity'] = repertoire.front_capacity
            container['n_objectives'] = repertoire.n_objectives
    container['n_params'] = repertoire.n_params
    return container


def _cell_dict(elite, multi_objective):
    cell = {'cell_id': int(elite.cell_id), 'genotype': np.asarray(elite.genotype, dtype=float).tolist()}
    if multi_objective:
        cell['objectives'] = np.asarray(elite.fitness, dtype=float).tolist()
    else:
        cell['fitness'] = float(elite.fitness)
    cell['descriptor'] = np.asarray(elite.descriptor, dtype=float).tolist()
    return cell


def archive_to_json(repertoire):
    multi_objective = repertoire.n_objectives > 1
    document = {
        'format_version': ARCHIVE_FORMAT_VERSION,
        'container': _container_dict(repertoire),
        'cells': [_cell_dict(elite, multi_objective) for elite in repertoire.elites()],
    }
    return json.dumps(document, separators=(',', ':'), allow_nan=False)


def save_archive(repertoire, path):
    write_atomic(path, archive_to_json(repertoire))
    logger.debug(f"Archive with {len(repertoire.elites())} entries saved to {path}")


def _read_json(path):
    with open(path, 'rb') as handle:
        raw = handle.read()
    try:
        text = raw.decode('utf-8')
    except UnicodeDecodeError as e:
        raise ArchiveParseError(f"{path} is not UTF-8", e.start) from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        offset = len(text[:e.pos].encode('utf-8'))
        raise ArchiveParseError(f"{path} is not valid JSON: {e.msg}", offset) from e


def _tessellation_from_dict(container):
    kind = container['type']
    if kind == 'grid':
        return GridSpec(container['dims'], container['lower'], container['upper'])
    if kind == 'cvt':
        return CvtSpec(container['centroids'], container['lower'], container['upper'])
    raise ArchiveParseError(f"unknown container type '{kind}'")


def _build_repertoire(document):
    container = document['container']
    n_params = int(container['n_params'])
    cells = document['cells']
    if not isinstance(cells, list):
        raise ArchiveParseError("'cells' must be a list")

    if container['type'] == 'population':
        population = Population(int(container['capacity']), n_params, int(container['n_objectives']))
        if cells:
            population.replace(
                np.array([c['genotype'] for c in cells], dtype=float).reshape(-1, n_params),
                np.array([c['objectives'] for c in cells], dtype=float),
                np.array([c['descriptor'] for c in cells], dtype=float))
        return population

    tessellation = _tessellation_from_dict(container)
    if 'front_capacity' in container:
        repertoire = MomeRepertoire(tessellation, n_params, int(container['n_objectives']),
                                    int(container['front_capacity']))
        for cell in cells:
            elite = Elite(np.array(cell['genotype'], dtype=float), np.array(cell['objectives'], dtype=float),
                          np.array(cell['descriptor'], dtype=float), int(cell['cell_id']))
            _check_cell(tessellation, elite)
            repertoire.fronts.setdefault(elite.cell_id, []).append(elite)
        return repertoire

    repertoire = Repertoire(tessellation, n_params)
    for cell in cells:
        elite = Elite(np.array(cell['genotype'], dtype=float), float(cell['fitness']),
                      np.array(cell['descriptor'], dtype=float), int(cell['cell_id']))
        _check_cell(tessellation, elite)
        repertoire.genotypes[elite.cell_id] = elite.genotype
        repertoire.fitnesses[elite.cell_id] = elite.fitness
        repertoire.descriptors[elite.cell_id] = elite.descriptor
        repertoire.occupied[elite.cell_id] = True
    return repertoire


def _check_cell(tessellation, elite):
    if not 0 <= elite.cell_id < tessellation.n_cells:
        raise ArchiveParseError(f"cell id {elite.cell_id} outside the container's {tessellation.n_cells} cells")
    if tessellation.cell_index(elite.descriptor) != elite.cell_id:
        raise ArchiveParseError(f"descriptor of cell {elite.cell_id} maps to another cell")


def load_archive(path):
    """Rebuild a repertoire (or population) from an archive file; never returns a partial one"""
    document = _read_json(path)
    if not isinstance(document, dict) or 'format_version' not in document:
        raise ArchiveParseError(f"{path} has no format_version")
    if document['format_version'] != ARCHIVE_FORMAT_VERSION:
        raise ArchiveVersionError(
            f"{path} uses archive format {document['format_version']}, expected {ARCHIVE_FORMAT_VERSION}")
    try:
        return _build_repertoire(document)
    except ArchiveParseError:
        raise
    except (KeyError, TypeError, ValueError, ConfigurationError) as e:
        raise ArchiveParseError(f"{path} is not a valid archive: {e}") from e


def save_centroids(spec, path):
    write_atomic(path, json.dumps(spec.centroids.tolist(), separators=(',', ':'), allow_nan=False))


def load_centroids(path, lower, upper):
    """CvtSpec from a centroid file (JSON array of k rows)"""
    rows = _read_json(path)
    try:
        return CvtSpec(rows, lower, upper)
    except (TypeError, ValueError, ConfigurationError) as e:
        raise ArchiveParseError(f"{path} is not a valid centroid file: {e}") from e
