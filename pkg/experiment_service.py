#!/usr/bin/env python3
"""
Experiment Service for the QD Toolkit
Runs a resolved experiment config and owns its artifacts: metrics.csv, the final
archive and the config snapshot. A failed run leaves none of them behind.
"""
import logging
import os
from dataclasses import dataclass

from algorithms import population_metrics, run_algorithm
from config import get_config
from config_paths import ensure_run_directory, get_run_paths, remove_if_present
from containers import Population
from errors import ConfigurationError
from experiment_config import with_overrides
from metrics_io import MetricsWriter, load_archive, repertoire_metrics, save_archive, write_atomic

logger = logging.getLogger(__name__)


@dataclass
class RunSummary:
    out_dir: str
    metrics_path: str
    archive_path: str
    config_path: str
    final_metrics: object
    iterations: int


class ExperimentService:
    def __init__(self, config, out_dir=None):
        self.config = config
        out_dir = out_dir or get_config().OUT_DIR
        self.paths = get_run_paths(out_dir, config.logging.metrics_path, config.logging.archive_path)

    def _discard_artifacts(self):
        for name in ('metrics_partial', 'metrics', 'archive', 'config'):
            try:
                remove_if_present(self.paths[name])
            except OSError as e:
                logger.error(f"Could not remove {self.paths[name]}: {e}")

    def run(self):
        """Run the experiment; returns a RunSummary"""
        config = self.config
        ensure_run_directory(self.paths)
        # stale artifacts from an earlier run in the same directory never mix with this one
        self._discard_artifacts()
        writer = MetricsWriter(self.paths['metrics_partial'], record_wall_time=config.logging.record_wall_time,
                               fresh=True)
        logger.info(f"[RUN] Writing artifacts to {self.paths['out_dir']} (seed {config.seed}, "
                    f"{config.workers} workers)")
        try:
            result, series = run_algorithm(config, config.workers, writer.append)
            save_archive(result, self.paths['archive'])
            write_atomic(self.paths['config'], config.to_json())
            os.replace(self.paths['metrics_partial'], self.paths['metrics'])
        except BaseException as e:
            logger.error(f"[RUN] Run failed, discarding artifacts: {e}")
            self._discard_artifacts()
            raise

        final = series[-1]
        logger.info(f"[RUN] Finished after {final.evaluations} evaluations: qd_score {final.qd_score:.6g}, "
                    f"coverage {final.coverage:.4f}, max_fitness {final.max_fitness}")
        return RunSummary(self.paths['out_dir'], self.paths['metrics'], self.paths['archive'],
                          self.paths['config'], final, final.iteration)


def run_experiment(config, seed=None, workers=None, out_dir=None):
    """Apply command-line overrides and run"""
    return ExperimentService(with_overrides(config, seed=seed, workers=workers), out_dir).run()


def evaluate_archive(path, qd_offset=None):
    """{'qd_score', 'coverage', 'max_fitness'} of a saved archive"""
    archive = load_archive(path)
    if archive.n_objectives > 1 and not isinstance(qd_offset, (list, tuple)):
        raise ConfigurationError(f"{path} is multi-objective; pass the reference point as a JSON list")
    if archive.n_objectives == 1 and isinstance(qd_offset, (list, tuple)):
        raise ConfigurationError(f"{path} is single-objective; the QD offset must be a number")
    if isinstance(archive, Population) and len(archive) == 0:
        qd_score, coverage, max_fitness = 0.0, 0.0, None
    elif isinstance(archive, Population):
        record = population_metrics(archive, qd_offset, 0, 0, 0.0)
        qd_score, coverage, max_fitness = record.qd_score, record.coverage, record.max_fitness
    else:
        qd_score, coverage, max_fitness = repertoire_metrics(archive, 0.0 if qd_offset is None else qd_offset)
    logger.info(f"[EVAL] {path}: qd_score {qd_score:.6g}, coverage {coverage:.4f}")
    return {'qd_score': qd_score, 'coverage': coverage, 'max_fitness': max_fitness}
