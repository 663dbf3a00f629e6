#!/usr/bin/env python3
"""
Run directory layout for the QD Toolkit
Every artifact path of a run is derived from its output directory
"""
import logging
import os

logger = logging.getLogger(__name__)

CONFIG_SNAPSHOT = 'config.json'


def get_run_paths(out_dir, metrics_path='metrics.csv', archive_path='archive.json'):
    """Absolute artifact paths for a run written into `out_dir`"""
    out_dir = os.path.abspath(out_dir)
    metrics = os.path.join(out_dir, metrics_path)
    return {
        'out_dir': out_dir,
        'metrics': metrics,
        'metrics_partial': metrics + '.partial',
        'archive': os.path.join(out_dir, archive_path),
        'config': os.path.join(out_dir, CONFIG_SNAPSHOT),
    }


def ensure_run_directory(paths):
    """Create the output directory and any artifact subdirectories"""
    directories = {paths['out_dir']} | {os.path.dirname(paths[name]) for name in ('metrics', 'archive', 'config')}
    for directory in sorted(directories):
        os.makedirs(directory, exist_ok=True)
        logger.debug(f"[OK] Directory ensured: {directory}")


def remove_if_present(path):
    if os.path.exists(path):
        os.remove(path)
        logger.debug(f"Removed {path}")
