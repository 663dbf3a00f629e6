#!/usr/bin/env python3
"""
Shared pytest setup for the QD Toolkit tests
Long acceptance runs only execute with QD_SLOW_TESTS=1
"""
import json
import os

import pytest

os.environ.setdefault('QD_CONFIG', 'testing')

from metrics_io import write_atomic  # noqa: E402

GOLDEN_RUNS_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'golden_runs.json')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long acceptance run, enabled with QD_SLOW_TESTS=1')


def pytest_collection_modifyitems(config, items):
    if os.environ.get('QD_SLOW_TESTS') == '1':
        return
    skip = pytest.mark.skip(reason="set QD_SLOW_TESTS=1 to run")
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip)


class GoldenRuns:
    """Exact regression values keyed by run name.

    A name with no recorded values is written to the file and the test is skipped;
    every later run must reproduce the recorded values exactly.
    """

    def __init__(self, path):
        self.path = path

    def _load(self):
        if not os.path.exists(self.path):
            return {}
        with open(self.path, encoding='utf-8') as f:
            return json.load(f)

    def check(self, name, values):
        recorded = self._load()
        if name not in recorded:
            recorded[name] = values
            write_atomic(self.path, json.dumps(recorded, indent=2, sort_keys=True) + '\n')
            pytest.skip(f"recorded golden values for {name} in {self.path}")
        assert values == recorded[name]


@pytest.fixture
def golden_runs():
    return GoldenRuns(GOLDEN_RUNS_PATH)
