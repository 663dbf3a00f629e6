#!/usr/bin/env python3
"""
Error types for the QD Toolkit
Every error carries the process exit code the command-line runner reports for it
"""


class QDError(Exception):
    """Base class for all toolkit errors"""
    exit_code = 3


class InvalidArgumentError(QDError, ValueError):
    """An operation was called outside its preconditions"""
    exit_code = 2


class ConfigurationError(QDError):
    """Components were configured inconsistently (dimensions, names, capacities)"""
    exit_code = 2


class ValidationError(ConfigurationError):
    """An experiment config violates one of its invariants"""


class ScoringError(QDError):
    """A genotype or descriptor could not be scored"""


class EmitterError(QDError):
    """An emitter cannot produce solutions from the current repertoire"""


class UnsupportedDimensionError(QDError):
    """The operation is only defined for a fixed objective dimension"""


class ArchiveVersionError(QDError):
    """The archive file was written by an unknown format version"""
    exit_code = 4


class ArchiveParseError(QDError):
    """The archive or centroid file is malformed"""
    exit_code = 4

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


def exit_code_for(error):
    """Map any exception raised during a run to the CLI exit code"""
    if isinstance(error, QDError):
        return error.exit_code
    if isinstance(error, OSError):
        return 4
    return 3


class RestartRequired(EmitterError):
    """A search distribution degenerated and its emitter has to restart"""
