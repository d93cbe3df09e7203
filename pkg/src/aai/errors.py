"""Shared exception types.

Invalid arguments raise plain ValueError throughout the package; the
classes here cover file-format damage, bad experiment configuration,
model/checkpoint incompatibility, and report queries with no data.
"""


class FormatError(Exception):
    """A file does not conform to its declared binary or text format."""


class ConfigError(Exception):
    """An experiment configuration is inconsistent or incomplete."""


class CheckpointMismatchError(Exception):
    """A checkpoint's shape metadata does not match the requesting model."""


class EmptyResultError(Exception):
    """A report or plot query matched no records."""
