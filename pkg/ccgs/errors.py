"""
Exception hierarchy for the ``ccgs`` package.

Errors raised for bad input derive from :class:`ValidationError`, and errors
raised while running the model derive from :class:`ModelError`. The command
line maps the two families to distinct exit codes.
"""
from __future__ import annotations

from typing import Any, Sequence



class CCGSError(Exception):
    """
    Base class for all errors raised by this package.
    """
    exit_code = 3


### Validation Errors

class ValidationError(CCGSError):
    """
    Raised when user-provided input (corpus, config, files) is invalid.
    """
    exit_code = 2


class CorpusError(ValidationError):
    """
    Raised for malformed corpus documents.

    Attributes
    ----------
    record : str or None
        Identifier of the offending record (video id or question id)
    """

    def __init__(self, message: str, record: str | None = None):
        self.record = record
        if record is not None:
            message = f"{message} (record {record!r})"
        super().__init__(message)


class SpanError(ValidationError):
    """
    Raised when a time interval or span point cannot be mapped.
    """


class ConfigError(ValidationError):
    """
    Raised for unknown configuration keys or invalid values.
    """


class FeatureFormatError(ValidationError):
    """
    Raised when a precomputed feature file is corrupt or has the wrong shape.
    """


class CheckpointError(ValidationError):
    """
    Raised when a checkpoint is corrupt or does not match the model parameters.
    """


class EvaluationError(ValidationError):
    """
    Raised when predictions and gold annotations do not line up.
    """


### Model Errors

class ModelError(CCGSError):
    """
    Raised for failures inside the numerical core or the model.
    """
    exit_code = 3


class ShapeError(ModelError):
    """
    Raised when operand shapes are incompatible.

    Attributes
    ----------
    op : str
        Name of the operation
    shapes : tuple[tuple[int, ...], ...]
        Shapes of all operands
    """

    def __init__(self, op: str, *shapes: Sequence[Any], detail: str = ''):
        self.op = op
        self.shapes = tuple(tuple(shape) for shape in shapes)
        shape_str = ' vs '.join(str(shape) for shape in self.shapes)
        message = f"{op}: incompatible shapes {shape_str}"
        super().__init__(f"{message} ({detail})" if detail else message)


class GradientError(ModelError):
    """
    Raised for invalid backward passes or missing gradients.
    """
