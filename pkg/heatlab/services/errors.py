# heatlab/services/errors.py
from __future__ import annotations


class HeatlabError(Exception):
    """Base class for every failure raised by the lab services."""


class DomainError(HeatlabError, ValueError):
    """Parameters or points outside the declared domain of a space or family."""


class PoleOnly(DomainError):
    """A cone-type kernel was requested from a source other than the pole."""


class NonConvergent(HeatlabError):
    """Adaptive quadrature missed its tolerance within the evaluation budget."""


class IllConditioned(HeatlabError):
    """Small-parameter extrapolation could not pin down a usable exponent."""


class OptimizerStalled(HeatlabError):
    pass


class DerivativeUnavailable(HeatlabError):
    pass


class DegenerateMeasure(HeatlabError):
    pass


class CDFNotStrict(HeatlabError):
    pass


class GridTooCoarse(HeatlabError):
    pass


class WindowEmpty(HeatlabError):
    pass


class AVRZero(HeatlabError):
    pass


class KNotPositive(HeatlabError):
    pass


class ConfigError(HeatlabError):
    """Run config problem; carries the offending key path and source line when known."""

    def __init__(self, message: str, *, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        where = []
        if key:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
