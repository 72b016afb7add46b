"""Exception hierarchy shared by the builders, the solver and the CLI."""

from __future__ import annotations


class ZBusFlowError(Exception):
    """Base class for every error raised by the package."""


class FeederError(ZBusFlowError, ValueError):
    """A feeder description violates a structural invariant."""


class ParseError(FeederError):
    """A feeder document could not be read or validated."""


class NumericalError(ZBusFlowError, ArithmeticError):
    """Base class for singularity, divergence and collapse failures."""


class SingularMatrixError(NumericalError):
    """A matrix that must be inverted is numerically singular."""


class VoltageCollapseError(NumericalError):
    """A voltage magnitude fell below the load-model guard."""


class DivergenceError(NumericalError):
    """The fixed-point iteration left the admissible voltage band."""
