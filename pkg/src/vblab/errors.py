"""Semantic exception hierarchy shared by all vblab modules."""


class VblabError(Exception):
    """Base class for all vblab errors."""


class InputError(VblabError, ValueError):
    """Malformed or inconsistent inputs (shape mismatch, out-of-range index, ...)."""


class DomainError(VblabError, ValueError):
    """Parameter outside the mathematical domain of an operation."""


class NumericError(VblabError, ArithmeticError):
    """A numerical routine failed to reach its accuracy target."""


class OptimizationError(VblabError, RuntimeError):
    """An iterative optimizer diverged or produced an unusable iterate."""
