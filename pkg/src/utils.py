# -*- coding: utf-8 -*-
"""
utils.py — shared exceptions and small numeric helpers
"""

from fractions import Fraction
from typing import Union

import numpy as np

Number = Union[int, float, Fraction]


# ================================================
# EXCEPTIONS
# ================================================
class CovFactorError(Exception):
    """Base class for every error raised by covfactor."""


class ConfigError(CovFactorError, ValueError):
    """Malformed model file, CLI argument or config value."""


class DimensionError(CovFactorError, ValueError):
    """Operator, state or model dimensions do not fit together."""


class NoRealAngleError(CovFactorError, ValueError):
    """A dimerization angle would need |sin ξ| > 1 (or a negative ratio)."""


class DegenerateAngleError(CovFactorError, ValueError):
    """ξ at 0 or π, where the generalized singlet is a product state."""


class ConstraintViolation(CovFactorError, ValueError):
    """Parameters violate a constraint whose exactness was requested."""


class UnknownFamilyError(ConfigError):
    """Model family tag not recognized."""


class NotConservedError(CovFactorError):
    """An operator claimed conserved does not have the state as eigenvector."""


class NonHermitianError(CovFactorError):
    """A Hamiltonian that must be Hermitian is not."""


class DenseCapExceeded(CovFactorError):
    """Dense diagonalization requested above the configured dimension cap."""


class ConvergenceError(CovFactorError):
    """Iterative eigensolver did not converge."""

    def __init__(self, message: str, best_residual: float = float("nan")):
        super().__init__(message)
        self.best_residual = best_residual


# ================================================
# HELPERS
# ================================================
def as_spin(s: Number, positive: bool = False) -> Fraction:
    """
    Validate a spin quantum number and return it as an exact half-integer.
    s = 0 is a one-dimensional site unless `positive` is set.
    """
    twice = 2 * float(s)
    if not np.isfinite(twice) or abs(twice - round(twice)) > 1e-12 or round(twice) < 0:
        raise ValueError(f"spin must be a non-negative half-integer, got {s!r}")
    if positive and round(twice) == 0:
        raise ValueError(f"spin must be positive, got {s!r}")
    return Fraction(int(round(twice)), 2)


def spin_dim(s: Number) -> int:
    return int(2 * as_spin(s) + 1)


def relative(value: float, scale: float) -> float:
    """value / scale, with an exactly zero scale mapping to the raw value."""
    return float(value / scale) if scale > 0 else float(value)
