"""Monomial lifting dictionary for scalar optic flow."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class InvalidInputError(ValueError):
    """Raised when a non-finite value is lifted."""


@dataclass(frozen=True)
class ObservableDictionary:
    """Monomials ``x, x**2, ..., x**degree`` without a constant term.

    The first lifted coordinate is ``x`` itself, so the projection back to
    the output is ``C = [1, 0, ..., 0]``.
    """

    degree: int = 2

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise ValueError(f"degree must be an integer >= 1, got {self.degree!r}")

    @property
    def lifted_dim(self) -> int:
        return self.degree

    def lift(self, x: float) -> np.ndarray:
        x = float(x)
        if not math.isfinite(x):
            raise InvalidInputError(f"cannot lift non-finite optic flow {x!r}")
        z = np.empty(self.degree)
        z[0] = x
        for p in range(1, self.degree):
            z[p] = z[p - 1] * x
        return z

    def project(self, z) -> float:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.degree,):
            raise ValueError(f"expected lifted state of shape ({self.degree},), got {z.shape}")
        return float(z[0])

    def output_matrix(self, n: int = 1) -> np.ndarray:
        """``C = [I 0]`` selecting the first ``n`` lifted coordinates."""
        C = np.zeros((n, self.degree))
        C[:, :n] = np.eye(n)
        return C


DEFAULT_DICTIONARY = ObservableDictionary(2)


def lift(x: float, degree: int = 2) -> np.ndarray:
    return ObservableDictionary(degree).lift(x)


def project(z, degree: int | None = None) -> float:
    z = np.asarray(z, dtype=float)
    return ObservableDictionary(degree or z.size).project(z)
