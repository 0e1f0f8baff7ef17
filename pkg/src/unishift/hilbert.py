"""Finite truncation of H = (+)_{l2} H_n with the doubly indexed basis e_{i,n}.

A vector is a dense complex array of shape ``(modes, levels)``; entry
``[i, n]`` is the coefficient on ``e_{i,n}``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import GridRangeError, ShapeError


@dataclass(frozen=True)
class Grid:
    """Index set ``0 <= i < modes``, ``0 <= n < levels``."""

    modes: int
    levels: int

    def __post_init__(self):
        if int(self.modes) != self.modes or self.modes < 1:
            raise ValueError(f"modes must be a positive integer, got {self.modes!r}")
        if int(self.levels) != self.levels or self.levels < 2:
            raise ValueError(f"levels must be an integer >= 2, got {self.levels!r}")

    @property
    def shape(self):
        return (self.modes, self.levels)

    @property
    def size(self):
        return self.modes * self.levels


def _frozen(arr):
    arr.setflags(write=False)
    return arr


class CVec:
    """Immutable truncated element of H."""

    __slots__ = ("grid", "coeff")

    def __init__(self, grid: Grid, coeff):
        coeff = np.array(coeff, dtype=complex)
        if coeff.shape != grid.shape:
            raise ShapeError(f"coefficient shape {coeff.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(coeff)):
            raise ValueError("coefficients must be finite")
        self.grid = grid
        self.coeff = _frozen(coeff)

    @classmethod
    def zeros(cls, grid: Grid) -> "CVec":
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    @classmethod
    def random(cls, grid: Grid, rng=None) -> "CVec":
        rng = np.random.default_rng(rng)
        return cls(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))

    def _check(self, other):
        if not isinstance(other, CVec):
            return NotImplemented
        if other.grid != self.grid:
            raise ShapeError(f"grid mismatch: {self.grid} vs {other.grid}")
        return other

    def __add__(self, other):
        other = self._check(other)
        if other is NotImplemented:
            return other
        return CVec(self.grid, self.coeff + other.coeff)

    def __sub__(self, other):
        other = self._check(other)
        if other is NotImplemented:
            return other
        return CVec(self.grid, self.coeff - other.coeff)

    def __mul__(self, scalar):
        if isinstance(scalar, CVec):
            return NotImplemented
        return CVec(self.grid, complex(scalar) * self.coeff)

    __rmul__ = __mul__

    def __neg__(self):
        return CVec(self.grid, -self.coeff)

    def __eq__(self, other):
        if not isinstance(other, CVec):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.coeff, other.coeff)

    __hash__ = None

    def __repr__(self):
        return f"CVec(grid={self.grid}, norm={norm(self):.6g})"


class WeightFamily:
    """Positive bounded weights ``w[i, n]`` on a finite table.

    The table is usually larger than any operator grid: the step-``k``
    constraint of the spectrum construction reads ``w[i, p]`` for ``i <= k``
    and ``p < 2**(k+1)``.
    """

    __slots__ = ("w", "sup_bound")

    def __init__(self, w, sup_bound=None):
        w = np.array(w, dtype=float)
        if w.ndim != 2 or w.size == 0:
            raise ValueError("weights must be a non-empty 2-d table")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be finite and strictly positive")
        bound = float(w.max()) if sup_bound is None else float(sup_bound)
        if np.any(w > bound):
            raise ValueError(f"weights exceed sup_bound={bound}")
        self.w = _frozen(w)
        self.sup_bound = bound

    @classmethod
    def constant(cls, value, modes, levels):
        return cls(np.full((modes, levels), float(value)))

    @classmethod
    def geometric(cls, ratio, modes, levels, scale=1.0):
        """``w[i, n] = scale * ratio**n``; bounded when ``ratio <= 1``."""
        if ratio <= 0 or ratio > 1:
            raise ValueError("geometric ratio must lie in (0, 1]")
        row = scale * float(ratio) ** np.arange(levels)
        return cls(np.tile(row, (modes, 1)), sup_bound=scale)

    @property
    def shape(self):
        return self.w.shape

    def covers(self, modes, levels):
        return self.w.shape[0] >= modes and self.w.shape[1] >= levels

    def restrict(self, grid: Grid) -> "WeightFamily":
        if not self.covers(*grid.shape):
            raise GridRangeError(f"weight table {self.w.shape} does not cover grid {grid.shape}")
        return WeightFamily(self.w[: grid.modes, : grid.levels], self.sup_bound)

    def __eq__(self, other):
        if not isinstance(other, WeightFamily):
            return NotImplemented
        return self.sup_bound == other.sup_bound and np.array_equal(self.w, other.w)

    __hash__ = None

    def __repr__(self):
        return f"WeightFamily(shape={self.w.shape}, sup_bound={self.sup_bound:g})"


def basis_vector(grid: Grid, i: int, n: int) -> CVec:
    if not (0 <= i < grid.modes and 0 <= n < grid.levels):
        raise GridRangeError(f"index ({i}, {n}) outside grid {grid.shape}")
    coeff = np.zeros(grid.shape, dtype=complex)
    coeff[i, n] = 1.0
    return CVec(grid, coeff)


def inner(x: CVec, y: CVec) -> complex:
    """Sesquilinear pairing, linear in ``x`` and conjugate-linear in ``y``."""
    if x.grid != y.grid:
        raise ShapeError(f"grid mismatch: {x.grid} vs {y.grid}")
    return complex(np.vdot(y.coeff, x.coeff))


def norm(x: CVec) -> float:
    return float(np.linalg.norm(x.coeff))
