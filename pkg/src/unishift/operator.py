"""Truncated ``T = D_mu + B_w``: per-mode upper-bidiagonal action.

``(T x)[i, n] = mu[n] x[i, n] + w[i, n] x[i, n+1]`` for ``n < N-1`` and
``mu[N-1] x[i, N-1]`` at the top level, where the inflow from level ``N`` is
dropped by the truncation.  The shift from level ``n`` carries ``w[i, n-1]``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .exceptions import GridRangeError, NumericRangeError, ShapeError
from .hilbert import CVec, Grid, WeightFamily

OVERFLOW = 1e300


@dataclass(frozen=True)
class OperatorSpec:
    grid: Grid
    mu: np.ndarray
    w: WeightFamily

    def __post_init__(self):
        mu = np.array(self.mu, dtype=complex)
        if mu.shape != (self.grid.levels,):
            raise ShapeError(f"need {self.grid.levels} diagonal entries, got {mu.shape}")
        if np.max(np.abs(np.abs(mu) - 1.0)) > 1e-12:
            raise ValueError("diagonal entries must be unimodular")
        if self.w.shape != self.grid.shape:
            raise ShapeError(f"weights {self.w.shape} do not match grid {self.grid.shape}")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def from_sequence(cls, seq, w: WeightFamily, grid: Grid) -> "OperatorSpec":
        if grid.levels > len(seq.mu):
            raise GridRangeError(f"grid needs {grid.levels} diagonal entries, sequence has {len(seq.mu)}")
        return cls(grid, np.asarray(seq.mu)[: grid.levels], w.restrict(grid))

    def to_dict(self):
        return {
            "grid": {"modes": self.grid.modes, "levels": self.grid.levels},
            "mu": [[float(z.real), float(z.imag)] for z in self.mu],
            "w": self.w.w.tolist(),
            "sup_bound": self.w.sup_bound,
        }

    @classmethod
    def from_dict(cls, data) -> "OperatorSpec":
        grid = Grid(data["grid"]["modes"], data["grid"]["levels"])
        mu = np.array([complex(a, b) for a, b in data["mu"]])
        return cls(grid, mu, WeightFamily(data["w"], data.get("sup_bound")))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text) -> "OperatorSpec":
        return cls.from_dict(json.loads(text))


def apply_coeffs(mu, w, coeff):
    """Action on raw coefficient arrays ``(..., modes, levels)``.

    Works for any dtype supporting ``*`` and ``+`` (including object arrays
    of arbitrary-precision numbers).
    """
    out = mu * coeff
    out[..., :-1] = out[..., :-1] + w[:, :-1] * coeff[..., 1:]
    return out


def apply(T: OperatorSpec, x: CVec) -> CVec:
    if x.grid != T.grid:
        raise ShapeError(f"grid mismatch: operator {T.grid} vs vector {x.grid}")
    return CVec(T.grid, apply_coeffs(T.mu, T.w.w, x.coeff))


def to_matrix(T: OperatorSpec) -> np.ndarray:
    """Stack of per-mode ``N x N`` upper-bidiagonal matrices, shape ``(I, N, N)``."""
    n = T.grid.levels
    mats = np.zeros((T.grid.modes, n, n), dtype=complex)
    idx = np.arange(n)
    mats[:, idx, idx] = T.mu
    mats[:, idx[:-1], idx[1:]] = T.w.w[:, :-1]
    return mats


def power_apply(T: OperatorSpec, x: CVec, m: int) -> CVec:
    """``T**m x`` by ``m`` literal applications."""
    if m < 0:
        raise ValueError("power must be nonnegative")
    if x.grid != T.grid:
        raise ShapeError(f"grid mismatch: operator {T.grid} vs vector {x.grid}")
    c = np.array(x.coeff)
    for _ in range(m):
        c = apply_coeffs(T.mu, T.w.w, c)
        if not np.all(np.abs(c) <= OVERFLOW):
            raise NumericRangeError("orbit coefficients exceeded 1e300")
    return CVec(T.grid, c)


def export_matrix_csv(T: OperatorSpec, mode: int, path, header=None):
    """Write one mode's dense matrix as CSV with ``row, col, re, im`` rows."""
    if not 0 <= mode < T.grid.modes:
        raise GridRangeError(f"mode {mode} outside grid")
    mat = to_matrix(T)[mode]
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "re", "im"])
        for r in range(mat.shape[0]):
            for c in range(mat.shape[1]):
                writer.writerow([r, c, repr(mat[r, c].real), repr(mat[r, c].imag)])
