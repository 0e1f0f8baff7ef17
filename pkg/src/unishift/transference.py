"""Transfer of the Hilbert-space operator to a weighted l^p coordinate model.

The target ``X`` has coordinates ``f_{i,n}``; the decomposition blocks are
``X_n = span{f_{i,n} : i}`` and the biorthogonal system is
``x_{i,n} = s_{i,n} f_{i,n}``, ``x*_{i,n} = f*_{i,n} / s_{i,n}``.  The map
``J e_{i,n} = x_{i,n}`` multiplies coordinates by ``s``, so
``T_X = J T J^{-1}`` shifts with the extra factor ``s_{i,n} / s_{i,n+1}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeError
from .gaussian import STAT_FACTOR, InvarianceReport, covariance, deterministic_budget, sample
from .hilbert import CVec, Grid, WeightFamily
from .operator import OperatorSpec, apply_coeffs

INTERTWINE_TOL = 1e-10


def default_scales(grid: Grid) -> np.ndarray:
    """``s_{i,n} = 2**-(i+n+1)``: square-summable over the infinite index set."""
    i = np.arange(grid.modes)[:, None]
    n = np.arange(grid.levels)[None, :]
    return 2.0 ** -(i + n + 1.0)


@dataclass(frozen=True)
class BanachTarget:
    p: float
    grid: Grid
    scales: np.ndarray

    def __post_init__(self):
        if not (self.p >= 1 and math.isfinite(self.p)):
            raise ValueError("p must lie in [1, inf)")
        s = np.array(self.scales, dtype=float)
        if s.shape != self.grid.shape:
            raise ShapeError(f"scales {s.shape} do not match grid {self.grid.shape}")
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise ValueError("scales must be finite and positive")
        s.setflags(write=False)
        object.__setattr__(self, "scales", s)

    @classmethod
    def default(cls, grid: Grid, p: float = 2.0) -> "BanachTarget":
        return cls(p, grid, default_scales(grid))

    @classmethod
    def hilbert(cls, grid: Grid) -> "BanachTarget":
        return cls(2.0, grid, np.ones(grid.shape))

    def with_scale(self, index, value) -> "BanachTarget":
        s = np.array(self.scales)
        s[index] = value
        return BanachTarget(self.p, self.grid, s)

    @property
    def vector_norms(self):
        """``||x_{i,n}|| = s_{i,n}``."""
        return self.scales

    @property
    def functional_norms(self):
        """``||x*_{i,n}||* = 1 / s_{i,n}`` under the coordinate pairing."""
        return 1.0 / self.scales

    def j_norm_bound(self) -> float:
        """Bound on ``||J : H -> X||`` (Holder for ``p < 2``)."""
        s = self.scales
        if self.p >= 2:
            return float(s.max())
        r = 2.0 * self.p / (2.0 - self.p)
        return float(np.sum(s**r) ** (1.0 / r))


def banach_norm(target: BanachTarget, xi):
    """``(sum |xi|^p)^(1/p)`` over the last two axes; a float for a single vector."""
    out = np.sum(np.abs(np.asarray(xi)) ** target.p, axis=(-2, -1)) ** (1.0 / target.p)
    return float(out) if np.ndim(out) == 0 else out


def J(target: BanachTarget, x) -> np.ndarray:
    """Coordinates of ``J x``; accepts a ``CVec`` or raw arrays ``(..., I, N)``."""
    coeff = x.coeff if isinstance(x, CVec) else np.asarray(x)
    if coeff.shape[-2:] != target.grid.shape:
        raise ShapeError("vector and target grids differ")
    return target.scales * coeff


def J_inverse(target: BanachTarget, xi) -> np.ndarray:
    xi = np.asarray(xi)
    if xi.shape[-2:] != target.grid.shape:
        raise ShapeError("vector and target grids differ")
    return xi / target.scales


def apply_T_X(target: BanachTarget, mu, w, xi) -> np.ndarray:
    """``(D_mu + B_w) xi`` in target coordinates."""
    xi = np.asarray(xi, dtype=complex)
    if xi.shape[-2:] != target.grid.shape:
        raise ShapeError("vector and target grids differ")
    w = w.w if isinstance(w, WeightFamily) else np.asarray(w)
    if w.shape[0] < target.grid.modes or w.shape[1] < target.grid.levels:
        raise ShapeError("weights do not cover the target grid")
    w = w[: target.grid.modes, : target.grid.levels]
    s = target.scales
    eff = np.zeros_like(w)
    eff[:, :-1] = w[:, :-1] * (s[:, :-1] / s[:, 1:])
    return apply_coeffs(np.asarray(mu)[: target.grid.levels], eff, xi)


@dataclass
class IntertwineReport:
    max_defect: float
    max_scaled_defect: float
    samples: int

    @property
    def passed(self):
        return self.max_scaled_defect < INTERTWINE_TOL

    def to_dict(self):
        return {"max_defect": self.max_defect, "max_scaled_defect": self.max_scaled_defect, "samples": self.samples, "passed": self.passed}


def check_intertwine(target: BanachTarget, T: OperatorSpec, samples=100, seed=None, operator_target=None, vectors=None) -> IntertwineReport:
    """``max ||J T x - T_X J x||`` over random complex vectors.

    ``operator_target`` builds ``T_X`` from a different scale table (mutation
    testing); by default both sides share ``target``.
    """
    if T.grid != target.grid:
        raise ShapeError("operator and target grids differ")
    other = target if operator_target is None else operator_target
    if vectors is None:
        rng = np.random.default_rng(seed)
        vectors = rng.standard_normal((samples,) + T.grid.shape) + 1j * rng.standard_normal((samples,) + T.grid.shape)
    vectors = np.asarray(vectors, dtype=complex)
    lhs = J(target, apply_coeffs(T.mu, T.w.w, vectors))
    rhs = apply_T_X(other, T.mu, T.w, J(target, vectors))
    defect = np.atleast_1d(banach_norm(target, lhs - rhs))
    scale = 1.0 + np.atleast_1d(banach_norm(target, J(target, vectors)))
    return IntertwineReport(float(defect.max()), float((defect / scale).max()), len(vectors))


@dataclass
class NuclearityReport:
    partial_sums: np.ndarray
    increments: np.ndarray

    @property
    def ratios(self):
        inc = self.increments
        return inc[1:] / inc[:-1]

    @property
    def max_ratio(self):
        return float(self.ratios.max()) if len(self.increments) > 1 else float("nan")

    @property
    def converging(self):
        return bool(self.max_ratio < 0.9)

    def to_dict(self):
        return {
            "partial_sums": self.partial_sums.tolist(),
            "increments": self.increments.tolist(),
            "max_ratio": self.max_ratio,
            "converging": self.converging,
        }


def nuclearity_partial_sums(target: BanachTarget, w, n_max: int) -> NuclearityReport:
    """Partial sums of ``sum_{n>=1} sum_i w[i,n-1] ||x_{i,n-1}|| ||x*_{i,n}||*``.

    The shift out of level ``n`` carries ``w[i, n-1]`` (same convention as the
    Hilbert operator).
    """
    if not 1 <= n_max < target.grid.levels:
        raise ShapeError(f"n_max must lie in 1..{target.grid.levels - 1}")
    w = w.w if isinstance(w, WeightFamily) else np.asarray(w)
    if w.shape[0] < target.grid.modes or w.shape[1] < n_max:
        raise ShapeError("weights do not cover the requested range")
    s = target.scales
    n = np.arange(1, n_max + 1)
    terms = w[: target.grid.modes, n - 1] * s[:, n - 1] / s[:, n]
    inc = terms.sum(axis=0)
    return NuclearityReport(np.cumsum(inc), inc)


def correlation_rank(cov, rtol=1e-10) -> int:
    """Numerical rank of the correlation matrix ``D^-1/2 C D^-1/2``.

    Invariant under diagonal rescaling, so ranks before and after ``J``
    (which rescales coordinates by up to ``2**-(I+N)``) are comparable.
    """
    d = np.real(np.diag(cov))
    keep = d > 0
    c = cov[np.ix_(keep, keep)]
    inv = 1.0 / np.sqrt(d[keep])
    corr = c * inv[:, None] * inv[None, :]
    ev = np.linalg.eigvalsh(corr)
    return int(np.sum(ev > rtol * ev.max())) if len(ev) else 0


def pushforward_demo(spec, T: OperatorSpec, seq, target: BanachTarget, samples: int, seed=None) -> InvarianceReport:
    """Covariance invariance for the pushed measure ``m = m_bar o J^{-1}`` under ``T_X``.

    Samples come from the Hilbert measure with the same seed as
    :func:`unishift.gaussian.invariance_test`, so with ``s = 1`` and ``p = 2``
    the numbers coincide.  The deterministic budget is scaled by ``||J||^2``.
    """
    if T.grid != target.grid:
        raise ShapeError("operator and target grids differ")
    if samples < 1000:
        raise ValueError("pushforward_demo needs at least 1000 samples")
    x = sample(spec, T, seq, seed, size=samples)
    xi = J(target, x)
    txi = apply_T_X(target, T.mu, T.w, xi)
    jn = target.j_norm_bound()
    det = deterministic_budget(spec, T, seq) * jn**2
    cx = covariance(xi)
    ctx = covariance(txi)
    tr = float(np.real(np.trace(cx)))
    rep = InvarianceReport(float(np.linalg.norm(cx - ctx)), STAT_FACTOR * tr / math.sqrt(samples), det, samples, tr)
    src = covariance(x)
    rep.extra = {
        "j_norm_bound": jn,
        "source_rank": correlation_rank(src),
        "pushed_rank": correlation_rank(cx),
    }
    return rep
