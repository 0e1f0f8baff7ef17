"""Eigenvector fields ``E_i(lambda)`` of the truncated operator.

``E_i(lambda) = sum_n c_{i,n}(lambda) e_{i,n}`` with
``c_{i,n}(lambda) = prod_{p<n} (lambda - mu_p) / w[i, p]``.  On the Cantor
set the coefficients decay superexponentially, so products switch to a
log-magnitude/phase accumulation as soon as a factor is small.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .exceptions import GridRangeError, NumericRangeError, ShapeError
from .hilbert import CVec, Grid, WeightFamily
from .operator import OVERFLOW, OperatorSpec, apply_coeffs
from .spectrum import EigenSequence

SMALL_FACTOR = 1e-3
# digits kept beyond the dynamic range when measuring residuals exactly
GUARD_DIGITS = 30


@dataclass(frozen=True)
class EigenField:
    """Field ``lambda -> E_i(lambda)`` truncated to ``grid.levels`` levels."""

    i: int
    seq: EigenSequence
    w: WeightFamily
    grid: Grid

    def __post_init__(self):
        if not 0 <= self.i < self.grid.modes:
            raise GridRangeError(f"mode {self.i} outside grid {self.grid.shape}")
        if not self.w.covers(self.i + 1, self.grid.levels):
            raise GridRangeError(f"weights {self.w.shape} do not cover mode {self.i} at {self.grid.levels} levels")
        if len(self.seq.mu) < self.grid.levels:
            raise GridRangeError(f"sequence has {len(self.seq.mu)} entries, need {self.grid.levels}")

    @classmethod
    def from_operator(cls, T: OperatorSpec, seq: EigenSequence, i: int) -> "EigenField":
        return cls(i, seq, T.w, T.grid)

    @property
    def N(self):
        return self.grid.levels

    @property
    def factors_mu(self):
        return np.asarray(self.seq.mu)[: self.N]

    @property
    def factors_w(self):
        return self.w.w[self.i, : self.N]


def coefficients(field: EigenField, lam, levels=None) -> np.ndarray:
    """``c_{i,n}(lambda)`` for ``n < levels``; ``lam`` may be an array.

    Returns shape ``(levels,)`` for scalar input, ``(len(lam), levels)`` else.
    """
    levels = field.N if levels is None else levels
    if not 1 <= levels <= field.N:
        raise GridRangeError(f"levels must be in 1..{field.N}")
    scalar = np.ndim(lam) == 0
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    mu = field.factors_mu[: levels - 1]
    w = field.factors_w[: levels - 1]
    f = (lam[:, None] - mu[None, :]) / w[None, :]
    out = np.ones((len(lam), levels), dtype=complex)
    with np.errstate(over="ignore", invalid="ignore"):
        _fill_products(f, out)
    if not np.all(np.isfinite(out)) or np.any(np.abs(out) > OVERFLOW):
        raise NumericRangeError("eigenfield coefficients overflow; lambda is far from the spectrum")
    return out[0] if scalar else out


def _fill_products(f, out):
    levels = out.shape[1]
    if levels > 1:
        small = np.any(np.abs(f) < SMALL_FACTOR, axis=1)
        if np.any(~small):
            out[~small, 1:] = np.cumprod(f[~small], axis=1)
        if np.any(small):
            fs = f[small]
            with np.errstate(divide="ignore"):
                logmag = np.cumsum(np.log(np.abs(fs)), axis=1)
            phase = np.cumsum(np.angle(fs), axis=1)
            out[small, 1:] = np.exp(logmag) * np.exp(1j * phase)


def eigen_coeff(field: EigenField, n: int, lam) -> complex:
    if not 0 <= n < field.N:
        raise GridRangeError(f"level {n} outside 0..{field.N - 1}")
    return complex(coefficients(field, lam, n + 1)[-1])


def eval_E(field: EigenField, lam) -> CVec:
    coeff = np.zeros(field.grid.shape, dtype=complex)
    coeff[field.i] = coefficients(field, lam)
    return CVec(field.grid, coeff)


def tail_sq(field: EigenField, lam, k_prime: int) -> float:
    """``sum_{2**k' < n < N} |c_{i,n}(lambda)|**2``."""
    c = coefficients(field, lam)
    return float(np.sum(np.abs(c[2**k_prime + 1 :]) ** 2))


def tail_certificate(field: EigenField, lam, k_max: int):
    """Tail sums against ``2**-(k'+1)`` for every ``i <= k' <= k_max``.

    Returns a list of ``(k', tail, bound)``.
    """
    c = coefficients(field, lam)
    sq = np.abs(c) ** 2
    rows = []
    for kp in range(field.i, k_max + 1):
        rows.append((kp, float(sq[2**kp + 1 :].sum()), 2.0 ** -(kp + 1)))
    return rows


def residual_closed_form(field: EigenField, lam) -> float:
    """``|lambda - mu_{N-1}| * |c_{i,N-1}(lambda)|``: the dropped top inflow."""
    c_top = coefficients(field, lam)[-1]
    return float(abs(lam - field.factors_mu[-1]) * abs(c_top))


def _mp(z):
    return mpmath.mpc(float(np.real(z)), float(np.imag(z)))


def residual(T: OperatorSpec, field: EigenField, lam, dps=None) -> float:
    """``||T E_i(lambda) - lambda E_i(lambda)||`` measured directly.

    The lower components cancel to zero exactly in real arithmetic, while the
    surviving top component can be hundreds of orders of magnitude below the
    leading coefficients.  Both ``E`` and ``T E`` are therefore evaluated in
    arbitrary precision, with enough digits to resolve the top component.
    """
    if T.grid != field.grid or not np.array_equal(T.mu, field.factors_mu) or not np.array_equal(T.w.w[field.i], field.factors_w):
        raise ShapeError("operator and field are built from different data")
    if dps is None:
        c = np.abs(coefficients(field, lam))
        nz = c[c > 0]
        low = math.log10(nz.min()) if len(nz) else 0.0
        span = math.log10(nz.max()) - low if len(nz) else 0.0
        dps = int(GUARD_DIGITS + span + max(0.0, -math.log10(max(abs(lam - field.factors_mu[-1]), 1e-300))))
    with mpmath.workdps(dps):
        lam_mp = _mp(lam)
        mu = np.array([_mp(z) for z in field.factors_mu], dtype=object)
        w = np.array([[mpmath.mpf(float(v)) for v in field.factors_w]], dtype=object)
        coeff = np.empty((1, field.N), dtype=object)
        coeff[0, 0] = mpmath.mpc(1)
        for n in range(1, field.N):
            coeff[0, n] = coeff[0, n - 1] * (lam_mp - mu[n - 1]) / w[0, n - 1]
        defect = apply_coeffs(mu, w, coeff) - lam_mp * coeff
        total = mpmath.fsum(abs(d) ** 2 for d in defect[0])
        return float(mpmath.sqrt(total))


def residual_fast(T: OperatorSpec, field: EigenField, lam) -> float:
    """Double-precision ``||T E - lambda E||``; rounding-limited at ~1e-16 ||E||."""
    e = eval_E(field, lam).coeff
    return float(np.linalg.norm(apply_coeffs(T.mu, T.w.w, e) - lam * e))


def spanning_matrix(seq: EigenSequence, w: WeightFamily, i: int, N: int):
    """Columns ``E_i(mu_j)`` restricted to levels ``0..N-1``.

    Returns ``(matrix, min_abs_diag)``.  The matrix is upper triangular since
    ``c_{i,n}(mu_j) = 0`` for ``n > j``.
    """
    if len(seq.mu) < N:
        raise GridRangeError(f"sequence has {len(seq.mu)} entries, need {N}")
    grid = Grid(max(i + 1, 1), max(N, 2))
    field = EigenField(i, seq, w, grid)
    mat = coefficients(field, np.asarray(seq.mu)[:N], levels=N).T
    mat = np.triu(mat)
    return mat, float(np.min(np.abs(np.diag(mat))))


def spanning_solve(mat: np.ndarray, dps=None):
    """Solve ``S X = I`` for upper-triangular ``S``; returns ``(X, max residual)``.

    The diagonal of ``S`` shrinks superexponentially with ``N``, so back
    substitution and the residual ``max |S X - I|`` are carried out in
    arbitrary precision on the exact binary values of ``S``.  A zero
    diagonal entry means the columns do not span; ``X`` is then ``None``.
    """
    n = mat.shape[0]
    diag = np.abs(np.diag(mat))
    if np.any(diag == 0):
        return None, math.inf
    if dps is None:
        scale = math.log10(np.max(np.abs(mat)))
        dps = int(GUARD_DIGITS + n * max(0.0, scale - math.log10(diag.min())) / 2 + 2 * (scale - math.log10(diag.min())))
        dps = min(max(dps, 30), 5000)
    with mpmath.workdps(dps):
        s_mp = [[_mp(mat[r, c]) if c >= r else mpmath.mpc(0) for c in range(n)] for r in range(n)]
        x = [[mpmath.mpc(0)] * n for _ in range(n)]
        for col in range(n):
            for r in range(col, -1, -1):
                acc = mpmath.mpc(1) if r == col else mpmath.mpc(0)
                for c in range(r + 1, col + 1):
                    acc -= s_mp[r][c] * x[c][col]
                x[r][col] = acc / s_mp[r][r]
        worst = mpmath.mpf(0)
        for r in range(n):
            for col in range(r, n):
                acc = mpmath.fsum(s_mp[r][c] * x[c][col] for c in range(r, col + 1))
                worst = max(worst, abs(acc - (1 if r == col else 0)))
        out = np.array([[complex(v) for v in row] for row in x])
        return out, float(worst)


def lipschitz_bound(field: EigenField, levels: int) -> float:
    """A priori Lipschitz constant of the partial sum over levels ``< levels``.

    Uses ``|lambda - mu_p| <= 1`` on the convex hull of ``K`` (diameter < 1),
    so ``|c_n'| <= n * prod_{p<n} 1 / w[i, p]``.
    """
    w = field.factors_w[: levels - 1]
    inv = np.concatenate([[1.0], np.cumprod(1.0 / w)])
    n = np.arange(levels)
    return float(np.sqrt(np.sum((n * inv[:levels]) ** 2)))


@dataclass
class ContinuityReport:
    max_deviation: float
    delta: float
    bound_sq: float
    deviations: np.ndarray

    @property
    def passed(self):
        return self.max_deviation**2 <= self.bound_sq


def continuity_probe(field: EigenField, pairs, delta: float, k0: int) -> ContinuityReport:
    """Max ``||E_i(lambda) - E_i(lambda')||`` over pairs with ``|lambda - lambda'| <= delta``.

    The bound splits at the ``2**k0``-th partial sum: Lipschitz part
    ``L**2 delta**2`` plus the tail allowance ``2 * 2**-(k0+1)``.
    """
    lam, lam2 = (np.asarray(v, dtype=complex) for v in pairs)
    if np.any(np.abs(lam - lam2) > delta * (1 + 1e-12)):
        raise ValueError("pair separated by more than delta")
    d = np.linalg.norm(coefficients(field, lam) - coefficients(field, lam2), axis=1)
    levels = min(field.N, 2**k0 + 1)
    lip = lipschitz_bound(field, levels)
    bound_sq = lip**2 * delta**2 + 2.0 * 2.0 ** -(k0 + 1)
    return ContinuityReport(float(d.max()) if len(d) else 0.0, delta, bound_sq, d)


def export_coefficients_csv(rows, path, header=None):
    """Rows of ``(i, lam, coeffs)`` as ``i, lambda_re, lambda_im, level, coeff_re, coeff_im``."""
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        writer = csv.writer(fh)
        writer.writerow(["i", "lambda_re", "lambda_im", "level", "coeff_re", "coeff_im"])
        for i, lam, coeffs in rows:
            for n, c in enumerate(coeffs):
                writer.writerow([i, repr(lam.real), repr(lam.imag), n, repr(c.real), repr(c.imag)])
