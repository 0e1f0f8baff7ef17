"""Gaussian measures carried by unimodular eigenvectors.

A measure is an explicit expansion ``x = sum_j a_j g_j E_{i_j}(lambda_j)``
with independent standard complex Gaussians ``g_j`` (``E|g|^2 = 1``).  For
exact eigenvectors ``T`` only rotates each ``g_j`` by ``lambda_j``, which
leaves the law unchanged; the tests below measure that at finite sample size.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .eigenfields import EigenField, coefficients, residual_closed_form
from .exceptions import ShapeError
from .hilbert import CVec
from .operator import OperatorSpec, apply_coeffs
from .spectrum import EigenSequence

STAT_FACTOR = 5.0
KS_FACTOR = 1.63
ERGODIC_DISPERSION_RATIO = 0.1


@dataclass(frozen=True)
class GaussianSpec:
    """Terms ``(mode, lambda, amplitude)`` of the expansion."""

    terms: tuple

    def __post_init__(self):
        terms = tuple((int(i), complex(lam), float(a)) for i, lam, a in self.terms)
        for _, _, a in terms:
            if a <= 0:
                raise ValueError("amplitudes must be positive")
        object.__setattr__(self, "terms", terms)

    def __len__(self):
        return len(self.terms)

    @classmethod
    def exact(cls, T: OperatorSpec, count: int, modes=None, amplitude_ratio: float = 0.5) -> "GaussianSpec":
        """``count`` terms on exact eigenvalues ``mu_{N'}`` (``N' <= N-2``),
        cycling through ``modes``, with amplitudes ``ratio**j``."""
        modes = list(range(T.grid.modes)) if modes is None else list(modes)
        top = T.grid.levels - 1
        terms = []
        for j in range(count):
            i = modes[j % len(modes)]
            level = (j // len(modes)) % top
            terms.append((i, T.mu[level], amplitude_ratio**j))
        return cls(tuple(terms))

    @classmethod
    def from_samples(cls, lambdas, modes, amplitude_ratio: float = 0.5) -> "GaussianSpec":
        """Terms at points sampled from ``K`` (not exact eigenvalues)."""
        return cls(tuple((i, lam, amplitude_ratio**j) for j, (i, lam) in enumerate(zip(modes, lambdas))))


def eigen_stack(spec: GaussianSpec, T: OperatorSpec, seq: EigenSequence) -> np.ndarray:
    """``E_{i_j}(lambda_j)`` for every term, shape ``(J, modes, levels)``."""
    out = np.zeros((len(spec),) + T.grid.shape, dtype=complex)
    for j, (i, lam, _) in enumerate(spec.terms):
        out[j, i] = coefficients(EigenField.from_operator(T, seq, i), lam)
    return out


def trace_cov(spec, T, seq) -> float:
    """``sum_j a_j^2 ||E_j||^2``."""
    e = eigen_stack(spec, T, seq)
    a = np.array([t[2] for t in spec.terms])
    return float(np.sum(a**2 * np.sum(np.abs(e) ** 2, axis=(1, 2))))


def sample(spec: GaussianSpec, T: OperatorSpec, seq: EigenSequence, seed=None, size=None):
    """Draw ``x = sum_j a_j g_j E_j``; a ``CVec`` or an array ``(size, modes, levels)``."""
    rng = np.random.default_rng(seed)
    count = 1 if size is None else int(size)
    if len(spec) == 0:
        out = np.zeros((count,) + T.grid.shape, dtype=complex)
    else:
        e = eigen_stack(spec, T, seq)
        a = np.array([t[2] for t in spec.terms])
        g = (rng.standard_normal((count, len(spec))) + 1j * rng.standard_normal((count, len(spec)))) / math.sqrt(2.0)
        out = np.tensordot(g * a, e, axes=(1, 0))
    return CVec(T.grid, out[0]) if size is None else out


def covariance(samples: np.ndarray) -> np.ndarray:
    """Centered Hermitian covariance of flattened samples."""
    x = samples.reshape(len(samples), -1)
    x = x - x.mean(axis=0)
    return (x.T @ x.conj()) / len(x)


def deterministic_budget(spec, T, seq) -> float:
    """``sum_j a_j^2 (2 r_j ||E_j|| + r_j^2)`` with ``r_j`` the truncation residual at ``lambda_j``."""
    e = eigen_stack(spec, T, seq)
    total = 0.0
    for j, (i, lam, a) in enumerate(spec.terms):
        r = residual_closed_form(EigenField.from_operator(T, seq, i), lam)
        total += a**2 * (2.0 * r * np.linalg.norm(e[j]) + r**2)
    return float(total)


@dataclass
class InvarianceReport:
    covariance_distance: float
    statistical_budget: float
    deterministic_budget: float
    samples: int
    trace: float
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.covariance_distance <= self.statistical_budget + self.deterministic_budget

    @property
    def deterministic_dominates(self):
        return self.deterministic_budget > self.statistical_budget

    def to_dict(self):
        out = {
            "covariance_distance": self.covariance_distance,
            "statistical_budget": self.statistical_budget,
            "deterministic_budget": self.deterministic_budget,
            "samples": self.samples,
            "trace": self.trace,
            "passed": self.passed,
            "deterministic_dominates": self.deterministic_dominates,
        }
        out.update(self.extra)
        return out


def _invariance_from(x, tx, det, m) -> InvarianceReport:
    cx = covariance(x)
    ctx = covariance(tx)
    tr = float(np.real(np.trace(cx)))
    dist = float(np.linalg.norm(cx - ctx))
    return InvarianceReport(dist, STAT_FACTOR * tr / math.sqrt(m), det, m, tr)


def invariance_test(spec: GaussianSpec, T: OperatorSpec, seq: EigenSequence, samples: int, seed=None) -> InvarianceReport:
    """Frobenius distance between the empirical covariances of ``x`` and ``T x``."""
    if samples < 1000:
        raise ValueError("invariance_test needs at least 1000 samples")
    x = sample(spec, T, seq, seed, size=samples)
    tx = apply_coeffs(T.mu, T.w.w, x)
    return _invariance_from(x, tx, deterministic_budget(spec, T, seq), samples)


def ks_marginals(spec, T, seq, samples, seed=None, coords=None):
    """Kolmogorov-Smirnov statistics of ``Re<x, e_{i,n}>`` and ``Re<Tx, e_{i,n}>``
    against the exact normal marginal ``N(0, sum_j a_j^2 |E_j[i,n]|^2 / 2)``.

    Returns ``(rows, threshold)`` with rows ``(i, n, stat_x, stat_tx)``.
    """
    e = eigen_stack(spec, T, seq)
    a = np.array([t[2] for t in spec.terms])
    var = np.sum((a[:, None, None] ** 2) * np.abs(e) ** 2, axis=0) / 2.0
    if coords is None:
        coords = [tuple(ix) for ix in np.argwhere(var > 0)]
    x = sample(spec, T, seq, seed, size=samples)
    tx = apply_coeffs(T.mu, T.w.w, x)
    rows = []
    for i, n in coords:
        sd = math.sqrt(var[i, n])
        sx = stats.kstest(x[:, i, n].real / sd, "norm").statistic
        stx = stats.kstest(tx[:, i, n].real / sd, "norm").statistic
        rows.append((int(i), int(n), float(sx), float(stx)))
    return rows, KS_FACTOR / math.sqrt(samples)


def ks_threshold(samples: int, tests: int = 1, alpha: float = 0.01) -> float:
    """Asymptotic KS critical value with a Bonferroni split of ``alpha`` over ``tests``.

    For one test at ``alpha = 0.01`` this is ``KS_FACTOR / sqrt(samples)``.
    """
    if tests <= 1:
        return KS_FACTOR / math.sqrt(samples)
    c = math.sqrt(-math.log(alpha / (2.0 * tests)) / 2.0)
    return c / math.sqrt(samples)


def touched_block_min_eigenvalue(spec, T, seq, samples, seed=None) -> float:
    """Smallest eigenvalue of the empirical covariance restricted to the
    coordinates its eigenvectors touch."""
    x = sample(spec, T, seq, seed, size=samples)
    e = eigen_stack(spec, T, seq)
    touched = np.any(np.abs(e) > 0, axis=0).reshape(-1)
    c = covariance(x)[np.ix_(touched, touched)]
    return float(np.linalg.eigvalsh(c).min())


def cross_covariance(spec, T, seq, samples, seed_a, seed_b):
    """Frobenius norm of the cross-covariance of two seed streams and its budget."""
    xa = sample(spec, T, seq, seed_a, size=samples).reshape(samples, -1)
    xb = sample(spec, T, seq, seed_b, size=samples).reshape(samples, -1)
    cross = (xa.T @ xb.conj()) / samples
    tr = float(np.real(np.trace(covariance(xa))))
    return float(np.linalg.norm(cross)), STAT_FACTOR * tr / math.sqrt(samples)


# Birkhoff averages ----------------------------------------------------------

FUNCTIONALS = ("re", "abs2")


def evaluate_functional(kind, i, n, x):
    v = x[..., i, n]
    if kind == "re":
        return v.real
    if kind == "abs2":
        return np.abs(v) ** 2
    raise ValueError(f"functional must be one of {FUNCTIONALS}")


@dataclass
class BirkhoffReport:
    functional: str
    length: int
    samples: int
    gap: float
    gap_budget: float
    dispersion: float
    ensemble_std: float
    time_averages: np.ndarray = field(repr=False, default=None)

    @property
    def dispersion_ratio(self):
        return self.dispersion / self.ensemble_std if self.ensemble_std > 0 else float("nan")

    @property
    def consistent_with_ergodic(self):
        return bool(self.gap <= self.gap_budget and self.dispersion_ratio <= ERGODIC_DISPERSION_RATIO)

    @property
    def verdict(self):
        if self.consistent_with_ergodic:
            return "statistics consistent with ergodic averaging (not a proof)"
        return "ergodic averaging FAILS at this truncation: time averages keep the ensemble dispersion"

    def to_dict(self):
        return {
            "functional": self.functional,
            "length": self.length,
            "samples": self.samples,
            "gap": self.gap,
            "gap_budget": self.gap_budget,
            "dispersion": self.dispersion,
            "ensemble_std": self.ensemble_std,
            "dispersion_ratio": self.dispersion_ratio,
            "consistent_with_ergodic": self.consistent_with_ergodic,
            "verdict": self.verdict,
        }


def birkhoff_test(spec, T, seq, functional, length: int, samples: int, seed=None) -> BirkhoffReport:
    """Time averages ``(1/L) sum_{l<L} f(T^l x)`` against the ensemble average of ``f``.

    ``functional`` is ``(kind, i, n)`` with ``kind`` in ``{"re", "abs2"}``:
    ``Re<x, e_{i,n}>`` or ``|<x, e_{i,n}>|^2``.
    """
    kind, i, n = functional
    if length < 1:
        raise ValueError("orbit length must be >= 1")
    if not (0 <= i < T.grid.modes and 0 <= n < T.grid.levels):
        raise ShapeError("functional coordinate outside grid")
    x = sample(spec, T, seq, seed, size=samples)
    ensemble = evaluate_functional(kind, i, n, x)
    acc = np.zeros(samples)
    c = x
    for step in range(length):
        acc += evaluate_functional(kind, i, n, c)
        if step + 1 < length:
            c = apply_coeffs(T.mu, T.w.w, c)
    ta = acc / length
    ens_std = float(ensemble.std())
    gap = float(abs(ta.mean() - ensemble.mean()))
    budget = 3.0 * ens_std * (1.0 / math.sqrt(samples) + 1.0 / math.sqrt(length))
    return BirkhoffReport(f"{kind}<x,e_{i},{n}>", length, samples, gap, budget, float(ta.std()), ens_std, ta)
