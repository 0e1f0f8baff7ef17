"""Orbit simulation and finite-horizon recurrence statistics.

Everything here is a truncation-scale witness: visit frequencies stand in
for lower densities, and exact periodicity of root-of-unity truncations
stands in for dense periodic points.  Neither certifies the
infinite-dimensional property.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .eigenfields import EigenField, coefficients, spanning_matrix
from .exceptions import GridRangeError, NumericRangeError, ShapeError, UnsupportedModeError
from .hilbert import CVec, norm
from .operator import OVERFLOW, OperatorSpec, apply_coeffs, power_apply
from .spectrum import ROOTS_OF_UNITY, EigenSequence

DEFAULT_BURN_IN = 0.1


@dataclass
class OrbitStats:
    steps: int
    targets: list
    checkpoints: np.ndarray
    visits: np.ndarray  # (n_targets, n_checkpoints), cumulative counts
    running_frequency: np.ndarray
    norm_max: float
    norm_final: float
    log_norm_slope: float = float("nan")
    first_visit: list = field(default_factory=list)

    @property
    def norm_track(self):
        return {"max": self.norm_max, "final": self.norm_final}

    def to_dict(self):
        return {
            "steps": self.steps,
            "checkpoints": self.checkpoints.tolist(),
            "visits": self.visits.tolist(),
            "running_frequency": self.running_frequency.tolist(),
            "norm_track": self.norm_track,
            "log_norm_slope": self.log_norm_slope,
            "first_visit": self.first_visit,
        }


def _default_checkpoints(steps, count=100):
    pts = np.unique(np.linspace(0, steps, count + 1).astype(np.int64)[1:] - 1)
    return pts[pts >= 0]


def run_orbit(T: OperatorSpec, x0: CVec, steps: int, targets, checkpoints=None) -> OrbitStats:
    """Iterate ``T`` for ``steps`` steps, counting visits to each target ball.

    Step ``n`` (``0 <= n < steps``) looks at ``T**n x0``; a visit means
    ``||T**n x0 - center|| <= radius``.  Checkpoints are step indices; the
    running frequency at checkpoint ``n`` is ``visits(0..n) / (n + 1)``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if x0.grid != T.grid:
        raise ShapeError("initial vector lives on a different grid")
    targets = list(targets)
    for center, radius in targets:
        if center.grid != T.grid:
            raise ShapeError("target center lives on a different grid")
        if radius <= 0:
            raise ValueError("target radii must be positive")
    checkpoints = _default_checkpoints(steps) if checkpoints is None else np.asarray(sorted(set(checkpoints)), dtype=np.int64)
    if len(checkpoints) and (checkpoints[0] < 0 or checkpoints[-1] >= steps):
        raise GridRangeError("checkpoints must lie in [0, steps)")

    centers = np.stack([c.coeff for c, _ in targets]) if targets else np.zeros((0,) + T.grid.shape, dtype=complex)
    radii = np.array([r for _, r in targets], dtype=float)
    counts = np.zeros(len(targets), dtype=np.int64)
    visits = np.zeros((len(targets), len(checkpoints)), dtype=np.int64)
    first = [None] * len(targets)
    norms = np.empty(steps)
    c = np.array(x0.coeff)
    nxt = 0
    for n in range(steps):
        dist = np.sqrt(np.sum(np.abs(centers - c) ** 2, axis=(1, 2)))
        hit = dist <= radii
        counts += hit
        for t in np.flatnonzero(hit):
            if first[t] is None:
                first[t] = n
        norms[n] = np.linalg.norm(c)
        if nxt < len(checkpoints) and checkpoints[nxt] == n:
            visits[:, nxt] = counts
            nxt += 1
        if n + 1 < steps:
            c = apply_coeffs(T.mu, T.w.w, c)
            if not np.all(np.abs(c) <= OVERFLOW):
                raise NumericRangeError(f"orbit left the representable range at step {n + 1}")
    freq = visits / (checkpoints[None, :] + 1.0) if len(checkpoints) else visits.astype(float)
    return OrbitStats(
        steps=steps,
        targets=targets,
        checkpoints=checkpoints,
        visits=visits,
        running_frequency=freq,
        norm_max=float(norms.max()),
        norm_final=float(norms[-1]),
        log_norm_slope=log_norm_slope(norms),
        first_visit=first,
    )


def log_norm_slope(norms) -> float:
    """Least-squares slope of ``log ||T**n x||`` against ``n``."""
    norms = np.asarray(norms, dtype=float)
    if len(norms) < 2 or np.any(norms <= 0):
        return float("nan")
    n = np.arange(len(norms), dtype=float)
    return float(np.polyfit(n, np.log(norms), 1)[0])


def lower_density_estimate(stats: OrbitStats, target: int, burn_in: float = DEFAULT_BURN_IN) -> float:
    """Min running frequency over checkpoints at or after ``burn_in * steps``."""
    if len(stats.checkpoints) < 2:
        raise GridRangeError("need at least two checkpoints")
    keep = stats.checkpoints >= burn_in * stats.steps
    if not np.any(keep):
        raise GridRangeError("no checkpoints after burn-in")
    return float(stats.running_frequency[target, keep].min())


def export_orbit_csv(stats: OrbitStats, path, header=None):
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        writer = csv.writer(fh)
        writer.writerow(["step", "target_id", "visited", "running_frequency"])
        for t in range(stats.visits.shape[0]):
            for j, step in enumerate(stats.checkpoints):
                writer.writerow([int(step), t, int(stats.visits[t, j]), repr(float(stats.running_frequency[t, j]))])


def eigen_combination(T: OperatorSpec, seq: EigenSequence, picks) -> CVec:
    """``sum coefficient * E_i(mu_{N'})`` for picks ``(i, N', coefficient)``."""
    coeff = np.zeros(T.grid.shape, dtype=complex)
    for i, level, a in picks:
        if not 0 <= level < T.grid.levels:
            raise GridRangeError(f"eigenvalue index {level} outside grid")
        field_ = EigenField.from_operator(T, seq, i)
        coeff[i] += a * coefficients(field_, T.mu[level])
    return CVec(T.grid, coeff)


def make_periodic_point(T: OperatorSpec, seq: EigenSequence, picks):
    """Periodic vector from root-of-unity eigenvectors.

    Returns ``(x, M)`` where ``M`` is the lcm of the orders of the picked
    eigenvalues, so ``T**M x = x`` on the truncation.
    """
    if seq.mode != ROOTS_OF_UNITY:
        raise UnsupportedModeError("unsupported-mode: periodic points need a roots_of_unity sequence")
    picks = list(picks)
    for _, level, _ in picks:
        if not 0 <= level <= T.grid.levels - 2:
            raise GridRangeError(f"eigenvalue index {level} must be <= N-2 = {T.grid.levels - 2}")
    x = eigen_combination(T, seq, picks)
    period = reduce(math.lcm, (seq.orders[level] for _, level, _ in picks), 1)
    return x, period


def period_defect(T: OperatorSpec, x: CVec, period: int) -> float:
    """``||T**period x - x||`` via literal applications."""
    return norm(power_apply(T, x, period) - x)


@dataclass
class CoverageReport:
    N: int
    min_abs_diag: float
    tol: float
    passed: bool
    mode_note: str = (
        "truncated root-of-unity operators are exactly periodic; "
        "this is a finite-dimensional witness, not the infinite-dimensional dynamics"
    )

    def to_dict(self):
        return {"N": self.N, "min_abs_diag": self.min_abs_diag, "tol": self.tol, "passed": self.passed, "note": self.mode_note}


def density_of_periodic_directions(seq: EigenSequence, w, N: int, tol: float = 0.0, i: int = 0) -> CoverageReport:
    """Every truncated basis vector is a combination of periodic eigenvectors
    iff the spanning matrix on root-of-unity eigenvalues is invertible."""
    if seq.mode != ROOTS_OF_UNITY:
        raise UnsupportedModeError("unsupported-mode: needs a roots_of_unity sequence")
    _, d = spanning_matrix(seq, w, i, N)
    return CoverageReport(N, d, tol, bool(d > tol))
