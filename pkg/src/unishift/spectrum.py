"""Dyadic arc-shrinking construction of the unimodular diagonal.

The diagonal ``mu_0, mu_1, ...`` is built block by block over the dyadic
intervals ``J_k = {2**(k-1), ..., 2**k - 1}``.  Each new value of block ``k``
is placed on the parent arc that ends at ``mu_j`` (``j = n - 2**(k-1)``), close
enough to ``mu_j`` that the weighted constraint

    l_k**2 * sum_{n in J_{k+1}} prod_{p<n} w[i, p]**-2 < 2**-(k+2),   i <= k

holds.  The arcs ``Gamma_n`` joining ``mu_j`` and ``mu_n`` are nested, and
their nested intersection is the Cantor set carrying the point spectrum.

Angles are stored unwrapped (all values lie within a chord of 1 from
``mu_0 = 1``, so no branch cut is ever crossed).  In ``roots_of_unity`` mode
angles are exact rationals in turns, so every ``mu_p`` is an exact root of
unity of recorded order.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .exceptions import GridRangeError, NumericRangeError
from .hilbert import WeightFamily

GENERIC = "generic"
ROOTS_OF_UNITY = "roots_of_unity"
MODES = (GENERIC, ROOTS_OF_UNITY)

SAFETY_FACTOR = 0.5
# |mu_0 - mu_1| < 1 is required; keep a margin below it.
FIRST_CHORD_CAP = 0.9
# children of one parent arc each take less than a third of it
CHILD_FRACTION = 1.0 / 3.0
ARC_SLACK = 1e-12
POWER_ULPS = 8
# smallest rotation (radians) that still moves a unit complex double reliably
MIN_ANGLE = 64 * np.finfo(float).eps


def j_block(k: int) -> range:
    """Dyadic block ``J_k`` as a ``range``: ``{0}`` for ``k=0``, else ``[2**(k-1), 2**k)``."""
    if k < 0:
        raise ValueError("block index must be nonnegative")
    if k == 0:
        return range(0, 1)
    return range(2 ** (k - 1), 2**k)


def block_of(n: int) -> int:
    """Inverse of :func:`j_block`: the ``k`` with ``n in J_k``."""
    return 0 if n == 0 else int(n).bit_length()


def required_weight_shape(depth: int):
    """Weight table needed by the constraint sums up to step ``depth``."""
    return depth + 1, 2 ** (depth + 1)


def constraint_sums(k: int, w: WeightFamily, i_max: int) -> np.ndarray:
    """``S_i = sum_{n in J_{k+1}} prod_{p<n} w[i, p]**-2`` for ``i = 0..i_max``."""
    block = j_block(k + 1)
    if not w.covers(i_max + 1, block.stop - 1):
        raise GridRangeError(
            f"weight table {w.shape} too small for step {k} (needs {(i_max + 1, block.stop - 1)})"
        )
    # cumulative log-products avoid overflow for small weights
    logw = np.log(w.w[: i_max + 1, : block.stop - 1])
    cum = np.concatenate([np.zeros((i_max + 1, 1)), np.cumsum(-2.0 * logw, axis=1)], axis=1)
    return np.exp(cum[:, block.start : block.stop]).sum(axis=1)


def max_step_length(k: int, w: WeightFamily, i_max: int) -> float:
    """Largest admissible ``l_k`` for the step-``k`` constraint, times the safety factor."""
    if k < 1:
        raise ValueError("step index must be >= 1")
    s = constraint_sums(k, w, i_max)
    raw = np.sqrt(2.0 ** -(k + 2) / s).min()
    return float(SAFETY_FACTOR * raw)


@dataclass(frozen=True)
class Arc:
    """Short closed arc of the unit circle between two unimodular endpoints."""

    endpoint_a: complex
    endpoint_b: complex

    @property
    def chord_length(self) -> float:
        return abs(self.endpoint_a - self.endpoint_b)

    @property
    def angle(self) -> float:
        return abs(np.angle(self.endpoint_b / self.endpoint_a))

    def midpoint(self) -> complex:
        s = self.endpoint_a + self.endpoint_b
        return s / abs(s)

    def contains(self, z, slack=ARC_SLACK) -> bool:
        a, b = self.endpoint_a, self.endpoint_b
        span = abs(np.angle(b / a))
        return abs(np.angle(z / a)) + abs(np.angle(b / z)) <= span + slack

    def contains_arc(self, other: "Arc", slack=ARC_SLACK) -> bool:
        return self.contains(other.endpoint_a, slack) and self.contains(other.endpoint_b, slack)


def _parent(n: int):
    """For ``n in J_k`` (k >= 1): ``(j, q, other)`` where ``j = n - 2**(k-1)``,
    ``q`` is the depth-(k-1) arc having ``mu_j`` as endpoint, and ``other`` is
    the index of that arc's opposite endpoint (``None`` for ``k = 1``)."""
    k = block_of(n)
    j = n - 2 ** (k - 1)
    if k == 1:
        return j, None, None
    half = 2 ** (k - 2)
    if j >= half:
        return j, j, j - half
    return j, j + half, j + half


def arc_children(q: int):
    """Child arcs of ``Gamma_q`` at the next depth.

    ``Gamma_q`` (``q in J_k``) joins ``mu_q`` and ``mu_{q - 2**(k-1)}``; each
    endpoint ``mu_j`` spawns ``Gamma_{2**k + j}``.
    """
    k = block_of(q)
    if k == 0:
        return (1,)
    lo = q - 2 ** (k - 1)
    return (2**k + lo, 2**k + q)


@dataclass(frozen=True)
class EigenSequence:
    """Constructed diagonal ``mu``, arcs, realized step lengths and metadata.

    ``lk[0]`` is 0 (the degenerate root "arc" ``{mu_0}``); ``lk[k]`` for
    ``k >= 1`` is the realized ``max_j |mu_{2**(k-1)+j} - mu_j|``.
    ``arcs[0]`` is the degenerate arc at ``mu_0``; ``arcs[n]`` for ``n >= 1``
    is ``Gamma_n``.  ``turns`` holds exact angles (in turns) for
    ``roots_of_unity`` mode and is empty otherwise.
    """

    mu: np.ndarray
    lk: tuple
    depth: int
    mode: str
    seed: int
    orders: tuple = ()
    turns: tuple = ()
    base_order: int = 1
    min_separation: float = field(default=float("nan"))

    def __post_init__(self):
        self.mu.setflags(write=False)

    def __len__(self):
        return len(self.mu)

    @property
    def arcs(self):
        arcs = [Arc(complex(self.mu[0]), complex(self.mu[0]))]
        for n in range(1, len(self.mu)):
            j, _, _ = _parent(n)
            arcs.append(Arc(complex(self.mu[j]), complex(self.mu[n])))
        return arcs

    def cantor_approx(self, depth: int) -> "CantorApprox":
        if not 0 <= depth <= self.depth:
            raise GridRangeError(f"depth {depth} outside 0..{self.depth}")
        arcs = self.arcs
        return CantorApprox(depth, tuple(arcs[n] for n in j_block(depth)))

    def replace(self, **changes) -> "EigenSequence":
        data = dict(
            mu=np.array(self.mu),
            lk=self.lk,
            depth=self.depth,
            mode=self.mode,
            seed=self.seed,
            orders=self.orders,
            turns=self.turns,
            base_order=self.base_order,
            min_separation=self.min_separation,
        )
        data.update(changes)
        data["mu"] = np.array(data["mu"], dtype=complex)
        return EigenSequence(**data)

    # serialization ---------------------------------------------------------

    def to_dict(self):
        arcs = self.arcs
        return {
            "mode": self.mode,
            "seed": int(self.seed),
            "depth": int(self.depth),
            "base_order": int(self.base_order),
            "mu": [[float(z.real), float(z.imag)] for z in self.mu],
            "lk": [float(v) for v in self.lk],
            "arcs": [
                {
                    "index": n,
                    "a": [float(a.endpoint_a.real), float(a.endpoint_a.imag)],
                    "b": [float(a.endpoint_b.real), float(a.endpoint_b.imag)],
                    "chord": float(a.chord_length),
                }
                for n, a in enumerate(arcs)
            ],
            "orders": [int(m) for m in self.orders],
            "turns": [[t.numerator, t.denominator] for t in self.turns],
            "min_separation": float(self.min_separation),
        }

    @classmethod
    def from_dict(cls, data) -> "EigenSequence":
        mu = np.array([complex(re, im) for re, im in data["mu"]], dtype=complex)
        return cls(
            mu=mu,
            lk=tuple(float(v) for v in data["lk"]),
            depth=int(data["depth"]),
            mode=data["mode"],
            seed=int(data["seed"]),
            orders=tuple(int(m) for m in data.get("orders", ())),
            turns=tuple(Fraction(a, b) for a, b in data.get("turns", ())),
            base_order=int(data.get("base_order", 1)),
            min_separation=float(data.get("min_separation", float("nan"))),
        )

    def to_json(self, header=None) -> str:
        doc = {"header": header} if header is not None else {}
        doc.update(self.to_dict())
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text) -> "EigenSequence":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class CantorApprox:
    """The union of arcs ``{Gamma_j : j in J_depth}`` approximating ``K``."""

    depth: int
    arcs_at_depth: tuple

    def contains(self, z, slack=ARC_SLACK) -> bool:
        return any(a.contains(z, slack) for a in self.arcs_at_depth)

    def refines(self, coarser: "CantorApprox", slack=ARC_SLACK) -> bool:
        return all(any(c.contains_arc(a, slack) for c in coarser.arcs_at_depth) for a in self.arcs_at_depth)


def _unit(angle):
    return complex(math.cos(angle), math.sin(angle))


def _turns_to_unit(t: Fraction) -> complex:
    t = t - math.floor(t)
    return _unit(2.0 * math.pi * float(t))


def build_sequence(w: WeightFamily, depth: int, mode: str = GENERIC, seed: int = 0, base_order: int = 1) -> EigenSequence:
    """Construct ``mu_0 .. mu_{2**depth - 1}`` block by block.

    For ``n in J_k`` with ``j = n - 2**(k-1)`` the new value is
    ``mu_j * exp(i s theta)`` where ``s`` points into the parent arc and
    ``theta`` is drawn from ``[theta_max/2, theta_max)``.  ``theta_max`` keeps
    the chord below ``max_step_length(k, w, k)`` and below a third of the
    parent arc, so sibling arcs never touch and realized lengths strictly
    decrease.  In ``roots_of_unity`` mode ``theta`` is snapped to the nearest
    multiple of ``2 pi / M`` with ``M = base_order * 2**r`` the smallest order
    whose snapped step is nonzero and still below ``theta_max``.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if base_order < 1:
        raise ValueError("base_order must be a positive integer")
    need = required_weight_shape(depth)
    if not w.covers(*need):
        raise GridRangeError(f"weight table {w.shape} does not cover {need} needed for depth {depth}")

    rng = np.random.default_rng(seed)
    exact = mode == ROOTS_OF_UNITY
    size = 2**depth
    angles = np.zeros(size)
    turns = [Fraction(0)] * size if exact else []
    mu = np.empty(size, dtype=complex)
    mu[0] = 1.0
    lk = [0.0]

    for k in range(1, depth + 1):
        target = max_step_length(k, w, k)
        if k == 1:
            target = min(target, FIRST_CHORD_CAP)
        chord_angle = 2.0 * math.asin(min(target, 2.0) / 2.0)
        if not chord_angle >= MIN_ANGLE:
            raise NumericRangeError(
                f"step {k}: admissible step length {target:.3e} is below double-precision resolution "
                f"(weights too small for depth {depth})"
            )
        block = j_block(k)
        draws = 0.5 + 0.5 * rng.random(len(block))
        realized = 0.0
        for n, u in zip(block, draws):
            j, _, other = _parent(n)
            if other is None:
                direction, span_cap = 1.0, chord_angle
            else:
                gap = angles[other] - angles[j]
                direction = math.copysign(1.0, gap)
                span_cap = min(chord_angle, CHILD_FRACTION * abs(gap))
            theta = u * span_cap
            while True:
                if exact:
                    step = _snap_turns(theta, span_cap, base_order)
                    t_new = turns[j] + int(direction) * step
                    angle = float(2.0 * math.pi * t_new)
                    z = _turns_to_unit(t_new)
                else:
                    angle = angles[j] + direction * theta
                    z = _unit(angle)
                if n == 1 or np.min(np.abs(mu[:n] - z)) > 0.0:
                    break
                theta *= 0.5
                if theta < MIN_ANGLE:
                    raise NumericRangeError(f"step {k}: cannot place mu_{n} distinct from earlier values")
            angles[n] = angle
            mu[n] = z
            if exact:
                turns[n] = t_new
            realized = max(realized, abs(z - mu[j]))
        lk.append(float(realized))

    order = np.sort(angles)
    min_sep = float(np.min(np.abs(np.diff(np.exp(1j * order))))) if size > 1 else float("inf")
    orders = tuple(_order(t) for t in turns) if exact else ()
    return EigenSequence(
        mu=mu,
        lk=tuple(lk),
        depth=depth,
        mode=mode,
        seed=int(seed),
        orders=orders,
        turns=tuple(turns),
        base_order=int(base_order),
        min_separation=min_sep,
    )


def _snap_turns(theta: float, limit: float, base_order: int) -> Fraction:
    """Nearest multiple of ``1/M`` turns to ``theta`` radians, for the smallest
    ``M = base_order * 2**r`` whose snapped step is nonzero and below ``limit``."""
    frac_turn = theta / (2.0 * math.pi)
    m = base_order
    while True:
        a = round(m * frac_turn)
        if a >= 1 and 2.0 * math.pi * a / m < limit:
            return Fraction(a, m)
        m *= 2


def _int_power(z: complex, m: int) -> complex:
    """``z**m`` by repeated squaring."""
    result = 1.0 + 0.0j
    while m:
        if m & 1:
            result *= z
        z *= z
        m >>= 1
    return result


def _order(t: Fraction) -> int:
    return (t - math.floor(t)).denominator


@dataclass
class Check:
    name: str
    passed: bool
    margin: float = float("nan")
    detail: str = ""


@dataclass
class ConstraintReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def to_dict(self):
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "margin": _json_float(c.margin), "detail": c.detail}
                for c in self.checks
            ],
        }


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else None


def verify_constraints(seq: EigenSequence, w: WeightFamily) -> ConstraintReport:
    """Recompute every construction invariant from the stored sequence.

    Never raises on a violated check; failures are marked in the report.
    ``margin`` is ``bound / value`` for inequalities (> 1 means satisfied).
    """
    mu = np.asarray(seq.mu)
    checks = []
    dev = float(np.max(np.abs(np.abs(mu) - 1.0)))
    checks.append(Check("unit_modulus", dev <= 1e-12, 1e-12 / dev if dev else math.inf, f"max ||mu|-1| = {dev:.3e}"))
    checks.append(Check("mu0_is_one", mu[0] == 1.0, detail=f"mu_0 = {mu[0]!r}"))

    order = np.argsort(np.angle(mu))
    sep = float(np.min(np.abs(np.diff(mu[order])))) if len(mu) > 1 else math.inf
    checks.append(Check("distinct", sep > 0.0, sep, f"min separation {sep:.3e}"))

    if len(mu) > 1:
        first = abs(mu[1] - mu[0])
        checks.append(Check("first_chord_below_one", first < 1.0, 1.0 / first if first else math.inf, f"|mu_0-mu_1| = {first:.6g}"))

    for k in range(1, seq.depth + 1):
        block = j_block(k)
        realized = float(np.max(np.abs(mu[block.start : block.stop] - mu[: len(block)])))
        stored = seq.lk[k]
        checks.append(
            Check(f"lk_realized[{k}]", abs(realized - stored) <= 1e-14, detail=f"stored {stored:.17g}, realized {realized:.17g}")
        )
        bound = 2.0 ** -(k + 2)
        try:
            sums = constraint_sums(k, w, k)
        except GridRangeError as exc:
            checks.append(Check(f"step[{k}]", False, detail=str(exc)))
            continue
        for i, s in enumerate(sums):
            lhs = stored**2 * s
            checks.append(Check(f"step[{k}] i={i}", lhs < bound, bound / lhs if lhs else math.inf, f"{lhs:.3e} < {bound:.3e}"))
        if k >= 2:
            checks.append(
                Check(f"decreasing[{k}]", stored < seq.lk[k - 1], seq.lk[k - 1] / stored if stored else math.inf)
            )

    arcs = seq.arcs
    for k in range(2, seq.depth + 1):
        parents = [arcs[q] for q in j_block(k - 1)]
        ok_points = all(any(a.contains(mu[n]) for a in parents) for n in j_block(k))
        ok_arcs = all(any(a.contains_arc(arcs[n]) for a in parents) for n in j_block(k))
        checks.append(Check(f"nesting[{k}]", ok_points and ok_arcs, detail="points and arcs inside depth-%d arcs" % (k - 1)))

    if seq.mode == ROOTS_OF_UNITY:
        if len(seq.orders) != len(mu) or len(seq.turns) != len(mu):
            checks.append(Check("orders_recorded", False, detail="orders or exact angles missing"))
        else:
            exact_ok = all((t * m).denominator == 1 for t, m in zip(seq.turns, seq.orders))
            rounding = max(abs(complex(z) - _turns_to_unit(t)) for z, t in zip(mu, seq.turns))
            checks.append(
                Check("roots_exact", exact_ok and rounding <= 1e-15, detail=f"max |mu - exp(2 pi i t)| = {rounding:.3e}")
            )
            # the stored double carries ~1 ulp of phase error, which mu**M
            # amplifies M-fold; the tolerance is 1e-10 or that floor
            worst = 0.0
            for z, m in zip(mu, seq.orders):
                tol = max(1e-10, POWER_ULPS * m * np.finfo(float).eps)
                worst = max(worst, abs(_int_power(complex(z), m) - 1.0) / tol)
            checks.append(Check("roots_of_unity", worst <= 1.0, 1.0 / worst if worst else math.inf, f"worst defect/tolerance = {worst:.3e}"))
    return ConstraintReport(checks)


def _descend(seq: EigenSequence, depth: int, rng, size, start=None):
    """Arc indices reached after random descent to ``depth``."""
    if start is None:
        idx = np.zeros(size, dtype=np.int64)
        level = 0
    else:
        idx = np.full(size, start[0], dtype=np.int64)
        level = start[1]
    for k in range(level + 1, depth + 1):
        if k == 1:
            idx[:] = 1
            continue
        # Gamma_q (q in J_{k-1}) has children 2**(k-1) + (q - 2**(k-2)) and 2**(k-1) + q
        pick = rng.integers(0, 2, size=size)
        lo = idx - 2 ** (k - 2)
        idx = 2 ** (k - 1) + np.where(pick == 0, lo, idx)
    return idx


def _midpoints(seq, idx):
    mu = np.asarray(seq.mu)
    a = mu[[_parent(int(n))[0] if n else 0 for n in idx]]
    b = mu[idx]
    s = a + b
    return s / np.abs(s)


def sample_K(seq: EigenSequence, depth: int, seed=None, size=None):
    """Midpoint of a uniformly random depth-``depth`` arc of the nested tree.

    Returns a complex scalar, or an array when ``size`` is given.
    """
    if not 0 <= depth <= seq.depth:
        raise GridRangeError(f"sample depth {depth} exceeds construction depth {seq.depth}")
    rng = np.random.default_rng(seed)
    count = 1 if size is None else int(size)
    if depth == 0:
        out = np.full(count, complex(seq.mu[0]))
    else:
        out = _midpoints(seq, _descend(seq, depth, rng, count))
    return complex(out[0]) if size is None else out


def sample_K_pairs(seq: EigenSequence, shared_depth: int, depth: int, seed=None, size=1):
    """Pairs of points sharing their first ``shared_depth`` descent steps.

    Both points lie in one arc of depth ``shared_depth``, so their distance is
    at most ``lk[shared_depth]``.
    """
    if not 0 <= shared_depth <= depth <= seq.depth:
        raise GridRangeError("need 0 <= shared_depth <= depth <= construction depth")
    rng = np.random.default_rng(seed)
    if shared_depth == 0:
        first = _descend(seq, depth, rng, size)
        second = _descend(seq, depth, rng, size)
    else:
        common = _descend(seq, shared_depth, rng, size)
        first = np.array([_descend(seq, depth, rng, 1, (q, shared_depth))[0] for q in common])
        second = np.array([_descend(seq, depth, rng, 1, (q, shared_depth))[0] for q in common])
    if depth == 0:
        one = np.full(size, complex(seq.mu[0]))
        return one, one.copy()
    return _midpoints(seq, first), _midpoints(seq, second)
