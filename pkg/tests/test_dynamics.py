import math

import numpy as np
import pytest

from unishift.dynamics import (
    OrbitStats,
    density_of_periodic_directions,
    eigen_combination,
    export_orbit_csv,
    log_norm_slope,
    lower_density_estimate,
    make_periodic_point,
    period_defect,
    run_orbit,
)
from unishift.exceptions import GridRangeError, ShapeError, UnsupportedModeError
from unishift.hilbert import CVec, Grid, WeightFamily, basis_vector, norm
from unishift.operator import OperatorSpec, apply
from unishift.spectrum import ROOTS_OF_UNITY, build_sequence, required_weight_shape


def make(mode="generic", value=1.0, depth=4, modes=2, levels=16):
    w = WeightFamily.constant(value, *required_weight_shape(depth))
    seq = build_sequence(w, depth, mode, seed=0)
    return w, seq, OperatorSpec.from_sequence(seq, w, Grid(modes, levels))


def test_fixed_point_visits_every_step():
    _, _, T = make()
    e = basis_vector(T.grid, 0, 0)
    stats = run_orbit(T, e, 500, [(e, 0.1)])
    assert np.all(stats.running_frequency == 1.0)
    assert lower_density_estimate(stats, 0) == 1.0


def test_far_target_never_visited():
    _, seq, T = make()
    x0 = eigen_combination(T, seq, [(0, n, 0.5**n) for n in range(15)])
    probe = run_orbit(T, x0, 2000, [])
    c = probe.norm_max
    center = CVec(T.grid, np.zeros(T.grid.shape)) + (norm(x0) * c + 10) * basis_vector(T.grid, 1, 3)
    stats = run_orbit(T, x0, 2000, [(center, 0.1)])
    assert np.all(stats.visits == 0)
    assert lower_density_estimate(stats, 0) == 0.0
    assert stats.norm_max == pytest.approx(c)


def _stats_from_hits(hits, checkpoints):
    counts = np.cumsum(hits)
    cp = np.asarray(checkpoints)
    visits = counts[cp][None, :]
    return OrbitStats(len(hits), [None], cp, visits, visits / (cp[None, :] + 1.0), 1.0, 1.0)


def test_lower_density_synthetic():
    steps = 10_000
    cps = np.arange(99, steps, 100)
    assert lower_density_estimate(_stats_from_hits(np.ones(steps, int), cps), 0) == 1.0
    assert lower_density_estimate(_stats_from_hits(np.zeros(steps, int), cps), 0) == 0.0
    even = (np.arange(steps) % 2 == 0).astype(int)
    assert abs(lower_density_estimate(_stats_from_hits(even, cps), 0) - 0.5) <= 1 / 100


def test_on_orbit_targets_are_recurrent():
    _, seq, T = make()
    x0 = eigen_combination(T, seq, [(i, n, 0.5**n) for i in range(2) for n in range(15)])
    target = x0
    for _ in range(37):
        target = apply(T, target)
    stats = run_orbit(T, x0, 20_000, [(target, 0.05)])
    assert stats.first_visit[0] is not None and stats.first_visit[0] <= 37
    assert lower_density_estimate(stats, 0) > 0
    assert abs(stats.log_norm_slope) < 1e-6


def test_log_norm_slope_oracle():
    assert log_norm_slope(2.0 ** np.arange(50)) == pytest.approx(math.log(2.0))
    assert math.isnan(log_norm_slope([1.0]))


def test_run_orbit_validation():
    _, _, T = make()
    e = basis_vector(T.grid, 0, 0)
    with pytest.raises(ValueError):
        run_orbit(T, e, 0, [])
    with pytest.raises(ShapeError):
        run_orbit(T, basis_vector(Grid(1, 4), 0, 0), 10, [])
    with pytest.raises(ValueError):
        run_orbit(T, e, 10, [(e, 0.0)])
    with pytest.raises(GridRangeError):
        run_orbit(T, e, 10, [], checkpoints=[10])


def test_periodic_fixed_point():
    _, seq, T = make(ROOTS_OF_UNITY, 3.0)
    x, m = make_periodic_point(T, seq, [(0, 0, 1.0)])
    assert m == 1 and x == basis_vector(T.grid, 0, 0)
    assert period_defect(T, x, 1) == 0


def test_periodic_order_eight():
    _, seq, T = make(ROOTS_OF_UNITY, 3.0)
    assert seq.orders[1] == 8
    x, m = make_periodic_point(T, seq, [(0, 1, 1.0)])
    assert m == 8
    y = x
    for _ in range(8):
        y = apply(T, y)
    assert norm(y - x) < 1e-10
    assert period_defect(T, x, 8) == pytest.approx(norm(y - x))


def test_period_is_lcm_of_orders():
    _, seq, T = make(ROOTS_OF_UNITY, 3.0)
    fake = seq.replace(orders=(1, 4, 6) + seq.orders[3:])
    _, m = make_periodic_point(T, fake, [(0, 1, 1.0), (1, 2, 1.0)])
    assert m == 12


def test_periodic_mode_gate_and_ranges():
    _, seq, T = make()
    with pytest.raises(UnsupportedModeError, match="unsupported-mode"):
        make_periodic_point(T, seq, [(0, 1, 1.0)])
    _, rseq, RT = make(ROOTS_OF_UNITY, 3.0)
    with pytest.raises(GridRangeError):
        make_periodic_point(RT, rseq, [(0, RT.grid.levels - 1, 1.0)])


def test_periodic_directions():
    w, seq, T = make(ROOTS_OF_UNITY, 3.0)
    rep = density_of_periodic_directions(seq, w, 16)
    mu = seq.mu
    oracle = min(np.prod([abs(mu[j] - mu[p]) / 3.0 for p in range(j)]) for j in range(16))
    assert rep.passed and rep.min_abs_diag == pytest.approx(oracle, rel=1e-12)
    assert density_of_periodic_directions(seq, w, 1).passed
    dup = seq.replace(mu=np.where(np.arange(len(mu)) == 4, mu[1], mu))
    assert not density_of_periodic_directions(dup, w, 16).passed
    _, gseq, _ = make()
    with pytest.raises(UnsupportedModeError):
        density_of_periodic_directions(gseq, w, 16)


def test_orbit_csv(tmp_path):
    _, _, T = make()
    e = basis_vector(T.grid, 0, 0)
    stats = run_orbit(T, e, 100, [(e, 0.1)], checkpoints=[9, 49, 99])
    p = tmp_path / "o.csv"
    export_orbit_csv(stats, p, header="h")
    lines = p.read_text().splitlines()
    assert lines[0] == "# h" and lines[1] == "step,target_id,visited,running_frequency"
    assert lines[2] == "9,0,10,1.0"


def test_periodic_defect_scales_linearly():
    # perturb one coefficient off the exact eigenvector and double the perturbation
    _, seq, T = make(ROOTS_OF_UNITY, 3.0)
    x, m = make_periodic_point(T, seq, [(0, 1, 1.0), (1, 1, 1.0)])
    bump = 1e-3 * basis_vector(T.grid, 0, 5)
    d1 = period_defect(T, x + bump, m) - period_defect(T, x, m)
    d2 = period_defect(T, x + 2 * bump, m) - period_defect(T, x, m)
    assert d2 == pytest.approx(2 * d1, rel=1e-10, abs=1e-12)
