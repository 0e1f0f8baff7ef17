import math

import numpy as np
import pytest

from unishift.gaussian import (
    KS_FACTOR,
    GaussianSpec,
    birkhoff_test,
    covariance,
    cross_covariance,
    deterministic_budget,
    eigen_stack,
    invariance_test,
    ks_marginals,
    ks_threshold,
    sample,
    touched_block_min_eigenvalue,
    trace_cov,
)
from unishift.hilbert import Grid, WeightFamily
from unishift.operator import OperatorSpec
from unishift.spectrum import build_sequence, required_weight_shape


@pytest.fixture(scope="module")
def ctx():
    w = WeightFamily.constant(1.0, *required_weight_shape(4))
    seq = build_sequence(w, 4, seed=0)
    return seq, OperatorSpec.from_sequence(seq, w, Grid(2, 16))


def test_empty_spec_gives_zero(ctx):
    seq, T = ctx
    x = sample(GaussianSpec(()), T, seq, 0, size=5)
    assert x.shape == (5, 2, 16) and np.all(x == 0)


def test_single_fixed_term_is_standard_complex_gaussian(ctx):
    seq, T = ctx
    spec = GaussianSpec(((0, seq.mu[0], 1.0),))
    x = sample(spec, T, seq, 1, size=10_000)
    c = x[:, 0, 0]
    assert np.mean(np.abs(c) ** 2) == pytest.approx(1.0, abs=0.05)
    assert np.count_nonzero(x[:, 1:, :]) == 0 and np.count_nonzero(x[:, 0, 1:]) == 0


def test_mean_is_near_zero(ctx):
    seq, T = ctx
    spec = GaussianSpec.exact(T, 8)
    x = sample(spec, T, seq, 2, size=10_000)
    assert np.linalg.norm(x.mean(axis=0)) < 0.05 * math.sqrt(trace_cov(spec, T, seq))


def test_exact_spec_invariance_two_seeds(ctx):
    seq, T = ctx
    spec = GaussianSpec.exact(T, 8)
    assert deterministic_budget(spec, T, seq) == 0
    reps = [invariance_test(spec, T, seq, 10_000, seed=s) for s in (1, 2)]
    assert all(r.covariance_distance < r.statistical_budget for r in reps)


def test_fixed_direction_invariance(ctx):
    seq, T = ctx
    spec = GaussianSpec(((0, seq.mu[0], 1.0),))
    rep = invariance_test(spec, T, seq, 2000, seed=0)
    assert rep.covariance_distance < 1e-12


def test_far_eigenvalue_flags_deterministic_term(ctx):
    seq, T = ctx
    spec = GaussianSpec(((0, 1.2j, 1.0),) + GaussianSpec.exact(T, 3).terms)
    rep = invariance_test(spec, T, seq, 2000, seed=0)
    assert rep.deterministic_dominates


def test_covariance_oracle(ctx):
    seq, T = ctx
    spec = GaussianSpec.exact(T, 4)
    e = eigen_stack(spec, T, seq).reshape(4, -1)
    a = np.array([t[2] for t in spec.terms])
    exact = (e.T * a**2) @ e.conj()
    emp = covariance(sample(spec, T, seq, 3, size=20_000))
    assert np.linalg.norm(emp - exact) < 5 * np.trace(exact).real / math.sqrt(20_000)


def test_ks_marginals(ctx):
    seq, T = ctx
    rows, thr = ks_marginals(GaussianSpec.exact(T, 8), T, seq, 5000, seed=4)
    assert thr == pytest.approx(KS_FACTOR / math.sqrt(5000))
    assert max(max(r[2], r[3]) for r in rows) <= ks_threshold(5000, 2 * len(rows))


def test_ks_threshold_bonferroni():
    assert ks_threshold(100, 1) == pytest.approx(KS_FACTOR / 10)
    assert ks_threshold(100, 50) > ks_threshold(100, 1)


def test_independent_streams_and_nondegeneracy(ctx):
    seq, T = ctx
    spec = GaussianSpec.exact(T, 8)
    cross, budget = cross_covariance(spec, T, seq, 10_000, 5, 6)
    assert cross < budget
    assert touched_block_min_eigenvalue(spec, T, seq, 10_000, seed=7) > 0


def test_birkhoff_degenerate_fixed_direction(ctx):
    seq, T = ctx
    spec = GaussianSpec(((0, seq.mu[0], 1.0),))
    rep = birkhoff_test(spec, T, seq, ("re", 0, 0), 50, 400, seed=0)
    x = sample(spec, T, seq, 0, size=400)
    assert np.allclose(rep.time_averages, x[:, 0, 0].real, atol=1e-12)
    assert rep.dispersion == pytest.approx(rep.ensemble_std)
    assert not rep.consistent_with_ergodic and "FAILS" in rep.verdict


def test_birkhoff_length_one_is_plain_monte_carlo(ctx):
    seq, T = ctx
    rep = birkhoff_test(GaussianSpec.exact(T, 6), T, seq, ("abs2", 0, 0), 1, 500, seed=1)
    assert rep.gap <= 1e-12 * (1 + rep.ensemble_std)


def _rotation_average(z, lam, L):
    """Oracle: (1/L) sum_l |sum_j z_j lam_j^l|^2 via closed-form geometric sums."""
    ratio = lam[:, None] * np.conj(lam)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        geo = np.where(np.abs(ratio - 1) < 1e-15, L, (1 - ratio**L) / (1 - ratio)) / L
    return np.real(np.einsum("sj,sk,jk->s", z, np.conj(z), geo))


def test_birkhoff_rotation_oracle(ctx):
    seq, T = ctx
    levels = [1, 3, 6, 9]
    spec = GaussianSpec(tuple((0, seq.mu[n], 0.5**j) for j, n in enumerate(levels)))
    L, M = 10_000, 64
    rep = birkhoff_test(spec, T, seq, ("abs2", 0, 0), L, M, seed=2)
    x = sample(spec, T, seq, 2, size=M)
    # recover z_j = a_j g_j from the mode-0 coefficients (columns are independent)
    e = eigen_stack(spec, T, seq)[:, 0, :].T
    z = np.linalg.lstsq(e, x[:, 0, :].T, rcond=None)[0].T
    lam = np.array([t[1] for t in spec.terms])
    oracle = _rotation_average(z, lam, L)
    assert np.allclose(rep.time_averages, oracle, rtol=1e-9)
    assert rep.gap < rep.gap_budget
    short = birkhoff_test(spec, T, seq, ("abs2", 0, 0), 1, M, seed=2)
    assert rep.dispersion < short.dispersion
