import mpmath
import numpy as np
import pytest

from unishift.eigenfields import (
    EigenField,
    coefficients,
    continuity_probe,
    eigen_coeff,
    eval_E,
    export_coefficients_csv,
    residual,
    residual_closed_form,
    residual_fast,
    spanning_matrix,
    spanning_solve,
    tail_certificate,
    tail_sq,
)
from unishift.exceptions import GridRangeError, NumericRangeError
from unishift.hilbert import Grid, WeightFamily, basis_vector
from unishift.operator import OperatorSpec
from unishift.spectrum import build_sequence, required_weight_shape, sample_K, sample_K_pairs


def setup(depth=5, modes=2, levels=32, value=1.0, seed=0):
    w = WeightFamily.constant(value, *required_weight_shape(depth))
    seq = build_sequence(w, depth, seed=seed)
    T = OperatorSpec.from_sequence(seq, w, Grid(modes, levels))
    return w, seq, T


@pytest.fixture(scope="module")
def ctx():
    return setup()


def _mp_coeffs(mu, w, lam, levels, dps=60):
    """Oracle: the defining product in arbitrary precision."""
    with mpmath.workdps(dps):
        z = mpmath.mpc(lam.real, lam.imag)
        out, c = [], mpmath.mpc(1)
        for n in range(levels):
            out.append(complex(c))
            if n + 1 < levels:
                c *= (z - mpmath.mpc(mu[n].real, mu[n].imag)) / w[n]
        return np.array(out)


def test_simple_coefficients(ctx):
    w, seq, T = ctx
    f = EigenField.from_operator(T, seq, 0)
    assert eigen_coeff(f, 0, 0.3 + 0.1j) == 1
    assert np.all(coefficients(f, seq.mu[0])[1:] == 0)
    assert eigen_coeff(f, 1, seq.mu[1]) == pytest.approx(seq.mu[1] - 1, abs=1e-16)


def test_coefficients_match_arbitrary_precision_oracle(ctx):
    w, seq, T = ctx
    for i in range(2):
        f = EigenField.from_operator(T, seq, i)
        lams = sample_K(seq, 5, seed=i, size=20)
        got = coefficients(f, lams)
        for row, lam in zip(got, lams):
            ref = _mp_coeffs(seq.mu, f.factors_w, lam, T.grid.levels)
            assert np.allclose(row, ref, rtol=1e-12, atol=0)


def test_eigenvectors_at_exact_eigenvalues(ctx):
    w, seq, T = ctx
    f = EigenField.from_operator(T, seq, 1)
    assert eval_E(f, seq.mu[0]) == basis_vector(T.grid, 1, 0)
    for level in (1, 5, 17):
        c = coefficients(f, seq.mu[level])
        assert c[level] != 0 and np.all(c[level + 1 :] == 0)


def test_tail_bound_at_each_depth(ctx):
    w, seq, T = ctx
    for i in range(2):
        f = EigenField.from_operator(T, seq, i)
        for lam in sample_K(seq, 5, seed=3, size=50):
            for kp, tail, bound in tail_certificate(f, lam, 5):
                assert kp >= i
                assert tail < bound
                assert tail == pytest.approx(tail_sq(f, lam, kp))


def test_residual_zero_on_exact_eigenvalues(ctx):
    w, seq, T = ctx
    f = EigenField.from_operator(T, seq, 0)
    assert residual(T, f, seq.mu[0]) <= 1e-14
    for level in range(T.grid.levels - 1):
        assert residual_closed_form(f, seq.mu[level]) == 0
        assert residual_fast(T, f, seq.mu[level]) <= 1e-12


def test_residual_matches_closed_form(ctx):
    w, seq, T = ctx
    for i in range(2):
        f = EigenField.from_operator(T, seq, i)
        for lam in sample_K(seq, 5, seed=10 + i, size=25):
            closed = residual_closed_form(f, lam)
            ref = abs(lam - seq.mu[T.grid.levels - 1]) * abs(_mp_coeffs(seq.mu, f.factors_w, lam, T.grid.levels)[-1])
            assert closed == pytest.approx(ref, rel=1e-12)
            assert residual(T, f, lam) == pytest.approx(closed, rel=1e-12)


def test_spanning_small_cases():
    w, seq, _ = setup(depth=3, levels=8)
    m, d = spanning_matrix(seq, w, 0, 1)
    assert m.tolist() == [[1]] and d == 1
    m, _ = spanning_matrix(seq, w, 0, 2)
    assert np.array_equal(m, np.array([[1, 1], [0, seq.mu[1] - seq.mu[0]]]))


def test_spanning_against_dense_solve():
    w, seq, _ = setup(depth=4, levels=16)
    mat, d = spanning_matrix(seq, w, 0, 12)
    assert d > 0
    x, res = spanning_solve(mat)
    assert res < 1e-8
    rng = np.random.default_rng(0)
    b = rng.standard_normal((12, 12)) + 1j * rng.standard_normal((12, 12))
    with mpmath.workdps(80):
        m = mpmath.matrix([[mpmath.mpc(v.real, v.imag) for v in row] for row in mat])
        bm = mpmath.matrix([[mpmath.mpc(v.real, v.imag) for v in row] for row in b])
        xb = x @ b
        worst = 0.0
        for c in range(12):
            col = mpmath.lu_solve(m, bm[:, c])
            for r in range(12):
                worst = max(worst, abs(complex(col[r]) - xb[r, c]) / max(1.0, abs(complex(col[r]))))
    assert worst < 1e-8


def test_spanning_diagonal_is_the_product_of_gaps():
    w, seq, _ = setup(depth=4, levels=16)
    mat, d = spanning_matrix(seq, w, 0, 16)
    mu = seq.mu
    oracle = [np.prod([abs(mu[j] - mu[p]) for p in range(j)]) for j in range(16)]
    assert np.allclose(np.abs(np.diag(mat)), oracle, rtol=1e-12)
    assert d == pytest.approx(min(oracle), rel=1e-12)


def test_spanning_detects_duplicates():
    w, seq, _ = setup(depth=4, levels=16)
    bad = seq.replace(mu=np.where(np.arange(len(seq.mu)) == 9, seq.mu[2], seq.mu))
    mat, d = spanning_matrix(bad, w, 0, 16)
    assert d == 0
    x, res = spanning_solve(mat)
    assert x is None and res == np.inf


def test_continuity_probe(ctx):
    w, seq, T = ctx
    f = EigenField.from_operator(T, seq, 0)
    lam = sample_K(seq, 5, seed=1, size=10)
    assert continuity_probe(f, (lam, lam), 0.0, 3).max_deviation == 0
    for k in range(1, 5):
        pairs = sample_K_pairs(seq, k, 5, seed=k, size=50)
        rep = continuity_probe(f, pairs, 2 * seq.lk[k], k)
        assert rep.passed


def test_continuity_deviation_decreases_with_depth(ctx):
    w, seq, T = ctx
    f = EigenField.from_operator(T, seq, 0)
    means = []
    for k in range(1, 6):
        a, b = sample_K_pairs(seq, k, 5, seed=20 + k, size=100)
        means.append(np.mean(np.linalg.norm(coefficients(f, a) - coefficients(f, b), axis=1)))
    assert all(x >= y for x, y in zip(means, means[1:]))


def test_overflow_far_from_spectrum():
    seq = build_sequence(WeightFamily.constant(1.0, *required_weight_shape(6)), 6)
    tiny = WeightFamily.constant(1e-10, 1, 64)
    f = EigenField(0, seq, tiny, Grid(1, 64))
    with pytest.raises(NumericRangeError):
        coefficients(f, -50.0)


def test_build_refuses_unresolvable_steps():
    w = WeightFamily.constant(1e-3, *required_weight_shape(6))
    with pytest.raises(NumericRangeError):
        build_sequence(w, 6)


def test_range_errors(ctx):
    w, seq, T = ctx
    with pytest.raises(GridRangeError):
        EigenField(2, seq, T.w, T.grid)
    f = EigenField.from_operator(T, seq, 0)
    with pytest.raises(GridRangeError):
        eigen_coeff(f, T.grid.levels, 1.0)


def test_export_csv(ctx, tmp_path):
    w, seq, T = ctx
    f = EigenField.from_operator(T, seq, 0)
    lam = complex(sample_K(seq, 5, seed=0))
    p = tmp_path / "c.csv"
    export_coefficients_csv([(0, lam, coefficients(f, lam))], p, header="hdr")
    lines = p.read_text().splitlines()
    assert lines[0] == "# hdr" and len(lines) == 2 + T.grid.levels
