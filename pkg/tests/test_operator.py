import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unishift.exceptions import GridRangeError, ShapeError
from unishift.hilbert import CVec, Grid, WeightFamily, basis_vector, norm
from unishift.operator import OperatorSpec, apply, export_matrix_csv, power_apply, to_matrix
from unishift.spectrum import ROOTS_OF_UNITY, build_sequence, required_weight_shape


@pytest.fixture(scope="module")
def T():
    w = WeightFamily(np.random.default_rng(0).uniform(0.5, 2.0, size=required_weight_shape(3)))
    seq = build_sequence(w, 3, seed=1)
    return OperatorSpec.from_sequence(seq, w, Grid(2, 4))


def test_apply_on_basis(T):
    g = T.grid
    assert apply(T, basis_vector(g, 0, 0)) == T.mu[0] * basis_vector(g, 0, 0)
    got = apply(T, basis_vector(g, 0, 1))
    want = T.mu[1] * basis_vector(g, 0, 1) + T.w.w[0, 0] * basis_vector(g, 0, 0)
    assert np.allclose(got.coeff, want.coeff, atol=0)
    got = apply(T, basis_vector(g, 1, 2))
    want = T.mu[2] * basis_vector(g, 1, 2) + T.w.w[1, 1] * basis_vector(g, 1, 1)
    assert np.allclose(got.coeff, want.coeff, atol=0)


def test_matrix_n2():
    w = WeightFamily.constant(1.5, 2, 4)
    seq = build_sequence(WeightFamily.constant(1.5, *required_weight_shape(2)), 2)
    T = OperatorSpec.from_sequence(seq, w, Grid(1, 2))
    m = to_matrix(T)[0]
    assert np.array_equal(m, np.array([[seq.mu[0], 1.5], [0, seq.mu[1]]]))


def test_matrix_agrees_with_apply(T):
    mats = to_matrix(T)
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        x = CVec.random(T.grid, rng)
        y = np.stack([mats[i] @ x.coeff[i] for i in range(T.grid.modes)])
        worst = max(worst, np.linalg.norm(y - apply(T, x).coeff) / np.linalg.norm(y))
    assert worst < 1e-13


def test_eigenvalues_match_diagonal():
    w = WeightFamily.constant(1.0, *required_weight_shape(4))
    seq = build_sequence(w, 4, seed=2)
    T = OperatorSpec.from_sequence(seq, w, Grid(3, 16))
    for m in to_matrix(T):
        ev = np.linalg.eigvals(m)
        for mu in T.mu:
            assert np.min(np.abs(ev - mu)) < 1e-8


def test_power_apply(T):
    x = CVec.random(T.grid, 3)
    assert power_apply(T, x, 0) == x
    assert power_apply(T, x, 1) == apply(T, x)
    assert power_apply(T, x, 3) == apply(T, apply(T, apply(T, x)))
    with pytest.raises(ValueError):
        power_apply(T, x, -1)


def test_power_apply_roots_of_unity_period():
    from unishift.dynamics import eigen_combination

    w = WeightFamily.constant(3.0, *required_weight_shape(3))
    seq = build_sequence(w, 3, ROOTS_OF_UNITY)
    T = OperatorSpec.from_sequence(seq, w, Grid(2, 8))
    x = eigen_combination(T, seq, [(0, 1, 1.0), (1, 1, 0.5)])
    M = seq.orders[1]
    assert norm(power_apply(T, x, M) - x) <= 1e-9 * norm(x)


def test_validation():
    g = Grid(1, 3)
    with pytest.raises(ShapeError):
        OperatorSpec(g, np.ones(2), WeightFamily.constant(1.0, 1, 3))
    with pytest.raises(ValueError):
        OperatorSpec(g, np.array([1, 1, 1.1]), WeightFamily.constant(1.0, 1, 3))
    seq = build_sequence(WeightFamily.constant(1.0, 2, 4), 1)
    with pytest.raises(GridRangeError):
        OperatorSpec.from_sequence(seq, WeightFamily.constant(1.0, 2, 4), Grid(1, 4))


def test_json_round_trip_and_csv(T, tmp_path):
    back = OperatorSpec.from_json(T.to_json())
    assert np.array_equal(back.mu, T.mu) and back.w == T.w
    path = tmp_path / "m.csv"
    export_matrix_csv(T, 1, path, header="h")
    lines = path.read_text().splitlines()
    assert lines[0] == "# h"


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_linearity(seed, s):
    w = WeightFamily.constant(1.0, *required_weight_shape(3))
    T = OperatorSpec.from_sequence(build_sequence(w, 3), w, Grid(2, 8))
    rng = np.random.default_rng(seed)
    x, y = CVec.random(T.grid, rng), CVec.random(T.grid, rng)
    lhs = apply(T, s * x + y)
    rhs = s * apply(T, x) + apply(T, y)
    assert norm(lhs - rhs) <= 1e-12 * (1 + norm(lhs))
