"""scikit-learn style wrappers.

Weights play the role of training data: ``fit(W)`` runs the spectrum
construction for the weight table ``W``; ``transform`` then acts on batches
of vectors or points.  Hyperparameters are plain ``__init__`` arguments so
``get_params``/``set_params``/``clone`` behave as usual.
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import dynamics, eigenfields, gaussian, spectrum
from ._validation import check_points, check_vectors, check_weights
from .exceptions import GridRangeError
from .hilbert import Grid
from .operator import OperatorSpec, apply_coeffs


def _required_shape(depth, modes, levels):
    need_modes, need_levels = spectrum.required_weight_shape(depth)
    return max(need_modes, modes), max(need_levels, levels)


class UnimodularSpectrum(BaseEstimator):
    """Build the unimodular diagonal and its nested arcs from a weight table.

    Parameters
    ----------
    depth : int
        Number of dyadic construction steps; ``2**depth`` values are built.
    mode : {"generic", "roots_of_unity"}
    seed : int
    base_order : int
        Root-of-unity orders are ``base_order * 2**r``.

    Attributes
    ----------
    sequence_ : EigenSequence
    weights_ : WeightFamily
    report_ : ConstraintReport
    """

    def __init__(self, depth=4, mode="generic", seed=0, base_order=1):
        self.depth = depth
        self.mode = mode
        self.seed = seed
        self.base_order = base_order

    def fit(self, W, y=None):
        self.weights_ = check_weights(W, spectrum.required_weight_shape(self.depth))
        self.sequence_ = spectrum.build_sequence(self.weights_, self.depth, self.mode, self.seed, self.base_order)
        self.report_ = spectrum.verify_constraints(self.sequence_, self.weights_)
        return self

    @property
    def mu_(self):
        check_is_fitted(self, "sequence_")
        return np.asarray(self.sequence_.mu)

    def sample(self, n_samples=1, depth=None, random_state=None):
        """Points of the nested-arc approximation of the Cantor set."""
        check_is_fitted(self, "sequence_")
        depth = self.depth if depth is None else depth
        return spectrum.sample_K(self.sequence_, depth, random_state, size=n_samples)


class ShiftDiagOperator(TransformerMixin, BaseEstimator):
    """Truncated ``T = D_mu + B_w`` on a ``modes x levels`` grid.

    ``transform(X)`` returns ``T**power X`` row by row; rows are either
    flattened vectors of length ``modes * levels`` or ``(modes, levels)``
    arrays, and the output keeps the input layout.
    """

    def __init__(self, modes=2, levels=16, depth=None, mode="generic", seed=0, base_order=1, power=1):
        self.modes = modes
        self.levels = levels
        self.depth = depth
        self.mode = mode
        self.seed = seed
        self.base_order = base_order
        self.power = power

    def fit(self, W, y=None):
        depth = self.depth
        if depth is None:
            depth = max(1, int(np.ceil(np.log2(self.levels))))
        if 2**depth < self.levels:
            raise GridRangeError(f"depth {depth} builds {2**depth} values, grid needs {self.levels}")
        self.grid_ = Grid(self.modes, self.levels)
        self.spectrum_ = UnimodularSpectrum(depth, self.mode, self.seed, self.base_order)
        self.spectrum_.fit(check_weights(W, _required_shape(depth, self.modes, self.levels)))
        self.operator_ = OperatorSpec.from_sequence(self.spectrum_.sequence_, self.spectrum_.weights_, self.grid_)
        return self

    @property
    def sequence_(self):
        check_is_fitted(self, "operator_")
        return self.spectrum_.sequence_

    def transform(self, X):
        check_is_fitted(self, "operator_")
        coeffs, flat = check_vectors(X, self.grid_)
        T = self.operator_
        for _ in range(self.power):
            coeffs = apply_coeffs(T.mu, T.w.w, coeffs)
        return coeffs.reshape(len(coeffs), -1) if flat else coeffs

    def to_matrix(self):
        from .operator import to_matrix

        check_is_fitted(self, "operator_")
        return to_matrix(self.operator_)


class EigenfieldTransformer(TransformerMixin, BaseEstimator):
    """Map points ``lambda`` to the coefficient rows of ``E_i(lambda)``.

    ``operator`` is a :class:`ShiftDiagOperator`; it is fitted on ``W`` unless
    it is already fitted.
    """

    def __init__(self, operator=None, mode_index=0):
        self.operator = operator
        self.mode_index = mode_index

    def fit(self, W=None, y=None):
        op = ShiftDiagOperator() if self.operator is None else self.operator
        if not hasattr(op, "operator_"):
            op.fit(W)
        self.operator_ = op
        self.field_ = eigenfields.EigenField.from_operator(op.operator_, op.sequence_, self.mode_index)
        return self

    def transform(self, X):
        check_is_fitted(self, "field_")
        return eigenfields.coefficients(self.field_, check_points(X))

    def residuals(self, X):
        """Closed-form truncation residuals ``|lambda - mu_{N-1}| |c_{N-1}|``."""
        check_is_fitted(self, "field_")
        return np.array([eigenfields.residual_closed_form(self.field_, lam) for lam in check_points(X)])


class GaussianEigenMeasure(BaseEstimator):
    """Gaussian measure ``sum_j a_j g_j E_{i_j}(mu_j)`` on exact eigenvectors."""

    def __init__(self, operator=None, n_terms=8, amplitude_ratio=0.5):
        self.operator = operator
        self.n_terms = n_terms
        self.amplitude_ratio = amplitude_ratio

    def fit(self, W=None, y=None):
        op = ShiftDiagOperator() if self.operator is None else self.operator
        if not hasattr(op, "operator_"):
            op.fit(W)
        self.operator_ = op
        self.spec_ = gaussian.GaussianSpec.exact(op.operator_, self.n_terms, amplitude_ratio=self.amplitude_ratio)
        return self

    def sample(self, n_samples=1, random_state=None):
        check_is_fitted(self, "spec_")
        op = self.operator_
        return gaussian.sample(self.spec_, op.operator_, op.sequence_, random_state, size=n_samples)

    def invariance_report(self, n_samples=10_000, random_state=None):
        check_is_fitted(self, "spec_")
        op = self.operator_
        return gaussian.invariance_test(self.spec_, op.operator_, op.sequence_, n_samples, random_state)


def periodic_point(operator: ShiftDiagOperator, picks):
    """Periodic vector and period for a fitted roots-of-unity operator."""
    check_is_fitted(operator, "operator_")
    return dynamics.make_periodic_point(operator.operator_, operator.sequence_, picks)
