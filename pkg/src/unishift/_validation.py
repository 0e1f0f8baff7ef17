"""Input validation shared by the estimator wrappers.

``sklearn.utils.check_array`` rejects complex input, so vectors are checked
here instead.
"""
import numpy as np

from .exceptions import ShapeError
from .hilbert import CVec, Grid, WeightFamily


def check_weights(W, min_shape=None) -> WeightFamily:
    """Accept a :class:`WeightFamily`, a scalar, or a 2-d positive table."""
    if isinstance(W, WeightFamily):
        wf = W
    elif np.ndim(W) == 0:
        if min_shape is None:
            raise ValueError("a scalar weight needs a target shape")
        wf = WeightFamily.constant(float(W), *min_shape)
    else:
        wf = WeightFamily(np.asarray(W, dtype=float))
    if min_shape is not None and not wf.covers(*min_shape):
        raise ShapeError(f"weight table {wf.shape} smaller than required {tuple(min_shape)}")
    return wf


def check_vectors(X, grid: Grid):
    """Return ``(coeffs, flat)`` with ``coeffs`` of shape ``(n, modes, levels)``.

    ``X`` may be a ``CVec``, a sequence of them, a 2-d array of flattened
    row-major vectors ``(n, modes * levels)`` or a 3-d array.  ``flat``
    records whether the caller used the flattened layout.
    """
    if isinstance(X, CVec):
        X = [X]
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], CVec):
        if any(v.grid != grid for v in X):
            raise ShapeError("vectors live on a different grid")
        return np.stack([v.coeff for v in X]), False
    arr = np.asarray(X, dtype=complex)
    if arr.ndim == 2 and arr.shape[1] == grid.size:
        return arr.reshape(len(arr), *grid.shape), True
    if arr.ndim == 3 and arr.shape[1:] == grid.shape:
        return arr, False
    raise ShapeError(f"expected (n, {grid.size}) or (n, {grid.modes}, {grid.levels}) array, got {arr.shape}")


def check_unimodular(mu, atol=1e-12):
    mu = np.asarray(mu, dtype=complex)
    if mu.ndim != 1:
        raise ShapeError("diagonal must be 1-d")
    if np.max(np.abs(np.abs(mu) - 1.0)) > atol:
        raise ValueError("diagonal entries must be unimodular")
    return mu


def check_points(lam):
    lam = np.asarray(lam, dtype=complex)
    if lam.ndim == 2 and lam.shape[1] == 1:
        lam = lam[:, 0]
    if lam.ndim != 1:
        raise ShapeError("points must be a 1-d array or a single column")
    if not np.all(np.isfinite(lam)):
        raise ValueError("points must be finite")
    return lam
