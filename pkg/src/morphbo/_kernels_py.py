"""Pure numpy implementations of the hot numerical kernels.

Used when the compiled ``_kernels`` extension is unavailable, or when
``MORPHBO_PURE_PYTHON=1`` is set. Signatures match the extension exactly.
"""

import numpy as np


def se_cross(X, Y, inv_h, amp2):
    """Anisotropic squared-exponential covariance between two point sets.

    Parameters
    ----------
    X : ndarray, shape (n, d)
    Y : ndarray, shape (m, d)
    inv_h : ndarray, shape (d,)
        Reciprocal covariance lengths.
    amp2 : float
        Signal variance (amplitude squared).

    Returns
    -------
    K : ndarray, shape (n, m)
    """
    X = np.asarray(X, dtype=np.float64) * inv_h
    Y = np.asarray(Y, dtype=np.float64) * inv_h
    diff = X[:, None, :] - Y[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    return amp2 * np.exp(-0.5 * d2)


def sq_diffs(X):
    """Per-dimension squared differences, shape (d, n, n)."""
    # contiguous columns give a C-ordered result for the Gram contraction
    XT = np.ascontiguousarray(np.asarray(X, dtype=np.float64).T)
    diff = XT[:, :, None] - XT[:, None, :]
    return diff * diff


def se_gram_from_diffs(diffs, inv_h2, amp2):
    """Gram matrix from precomputed squared differences."""
    d2 = np.tensordot(inv_h2, diffs, axes=1)
    return amp2 * np.exp(-0.5 * d2)


def polygon_areas(radii, dphi):
    """Area of the star-shaped polygon at every plane.

    ``radii`` has shape (n_phi, n_s); vertices at equally spaced angles.
    """
    radii = np.asarray(radii, dtype=np.float64)
    return 0.5 * np.sin(dphi) * np.sum(radii * np.roll(radii, -1, axis=0), axis=0)
