"""Small symmetric-matrix helpers shared across modules."""

import numpy as np
import scipy.linalg


def eigh_desc(a, sign_convention=True):
    """Eigendecomposition of a symmetric matrix, eigenvalues in descending order.

    With ``sign_convention`` each eigenvector is flipped so that its first
    entry that is not negligible is positive, which makes ``±`` constructions
    reproducible across platforms.
    """
    a = np.asarray(a, dtype=float)
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    w, v = w[::-1], v[:, ::-1].copy()
    if sign_convention:
        for j in range(v.shape[1]):
            col = v[:, j]
            big = np.flatnonzero(np.abs(col) > 1e-12 * max(np.abs(col).max(), 1e-300))
            if big.size and col[big[0]] < 0:
                v[:, j] = -col
    return w, v


def psd_sqrt(a):
    """Symmetric PSD square root (the unique one), via eigendecomposition."""
    w, v = eigh_desc(a, sign_convention=False)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def psd_inv_sqrt(a):
    w, v = eigh_desc(a, sign_convention=False)
    if w[-1] <= 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return (v / np.sqrt(w)) @ v.T


def psd_factor(a):
    """Return ``L`` with ``L @ L.T == a`` for a PSD (possibly singular) matrix."""
    w, v = eigh_desc(a, sign_convention=False)
    scale = max(abs(w[0]), 1.0) if w.size else 1.0
    if w.size and w[-1] < -1e-10 * scale:
        raise np.linalg.LinAlgError(
            f"matrix is not positive semidefinite (min eigenvalue {w[-1]:.3g})")
    return v * np.sqrt(np.clip(w, 0.0, None))


def logdet_spd(a):
    """log-determinant of a symmetric positive definite matrix via Cholesky."""
    c, lower = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def numerical_rank(eigvals, rtol=1e-10):
    """Count eigenvalues above ``rtol`` times the largest one."""
    eigvals = np.asarray(eigvals, dtype=float)
    if eigvals.size == 0 or eigvals.max() <= 0:
        return 0
    return int(np.sum(eigvals > rtol * eigvals.max()))


def is_psd(a, tol=1e-10):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    if not np.allclose(a, a.T, atol=tol * max(1.0, np.abs(a).max())):
        return False
    w = np.linalg.eigvalsh(0.5 * (a + a.T))
    return bool(w[0] >= -tol * max(1.0, abs(w[-1])))
