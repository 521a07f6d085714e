"""State statistics: Toeplitz prior, SNR/noise conversion, sampling, sample covariance."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .linalg import psd_factor


@dataclass(frozen=True)
class StatePrior:
    """Zero-mean Gaussian prior with exponentially decaying correlation."""

    n: int
    rho: float
    sigma_xx: np.ndarray


@dataclass(frozen=True)
class NoiseModel:
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"noise variance must be positive, got {self.sigma2}")


@dataclass(frozen=True)
class SampleCovariance:
    s_xx: np.ndarray
    k: int

    @property
    def invertible(self):
        """False when ``k - 1 < n`` (the estimate is then singular almost surely)."""
        n = self.s_xx.shape[0]
        return self.k - 1 >= n and np.linalg.matrix_rank(self.s_xx) == n


def toeplitz_prior(n, rho):
    """Covariance with entries ``rho**|i-j|`` and unit diagonal."""
    if n < 1:
        raise ValueError("dimension must be at least 1")
    if not 0 <= rho < 1:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    cov = toeplitz(rho ** np.arange(n, dtype=float))
    cov.setflags(write=False)
    return StatePrior(int(n), float(rho), cov)


def _matrix(obj):
    return np.asarray(getattr(obj, "matrix", obj), dtype=float)


def _cov(prior):
    return np.asarray(getattr(prior, "sigma_xx", prior), dtype=float)


def signal_power(H, prior):
    """``tr(H Sigma_xx H^T)``."""
    H = _matrix(H)
    return float(np.trace(H @ _cov(prior) @ H.T))


def sigma2_from_snr(H, prior, snr_db):
    """Noise variance giving ``10 log10(tr(H S H^T) / (m sigma2)) == snr_db``."""
    H = _matrix(H)
    if H.shape[1] != _cov(prior).shape[0]:
        raise ValueError(f"Jacobian has {H.shape[1]} columns, prior has dimension "
                         f"{_cov(prior).shape[0]}")
    return NoiseModel(signal_power(H, prior) / (H.shape[0] * 10.0 ** (snr_db / 10.0)))


def snr_db(H, prior, sigma2):
    sigma2 = getattr(sigma2, "sigma2", sigma2)
    H = _matrix(H)
    return 10.0 * np.log10(signal_power(H, prior) / (H.shape[0] * sigma2))


def sample_states(prior, count, seed=None):
    """Draw ``count`` i.i.d. zero-mean Gaussian states, one per row.

    ``prior`` may be a :class:`StatePrior` or a raw covariance matrix; PSD but
    singular covariances are accepted.
    """
    factor = psd_factor(_cov(prior))
    rng = np.random.default_rng(seed)
    return rng.standard_normal((int(count), factor.shape[1])) @ factor.T


def sample_covariance(samples, center=False):
    """``1/(k-1) * sum x x^T`` over the rows of ``samples``.

    With ``center=True`` the sample mean is removed first; the result is then
    exactly ``W_n(k-1, Sigma)/(k-1)`` distributed for Gaussian rows.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    k = x.shape[0]
    if k < 2:
        raise ValueError("sample covariance needs at least two samples")
    if center:
        x = x - x.mean(axis=0)
    s = x.T @ x / (k - 1)
    return SampleCovariance(0.5 * (s + s.T), k)
