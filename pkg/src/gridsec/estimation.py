"""Bayesian (MMSE) state estimation and the effect of deterministic injections."""

from dataclasses import dataclass, field
import warnings

import numpy as np
import scipy.linalg

COND_WARN = 1e12


class ConditioningWarning(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    """Linear Gaussian measurement model ``y = H x + z``.

    Caches the measurement covariance ``sigma_yy`` and the MMSE gain
    ``mmse_m = Sigma_xx H^T Sigma_yy^-1``.
    """

    H: np.ndarray
    sigma_xx: np.ndarray
    sigma2: float
    sigma_yy: np.ndarray
    mmse_m: np.ndarray
    cond: float
    _chol: tuple = field(repr=False)

    @property
    def m(self):
        return self.H.shape[0]

    @property
    def n(self):
        return self.H.shape[1]

    @property
    def sigma_yy_inv(self):
        # only for quadratic forms in the detectors; products use solve()
        inv = self.__dict__.get("_inv")
        if inv is None:
            inv = self.solve(np.eye(self.m))
            inv = 0.5 * (inv + inv.T)
            inv.setflags(write=False)
            object.__setattr__(self, "_inv", inv)
        return inv

    @property
    def signal_cov(self):
        """``H Sigma_xx H^T``."""
        cov = self.__dict__.get("_signal")
        if cov is None:
            # not sigma_yy - sigma2 I, which cancels badly at low SNR
            cov = self.H @ self.sigma_xx @ self.H.T
            cov = 0.5 * (cov + cov.T)
            cov.setflags(write=False)
            object.__setattr__(self, "_signal", cov)
        return cov

    def solve(self, b):
        return scipy.linalg.cho_solve(self._chol, b, check_finite=False)

    def quad_inv(self, a):
        """``a^T Sigma_yy^-1 a``."""
        a = np.asarray(a, dtype=float)
        return float(a @ self.solve(a))


def _as_array(obj, attr):
    return np.asarray(getattr(obj, attr, obj), dtype=float)


def build_model(H, prior, noise):
    """Assemble a :class:`MeasurementModel`.

    ``H`` may be a :class:`~gridsec.grid.Jacobian` or an array, ``prior`` a
    :class:`~gridsec.prior.StatePrior` or covariance, ``noise`` a
    :class:`~gridsec.prior.NoiseModel` or a variance.
    """
    H = _as_array(H, "matrix")
    sigma_xx = _as_array(prior, "sigma_xx")
    sigma2 = float(getattr(noise, "sigma2", noise))
    if H.ndim != 2 or sigma_xx.shape != (H.shape[1], H.shape[1]):
        raise ValueError(f"dimension mismatch: H is {H.shape}, Sigma_xx is {sigma_xx.shape}")
    if not sigma2 > 0:
        raise ValueError("noise variance must be positive")
    m = H.shape[0]
    sigma_yy = H @ sigma_xx @ H.T + sigma2 * np.eye(m)
    sigma_yy = 0.5 * (sigma_yy + sigma_yy.T)
    chol = scipy.linalg.cho_factor(sigma_yy, lower=True, check_finite=False)
    eig = np.linalg.eigvalsh(sigma_yy)
    cond = float(eig[-1] / eig[0])
    if cond > COND_WARN:
        warnings.warn(f"Sigma_yy condition number {cond:.3g} exceeds {COND_WARN:g}",
                      ConditioningWarning, stacklevel=2)
    gain = scipy.linalg.cho_solve(chol, H @ sigma_xx, check_finite=False).T
    for arr in (H, sigma_xx, sigma_yy, gain):
        arr.setflags(write=False)
    return MeasurementModel(H, sigma_xx, sigma2, sigma_yy, gain, cond, chol)


def _vector(model, v, name):
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != model.m:
        raise ValueError(f"{name} has length {v.shape[-1]}, expected {model.m}")
    return v


def estimate(model, y):
    """MMSE state estimate ``M y``. Accepts one vector or a stack of rows."""
    y = _vector(model, y, "measurement")
    return y @ model.mmse_m.T


def injection_vector(model, a):
    """Bayesian injection vector ``c = M a``: the shift ``a`` induces on the estimate."""
    return model.mmse_m @ _vector(model, a, "attack")


def excess_distortion(model, a):
    """``a^T Sigma_yy^-1 H Sigma_xx^2 H^T Sigma_yy^-1 a``, i.e. ``||M a||^2``."""
    a = _vector(model, a, "attack")
    v = model.H.T @ model.solve(a)
    w = model.sigma_xx @ v
    return float(w @ w)
