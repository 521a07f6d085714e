"""Gaussian stealth attacks trading information leakage against detectability."""

from dataclasses import dataclass
import math
import warnings

import numpy as np

from .detection import stealth_weights
from .linalg import eigh_desc, is_psd, logdet_spd
from .prior import sample_states


@dataclass(frozen=True, eq=False)
class StealthAttack:
    lambda_w: float
    sigma_aa: np.ndarray

    def sample(self, count, seed=None):
        return sample_states(self.sigma_aa, count, seed)


@dataclass(frozen=True)
class StealthCost:
    """Costs in nats. ``weighted = (objective + constant) / 2``."""

    mi: float
    kl: float
    weighted: float
    objective: float
    constant: float
    lam: float


def _check_lambda(lam):
    if not lam >= 1:
        raise ValueError(f"lambda must be >= 1, got {lam}")


def _check_cov(model, sigma_aa):
    sigma_aa = np.asarray(sigma_aa, dtype=float)
    if sigma_aa.shape != (model.m, model.m):
        raise ValueError(f"attack covariance must be {model.m}x{model.m}")
    if not is_psd(sigma_aa):
        raise ValueError("attack covariance must be symmetric positive semidefinite")
    return 0.5 * (sigma_aa + sigma_aa.T)


def optimal_attack(model, lam):
    """Attack covariance ``H Sigma_xx H^T / lam``."""
    _check_lambda(lam)
    return StealthAttack(float(lam), model.signal_cov / lam)


def stationary_attack(model, lam):
    """Attack covariance at which the gradient of the weighted cost vanishes.

    Shares the eigenvectors of ``H Sigma_xx H^T``; eigenvalue ``b`` maps to
    the positive root of ``lam a^2 + lam sigma2 a - b (b + sigma2) = 0``.
    For ``lam = 1`` this is ``H Sigma_xx H^T`` itself.
    """
    _check_lambda(lam)
    b, u = eigh_desc(model.signal_cov, sign_convention=False)
    b = np.clip(b, 0.0, None)
    s2 = model.sigma2
    a = (-lam * s2 + np.sqrt((lam * s2) ** 2 + 4.0 * lam * b * (b + s2))) / (2.0 * lam)
    cov = (u * a) @ u.T
    return StealthAttack(float(lam), 0.5 * (cov + cov.T))


def kl_divergence(model, sigma_aa):
    """KL divergence of ``N(0, Sigma_yy + Sigma_aa)`` from ``N(0, Sigma_yy)``."""
    sigma_aa = _check_cov(model, sigma_aa)
    attacked = model.sigma_yy + sigma_aa
    tr = float(np.trace(model.solve(attacked)))
    return 0.5 * (logdet_spd(model.sigma_yy) - logdet_spd(attacked) - model.m + tr)


def mutual_information(model, sigma_aa):
    """``I(X; HX + Z + A)`` from the joint covariance of state and attacked measurements."""
    sigma_aa = _check_cov(model, sigma_aa)
    sxx = model.sigma_xx
    cross = sxx @ model.H.T
    yy = model.sigma_yy + sigma_aa
    joint = np.block([[sxx, cross], [cross.T, yy]])
    return 0.5 * (logdet_spd(sxx) + logdet_spd(yy) - logdet_spd(0.5 * (joint + joint.T)))


def mutual_information_optimal(model, lam):
    """Closed-form leakage under ``optimal_attack(model, lam)``."""
    _check_lambda(lam)
    b = np.clip(np.linalg.eigvalsh(model.signal_cov), 0.0, None)
    return 0.5 * float(np.sum(np.log1p(b / (model.sigma2 + b / lam))))


def weighted_cost(model, sigma_aa, lam):
    _check_lambda(lam)
    sigma_aa = _check_cov(model, sigma_aa)
    mi = mutual_information(model, sigma_aa)
    kl = kl_divergence(model, sigma_aa)
    attacked = model.sigma_yy + sigma_aa
    shifted = sigma_aa + model.sigma2 * np.eye(model.m)
    objective = (-(lam - 1.0) * logdet_spd(attacked) - logdet_spd(shifted)
                 + lam * float(np.trace(model.solve(sigma_aa))))
    constant = lam * logdet_spd(model.sigma_yy)
    return StealthCost(mi, kl, mi + lam * kl, objective, constant, float(lam))


def _bound_terms(model):
    w = stealth_weights(model).weights
    if np.any(w > 1):
        warnings.warn("a stealth weight exceeds 1; the detection bound may not hold",
                      RuntimeWarning, stacklevel=3)
    return float(np.sum(w * w)), float(w.max()) if w.size else 0.0


def _bound_residual(lam, log_tau, tr2, wmax, t):
    return 2 * lam * log_tau - tr2 / (2 * lam) - 2 * math.sqrt(tr2 * t) - 2 * wmax * t


def detection_bound_lambda(model, tau, t, xtol=1e-10):
    """Smallest ``lam`` at which detection probability is guaranteed below ``exp(-t)``.

    The defining residual is increasing in ``lam``, so its root is found by
    bisection on ``[1e-6, lam_hi]`` with ``lam_hi`` doubled until positive.
    """
    if tau <= 1:
        raise ValueError("the detection bound needs tau > 1")
    if t <= 0:
        raise ValueError("t must be positive")
    log_tau = math.log(tau)
    tr2, wmax = _bound_terms(model)
    lo, hi = 1e-6, 1.0
    while _bound_residual(hi, log_tau, tr2, wmax, t) <= 0:
        hi *= 2.0
    if _bound_residual(lo, log_tau, tr2, wmax, t) > 0:
        return lo
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if _bound_residual(mid, log_tau, tr2, wmax, t) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def detection_upper_bound(model, lam, tau):
    """``(t, exp(-t))`` with the largest ``t`` whose guarantee holds at weight ``lam``.

    Inverts the bound: ``t = s^2`` where ``s`` is the positive root of
    ``2 |w|_inf s^2 + 2 sqrt(sum w^2) s = 2 lam log tau - sum w^2 / (2 lam)``.
    If the right side is not positive no guarantee applies and the bound is 1.
    """
    if tau <= 1:
        raise ValueError("the detection bound needs tau > 1")
    tr2, wmax = _bound_terms(model)
    c = 2.0 * lam * math.log(tau) - tr2 / (2.0 * lam)
    if c <= 0:
        return 0.0, 1.0
    r = math.sqrt(tr2)
    if wmax > 0:
        s = (-2 * r + math.sqrt(4 * r * r + 8 * wmax * c)) / (4 * wmax)
    else:
        s = math.inf
    t = s * s
    return t, math.exp(-t)
