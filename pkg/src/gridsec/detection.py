"""Likelihood-ratio detection of deterministic and Gaussian (stealth) attacks.

Two decision orientations are in play and both are kept as written:

* deterministic attacks use ``L(y, a) = f_0(y) / f_a(y)`` and accept H0 when
  ``L > tau`` (ties go to H1);
* stealth attacks use ``L(y) = f_attacked(y) / f_clean(y)`` and accept H1 when
  ``L >= tau``.
"""

from dataclasses import dataclass
from enum import Enum
import math
from typing import NamedTuple
import warnings

import numpy as np
from scipy import integrate
from scipy.special import erfc

from .linalg import eigh_desc, is_psd, logdet_spd, numerical_rank


class Hypothesis(str, Enum):
    H0 = "H0"
    H1 = "H1"


class LRTResult(NamedTuple):
    decision: Hypothesis
    ratio: float
    log_ratio: float


class TailProbability(NamedTuple):
    value: float
    error: float
    method: str


class ZeroAttackError(ValueError):
    """The non-detection probability is undefined for the null attack."""


class QuadratureWarning(RuntimeWarning):
    pass


METHODS = ("cf-inversion", "mc")


def lrt_deterministic(model, y, a, tau):
    """LRT against a known mean shift ``a``; H0 is accepted iff ``L > tau``."""
    y = np.asarray(y, dtype=float)
    a = np.asarray(a, dtype=float)
    s = model.solve(a)
    log_ratio = 0.5 * float(a @ s) - float(s @ y)
    ratio = math.exp(log_ratio) if log_ratio < 709 else math.inf
    decision = Hypothesis.H0 if log_ratio > math.log(tau) else Hypothesis.H1
    return LRTResult(decision, ratio, log_ratio)


def pnd_from_quadratic(x, tau):
    """Non-detection probability as a function of ``x = a^T Sigma_yy^-1 a > 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ZeroAttackError("non-detection probability is undefined at a = 0")
    out = 0.5 * erfc((0.5 * x + math.log(tau)) / np.sqrt(2.0 * x))
    return float(out) if out.ndim == 0 else out


def prob_not_detected(model, a, tau):
    """Closed-form probability that the attack ``a`` passes the LRT undetected."""
    a = np.asarray(a, dtype=float)
    if not np.any(a):
        raise ZeroAttackError("non-detection probability is undefined at a = 0")
    return pnd_from_quadratic(model.quad_inv(a), tau)


def lrt_stealth(model, sigma_aa, y, tau):
    """LRT between ``N(0, Sigma_yy + Sigma_aa)`` (attack) and ``N(0, Sigma_yy)``."""
    sigma_aa = np.asarray(sigma_aa, dtype=float)
    if not is_psd(sigma_aa):
        raise ValueError("attack covariance must be symmetric positive semidefinite")
    y = np.asarray(y, dtype=float)
    attacked = model.sigma_yy + sigma_aa
    q_clean = float(y @ model.solve(y))
    q_att = float(y @ np.linalg.solve(attacked, y))
    log_ratio = 0.5 * (logdet_spd(model.sigma_yy) - logdet_spd(attacked)) \
        + 0.5 * (q_clean - q_att)
    ratio = math.exp(log_ratio) if log_ratio < 709 else math.inf
    decision = Hypothesis.H1 if log_ratio >= math.log(tau) else Hypothesis.H0
    return LRTResult(decision, ratio, log_ratio)


@dataclass(frozen=True)
class WeightedChiSquare:
    """Distribution of ``sum_i w_i U_i^2`` with ``U ~ N(0, I_p)``."""

    weights: np.ndarray

    @property
    def p(self):
        return len(self.weights)

    def mean(self):
        return float(np.sum(self.weights))

    def sf(self, x, method="cf-inversion", **kwargs):
        return weighted_chi2_sf(self.weights, x, method=method, **kwargs)


def stealth_weights(model, lam=1.0):
    """Weights of the quadratic form governing stealth-attack detection.

    Eigenvalues of ``H Sigma_xx H^T`` and of ``Sigma_yy`` are both sorted in
    descending order and paired by index; each weight is their ratio, so every
    weight lies in ``(0, 1)``. Only the ``p = rank(H Sigma_xx H^T)`` nonzero
    terms are kept. The weights do not depend on ``lam``.
    """
    if lam < 1:
        raise ValueError("lambda must be >= 1")
    signal = eigh_desc(model.signal_cov, sign_convention=False)[0]
    p = numerical_rank(signal)
    yy = eigh_desc(model.sigma_yy, sign_convention=False)[0]
    w = signal[:p] / yy[:p]
    return WeightedChiSquare(np.sort(w)[::-1])


def stealth_threshold(weights, lam, tau):
    """Right-hand side of the detection event ``U^T D U >= lam(2 log tau + log|I + D/lam|)``."""
    weights = np.asarray(weights, dtype=float)
    return lam * (2.0 * math.log(tau) + float(np.sum(np.log1p(weights / lam))))


def imhof_sf(weights, x, atol=1e-6, split=None):
    """``P(sum w_i U_i^2 > x)`` by numerical inversion of the characteristic function.

    The Imhof integrand is integrated directly up to a few periods of the
    threshold oscillation; the remaining tail goes to QUADPACK's Fourier routine.
    """
    w = np.asarray(weights, dtype=float)
    w = w[w > 0]
    if w.size == 0:
        return TailProbability(float(x < 0), 0.0, "cf-inversion")
    if x <= 0:
        return TailProbability(1.0, 0.0, "cf-inversion")

    def half_angle(u):
        return 0.5 * np.sum(np.arctan(w * u))

    def amplitude(u):
        # 1 / (u * prod (1 + w^2 u^2)^(1/4)), kept in log form to avoid overflow
        return math.exp(-math.log(u) - 0.25 * float(np.sum(np.log1p((w * u) ** 2))))

    def integrand(u):
        if u == 0.0:
            return 0.5 * (np.sum(w) - x)
        return math.sin(half_angle(u) - 0.5 * x * u) * amplitude(u)

    # [0, ua] is nearly flat; [ua, u0] is integrated in log(u), where the slow
    # algebraic decay is smooth; past u0 several periods of cos(x u / 2) have elapsed
    ua = min(0.1 / w.max(), 1.0 / x)
    u0 = split if split is not None else max(8.0 * math.pi / x, ua)
    head, err_head = integrate.quad(integrand, 0.0, ua, epsabs=atol / 10, epsrel=1e-10)
    if u0 > ua:
        mid, err_mid = integrate.quad(lambda s: integrand(math.exp(s)) * math.exp(s),
                                      math.log(ua), math.log(u0), limit=500,
                                      epsabs=atol / 10, epsrel=1e-10)
        head, err_head = head + mid, err_head + err_mid
    f_cos = lambda u: math.sin(half_angle(u)) * amplitude(u)
    f_sin = lambda u: math.cos(half_angle(u)) * amplitude(u)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        t1, e1 = integrate.quad(f_cos, u0, np.inf, weight="cos", wvar=0.5 * x,
                                limlst=200, epsabs=atol / 10)
        t2, e2 = integrate.quad(f_sin, u0, np.inf, weight="sin", wvar=0.5 * x,
                                limlst=200, epsabs=atol / 10)
    value = 0.5 + (head + t1 - t2) / math.pi
    err = (err_head + e1 + e2) / math.pi
    if err > atol:
        warnings.warn(f"characteristic-function inversion reached only {err:.2e} "
                      f"(requested {atol:.1e})", QuadratureWarning, stacklevel=2)
    return TailProbability(min(max(value, 0.0), 1.0), err, "cf-inversion")


def mc_sf(weights, x, n_samples=10**5, seed=None, chunk=10**5):
    """Monte Carlo estimate of ``P(sum w_i U_i^2 >= x)`` with its standard error."""
    w = np.asarray(weights, dtype=float)
    rng = np.random.default_rng(seed)
    hits, done = 0, 0
    while done < n_samples:
        size = min(chunk, n_samples - done)
        u = rng.standard_normal((size, w.size))
        hits += int(np.count_nonzero((u * u) @ w >= x))
        done += size
    p = hits / n_samples
    return TailProbability(p, math.sqrt(max(p * (1 - p), 0.0) / n_samples), "mc")


def weighted_chi2_sf(weights, x, method="cf-inversion", n_samples=10**5, seed=None,
                     atol=1e-6):
    if method == "cf-inversion":
        return imhof_sf(weights, x, atol=atol)
    if method == "mc":
        return mc_sf(weights, x, n_samples=n_samples, seed=seed)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def prob_detection_stealth(model, lam, tau, method="cf-inversion", n_samples=10**5,
                           seed=None, full_output=False):
    """Detection probability of the optimal stealth attack with weight ``lam``."""
    if lam < 1:
        raise ValueError("lambda must be >= 1")
    if tau <= 0:
        raise ValueError("tau must be positive")
    dist = stealth_weights(model, lam)
    threshold = stealth_threshold(dist.weights, lam, tau)
    res = weighted_chi2_sf(dist.weights, threshold, method=method, n_samples=n_samples,
                           seed=seed)
    return res if full_output else res.value
