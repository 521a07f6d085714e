"""Stealth attacks built from a sample covariance, and bounds on their average cost."""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.special import digamma

from .linalg import eigh_desc, logdet_spd, numerical_rank
from .prior import sample_covariance, sample_states
from .stealth import StealthAttack


class MCEstimate(tuple):
    """``(mean, se, n)`` with attribute access."""

    def __new__(cls, mean, se, n):
        return super().__new__(cls, (float(mean), float(se), int(n)))

    mean = property(lambda self: self[0])
    se = property(lambda self: self[1])
    n = property(lambda self: self[2])


@dataclass
class ErgodicBoundReport:
    p: int
    k: int
    digamma_sum: float
    eigen_terms: float
    waterfill: np.ndarray = field(repr=False)
    bound_value: float
    mc_value: MCEstimate | None = None

    @property
    def dominates_mc(self):
        if self.mc_value is None:
            return None
        return self.bound_value >= self.mc_value.mean - 3 * self.mc_value.se


def learned_attack(model, s_xx):
    """Attack covariance ``H S_xx H^T`` from an estimated state covariance."""
    s = np.asarray(getattr(s_xx, "s_xx", s_xx), dtype=float)
    if s.shape != (model.n, model.n):
        raise ValueError(f"sample covariance is {s.shape}, expected {(model.n, model.n)}")
    cov = model.H @ s @ model.H.T
    return StealthAttack(1.0, 0.5 * (cov + cov.T))


def ergodic_cost(model, sigma_aa):
    """Information leakage plus detectability of one attack realization, in nats."""
    sigma_aa = np.asarray(getattr(sigma_aa, "sigma_aa", sigma_aa), dtype=float)
    shifted = sigma_aa + model.sigma2 * np.eye(model.m)
    return 0.5 * (float(np.trace(model.solve(sigma_aa))) - logdet_spd(shifted)
                  + logdet_spd(model.sigma_yy))


def ergodic_cost_mc(model, k, n_trials=1000, seed=None):
    """Average cost over independent ``k``-sample covariance estimates.

    Each estimate removes the sample mean, so it is ``W_n(k-1, Sigma_xx)/(k-1)``.
    Trials draw from independent child streams spawned from ``seed``.
    """
    if k < 2:
        raise ValueError("need at least two samples per estimate")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    costs = np.empty(n_trials)
    for i, child in enumerate(ss.spawn(n_trials)):
        states = sample_states(model.sigma_xx, k, np.random.default_rng(child))
        s = sample_covariance(states, center=True)
        costs[i] = ergodic_cost(model, learned_attack(model, s).sigma_aa)
    se = costs.std(ddof=1) / math.sqrt(n_trials) if n_trials > 1 else math.nan
    return MCEstimate(costs.mean(), se, n_trials)


def wishart_extreme_bounds(l, k):
    """Bounds on the mean extreme eigenvalues of ``W_l(k-1, I)/(k-1)``.

    Returns ``(lower bound on E[lambda_min], upper bound on E[lambda_max])``.
    """
    if k - 1 < 1 or l < 1:
        raise ValueError("need k - 1 >= 1 and l >= 1")
    r = math.sqrt(l / (k - 1))
    lo = (1 - r) ** 2 if l <= k - 1 else 0.0
    return lo, (1 + r) ** 2 + 1 / (k - 1)


def expected_logdet_wishart(p, k, field="real"):
    """``E log|W_p(k-1, I)/(k-1)|`` for real (default) or complex Gaussian samples."""
    dof = k - 1
    if dof < p:
        raise ValueError(f"k - 1 = {dof} must be at least p = {p}")
    i = np.arange(p)
    if field == "real":
        return float(np.sum(digamma((dof - i) / 2.0)) + p * math.log(2.0) - p * math.log(dof))
    if field == "complex":
        return float(np.sum(digamma(dof - i)) - p * math.log(dof))
    raise ValueError("field must be 'real' or 'complex'")


def _waterfill_objective(b, x):
    return float(np.sum(np.log(b + 1.0 / x)))


def waterfill_logdet(b, p, k):
    """Minimize ``sum log(b_i + 1/x_i)`` over ``sum x_i = p``, ``lo <= x_i <= hi``.

    The box comes from :func:`wishart_extreme_bounds`. Each free coordinate
    solves ``x (b x + 1) = 1/nu``; ``nu`` is found by bisection.
    """
    b = np.asarray(b, dtype=float)
    if b.shape != (p,) or np.any(b <= 0):
        raise ValueError("b must hold p positive values")
    lo, hi = wishart_extreme_bounds(p, k)
    if not (p * lo <= p <= p * hi):
        raise ValueError(f"box [{lo}, {hi}] cannot hold sum x = {p}")

    def x_of(nu):
        return np.clip((-1.0 + np.sqrt(1.0 + 4.0 * b / nu)) / (2.0 * b), lo, hi)

    # sum x_of(nu) decreases in nu
    nu_lo, nu_hi = 1e-12, 1.0
    while x_of(nu_hi).sum() > p:
        nu_hi *= 2.0
    while x_of(nu_lo).sum() < p and nu_lo > 1e-300:
        nu_lo *= 1e-3
    for _ in range(200):
        mid = math.sqrt(nu_lo * nu_hi) if nu_hi / nu_lo > 4 else 0.5 * (nu_lo + nu_hi)
        if x_of(mid).sum() > p:
            nu_lo = mid
        else:
            nu_hi = mid
        if nu_hi - nu_lo <= 1e-15 * nu_hi:
            break
    x = x_of(0.5 * (nu_lo + nu_hi))
    # the clipped sum can miss p by rounding; spread the remainder over free coordinates
    free = (x > lo) & (x < hi)
    if free.any():
        x[free] += (p - x.sum()) / free.sum()
    return x


def ergodic_upper_bound(model, k, field="real", n_trials=None, seed=None):
    """Upper bound on the average cost of attacks learned from ``k`` samples.

    ``field="complex"`` uses the complex-Gaussian log-determinant expectation
    instead of the real one; only the real form is valid for real data.
    Passing ``n_trials`` also attaches a Monte Carlo estimate for comparison.
    """
    lam = eigh_desc(model.signal_cov, sign_convention=False)[0]
    p = numerical_rank(lam)
    if k - 1 < p:
        raise ValueError(f"k - 1 = {k - 1} is below the signal rank {p}")
    b = lam[:p] / model.sigma2
    x = waterfill_logdet(b, p, k)
    eigen_terms = _waterfill_objective(b, x)
    digamma_sum = expected_logdet_wishart(p, k, field)
    tr = float(np.trace(model.solve(model.signal_cov)))
    bound = 0.5 * (tr + logdet_spd(model.sigma_yy) - model.m * math.log(model.sigma2)
                   - digamma_sum - eigen_terms)
    mc = ergodic_cost_mc(model, k, n_trials, seed) if n_trials else None
    return ErgodicBoundReport(p, k, digamma_sum, eigen_terms, x, bound, mc)
