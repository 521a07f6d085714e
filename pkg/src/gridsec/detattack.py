"""Closed-form deterministic injections against the MMSE estimator.

All constructions live in the whitened coordinates ``a = Sigma_yy^{1/2} v``,
where detectability is ``|v|^2`` and distortion is ``v^T G v``.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.special import erfc, erfcinv

from .detection import pnd_from_quadratic
from .estimation import excess_distortion
from .linalg import eigh_desc, numerical_rank, psd_inv_sqrt, psd_sqrt


class NullAttackOptimal(ValueError):
    """For tau <= 1 every nonzero injection is detected more often than no injection."""


class NoSolutionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AttackVector:
    a: np.ndarray
    budget: float | None = None
    info: dict = field(default_factory=dict)

    @property
    def energy(self):
        return float(self.a @ self.a)

    @property
    def within_budget(self):
        return self.budget is None or self.energy <= self.budget

    def __neg__(self):
        return AttackVector(-self.a, self.budget, dict(self.info))

    def pair(self):
        """The ``(+a, -a)`` pair; both have the same detection and distortion."""
        return self, -self

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.a, dtype=dtype)


@dataclass(frozen=True, eq=False)
class GMatrix:
    """Distortion operator in whitened measurement coordinates."""

    g: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    sqrt_yy: np.ndarray

    @property
    def rank(self):
        return numerical_rank(self.eigvals)

    @property
    def top_multiplicity(self):
        top = self.eigvals[0]
        return int(np.sum(np.abs(self.eigvals - top) <= 1e-9 * max(abs(top), 1e-300)))

    def direction(self, k=0):
        """``Sigma_yy^{1/2} u_k``: an attack shape with unit detectability."""
        return self.sqrt_yy @ self.eigvecs[:, k]


def g_matrix(model):
    inv_sqrt = psd_inv_sqrt(model.sigma_yy)
    b = inv_sqrt @ model.H @ model.sigma_xx
    g = b @ b.T
    g = 0.5 * (g + g.T)
    w, v = eigh_desc(g)
    w = np.clip(w, 0.0, None)
    return GMatrix(g, w, v, psd_sqrt(model.sigma_yy))


def _finish(model, a, tau, budget, **info):
    a = np.asarray(a, dtype=float)
    x = model.quad_inv(a)
    info.setdefault("pnd", pnd_from_quadratic(x, tau) if x > 0 else _null_pnd(tau))
    info["distortion"] = excess_distortion(model, a)
    info["quadratic"] = x
    out = AttackVector(a, budget, info)
    if budget is not None:
        out.info["budget_violated"] = not out.within_budget
    return out


def _null_pnd(tau):
    # limit of the non-detection probability as the injection shrinks to zero
    return 1.0 if tau < 1 else (0.5 if tau == 1 else 0.0)


def min_detection_directions(model, tau, budget=None):
    """All ``2m`` injections with quadratic form ``2 log tau``, the most stealthy size."""
    if tau <= 1:
        raise NullAttackOptimal("tau <= 1: the null attack maximizes non-detection")
    w, v = eigh_desc(model.sigma_yy)
    out = []
    for k in range(model.m):
        a = math.sqrt(w[k] * 2.0 * math.log(tau)) * v[:, k]
        vec = _finish(model, a, tau, budget, eig_index=k)
        out.extend(vec.pair())
    return out


def _require_distortion(gm, d0):
    if not d0 > 0:
        raise ValueError("distortion floor must be positive")
    if gm.eigvals[0] <= 0:
        raise ValueError("Jacobian is zero: no injection distorts the estimate")


def min_detect_attack_small_tau(model, d0, tau=1.0, budget=None):
    """Least-detectable injection reaching distortion ``d0`` when ``tau <= 1``."""
    if tau > 1:
        raise ValueError("this construction covers tau <= 1; use min_detect_attack_large_tau")
    gm = g_matrix(model)
    _require_distortion(gm, d0)
    lam = gm.eigvals[0]
    a = math.sqrt(d0 / lam) * gm.direction(0)
    x = d0 / lam
    pnd = 0.5 * float(erfc((0.5 * x + math.log(tau)) / math.sqrt(2.0 * x)))
    return _finish(model, a, tau, budget, pnd_closed_form=pnd, multiplier=1.0 / lam,
                   multiplicity=gm.top_multiplicity)


def min_detect_attack_large_tau(model, d0, tau, budget=None, rule="optimal"):
    """Least-detectable injection reaching distortion ``d0`` when ``tau > 1``.

    ``rule="optimal"`` places the injection on the top distortion direction
    with quadratic form ``max(2 log tau, d0 / lambda_1)``, which is the exact
    optimum because non-detection is unimodal in the quadratic form with peak
    at ``2 log tau``. ``rule="two-branch"`` reproduces the eigen-index selection
    that, when ``d0 >= 2 log tau * lambda_r``, picks the feasible index with the
    smallest ``d0 / lambda_k > 2 log tau``; in the regime
    ``lambda_r <= d0 / (2 log tau) < lambda_1`` it is not optimal.
    """
    if tau <= 1:
        raise ValueError("this construction covers tau > 1; use min_detect_attack_small_tau")
    gm = g_matrix(model)
    _require_distortion(gm, d0)
    two_log = 2.0 * math.log(tau)
    lams = gm.eigvals[:gm.rank]
    if rule == "optimal":
        x = max(two_log, d0 / lams[0])
        return _finish(model, math.sqrt(x) * gm.direction(0), tau, budget, index=0,
                       multiplicity=gm.top_multiplicity)
    if rule != "two-branch":
        raise ValueError(f"unknown rule {rule!r}")
    if d0 / (two_log * lams[-1]) >= 1:
        ratios = d0 / lams
        feasible = np.flatnonzero(ratios > two_log)
        if feasible.size == 0:
            raise NoSolutionError(
                f"no eigen-index with d0/lambda_k > 2 log tau (d0={d0}, "
                f"lambda range [{lams[-1]:.6g}, {lams[0]:.6g}], 2 log tau={two_log:.6g})")
        # argmin over feasible ratios; np.argmin keeps the smallest index on ties
        k = int(feasible[np.argmin(ratios[feasible])])
        a = math.sqrt(ratios[k]) * gm.direction(k)
    else:
        k = 0
        a = math.sqrt(two_log) * gm.direction(0)
    return _finish(model, a, tau, budget, index=k, multiplicity=gm.top_multiplicity)


def max_distortion_attack(model, l0_prime, tau, budget=None):
    """Largest-distortion injection keeping non-detection probability at least ``l0_prime``."""
    if not 0 < l0_prime <= 0.5:
        raise ValueError("non-detection floor must lie in (0, 1/2]")
    l0 = float(erfcinv(2.0 * l0_prime))
    disc = 2.0 * l0 * l0 - 2.0 * math.log(tau)
    if disc < 0:
        raise NoSolutionError(
            f"no solution exists: erfcinv(2 L0')^2 = {l0 * l0:.6g} < log tau = {math.log(tau):.6g}")
    scale = math.sqrt(2.0) * l0 + math.sqrt(disc)
    if scale < 0:
        raise NoSolutionError("no solution exists: the non-detection floor is unreachable")
    gm = g_matrix(model)
    a = scale * gm.direction(0)
    if scale == 0:
        a = np.zeros(model.m)
    return _finish(model, a, tau, budget, l0=l0, multiplicity=gm.top_multiplicity)


def kkt_residuals(model, a, d0, multiplier=None):
    """Residuals of the Lagrangian conditions for min ``a^T Sigma_yy^-1 a`` s.t. distortion ``>= d0``.

    Returns ``(stationarity, constraint, multiplier)``. The stationarity
    residual is relative to ``|Sigma_yy^-1 a|``, the constraint residual to ``d0``.
    When no multiplier is given the least-squares one is used.
    """
    a = np.asarray(a, dtype=float)
    s_a = model.solve(a)
    k_a = model.solve(model.H @ (model.sigma_xx @ (model.sigma_xx @ (model.H.T @ s_a))))
    if multiplier is None:
        multiplier = float(s_a @ k_a) / float(k_a @ k_a)
    grad = 2.0 * (s_a - multiplier * k_a)
    stationarity = float(np.linalg.norm(grad) / (2.0 * np.linalg.norm(s_a)))
    constraint = abs(excess_distortion(model, a) - d0) / d0
    return stationarity, constraint, multiplier
