"""Decentralized injection game: shared utility, best responses, and equilibria.

Every attacker controls the injections on its own sensor set and all of them
maximize the same function ``phi(a) = P_ND(a) * distortion(a)``, so the game
is a potential game and sequential best responses never decrease ``phi``.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.special import erfc, erfcx

from .detection import pnd_from_quadratic
from .detattack import g_matrix
from .estimation import excess_distortion


class SolverWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class AttackPartition:
    """Disjoint sensor sets, one per attacker, with squared-norm budgets."""

    sets: tuple
    budgets: tuple

    def __post_init__(self):
        sets = tuple(tuple(sorted(int(i) for i in s)) for s in self.sets)
        budgets = tuple(float(e) for e in self.budgets)
        object.__setattr__(self, "sets", sets)
        object.__setattr__(self, "budgets", budgets)
        if len(sets) != len(budgets):
            raise ValueError(f"{len(sets)} sensor sets but {len(budgets)} budgets")
        if any(len(s) == 0 for s in sets):
            raise ValueError("every attacker needs at least one sensor")
        if any(not (0 <= e < math.inf) for e in budgets):
            raise ValueError("budgets must be finite and non-negative")
        flat = [i for s in sets for i in s]
        if len(flat) != len(set(flat)):
            raise ValueError("sensor sets overlap")

    @property
    def n_attackers(self):
        return len(self.sets)

    def check_covers(self, m):
        flat = sorted(i for s in self.sets for i in s)
        if flat != list(range(m)):
            raise ValueError(f"sensor sets must partition 0..{m - 1}")

    @classmethod
    def even(cls, m, k, budget):
        chunks = np.array_split(np.arange(m), k)
        return cls(tuple(tuple(c) for c in chunks), (budget,) * k)


@dataclass(frozen=True, eq=False)
class GameState:
    attacks: tuple
    round: int = 0

    @property
    def total(self):
        return np.sum(self.attacks, axis=0)


@dataclass(frozen=True)
class SolverConfig:
    n_starts: int = 8
    max_iter: int = 2000
    xtol: float = 1e-12
    seed: int = 0


def utility(model, a, tau):
    """Non-detection probability times excess distortion; zero at the null attack."""
    a = np.asarray(a, dtype=float)
    x = model.quad_inv(a)
    if x <= 0:
        return 0.0
    return pnd_from_quadratic(x, tau) * excess_distortion(model, a)


def utility_gradient(model, a, tau):
    a = np.asarray(a, dtype=float)
    s_a = model.solve(a)
    x = float(a @ s_a)
    if x <= 0:
        return np.zeros_like(a)
    c = model.mmse_m @ a
    d = float(c @ c)
    log_tau = math.log(tau)
    g = (0.5 * x + log_tau) / math.sqrt(2.0 * x)
    mtm_a = model.mmse_m.T @ c
    beta = d * math.exp(-g * g) * (0.5 - log_tau / x) / (math.sqrt(2.0 * math.pi * x))
    return float(erfc(g)) * mtm_a - beta * s_a


def _embed(m, idx, values):
    out = np.zeros(m)
    out[list(idx)] = values
    return out


def _project(v, radius):
    nrm = np.linalg.norm(v)
    return v if nrm <= radius else v * (radius / nrm)


def _canonical_sign(*vectors):
    for v in vectors:
        nz = np.flatnonzero(v)
        if nz.size:
            return -1.0 if v[nz[0]] < 0 else 1.0
    return 1.0


def _ascend(f, grad, x0, radius, max_iter, xtol):
    """Projected gradient ascent with Barzilai-Borwein steps and backtracking."""
    x = _project(x0, radius)
    fx, gx = f(x), grad(x)
    step = 1.0 / max(np.linalg.norm(gx), 1e-12) * max(radius, 1e-12)
    converged = False
    for _ in range(max_iter):
        for _ in range(60):
            x_new = _project(x + step * gx, radius)
            f_new = f(x_new)
            # sufficient increase along the projected arc
            if f_new >= fx + 1e-4 * float(gx @ (x_new - x)) or np.linalg.norm(x_new - x) < xtol:
                break
            step *= 0.5
        else:
            converged = True
            break
        s = x_new - x
        if f_new < fx:
            converged = True
            break
        g_new = grad(x_new)
        yv = g_new - gx
        x, fx, gx = x_new, f_new, g_new
        if np.linalg.norm(s) <= xtol * max(1.0, np.linalg.norm(x)):
            converged = True
            break
        sy = float(s @ yv)
        step = float(s @ s) / -sy if sy < 0 else 2.0 * step
        step = min(max(step, 1e-12), 1e12)
    return x, fx, converged


def best_response(model, partition, k, a_minus_k, tau, solver_cfg=None, start=None):
    """Attacker ``k``'s utility-maximizing injection given the others' injections.

    Returns ``(a_k, info)`` where ``a_k`` is a full-length vector supported on
    the attacker's sensors. Multistart candidates are the given start, scaled
    top eigen-directions of the restricted distortion operator, and random
    points; the start wins ties so a converged state stays put.
    """
    cfg = solver_cfg or SolverConfig()
    idx = list(partition.sets[k])
    radius = math.sqrt(partition.budgets[k])
    m = model.m
    a_minus_k = np.asarray(a_minus_k, dtype=float)
    if np.any(a_minus_k[idx]):
        raise ValueError("a_minus_k must vanish on the attacker's own sensors")
    x0 = np.zeros(len(idx)) if start is None else np.asarray(start, dtype=float)
    if x0.shape[0] == m:
        x0 = x0[idx]

    # solve in a sign-canonical frame so that mirrored inputs give mirrored outputs
    sign = _canonical_sign(a_minus_k, _embed(m, idx, x0))
    base = sign * a_minus_k
    x0 = sign * x0

    def f(v):
        return utility(model, base + _embed(m, idx, v), tau)

    def grad(v):
        return utility_gradient(model, base + _embed(m, idx, v), tau)[idx]

    starts = [x0]
    if radius > 0:
        mm = model.mmse_m[:, idx]
        w, vecs = np.linalg.eigh(mm.T @ mm)
        for j in range(min(2, len(idx))):
            u = vecs[:, -1 - j]
            u = u if u[np.flatnonzero(np.abs(u) > 1e-12)[0]] > 0 else -u
            starts += [radius * u, 0.5 * radius * u]
        rng = np.random.default_rng(cfg.seed)
        while len(starts) < cfg.n_starts:
            d = rng.standard_normal(len(idx))
            starts.append(radius * rng.uniform(0.2, 1.0) * d / np.linalg.norm(d))

    best, best_f, best_conv = None, -math.inf, False
    for j, s in enumerate(starts):
        v, fv, conv = _ascend(f, grad, s, radius, cfg.max_iter, cfg.xtol)
        if j == 0:
            best, best_f, best_conv = v, fv, conv
        elif fv > best_f + 1e-12 * max(abs(best_f), 1e-300):
            best, best_f, best_conv = v, fv, conv
    if not best_conv:
        warnings.warn("best response did not converge; returning best iterate",
                      SolverWarning, stacklevel=2)
    return sign * _embed(m, idx, best), {"utility": best_f, "converged": best_conv}


def run_brd(model, partition, tau, init=None, max_rounds=1000, tol=1e-8, solver_cfg=None):
    """Round-robin best-response dynamics.

    Returns ``(states, trace)``: the state after each round (round 0 is the
    initial one) and rows ``(round, attacker, utility, norm_of_total_attack)``.
    """
    partition.check_covers(model.m)
    m = model.m
    a = np.zeros(m) if init is None else np.array(init, dtype=float)
    parts = [_embed(m, s, a[list(s)]) for s in partition.sets]
    for k, s in enumerate(partition.sets):
        nrm = np.linalg.norm(parts[k])
        if nrm > math.sqrt(partition.budgets[k]) * (1 + 1e-12):
            raise ValueError(f"initial injection of attacker {k} exceeds its budget")
    states = [GameState(tuple(p.copy() for p in parts), 0)]
    trace = []
    for rnd in range(1, max_rounds + 1):
        change = 0.0
        for k, s in enumerate(partition.sets):
            others = np.sum(parts[:k] + parts[k + 1:], axis=0) if len(parts) > 1 else np.zeros(m)
            new, _ = best_response(model, partition, k, others, tau, solver_cfg, start=parts[k])
            change = max(change, float(np.linalg.norm(new - parts[k])))
            parts[k] = new
            total = np.sum(parts, axis=0)
            trace.append((rnd, k, utility(model, total, tau), float(np.linalg.norm(total))))
        states.append(GameState(tuple(p.copy() for p in parts), rnd))
        # a lone attacker faces fixed opponents, so one response is already a fixed point
        if change < tol or len(parts) == 1:
            break
    else:
        warnings.warn(f"best-response dynamics still moving after {max_rounds} rounds",
                      SolverWarning, stacklevel=2)
    return states, trace


@dataclass
class NEReport:
    passed: bool
    max_gain: float
    gains: list
    residuals: list
    best_deviation: np.ndarray = field(repr=False, default=None)


def verify_ne(model, partition, state, tau, n_probes=1000, tol=1e-6, seed=0):
    """Check that no unilateral deviation raises the utility by more than ``tol``.

    Probes per attacker: uniform points of its budget ball, small local
    perturbations, and one projected-gradient step. The projected-gradient
    stationarity residual is reported alongside.
    """
    attacks = [np.asarray(p, dtype=float) for p in getattr(state, "attacks", state)]
    total = np.sum(attacks, axis=0)
    sign = _canonical_sign(total)
    base_f = utility(model, total, tau)
    rng = np.random.default_rng(seed)
    gains, residuals = [], []
    best_gain, best_dev = -math.inf, None
    for k, idx in enumerate(partition.sets):
        idx = list(idx)
        radius = math.sqrt(partition.budgets[k])
        others = total - attacks[k]
        own = attacks[k][idx]
        n = len(idx)
        d = rng.standard_normal((n_probes, n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = radius * rng.uniform(size=(n_probes, 1)) ** (1.0 / n)
        half = n_probes // 2
        probes = sign * d * r
        # second half: local perturbations at shrinking scales
        scales = radius * np.logspace(-6, -1, n_probes - half)[:, None]
        probes[half:] = [_project(own + sign * s * v, radius)
                         for s, v in zip(scales, d[half:])]
        g = utility_gradient(model, total, tau)[idx]
        step = radius / max(np.linalg.norm(g), 1e-300) * 1e-3
        probes = np.vstack([probes, [_project(own + step * g, radius)]])
        gain = max(utility(model, others + _embed(model.m, idx, p), tau) - base_f for p in probes)
        gains.append(gain)
        residuals.append(float(np.linalg.norm(_project(own + g, radius) - own)))
        if gain > best_gain:
            j = int(np.argmax([utility(model, others + _embed(model.m, idx, p), tau)
                               for p in probes]))
            best_gain, best_dev = gain, (k, _embed(model.m, idx, probes[j]))
    return NEReport(best_gain <= tol, best_gain, gains, residuals, best_dev)


@dataclass(frozen=True, eq=False)
class StationaryPoint:
    k: int
    w: float
    a: np.ndarray


def _root_function(w, tau):
    log_tau = math.log(tau)
    g = (0.5 * w * w + log_tau) / (math.sqrt(2.0) * w)
    return w * (0.5 - log_tau / (w * w)) / (math.sqrt(2.0 * math.pi) * float(erfcx(g))) - 1.0


def enumerate_stationary_attacks(model, tau, w_grid=None):
    """Interior stationary points ``a = w Sigma_yy^{1/2} u_k`` of the utility.

    Along each eigen-direction ``u_k`` of the whitened distortion operator the
    gradient vanishes exactly when a scalar equation in ``w`` holds; that
    equation does not involve the eigenvalue, so every direction shares the
    same roots. Roots are bracketed by a sign scan over ``w_grid`` and refined
    by bisection to 1e-10. Both signs of ``w`` are returned.
    """
    if w_grid is None:
        w_grid = np.logspace(-3, 3, 600)
    w_grid = np.sort(np.asarray(w_grid, dtype=float))
    if w_grid[0] <= 0:
        raise ValueError("w grid must be positive")
    vals = np.array([_root_function(w, tau) for w in w_grid])
    roots = []
    for lo, hi, flo, fhi in zip(w_grid[:-1], w_grid[1:], vals[:-1], vals[1:]):
        if flo == 0:
            roots.append(lo)
        elif flo * fhi < 0:
            while hi - lo > 1e-10 * max(1.0, hi):
                mid = 0.5 * (lo + hi)
                fm = _root_function(mid, tau)
                if (fm < 0) == (flo < 0):
                    lo, flo = mid, fm
                else:
                    hi = mid
            roots.append(0.5 * (lo + hi))
    if not roots:
        warnings.warn("no sign change on the w grid; every eigen-direction is unresolved",
                      SolverWarning, stacklevel=2)
    gm = g_matrix(model)
    out = []
    for k in range(gm.rank):
        shape = gm.direction(k)
        for w in roots:
            out.append(StationaryPoint(k, w, w * shape))
            out.append(StationaryPoint(k, -w, -w * shape))
    return out
