import math

import numpy as np
import pytest
from scipy.special import erfc, erfcinv

from gridsec import build_model
from gridsec.detattack import (AttackVector, NoSolutionError, NullAttackOptimal, g_matrix,
                               kkt_residuals, max_distortion_attack, min_detect_attack_large_tau,
                               min_detect_attack_small_tau, min_detection_directions)
from gridsec.detection import prob_not_detected
from gridsec.estimation import excess_distortion
from gridsec.linalg import psd_sqrt
import oracles


def test_g_matrix_structure(ieee14):
    gm = g_matrix(ieee14)
    np.testing.assert_allclose(gm.g, gm.g.T, atol=1e-12)
    assert np.all(np.diff(gm.eigvals) <= 1e-12)
    assert gm.rank == np.linalg.matrix_rank(ieee14.H) == 13


def test_min_detection_directions(ieee14):
    vecs = min_detection_directions(ieee14, math.e)
    assert len(vecs) == 2 * ieee14.m
    for v in vecs:
        assert ieee14.quad_inv(v.a) == pytest.approx(2.0, abs=1e-9)
        assert v.info["pnd"] == pytest.approx(0.5 * erfc(1.0), rel=1e-9)
    with pytest.raises(NullAttackOptimal):
        min_detection_directions(ieee14, 1.0)


def test_min_detection_directions_grid_oracle(two_bus):
    tau = 2.0
    best = min_detection_directions(two_bus, tau)[0].info["pnd"]
    rng = np.random.default_rng(0)
    d = rng.standard_normal((20000, 4))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    root = psd_sqrt(two_bus.sigma_yy)
    for r in np.linspace(0.05, 3.0, 60):
        a = r * d @ root
        pnd = [prob_not_detected(two_bus, v, tau) for v in a[:200]]
        assert max(pnd) <= best + 1e-6


def test_small_tau_two_bus(two_bus):
    v = min_detect_attack_small_tau(two_bus, 1.0)
    assert excess_distortion(two_bus, v.a) == pytest.approx(1.0, rel=1e-8)
    gm = g_matrix(two_bus)
    shape = gm.direction(0)
    assert abs(v.a @ shape) == pytest.approx(np.linalg.norm(v.a) * np.linalg.norm(shape))
    x = 1.0 / gm.eigvals[0]
    assert v.info["pnd"] == pytest.approx(0.5 * erfc((x / 2) / math.sqrt(2 * x)), rel=1e-12)
    assert v.info["pnd_closed_form"] == pytest.approx(v.info["pnd"], rel=1e-12)
    v4 = min_detect_attack_small_tau(two_bus, 4.0)
    assert np.linalg.norm(v4.a) == pytest.approx(2 * np.linalg.norm(v.a), rel=1e-12)


def test_small_tau_beats_optimizer(three_bus):
    for tau in (0.5, 1.0):
        v = min_detect_attack_small_tau(three_bus, 1.0, tau)
        assert v.info["pnd"] >= oracles.best_min_detection(three_bus, 1.0, tau) - 1e-6


def test_small_tau_kkt(ieee14):
    d0 = 3.0
    v = min_detect_attack_small_tau(ieee14, d0)
    stat, cons, gamma = kkt_residuals(ieee14, v.a, d0)
    assert stat < 1e-8 and cons < 1e-8
    assert gamma == pytest.approx(1.0 / g_matrix(ieee14).eigvals[0], rel=1e-8)
    assert v.info["multiplier"] == pytest.approx(gamma, rel=1e-8)
    stat, _, _ = kkt_residuals(ieee14, v.a, d0, multiplier=gamma)
    assert stat < 1e-8


def test_small_tau_errors(two_bus):
    zero = build_model(np.zeros((4, 1)), np.eye(1), 1.0)
    with pytest.raises(ValueError):
        min_detect_attack_small_tau(zero, 1.0)
    with pytest.raises(ValueError):
        min_detect_attack_small_tau(two_bus, 1.0, tau=2.0)
    with pytest.raises(ValueError):
        min_detect_attack_small_tau(two_bus, 0.0)


def test_large_tau_branches(three_bus):
    tau = 2.0
    gm = g_matrix(three_bus)
    big = 1e3 * gm.eigvals[0]
    for rule in ("optimal", "two-branch"):
        v = min_detect_attack_large_tau(three_bus, big, tau, rule=rule)
        assert v.info["index"] == 0
        assert excess_distortion(three_bus, v.a) == pytest.approx(big, rel=1e-9)
        tiny = min_detect_attack_large_tau(three_bus, 1e-9, tau, rule=rule)
        assert three_bus.quad_inv(tiny.a) == pytest.approx(2 * math.log(tau), rel=1e-9)


def _two_branch_candidates(model, d0, tau):
    """Enumerate sign x index candidates that meet the distortion floor strictly above 2 log tau."""
    gm = g_matrix(model)
    out = []
    for k in range(gm.rank):
        x = d0 / gm.eigvals[k]
        if x > 2 * math.log(tau):
            for s in (1, -1):
                out.append((x, k, s * math.sqrt(x) * gm.direction(k)))
    return out


def test_two_branch_selection_brute_force(three_bus):
    tau = 2.0
    gm = g_matrix(three_bus)
    d0 = 2 * math.log(tau) * gm.eigvals[gm.rank - 1] * 1.5
    v = min_detect_attack_large_tau(three_bus, d0, tau, rule="two-branch")
    cands = _two_branch_candidates(three_bus, d0, tau)
    x_best, k_best, _ = min(cands, key=lambda c: (c[0], c[1]))
    assert v.info["index"] == k_best
    assert three_bus.quad_inv(v.a) == pytest.approx(x_best, rel=1e-9)


def test_large_tau_optimal_beats_optimizer(three_bus):
    tau = 2.0
    gm = g_matrix(three_bus)
    for d0 in (0.1, 2 * math.log(tau) * gm.eigvals[gm.rank - 1] * 1.5, 5.0 * gm.eigvals[0]):
        v = min_detect_attack_large_tau(three_bus, d0, tau)
        assert excess_distortion(three_bus, v.a) >= d0 * (1 - 1e-12)
        assert v.info["pnd"] >= oracles.best_min_detection(three_bus, d0, tau) - 1e-6
        two = min_detect_attack_large_tau(three_bus, d0, tau, rule="two-branch")
        assert v.info["pnd"] >= two.info["pnd"] - 1e-15


def test_large_tau_converges_to_small_tau(ieee14):
    d0 = 2.0
    ref = min_detect_attack_small_tau(ieee14, d0).a
    for tau in (1 + 1e-3, 1 + 1e-6, 1 + 1e-9):
        a = min_detect_attack_large_tau(ieee14, d0, tau).a
        np.testing.assert_allclose(a, ref, atol=1e-6)


def test_large_tau_errors(three_bus):
    with pytest.raises(ValueError):
        min_detect_attack_large_tau(three_bus, 1.0, 1.0)
    with pytest.raises(ValueError):
        min_detect_attack_large_tau(three_bus, 1.0, 2.0, rule="nope")


def test_max_distortion_examples(three_bus):
    zero = max_distortion_attack(three_bus, 0.5, 1.0)
    assert not np.any(zero.a) and zero.info["pnd"] == 0.5
    v = max_distortion_attack(three_bus, 0.25, 1.0)
    gm = g_matrix(three_bus)
    np.testing.assert_allclose(v.a, 2 * math.sqrt(2) * erfcinv(0.5) * gm.direction(0),
                               rtol=1e-12)
    assert prob_not_detected(three_bus, v.a, 1.0) == pytest.approx(0.25, abs=1e-8)
    with pytest.raises(NoSolutionError, match="no solution exists"):
        max_distortion_attack(three_bus, 0.01, 100.0)
    with pytest.raises(ValueError):
        max_distortion_attack(three_bus, 0.7, 1.0)


@pytest.mark.parametrize("l0, tau", [(0.25, 1.0), (0.1, 2.0), (0.3, 0.5)])
def test_max_distortion_beats_optimizer(three_bus, l0, tau):
    v = max_distortion_attack(three_bus, l0, tau)
    assert v.info["pnd"] >= l0 - 1e-8
    assert v.info["distortion"] >= oracles.best_max_distortion(three_bus, l0, tau) - 1e-6


def test_sign_symmetry(ieee14):
    for v in (min_detect_attack_small_tau(ieee14, 1.0),
              min_detect_attack_large_tau(ieee14, 1.0, 3.0),
              max_distortion_attack(ieee14, 0.2, 1.2)):
        plus, minus = v.pair()
        np.testing.assert_array_equal(minus.a, -plus.a)
        assert prob_not_detected(ieee14, plus.a, 1.5) == prob_not_detected(ieee14, minus.a, 1.5)
        assert excess_distortion(ieee14, plus.a) == excess_distortion(ieee14, minus.a)


def test_budget_is_checked_not_enforced(two_bus):
    v = min_detect_attack_small_tau(two_bus, 100.0, budget=1.0)
    assert v.info["budget_violated"] and not v.within_budget
    assert excess_distortion(two_bus, v.a) == pytest.approx(100.0)
    assert min_detect_attack_small_tau(two_bus, 1e-4, budget=1.0).within_budget
    assert AttackVector(np.ones(3)).energy == 3.0


def test_degenerate_top_eigenvalue_flagged():
    model = build_model(np.eye(2), np.eye(2), 1.0)
    assert min_detect_attack_small_tau(model, 1.0).info["multiplicity"] == 2
