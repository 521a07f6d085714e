import numpy as np
import pytest
from sklearn.base import clone

from gridsec.detection import Hypothesis, lrt_deterministic, lrt_stealth, prob_not_detected
from gridsec.estimation import estimate
from gridsec.estimators import LRTDetector, MMSEStateEstimator, StealthAttackTransformer
from gridsec.prior import sample_states
from gridsec.stealth import optimal_attack


def draw(model, count, seed):
    rng = np.random.default_rng(seed)
    x = sample_states(model.sigma_xx, count, rng)
    y = x @ model.H.T + np.sqrt(model.sigma2) * rng.standard_normal((count, model.m))
    return x, y


def test_mmse_with_known_statistics(ieee14):
    est = MMSEStateEstimator(ieee14.H, sigma2=ieee14.sigma2, state_cov=ieee14.sigma_xx)
    x, y = draw(ieee14, 20, 0)
    est.fit(y, x)
    np.testing.assert_allclose(est.coef_, ieee14.mmse_m, atol=1e-12)
    np.testing.assert_allclose(est.predict(y)[3], estimate(ieee14, y[3]), atol=1e-12)


def test_mmse_learned_from_data(three_bus):
    x, y = draw(three_bus, 200_000, 1)
    est = MMSEStateEstimator(three_bus.H).fit(y, x)
    np.testing.assert_allclose(est.coef_, three_bus.mmse_m, atol=0.01)
    assert est.score(y[:5000], x[:5000]) > 0.5


def test_mmse_sklearn_protocol(three_bus):
    est = MMSEStateEstimator(three_bus.H, sigma2=0.5)
    params = est.get_params()
    assert set(params) == {"H", "sigma2", "state_cov"}
    assert clone(est).sigma2 == 0.5
    with pytest.raises(Exception):
        est.predict(np.zeros((1, three_bus.m)))
    with pytest.raises(ValueError):
        est.fit(np.zeros((3, 2)), np.zeros((3, 2)))


def test_transformer_learns_attack(three_bus):
    x, _ = draw(three_bus, 100_000, 2)
    tr = StealthAttackTransformer(three_bus.H, lam=2.0, random_state=4).fit(x)
    ref = optimal_attack(three_bus, 2).sigma_aa
    assert np.abs(tr.attack_cov_ - ref).max() < 0.02
    y = np.zeros((5, three_bus.m))
    np.testing.assert_array_equal(tr.transform(y), tr.transform(y))
    assert clone(tr).get_params()["lam"] == 2.0
    with pytest.raises(ValueError):
        StealthAttackTransformer(three_bus.H, lam=0.5).fit(x)


def test_transformer_output_covariance(three_bus):
    x, _ = draw(three_bus, 5000, 3)
    tr = StealthAttackTransformer(three_bus.H, random_state=0).fit(x)
    out = tr.transform(np.zeros((200_000, three_bus.m)))
    emp = out.T @ out / out.shape[0]
    assert np.abs(emp - tr.attack_cov_).max() < 0.03 * np.abs(tr.attack_cov_).max()


def test_detector_matches_functional_deterministic(three_bus):
    a = np.array([0.5, -0.2, 0.3, 0.0, 0.1, -0.4, 0.2, 0.05, 0.3][:three_bus.m])
    det = LRTDetector(three_bus.H, three_bus.sigma_xx, three_bus.sigma2, tau=1.5, attack=a).fit()
    _, y = draw(three_bus, 50, 5)
    y = y + a
    want = [lrt_deterministic(three_bus, row, a, 1.5).decision is Hypothesis.H1 for row in y]
    np.testing.assert_array_equal(det.predict(y), np.array(want, dtype=int))


def test_detector_matches_functional_stealth(three_bus):
    cov = optimal_attack(three_bus, 1).sigma_aa
    det = LRTDetector(three_bus.H, three_bus.sigma_xx, three_bus.sigma2, tau=2.0,
                      attack_cov=cov).fit()
    _, y = draw(three_bus, 50, 6)
    lr = det.log_ratio(y)
    for row, val in zip(y, lr):
        res = lrt_stealth(three_bus, cov, row, 2.0)
        assert val == pytest.approx(res.log_ratio, rel=1e-10, abs=1e-12)
    np.testing.assert_array_equal(det.classes_, [0, 1])


def test_detector_rate_matches_pnd(three_bus):
    a = 0.8 * three_bus.H[:, 0]
    det = LRTDetector(three_bus.H, three_bus.sigma_xx, three_bus.sigma2, tau=1.2, attack=a).fit()
    _, y = draw(three_bus, 200_000, 7)
    missed = 1 - det.predict(y + a).mean()
    p = prob_not_detected(three_bus, a, 1.2)
    assert abs(missed - p) < 4 * np.sqrt(p * (1 - p) / y.shape[0])


def test_detector_validation(three_bus):
    base = dict(H=three_bus.H, state_cov=three_bus.sigma_xx, sigma2=0.5)
    with pytest.raises(ValueError):
        LRTDetector(**base).fit()
    with pytest.raises(ValueError):
        LRTDetector(**base, attack=np.ones(three_bus.m), attack_cov=np.eye(three_bus.m)).fit()
    with pytest.raises(ValueError):
        LRTDetector(**base, tau=0, attack=np.ones(three_bus.m)).fit()
