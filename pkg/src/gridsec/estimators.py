"""scikit-learn compatible wrappers around the functional core."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .estimation import build_model
from .linalg import logdet_spd, psd_factor
from .prior import sample_covariance


class MMSEStateEstimator(RegressorMixin, BaseEstimator):
    """Linear MMSE estimate of grid states from measurements.

    ``fit(Y, X)`` takes measurement rows ``Y`` and the matching state rows
    ``X``. The state covariance is the zero-mean sample covariance of ``X``
    unless ``state_cov`` is given; the noise variance is ``sigma2`` or, when
    that is None, the mean squared residual ``Y - X H^T``.
    """

    def __init__(self, H=None, sigma2=None, state_cov=None):
        self.H = H
        self.sigma2 = sigma2
        self.state_cov = state_cov

    def fit(self, Y, X):
        H = np.asarray(self.H, dtype=float)
        Y = check_array(Y)
        X = check_array(X)
        if Y.shape[1] != H.shape[0] or X.shape[1] != H.shape[1]:
            raise ValueError(f"expected {H.shape[0]} measurements and {H.shape[1]} states")
        cov = self.state_cov
        if cov is None:
            cov = sample_covariance(X).s_xx
        sigma2 = self.sigma2
        if sigma2 is None:
            sigma2 = float(np.mean((Y - X @ H.T) ** 2))
        self.model_ = build_model(H, np.asarray(cov, dtype=float), sigma2)
        self.coef_ = self.model_.mmse_m
        self.n_features_in_ = H.shape[0]
        return self

    def predict(self, Y):
        check_is_fitted(self, "model_")
        Y = check_array(Y)
        return Y @ self.coef_.T


class StealthAttackTransformer(TransformerMixin, BaseEstimator):
    """Learns a Gaussian attack from state samples and adds it to measurements.

    The attack covariance is ``H S H^T / lam`` with ``S`` the sample covariance
    of the training states (mean removed when ``center`` is set).
    """

    def __init__(self, H=None, lam=1.0, center=True, random_state=None):
        self.H = H
        self.lam = lam
        self.center = center
        self.random_state = random_state

    def fit(self, X, y=None):
        if self.lam < 1:
            raise ValueError("lam must be >= 1")
        H = np.asarray(self.H, dtype=float)
        X = check_array(X)
        s = sample_covariance(X, center=self.center).s_xx
        cov = H @ s @ H.T / self.lam
        self.attack_cov_ = 0.5 * (cov + cov.T)
        self._factor = psd_factor(self.attack_cov_)
        self.n_features_in_ = H.shape[0]
        return self

    def transform(self, Y):
        check_is_fitted(self, "attack_cov_")
        Y = check_array(Y)
        rng = np.random.default_rng(self.random_state)
        noise = rng.standard_normal((Y.shape[0], self._factor.shape[1]))
        return Y + noise @ self._factor.T


class LRTDetector(ClassifierMixin, BaseEstimator):
    """Likelihood-ratio attack detector; label 1 means "attacked".

    With ``attack`` (a mean shift) the test is the deterministic one; with
    ``attack_cov`` it is the Gaussian stealth test. In both cases a ratio
    equal to ``tau`` is labelled as attacked. ``fit`` only validates input.
    """

    def __init__(self, H=None, state_cov=None, sigma2=1.0, tau=1.0, attack=None,
                 attack_cov=None):
        self.H = H
        self.state_cov = state_cov
        self.sigma2 = sigma2
        self.tau = tau
        self.attack = attack
        self.attack_cov = attack_cov

    def fit(self, Y=None, y=None):
        if (self.attack is None) == (self.attack_cov is None):
            raise ValueError("give exactly one of attack or attack_cov")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        self.model_ = build_model(self.H, self.state_cov, self.sigma2)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = self.model_.m
        if Y is not None:
            check_array(Y)
        if self.attack_cov is not None:
            cov = np.asarray(self.attack_cov, dtype=float)
            attacked = self.model_.sigma_yy + cov
            self._attacked_inv = np.linalg.inv(attacked)
            self._logdet_gap = 0.5 * (logdet_spd(self.model_.sigma_yy) - logdet_spd(attacked))
        return self

    def log_ratio(self, Y):
        """Log of the likelihood ratio in each test's own orientation."""
        check_is_fitted(self, "model_")
        Y = check_array(Y)
        model = self.model_
        if self.attack is not None:
            a = np.asarray(self.attack, dtype=float)
            s = model.solve(a)
            return 0.5 * float(a @ s) - Y @ s
        q_clean = np.einsum("ij,ij->i", Y, model.solve(Y.T).T)
        q_att = np.einsum("ij,ij->i", Y @ self._attacked_inv, Y)
        return self._logdet_gap + 0.5 * (q_clean - q_att)

    def decision_function(self, Y):
        """Non-negative values are classified as attacked."""
        lr = self.log_ratio(Y)
        log_tau = np.log(self.tau)
        return log_tau - lr if self.attack is not None else lr - log_tau

    def predict(self, Y):
        return (self.decision_function(Y) >= 0).astype(int)
