"""MMSE state estimation on DC power grids and data-injection attacks against it."""

from .grid import GridCase, Jacobian, build_jacobian, load_case, parse_case, parse_matpower
from .prior import sample_covariance, sample_states, sigma2_from_snr, toeplitz_prior
from .estimation import MeasurementModel, build_model, estimate, excess_distortion, injection_vector

__version__ = "0.1.0"


def model_for_case(case, rho=0.1, snr_db=10.0):
    """Convenience: Jacobian, Toeplitz prior and SNR-matched noise for a case name or path."""
    if not isinstance(case, GridCase):
        case = load_case(case)
    H = build_jacobian(case)
    prior = toeplitz_prior(H.shape[1], rho)
    return build_model(H, prior, sigma2_from_snr(H, prior, snr_db))
