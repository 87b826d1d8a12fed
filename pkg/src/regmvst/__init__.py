"""Matrix-variate skew-t regression with damped exponential row correlation,
fitted by serial, synchronous-parallel and asynchronous ECME."""

from .dec import DecParams, dec_correlation, dec_grid
from .model import Dataset, EstimationError, Subject, Theta, observed_loglik
from .mvst import GigParams, MvstParams, gig_moments, gig_sample, mvst_logpdf, mvst_sample

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DecParams", "EstimationError", "GigParams", "MvstParams", "Subject", "Theta",
    "dec_correlation", "dec_grid", "gig_moments", "gig_sample", "mvst_logpdf", "mvst_sample",
    "observed_loglik",
]
