"""Arc-length statistics of Gaussian-process curves.

Closed forms and series for the mean and variance of the length of a GP
sample path, for scalar graphs and for curves in R^D built from a
coregionalized kernel, plus a Monte Carlo oracle to check them.
"""

from .arclength import (ArcLengthMoments, Interval, Method, RhoPolicy, SeriesPolicy,
                        posterior_mean_1d, posterior_mean_nd, posterior_moments_1d,
                        posterior_moments_nd, posterior_second_moment_nd, prior_mean_1d,
                        prior_mean_nd, prior_moments_1d, prior_moments_nd,
                        prior_second_moment_nd, prior_variance_nd)
from .gp import (GpPosterior, Observations, SingularModelError, fit, posterior_cov,
                 posterior_deriv_cov, posterior_deriv_mean, posterior_mean,
                 read_observations, sample_paths)
from .integrand import (GammaParams, Integrand1D, NakagamiParams, cdf_1d, fit_gamma,
                        gamma_to_nakagami, mean_1d, nakagami_from_normal,
                        nakagami_mixed_moment, nakagami_moments, nakagami_pdf, pdf_1d,
                        quadratic_form_moments)
from .kernels import CoregionalizedKernel, Family, KernelSpec
from .mc import LengthMode, McReport, empirical_arclength, histogram, path_length
from .quadrature import QuadratureSpec, QuadResult, gauss_legendre, integrate_1d, integrate_2d
from .specfun import ConvergenceError

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
