"""Distributions of the arc-length integrand.

One output: Y = sqrt(1 + X^2) with X ~ N(mu, sigma^2) has a closed-form
density and a mean expressible as a series in U(l + 1/2, l + 2, 1/(2 sigma^2)).

Several outputs: W = |x| with x ~ N(mu, Sigma) is approximated by matching
the first two moments of Q = x^T x to a gamma law; sqrt of that gamma is a
Nakagami(m, Omega) variable.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

from .specfun import (SeriesResult, gamma_ratio_half, hyp_2f1_series, hyp_2f1_unit,
                      log_hyp_u)

logger = logging.getLogger(__name__)

SERIES_TOL = 1e-12
SERIES_MAX_TERMS = 500
# beyond this |mu| / sigma^2 the series terms grow too large before decaying
SERIES_RATIO_LIMIT = 30.0
_HERMITE_NODES = (100, 200)


# ---------------------------------------------------------------------------
# one output
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Integrand1D:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")


def pdf_1d(d: Integrand1D, y):
    """Density of sqrt(1 + X^2); zero for y <= 1."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    inside = y > 1.0
    yi = y[inside]
    r = np.sqrt((yi - 1.0) * (yi + 1.0))
    s2 = 2.0 * d.sigma**2
    dens = (np.exp(-(r + d.mu) ** 2 / s2) + np.exp(-(r - d.mu) ** 2 / s2))
    out[inside] = dens * yi / r / (math.sqrt(2.0 * math.pi) * d.sigma)
    return float(out) if out.ndim == 0 else out


def cdf_1d(d: Integrand1D, y):
    """P(Y <= y) = P(|X| <= sqrt(y^2 - 1))."""
    y = np.asarray(y, dtype=float)
    r = np.sqrt(np.clip((y - 1.0) * (y + 1.0), 0.0, None))
    c = 1.0 / (math.sqrt(2.0) * d.sigma)
    out = 0.5 * (_sp.erf((r + d.mu) * c) + _sp.erf((r - d.mu) * c))
    out = np.where(y <= 1.0, 0.0, np.clip(out, 0.0, 1.0))
    return float(out) if out.ndim == 0 else out


def mean_1d_series(d: Integrand1D, tol: float = SERIES_TOL,
                   max_terms: int = SERIES_MAX_TERMS) -> SeriesResult:
    """E[Y] by the U-function series, summed in log space.

    E[Y] = exp(-mu^2 / 2 sigma^2) / (sqrt(2 pi) sigma)
           * sum_l Gamma(l + 1/2) / (2l)! (mu / sigma^2)^(2l) U(l + 1/2, l + 2, 1 / 2 sigma^2)
    """
    mu, sigma = d.mu, d.sigma
    z = 0.5 / sigma**2
    log_pref = -mu * mu * z - math.log(math.sqrt(2.0 * math.pi) * sigma)
    log_terms = [math.lgamma(0.5) + log_hyp_u(0.5, 2.0, z)]
    if mu == 0.0:
        return SeriesResult(math.exp(log_pref + log_terms[0]), 1, True)
    # split logs so a subnormal mu / sigma^2 cannot underflow to log(0)
    log_ratio = 2.0 * (math.log(abs(mu)) - 2.0 * math.log(sigma))
    log_sum = log_terms[0]
    for ell in range(1, max_terms):
        lt = (math.lgamma(ell + 0.5) - math.lgamma(2 * ell + 1) + ell * log_ratio
              + log_hyp_u(ell + 0.5, ell + 2.0, z))
        log_sum = float(np.logaddexp(log_sum, lt))
        if lt < log_sum + math.log(tol):
            return SeriesResult(math.exp(log_pref + log_sum), ell + 1, True)
    return SeriesResult(math.exp(log_pref + log_sum), max_terms, False)


def mean_1d_quadrature(d: Integrand1D) -> tuple[float, float]:
    """E[sqrt(1 + X^2)] by Gauss-Hermite quadrature in the normal variable.

    Returns the value and the difference between 100- and 200-node rules.
    """
    vals = []
    for n in _HERMITE_NODES:
        x, w = np.polynomial.hermite_e.hermegauss(n)
        vals.append(float(np.dot(w, np.hypot(1.0, d.mu + d.sigma * x))) / math.sqrt(2 * math.pi))
    return vals[-1], abs(vals[-1] - vals[-2])


def mean_1d(d: Integrand1D, tol: float = SERIES_TOL,
            max_terms: int = SERIES_MAX_TERMS) -> float:
    """E[sqrt(1 + X^2)], X ~ N(mu, sigma^2).

    Uses the U-function series; falls back to direct quadrature when
    |mu| / sigma^2 exceeds 30 or the series does not converge.
    """
    if abs(d.mu) / d.sigma**2 <= SERIES_RATIO_LIMIT:
        res = mean_1d_series(d, tol, max_terms)
        if res.converged:
            return res.value
        logger.debug("mean_1d series not converged for %s after %d terms", d, res.terms_used)
    return mean_1d_quadrature(d)[0]


# ---------------------------------------------------------------------------
# several outputs: gamma / Nakagami moment matching
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GammaParams:
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError(f"gamma shape and scale must be > 0, got {self.shape}, {self.scale}")


@dataclass(frozen=True)
class NakagamiParams:
    """Nakagami(m, Omega); ``Omega = E[W^2]``.  m < 1/2 is allowed but flagged."""

    m: float
    omega: float

    def __post_init__(self):
        if not (self.m > 0 and self.omega > 0):
            raise ValueError(f"Nakagami m and omega must be > 0, got {self.m}, {self.omega}")

    @property
    def below_classical(self) -> bool:
        return self.m < 0.5


def _check_normal(mu, Sigma) -> tuple[np.ndarray, np.ndarray]:
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    mu = np.zeros(Sigma.shape[0]) if mu is None else np.atleast_1d(np.asarray(mu, dtype=float))
    if Sigma.shape != (mu.size, mu.size):
        raise ValueError(f"Sigma shape {Sigma.shape} does not match mean of length {mu.size}")
    if np.max(np.abs(Sigma - Sigma.T), initial=0.0) > 1e-10:
        raise ValueError("Sigma must be symmetric (within 1e-10)")
    return mu, 0.5 * (Sigma + Sigma.T)


def quadratic_form_moments(mu, Sigma) -> tuple[float, float]:
    """Mean and variance of Q = x^T x for x ~ N(mu, Sigma)."""
    mu, Sigma = _check_normal(mu, Sigma)
    mean = float(np.trace(Sigma) + mu @ mu)
    var = float(2.0 * np.sum(Sigma * Sigma) + 4.0 * mu @ Sigma @ mu)
    return mean, var


def fit_gamma(mean: float, variance: float) -> GammaParams:
    if not (mean > 0 and variance > 0):
        raise ValueError(f"fit_gamma needs positive mean and variance, got {mean}, {variance}")
    return GammaParams(mean * mean / variance, variance / mean)


def gamma_to_nakagami(g: GammaParams) -> NakagamiParams:
    """sqrt of Gamma(k, theta) is Nakagami(k, k theta)."""
    return NakagamiParams(g.shape, g.shape * g.scale)


def nakagami_from_normal(mu, Sigma) -> NakagamiParams:
    """Moment-matched Nakagami approximation of |x| for x ~ N(mu, Sigma)."""
    mu, Sigma = _check_normal(mu, Sigma)
    if not np.any(Sigma):
        raise ValueError("degenerate covariance: Sigma is identically zero")
    mean, var = quadratic_form_moments(mu, Sigma)
    return gamma_to_nakagami(fit_gamma(mean, var))


def nakagami_batch(mu: np.ndarray, Sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised (m, Omega) for stacks mu (M, n), Sigma (M, n, n)."""
    trace = np.einsum("mii->m", Sigma)
    omega = trace + np.einsum("mi,mi->m", mu, mu)
    var = 2.0 * np.einsum("mij,mij->m", Sigma, Sigma) + 4.0 * np.einsum("mi,mij,mj->m", mu, Sigma, mu)
    if np.any(omega <= 0) or np.any(var <= 0):
        raise ValueError("degenerate derivative distribution (zero covariance) encountered")
    return omega * omega / var, omega


def nakagami_pdf(p: NakagamiParams, x):
    """2 m^m / (Gamma(m) Omega^m) x^(2m-1) exp(-m x^2 / Omega), in log space."""
    x = np.asarray(x, dtype=float)
    m, om = p.m, p.omega
    with np.errstate(divide="ignore"):
        logp = (math.log(2.0) + m * math.log(m) - math.lgamma(m) - m * math.log(om)
                + (2.0 * m - 1.0) * np.log(x) - m * x * x / om)
    out = np.where(x > 0, np.exp(logp), 0.0)
    return float(out) if out.ndim == 0 else out


def nakagami_mean(m, omega):
    """Gamma(m + 1/2) / Gamma(m) sqrt(Omega / m); vectorised."""
    m = np.asarray(m, dtype=float)
    out = gamma_ratio_half(m) * np.sqrt(np.asarray(omega, dtype=float) / m)
    return float(out) if np.ndim(out) == 0 else out


def nakagami_moments(p: NakagamiParams) -> tuple[float, float]:
    mean = nakagami_mean(p.m, p.omega)
    return mean, p.omega - mean * mean


def nakagami_mixed_moment(p: NakagamiParams, rho: float) -> float:
    """E[W1 W2] for two Nakagami(m, Omega) variables whose underlying gamma
    variables have correlation ``rho``: E[W]^2 2F1(-1/2, -1/2; m; rho)."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    mean = nakagami_mean(p.m, p.omega)
    if rho == 1.0:
        return mean * mean * hyp_2f1_unit(-0.5, -0.5, p.m)
    res = hyp_2f1_series(-0.5, -0.5, p.m, rho)
    if not res.converged:
        logger.debug("2F1 series at rho=%g stopped after %d terms", rho, res.terms_used)
    return mean * mean * res.value


# ---------------------------------------------------------------------------
# sampling oracle for quadratic forms
# ---------------------------------------------------------------------------


def quadratic_form_sample_oracle(mu, Sigma, A=None, count: int = 100_000,
                                 seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Samples of x^T A x, drawn two independent ways.

    Returns ``(direct, eigen)``: ``direct`` from x ~ N(mu, Sigma) directly,
    ``eigen`` from sum_i lam_i (U_i + b_i)^2 with lam the eigenvalues of
    S^(1/2) A S^(1/2), P its eigenvectors and b = P^T S^(-1/2) mu.  The eigen
    form needs a full-rank Sigma.
    """
    mu, Sigma = _check_normal(mu, Sigma)
    n = mu.size
    A = np.eye(n) if A is None else np.asarray(A, dtype=float)
    if np.max(np.abs(A - A.T)) > 1e-10:
        raise ValueError("A must be symmetric")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))

    x = rng.multivariate_normal(mu, Sigma, size=count, method="eigh")
    direct = np.einsum("ki,ij,kj->k", x, A, x)

    w, V = np.linalg.eigh(Sigma)
    if w.min() <= 0:
        raise ValueError("eigen-form sampling needs a full-rank Sigma")
    root = (V * np.sqrt(w)) @ V.T
    inv_root = (V / np.sqrt(w)) @ V.T
    lam, P = np.linalg.eigh(root @ A @ root)
    b = P.T @ inv_root @ mu
    U = rng.standard_normal((count, n))
    eigen = ((U + b) ** 2) @ lam
    return direct, eigen
