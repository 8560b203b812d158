"""Moments of GP arc length over an interval [a, b].

One output uses the exact integrand mean of sqrt(1 + f'^2).  Several
outputs use the Nakagami approximation of |f'| and, for the second moment,
the correlated-Nakagami mixed moment expanded as a power series in the
gamma-level correlation rho.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .gp import GpPosterior
from .integrand import Integrand1D, mean_1d, nakagami_batch, nakagami_mean
from .kernels import CoregionalizedKernel, KernelSpec
from .quadrature import (QuadratureSpec, QuadResult, integrate_1d, nodes_on,
                         triangle_nodes)
from .specfun import bessel_k, gamma_fn, hyp_u

NO_1D_VARIANCE = "analytic-1d-variance-out-of-scope"


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError(f"interval needs b > a, got [{self.a}, {self.b}]")

    @property
    def length(self) -> float:
        return self.b - self.a


@dataclass(frozen=True)
class SeriesPolicy:
    """Truncation of the rho power series: stop when a term adds less than
    ``tol`` of the running sum, or after ``max_terms`` terms."""

    tol: float = 1e-10
    max_terms: int = 60


class Method(str, Enum):
    CLOSED_FORM = "closed_form"
    SERIES_PLUS_QUADRATURE = "series_plus_quadrature"
    MONTE_CARLO_FALLBACK = "monte_carlo_fallback"


class RhoPolicy(str, Enum):
    PRIOR_STATIONARY = "prior_stationary"
    POSTERIOR_NORMALIZED = "posterior_normalized"


@dataclass
class ArcLengthMoments:
    mean: float
    second_moment: float | None = None
    variance: float | None = None
    method: Method = Method.CLOSED_FORM
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "second_moment": self.second_moment,
            "variance": self.variance,
            "method": Method(self.method).value,
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class SecondMoment:
    value: float
    terms_used: int
    converged: bool
    quad_error: float
    last_term: float


def _vector_kernel(kernel) -> CoregionalizedKernel:
    if isinstance(kernel, KernelSpec):
        return CoregionalizedKernel(kernel)
    return kernel


def _clamp_variance(second: float, mean: float, diagnostics: dict) -> float:
    var = second - mean * mean
    if var < 0:
        diagnostics["variance_clamped"] = True
        diagnostics["raw_variance"] = var
        diagnostics["clamp_within_roundoff"] = bool(var >= -1e-8 * second)
        return 0.0
    diagnostics["variance_clamped"] = False
    return var


# ---------------------------------------------------------------------------
# one output
# ---------------------------------------------------------------------------


def prior_mean_1d(k: KernelSpec, iv: Interval, form: str = "bessel") -> float:
    """E[s] for a stationary zero-mean scalar GP.

    ``form="u"`` evaluates T Gamma(1/2) U(1/2, 2, 1/(2 s^2)) / (sqrt(2 pi) s);
    ``form="bessel"`` the equivalent
    T exp(w) [K0(w) + K1(w)] / (2 sqrt(2 pi) s) with w = 1/(4 s^2),
    where s^2 is the derivative-process variance.
    """
    s = math.sqrt(k.derivative_variance)
    if form == "u":
        val = gamma_fn(0.5) * hyp_u(0.5, 2.0, 0.5 / s**2) / (math.sqrt(2.0 * math.pi) * s)
    elif form == "bessel":
        w = 0.25 / s**2
        ksum = bessel_k(0, w, scaled=True) + bessel_k(1, w, scaled=True)
        val = ksum / (2.0 * math.sqrt(2.0 * math.pi) * s)
    else:
        raise ValueError(f"form must be 'u' or 'bessel', got {form!r}")
    return iv.length * val


def posterior_mean_1d(gp: GpPosterior, iv: Interval,
                      quad: QuadratureSpec | None = None) -> QuadResult:
    """E[s] for a scalar posterior: quadrature over t of E[sqrt(1 + f'(t)^2)]."""
    if gp.output_dim != 1:
        raise ValueError("posterior_mean_1d needs a scalar (D=1) GP")

    def integrand(t):
        mu, S, _ = gp.deriv_moments(t)
        mu = mu[:, 0]
        sd = np.sqrt(S[:, 0, 0])
        out = np.empty_like(mu)
        for j, (m_j, s_j) in enumerate(zip(mu, sd)):
            out[j] = math.hypot(1.0, m_j) if s_j == 0 else mean_1d(Integrand1D(m_j, s_j))
        return out

    return integrate_1d(integrand, iv.a, iv.b, quad)


def prior_moments_1d(k: KernelSpec, iv: Interval) -> ArcLengthMoments:
    return ArcLengthMoments(
        mean=prior_mean_1d(k, iv),
        method=Method.CLOSED_FORM,
        diagnostics={"variance_reason": NO_1D_VARIANCE,
                     "derivative_variance": k.derivative_variance})


def posterior_moments_1d(gp: GpPosterior, iv: Interval,
                         quad: QuadratureSpec | None = None) -> ArcLengthMoments:
    res = posterior_mean_1d(gp, iv, quad)
    return ArcLengthMoments(
        mean=res.value,
        method=Method.SERIES_PLUS_QUADRATURE,
        diagnostics={"variance_reason": NO_1D_VARIANCE,
                     "mean_quad_error": res.error,
                     "mean_quad_converged": res.converged,
                     "quad_nodes": res.nodes})


# ---------------------------------------------------------------------------
# several outputs, prior
# ---------------------------------------------------------------------------


def prior_nakagami(ck: CoregionalizedKernel) -> tuple[float, float]:
    """(m, Omega) of |f'(t)| under the prior, from Sigma_f' = B sigma_f'^2."""
    S = ck.derivative_cov()
    tr = float(np.trace(S))
    tr2 = float(np.sum(S * S))
    if tr <= 0:
        raise ValueError("zero derivative variance: B has zero trace")
    return tr * tr / (2.0 * tr2), tr


def prior_mean_nd(ck, iv: Interval) -> float:
    """T Gamma(m + 1/2) / Gamma(m) sqrt(Omega / m)."""
    m, omega = prior_nakagami(_vector_kernel(ck))
    return iv.length * nakagami_mean(m, omega)


def _mixed_coefficient_step(c_prev, n, m):
    # (-1/2)_n^2 / ((m)_n n!) from its predecessor
    return c_prev * (n - 1.5) ** 2 / (n * (m + n - 1.0))


def _sum_series(term_fn, policy: SeriesPolicy):
    """Sum term_fn(n) for n = 0, 1, ... under ``policy``.  term_fn returns a
    tuple of per-level values; the last entry drives the stopping rule."""
    totals = None
    n = 0
    last = None
    while n < policy.max_terms:
        vals = np.asarray(term_fn(n), dtype=float)
        totals = vals if totals is None else totals + vals
        last = vals[-1]
        n += 1
        if n > 1 and abs(last) < policy.tol * abs(totals[-1]):
            return totals, n, True, last
    return totals, n, False, last


def prior_second_moment_nd(ck, iv: Interval, quad: QuadratureSpec | None = None,
                           series: SeriesPolicy | None = None) -> SecondMoment:
    """E[s^2] = E[W]^2 sum_n (-1/2)_n^2 / ((m)_n n!) int int rho(t1 - t2)^n.

    Stationarity reduces the double integral to 2 int_0^T (T - tau) rho^n.
    """
    ck = _vector_kernel(ck)
    quad = quad or QuadratureSpec()
    series = series or SeriesPolicy()
    m, omega = prior_nakagami(ck)
    ew = nakagami_mean(m, omega)
    T = iv.length
    levels = []
    for n_nodes in quad.levels():
        tau, w = nodes_on(0.0, T, n_nodes)
        levels.append((2.0 * w * (T - tau), ck.scalar.derivative_correlation(tau)))
    state = {"c": 1.0, "pow": [np.ones_like(r) for _, r in levels]}

    def term(n):
        if n > 0:
            state["c"] = _mixed_coefficient_step(state["c"], n, m)
            state["pow"] = [p * r for p, (_, r) in zip(state["pow"], levels)]
        return [ew * ew * state["c"] * np.dot(wt, p) for (wt, _), p in zip(levels, state["pow"])]

    totals, used, ok, last = _sum_series(term, series)
    err = abs(totals[-1] - totals[-2]) if len(totals) > 1 else float("nan")
    return SecondMoment(float(totals[-1]), used, ok, err, float(last))


def prior_variance_nd(ck, iv: Interval, quad: QuadratureSpec | None = None,
                      series: SeriesPolicy | None = None) -> float:
    second = prior_second_moment_nd(ck, iv, quad, series).value
    return _clamp_variance(second, prior_mean_nd(ck, iv), {})


def prior_moments_nd(ck, iv: Interval, quad: QuadratureSpec | None = None,
                     series: SeriesPolicy | None = None) -> ArcLengthMoments:
    ck = _vector_kernel(ck)
    m, omega = prior_nakagami(ck)
    mean = prior_mean_nd(ck, iv)
    sm = prior_second_moment_nd(ck, iv, quad, series)
    diag = {"nakagami_m": m, "nakagami_omega": omega,
            "series_terms": sm.terms_used, "series_converged": sm.converged,
            "series_last_term": sm.last_term, "second_moment_quad_error": sm.quad_error,
            "nakagami_below_classical": m < 0.5}
    var = _clamp_variance(sm.value, mean, diag)
    return ArcLengthMoments(mean, sm.value, var, Method.SERIES_PLUS_QUADRATURE, diag)


# ---------------------------------------------------------------------------
# several outputs, posterior
# ---------------------------------------------------------------------------


def _nakagami_along(gp: GpPosterior, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    t = np.asarray(t, dtype=float)
    mu, S, clamped = gp.deriv_moments(t.ravel())
    m, omega = nakagami_batch(mu, S)
    return m.reshape(t.shape), omega.reshape(t.shape), clamped


def posterior_mean_nd(gp: GpPosterior, iv: Interval,
                      quad: QuadratureSpec | None = None) -> QuadResult:
    """int_a^b E[W(t)] dt with W(t) ~ Nakagami fitted to the posterior of f'(t)."""

    def integrand(t):
        m, omega, _ = _nakagami_along(gp, t)
        return nakagami_mean(m, omega)

    return integrate_1d(integrand, iv.a, iv.b, quad)


def _posterior_rho(gp: GpPosterior, t1: np.ndarray, t2: np.ndarray,
                   policy: RhoPolicy) -> np.ndarray:
    if policy is RhoPolicy.PRIOR_STATIONARY:
        return np.asarray(gp.kernel.scalar.derivative_correlation(t1 - t2))
    flat1, flat2 = t1.ravel(), t2.ravel()
    C12 = gp.deriv_cov_pairs(flat1, flat2)
    C11 = gp.deriv_cov_pairs(flat1, flat1)
    C22 = gp.deriv_cov_pairs(flat2, flat2)
    num = np.einsum("mij,mij->m", C12, C12)
    den = np.sqrt(np.einsum("mij,mij->m", C11, C11) * np.einsum("mij,mij->m", C22, C22))
    rho = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return np.clip(rho, 0.0, 1.0).reshape(t1.shape)


def posterior_second_moment_nd(gp: GpPosterior, iv: Interval,
                               quad: QuadratureSpec | None = None,
                               series: SeriesPolicy | None = None,
                               rho_policy: RhoPolicy | str = RhoPolicy.PRIOR_STATIONARY
                               ) -> SecondMoment:
    """E[s^2] ~ sum_n (-1/2)_n^2 / n! int int E[W1] E[W2] rho^n / (m2)_n dt1 dt2.

    W1, W2 are the Nakagami fits at t1 and t2 and m2 is the shape at t2, as in
    the literal formula.  Over the full square this equals the symmetrised
    integrand with 1/(m2)_n replaced by the average of 1/(m1)_n and 1/(m2)_n.
    The square is split on the diagonal and each triangle integrated with a
    collapsed rule, so kernels with a kink in rho at zero lag stay accurate.
    """
    quad = quad or QuadratureSpec()
    series = series or SeriesPolicy()
    rho_policy = RhoPolicy(rho_policy)
    levels = []
    for n_nodes in quad.levels():
        X, Y, W = triangle_nodes(iv.a, iv.b, n_nodes)
        mX, oX, _ = _nakagami_along(gp, X[:, :1])
        mY, oY, _ = _nakagami_along(gp, Y)
        mX = np.broadcast_to(mX, Y.shape)
        oX = np.broadcast_to(oX, Y.shape)
        base = W * nakagami_mean(mX, oX) * nakagami_mean(mY, oY)
        rho = _posterior_rho(gp, np.broadcast_to(X, Y.shape), Y, rho_policy)
        # ordering (t1, t2) = (X, Y) uses m(Y); the mirrored ordering uses m(X)
        levels.append({"base": base, "rho": rho, "mX": mX, "mY": mY,
                       "cX": np.ones_like(base), "cY": np.ones_like(base),
                       "pow": np.ones_like(base)})

    def term(n):
        out = []
        for lv in levels:
            if n > 0:
                lv["cX"] = _mixed_coefficient_step(lv["cX"], n, lv["mX"])
                lv["cY"] = _mixed_coefficient_step(lv["cY"], n, lv["mY"])
                lv["pow"] = lv["pow"] * lv["rho"]
            out.append(np.sum(lv["base"] * lv["pow"] * (lv["cX"] + lv["cY"])))
        return out

    totals, used, ok, last = _sum_series(term, series)
    err = abs(totals[-1] - totals[-2]) if len(totals) > 1 else float("nan")
    return SecondMoment(float(totals[-1]), used, ok, err, float(last))


def posterior_moments_nd(gp: GpPosterior, iv: Interval,
                         quad: QuadratureSpec | None = None,
                         series: SeriesPolicy | None = None,
                         rho_policy: RhoPolicy | str = RhoPolicy.PRIOR_STATIONARY
                         ) -> ArcLengthMoments:
    mean = posterior_mean_nd(gp, iv, quad)
    sm = posterior_second_moment_nd(gp, iv, quad, series, rho_policy)
    _, _, clamped = gp.deriv_moments(nodes_on(iv.a, iv.b, (quad or QuadratureSpec()).nodes_per_axis)[0])
    diag = {"mean_quad_error": mean.error, "mean_quad_converged": mean.converged,
            "series_terms": sm.terms_used, "series_converged": sm.converged,
            "series_last_term": sm.last_term, "second_moment_quad_error": sm.quad_error,
            "rho_policy": RhoPolicy(rho_policy).value,
            "clamped_variances": clamped}
    var = _clamp_variance(sm.value, mean.value, diag)
    return ArcLengthMoments(mean.value, sm.value, var, Method.SERIES_PLUS_QUADRATURE, diag)
