"""Special functions needed by the arc-length formulas.

Gamma, log-gamma and the normal CDF are thin checked wrappers over
``math``/``scipy.special``.  The confluent hypergeometric U, the modified
Bessel functions K0/K1 and the Gauss 2F1 series are evaluated here.

Note on U(a, b, z): the standard function carries a 1/Gamma(a) prefactor in
front of the integral
    U(a, b, z) = 1/Gamma(a) * int_0^inf exp(-z t) t^(a-1) (1+t)^(b-a-1) dt.
Some references print the integral alone; that unnormalised form is
``gamma_fn(a) * hyp_u(a, b, z)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

EULER_GAMMA = 0.57721566490153286061
GAMMA_OVERFLOW = 171.6243769563027


class ConvergenceError(ArithmeticError):
    """A series or quadrature failed to reach its tolerance."""


@dataclass(frozen=True)
class SeriesResult:
    value: float
    terms_used: int
    converged: bool


# ---------------------------------------------------------------------------
# gamma family
# ---------------------------------------------------------------------------


def gamma_fn(x: float) -> float:
    """Gamma(x) for x > 0."""
    if not x > 0:
        raise ValueError(f"gamma_fn: domain error, x must be > 0 (got {x})")
    if x > GAMMA_OVERFLOW:
        raise OverflowError(f"gamma_fn: Gamma({x}) overflows double precision")
    return math.gamma(x)


def log_gamma(x):
    """log Gamma(x) for positive x; vectorised."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("log_gamma: domain error, arguments must be > 0")
    out = _sp.gammaln(x)
    return float(out) if out.ndim == 0 else out


def gamma_ratio_half(m):
    """Gamma(m + 1/2) / Gamma(m); finite and accurate for large m."""
    m = np.asarray(m, dtype=float)
    # poch avoids the cancellation of gammaln(m + 1/2) - gammaln(m)
    out = _sp.poch(m, 0.5)
    return float(out) if out.ndim == 0 else out


def pochhammer(q: float, n: int) -> float:
    """Rising factorial (q)_n = q (q+1) ... (q+n-1), with (q)_0 = 1."""
    if n < 0 or int(n) != n:
        raise ValueError(f"pochhammer: n must be a nonnegative integer (got {n})")
    out = 1.0
    for k in range(int(n)):
        out *= q + k
    return out


def std_normal_cdf(x):
    """Standard normal CDF; vectorised."""
    out = _sp.ndtr(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# confluent hypergeometric U
# ---------------------------------------------------------------------------

_U_HALF_WIDTH = 6.0
_U_LEVELS = (64, 128, 256, 512, 1024, 2048)


def log_hyp_u(a: float, b: float, z: float, tol: float = 1e-12) -> float:
    """log U(a, b, z) for a > 0, z > 0.

    The integral representation is evaluated with a double-exponential
    substitution t = t_peak * exp(pi/2 sinh x) and the trapezoid rule, where
    t_peak approximates the maximiser of the integrand.  Nodes are doubled
    from 64 until two successive estimates agree to ``tol``.
    """
    if not a > 0:
        raise ValueError(f"hyp_u: a must be > 0 (got {a})")
    if not z > 0:
        raise ValueError(f"hyp_u: z must be > 0 (got {z})")
    c = b - a - 1.0
    # stationary point of -z t + a log t + c log(1+t) in the log variable
    t_peak = (a + max(c, 0.0)) / z
    log_peak = math.log(t_peak) if t_peak > 0 else math.log(a / z)
    # the left tail decays like exp(a s); small a needs a wider window
    half_width = max(_U_HALF_WIDTH, math.asinh(80.0 / (math.pi * a)))
    prev = None
    residual = math.inf
    for n in _U_LEVELS:
        h = 2.0 * half_width / n
        x = -half_width + h * np.arange(n + 1)
        s = log_peak + 0.5 * np.pi * np.sinh(x)
        with np.errstate(over="ignore"):
            logf = (-z * np.exp(s) + a * s + c * np.logaddexp(0.0, s)
                    + np.log(0.5 * np.pi * np.cosh(x)))
        top = np.max(logf)
        val = top + math.log(h * np.sum(np.exp(logf - top))) - math.lgamma(a)
        if prev is not None:
            residual = abs(val - prev)
            if residual < tol:
                return val
        prev = val
    raise ConvergenceError(
        f"hyp_u({a}, {b}, {z}): quadrature not converged with {n} nodes, "
        f"log-space residual {residual:.3e}")


def hyp_u(a: float, b: float, z: float) -> float:
    """Confluent hypergeometric function of the second kind, U(a, b, z)."""
    return math.exp(log_hyp_u(a, b, z))


# ---------------------------------------------------------------------------
# modified Bessel functions of the second kind
# ---------------------------------------------------------------------------


def _bessel_k_series(z: float) -> tuple[float, float]:
    q = 0.25 * z * z
    log_half = math.log(0.5 * z)
    term0 = 1.0   # (z^2/4)^k / (k!)^2
    term1 = 1.0   # (z^2/4)^k / (k! (k+1)!)
    harm = 0.0    # H_k
    i0 = 0.0
    s0 = 0.0
    i1 = 0.0
    s1 = 0.0
    for k in range(200):
        if k > 0:
            harm += 1.0 / k
            term0 *= q / (k * k)
            term1 *= q / (k * (k + 1))
        i0 += term0
        s0 += term0 * harm
        i1 += term1
        psi_sum = 2.0 * (-EULER_GAMMA) + harm + harm + 1.0 / (k + 1)
        s1 += term1 * psi_sum
        if term0 < 1e-17 * i0 and term1 < 1e-17 * i1:
            break
    k0 = -(log_half + EULER_GAMMA) * i0 + s0
    k1 = 1.0 / z + 0.5 * z * i1 * log_half - 0.25 * z * s1
    return k0, k1


def _bessel_k_cf2(z: float) -> tuple[float, float]:
    """exp(z) K0(z), exp(z) K1(z) by Steed's continued fraction (z >= 2)."""
    b = 2.0 * (1.0 + z)
    d = 1.0 / b
    h = delh = d
    q1, q2 = 0.0, 1.0
    a1 = 0.25
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, 10000):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < 1e-16:
            break
    else:  # pragma: no cover - the fraction converges quickly for z >= 2
        raise ConvergenceError(f"bessel_k: continued fraction stalled at z={z}")
    h = a1 * h
    k0 = math.sqrt(math.pi / (2.0 * z)) / s
    k1 = k0 * (z + 0.5 - h) / z
    return k0, k1


def bessel_k(order: int, z: float, scaled: bool = False) -> float:
    """Modified Bessel function of the second kind K_order(z), order 0 or 1.

    Power series below z = 2, Steed's continued fraction above.  With
    ``scaled`` the result is exp(z) K(z), which stays finite for large z.
    """
    if order not in (0, 1):
        raise ValueError(f"bessel_k: only orders 0 and 1 are supported (got {order})")
    if not z > 0:
        raise ValueError(f"bessel_k: domain error, z must be > 0 (got {z})")
    if z <= 2.0:
        pair = _bessel_k_series(z)
        val = pair[order]
        return val * math.exp(z) if scaled else val
    pair = _bessel_k_cf2(z)
    val = pair[order]
    return val if scaled else val * math.exp(-z)


# ---------------------------------------------------------------------------
# Gauss hypergeometric 2F1
# ---------------------------------------------------------------------------


def hyp_2f1_series(a: float, b: float, c: float, z: float,
                   tol: float = 1e-12, max_terms: int = 500) -> SeriesResult:
    """Partial sums of sum_n (a)_n (b)_n / (c)_n z^n / n! for 0 <= z < 1.

    Summation stops once a term drops below ``tol`` times the running sum, or
    after ``max_terms`` terms (then ``converged`` is False).
    """
    if not c > 0:
        raise ValueError(f"hyp_2f1_series: c must be > 0 (got {c})")
    if not 0.0 <= z < 1.0:
        raise ValueError(f"hyp_2f1_series: z must lie in [0, 1) (got {z})")
    if z == 0.0:
        return SeriesResult(1.0, 1, True)
    term = 1.0
    total = 1.0
    n = 0
    while n + 1 < max_terms:
        term *= (a + n) * (b + n) * z / ((c + n) * (n + 1))
        n += 1
        total += term
        if abs(term) < tol * abs(total):
            return SeriesResult(total, n + 1, True)
    return SeriesResult(total, n + 1, False)


def hyp_2f1_unit(a: float, b: float, c: float) -> float:
    """Gauss summation 2F1(a, b; c; 1) = G(c) G(c-a-b) / (G(c-a) G(c-b)).

    Requires c - a - b > 0, c - a > 0 and c - b > 0.
    """
    if not (c - a - b > 0 and c - a > 0 and c - b > 0 and c > 0):
        raise ValueError("hyp_2f1_unit: need c, c-a, c-b and c-a-b all positive")
    return math.exp(math.lgamma(c) + math.lgamma(c - a - b)
                    - math.lgamma(c - a) - math.lgamma(c - b))
