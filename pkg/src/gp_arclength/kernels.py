"""Stationary scalar kernels, their derivative processes, and B (x) k.

For a stationary kernel k(tau), tau = t - t', the derivative process f' has
covariance d^2 k / dt dt' = -k''(tau); its variance at any point is
-k''(0).  All four supported families are twice differentiable at the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class Family(str, Enum):
    SE = "se"
    M32 = "m32"
    M52 = "m52"
    RQ = "rq"


_ALIASES = {
    "se": Family.SE, "squared_exponential": Family.SE, "rbf": Family.SE,
    "m32": Family.M32, "matern32": Family.M32,
    "m52": Family.M52, "matern52": Family.M52,
    "rq": Family.RQ, "rational_quadratic": Family.RQ,
}


def parse_family(name) -> Family:
    if isinstance(name, Family):
        return name
    try:
        return _ALIASES[str(name).lower()]
    except KeyError:
        raise ValueError(f"unknown kernel family {name!r}; expected one of "
                         f"{sorted(_ALIASES)}") from None


@dataclass(frozen=True)
class KernelSpec:
    """A stationary scalar kernel.

    Parameters
    ----------
    family : Family or str
        ``se``, ``m32``, ``m52`` or ``rq``.
    signal_variance : float
        k(0), i.e. lambda^2.
    length_scale : float
        Input length scale sigma.
    rq_shape : float
        Shape alpha of the rational quadratic kernel (ignored otherwise).
    """

    family: Family
    signal_variance: float = 1.0
    length_scale: float = 1.0
    rq_shape: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", parse_family(self.family))
        if not self.signal_variance > 0:
            raise ValueError(f"signal_variance must be > 0, got {self.signal_variance}")
        if not self.length_scale > 0:
            raise ValueError(f"length_scale must be > 0, got {self.length_scale}")
        if self.family is Family.RQ and not self.rq_shape > 0:
            raise ValueError(f"rq_shape must be > 0, got {self.rq_shape}")

    # -- k(tau) -----------------------------------------------------------

    def eval(self, tau):
        """k(tau), with k(0) = signal_variance."""
        tau = np.asarray(tau, dtype=float)
        lam2, ell = self.signal_variance, self.length_scale
        if self.family is Family.SE:
            out = lam2 * np.exp(-0.5 * (tau / ell) ** 2)
        elif self.family is Family.M32:
            r = math.sqrt(3.0) * np.abs(tau) / ell
            out = lam2 * (1.0 + r) * np.exp(-r)
        elif self.family is Family.M52:
            r = math.sqrt(5.0) * np.abs(tau) / ell
            out = lam2 * (1.0 + r + r * r / 3.0) * np.exp(-r)
        else:
            alpha = self.rq_shape
            out = lam2 * (1.0 + tau**2 / (2.0 * alpha * ell**2)) ** (-alpha)
        return _scalar(out)

    def first_derivative(self, tau):
        """dk/dtau; odd in tau.  Equals d k(t - t') / dt."""
        tau = np.asarray(tau, dtype=float)
        lam2, ell = self.signal_variance, self.length_scale
        if self.family is Family.SE:
            out = -lam2 * tau / ell**2 * np.exp(-0.5 * (tau / ell) ** 2)
        elif self.family is Family.M32:
            a = math.sqrt(3.0) / ell
            out = -lam2 * a * a * tau * np.exp(-a * np.abs(tau))
        elif self.family is Family.M52:
            a = math.sqrt(5.0) / ell
            r = a * np.abs(tau)
            out = -lam2 * (a * a / 3.0) * tau * (1.0 + r) * np.exp(-r)
        else:
            alpha = self.rq_shape
            base = 1.0 + tau**2 / (2.0 * alpha * ell**2)
            out = -lam2 * tau / ell**2 * base ** (-alpha - 1.0)
        return _scalar(out)

    def cross_derivative(self, tau):
        """d^2 k(t - t') / dt dt' = -k''(tau): covariance of the derivative process."""
        return _scalar(self.derivative_variance * np.asarray(self._cross_shape(tau)))

    def _cross_shape(self, tau):
        # -k''(tau) / -k''(0), exactly 1 at tau = 0
        tau = np.asarray(tau, dtype=float)
        ell = self.length_scale
        if self.family is Family.SE:
            u = (tau / ell) ** 2
            return (1.0 - u) * np.exp(-0.5 * u)
        if self.family is Family.M32:
            r = math.sqrt(3.0) * np.abs(tau) / ell
            return (1.0 - r) * np.exp(-r)
        if self.family is Family.M52:
            r = math.sqrt(5.0) * np.abs(tau) / ell
            return (1.0 + r - r * r) * np.exp(-r)
        alpha = self.rq_shape
        u = tau**2 / ell**2
        base = 1.0 + u / (2.0 * alpha)
        return base ** (-alpha - 2.0) * (base - (alpha + 1.0) / alpha * u)

    @property
    def derivative_variance(self) -> float:
        """Variance of f'(t): SE and RQ lambda^2/sigma^2, M32 3 lambda^2/sigma^2,
        M52 5 lambda^2/(3 sigma^2)."""
        lam2, ell2 = self.signal_variance, self.length_scale**2
        factor = {Family.SE: 1.0, Family.M32: 3.0, Family.M52: 5.0 / 3.0, Family.RQ: 1.0}
        return factor[self.family] * lam2 / ell2

    def derivative_correlation(self, tau):
        """rho(tau) = [cross_derivative(tau) / derivative_variance]^2, in [0, 1]."""
        c = np.asarray(self._cross_shape(tau))
        return _scalar(np.clip(c * c, 0.0, 1.0))

    def gram(self, t1, t2=None) -> np.ndarray:
        t1 = np.atleast_1d(np.asarray(t1, dtype=float))
        t2 = t1 if t2 is None else np.atleast_1d(np.asarray(t2, dtype=float))
        return np.asarray(self.eval(t1[:, None] - t2[None, :]))


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


@dataclass(frozen=True)
class CoregionalizedKernel:
    """Separable vector kernel K(t, t') = B k(t - t').

    ``B`` is a symmetric PSD D x D output-mixing matrix.  Vectors over
    (output, input) pairs are laid out output-major: index d * N + i.
    """

    scalar: KernelSpec
    B: np.ndarray = field(default_factory=lambda: np.eye(1))

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise ValueError(f"B must be a square matrix, got shape {B.shape}")
        if not np.allclose(B, B.T, rtol=0.0, atol=1e-12):
            raise ValueError("B must be symmetric (within 1e-12)")
        eig = np.linalg.eigvalsh(B)
        if eig.min() < -1e-10:
            raise ValueError(f"B must be positive semidefinite; min eigenvalue {eig.min():.3e}")
        B = 0.5 * (B + B.T)
        B.setflags(write=False)
        object.__setattr__(self, "B", B)

    @property
    def output_dim(self) -> int:
        return self.B.shape[0]

    def derivative_cov(self) -> np.ndarray:
        """Covariance of f'(t) at any single t: B sigma_{f'}^2."""
        return self.B * self.scalar.derivative_variance

    def __eq__(self, other):
        return (isinstance(other, CoregionalizedKernel) and self.scalar == other.scalar
                and np.array_equal(self.B, other.B))

    def __hash__(self):
        return hash((self.scalar, self.B.tobytes()))


def vector_gram(ck: CoregionalizedKernel, inputs, inputs2=None) -> np.ndarray:
    """B (x) k(X, X'), output index outer."""
    return np.kron(ck.B, ck.scalar.gram(inputs, inputs2))
