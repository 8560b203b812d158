"""Zero-mean scalar and vector GP posteriors with derivative predictions.

The vector model uses the separable covariance B (x) k.  All observations
share the same inputs; stacked vectors are output-major (index d * N + i).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .kernels import CoregionalizedKernel, KernelSpec

logger = logging.getLogger(__name__)

JITTER_START = 1e-10
JITTER_MAX = 1e-4
_CHUNK = 4096


class SingularModelError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class Observations:
    """Training data: inputs ``t`` (N,), targets ``y`` (N, D), per-output noise (D,)."""

    t: np.ndarray
    y: np.ndarray
    noise_variance: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if t.size < 1:
            raise ValueError("Observations need at least one input (N >= 1)")
        if y.shape[0] != t.size:
            raise ValueError(f"targets have {y.shape[0]} rows but there are {t.size} inputs")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise ValueError("observations must be finite")
        order = np.argsort(t, kind="stable")
        t, y = t[order], y[order]
        if t.size > 1 and np.min(np.diff(t)) <= 1e-12:
            raise ValueError("duplicate inputs (closer than 1e-12) are not allowed")
        noise = np.broadcast_to(np.asarray(self.noise_variance, dtype=float),
                                (y.shape[1],)).copy()
        if np.any(noise < 0):
            raise ValueError("noise variance must be nonnegative")
        for arr in (t, y, noise):
            arr.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "noise_variance", noise)

    @property
    def n(self) -> int:
        return self.t.size

    @property
    def output_dim(self) -> int:
        return self.y.shape[1]


def read_observations(path, noise_variance=0.0, expected_dim: int | None = None):
    """Parse a ``t,y1,...,yD`` CSV.  Returns None for a header-only file."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file, expected a 't,y1,...,yD' header")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0] != "t":
        raise ValueError(f"{path}: header must be 't,y1,...,yD', got {','.join(header)}")
    dim = len(header) - 1
    if expected_dim is not None and dim != expected_dim:
        raise ValueError(f"{path}: {dim} target columns but the kernel has {expected_dim} outputs")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != dim + 1:
            raise ValueError(f"{path}:{lineno}: expected {dim + 1} fields, got {len(row)}")
        try:
            data.append([float(c) for c in row])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not data:
        return None
    arr = np.asarray(data)
    return Observations(arr[:, 0], arr[:, 1:], noise_variance)


def _jittered_cholesky(K: np.ndarray, what: str = "Gram matrix") -> tuple[np.ndarray, float]:
    scale = float(np.mean(np.diag(K))) or 1.0
    jitter = JITTER_START
    while jitter <= JITTER_MAX * (1 + 1e-12):
        try:
            L = np.linalg.cholesky(K + jitter * scale * np.eye(K.shape[0]))
            return L, jitter * scale
        except np.linalg.LinAlgError:
            jitter *= 10.0
    eig_min = float(np.linalg.eigvalsh(0.5 * (K + K.T)).min())
    raise SingularModelError(
        f"{what} is not positive definite even with jitter {JITTER_MAX:g} x mean diagonal; "
        f"smallest eigenvalue estimate {eig_min:.3e}")


def _psd_sqrt(B: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(B)
    return V * np.sqrt(np.clip(w, 0.0, None))


@dataclass(frozen=True, eq=False)
class GpPosterior:
    """A fitted (or prior, when ``obs`` is None) zero-mean GP."""

    kernel: CoregionalizedKernel
    obs: Observations | None = None
    chol: np.ndarray | None = None
    alpha: np.ndarray | None = None
    jitter: float = 0.0

    @classmethod
    def prior(cls, kernel) -> "GpPosterior":
        return cls(_as_vector_kernel(kernel))

    @property
    def is_prior(self) -> bool:
        return self.obs is None

    @property
    def output_dim(self) -> int:
        return self.kernel.output_dim

    # -- building blocks ------------------------------------------------------

    @property
    def _k(self) -> KernelSpec:
        return self.kernel.scalar

    def _cross_blocks(self, Kt: np.ndarray) -> np.ndarray:
        """L^{-1} (B (x) Kt)^T as (ND, M, D) for an (M, N) scalar cross matrix."""
        B = self.kernel.B
        M, N = Kt.shape
        D = B.shape[0]
        A = np.einsum("de,ji->eijd", B, Kt).reshape(D * N, M * D)
        V = solve_triangular(self.chol, A, lower=True, check_finite=False)
        return V.reshape(D * N, M, D)

    def _alpha_mat(self) -> np.ndarray:
        return self.alpha.reshape(self.output_dim, self.obs.n)

    # -- predictions (vectorised over points) -----------------------------------

    def mean(self, t) -> np.ndarray:
        """Posterior mean at points ``t``: (M, D)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.is_prior:
            return np.zeros((t.size, self.output_dim))
        Kt = self._k.eval(t[:, None] - self.obs.t[None, :])
        return (np.atleast_2d(Kt) @ self._alpha_mat().T) @ self.kernel.B

    def deriv_mean(self, t) -> np.ndarray:
        """Mean of f'(t): (M, D)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.is_prior:
            return np.zeros((t.size, self.output_dim))
        dK = self._k.first_derivative(t[:, None] - self.obs.t[None, :])
        return (np.atleast_2d(dK) @ self._alpha_mat().T) @ self.kernel.B

    def _pair_cov(self, t1, t2, prior_fn, cross_fn) -> np.ndarray:
        t1 = np.atleast_1d(np.asarray(t1, dtype=float))
        t2 = np.atleast_1d(np.asarray(t2, dtype=float))
        t1, t2 = np.broadcast_arrays(t1, t2)
        B = self.kernel.B
        prior = np.asarray(prior_fn(t1 - t2))[:, None, None] * B
        if self.is_prior:
            return prior
        out = np.empty_like(prior)
        X = self.obs.t
        for s in range(0, t1.size, _CHUNK):
            sl = slice(s, s + _CHUNK)
            V1 = self._cross_blocks(np.atleast_2d(cross_fn(t1[sl, None] - X[None, :])))
            V2 = self._cross_blocks(np.atleast_2d(cross_fn(t2[sl, None] - X[None, :])))
            out[sl] = prior[sl] - np.einsum("rmd,rme->mde", V1, V2)
        return out

    def cov_pairs(self, t1, t2) -> np.ndarray:
        """Posterior cross-covariance cov(f(t1_j), f(t2_j)): (M, D, D)."""
        return self._pair_cov(t1, t2, self._k.eval, self._k.eval)

    def deriv_cov_pairs(self, t1, t2) -> np.ndarray:
        """Posterior cov(f'(t1_j), f'(t2_j)): (M, D, D)."""
        # cov(f'(t), y_i) = d/dt k(t - x_i) for both arguments
        return self._pair_cov(t1, t2, self._k.cross_derivative, self._k.first_derivative)

    def deriv_moments(self, t) -> tuple[np.ndarray, np.ndarray, int]:
        """Mean (M, D) and covariance (M, D, D) of f'(t), plus the number of
        diagonal entries clamped from small negative values to zero."""
        mu = self.deriv_mean(t)
        S = self.deriv_cov_pairs(t, t)
        S = 0.5 * (S + np.swapaxes(S, 1, 2))
        diag = np.einsum("mdd->md", S)
        neg = diag < 0
        clamped = int(np.count_nonzero(neg))
        if clamped:
            idx = np.nonzero(neg)
            S[idx[0], idx[1], idx[1]] = 0.0
        return mu, S, clamped

    def joint_cov(self, grid) -> np.ndarray:
        """Posterior covariance of vec(f(grid)) (output-major), (MD, MD)."""
        grid = np.asarray(grid, dtype=float)
        prior = np.kron(self.kernel.B, self._k.gram(grid))
        if self.is_prior:
            return prior
        V = self._cross_blocks(np.atleast_2d(self._k.eval(grid[:, None] - self.obs.t[None, :])))
        V = V.transpose(0, 2, 1).reshape(V.shape[0], -1)
        return prior - V.T @ V


def _as_vector_kernel(kernel) -> CoregionalizedKernel:
    if isinstance(kernel, KernelSpec):
        return CoregionalizedKernel(kernel, np.eye(1))
    return kernel


def fit(kernel, obs: Observations) -> GpPosterior:
    """Factorise (B (x) K + noise) for the observations.

    Raises ``SingularModelError`` if the jitter ladder (1e-10 .. 1e-4 times
    the mean diagonal) cannot make the matrix positive definite.
    """
    kernel = _as_vector_kernel(kernel)
    if obs is None or obs.n < 1:
        raise ValueError("fit needs at least one observation; use GpPosterior.prior for N=0")
    if obs.output_dim != kernel.output_dim:
        raise ValueError(f"observations have {obs.output_dim} outputs, kernel B is "
                         f"{kernel.output_dim}x{kernel.output_dim}")
    K = np.kron(kernel.B, kernel.scalar.gram(obs.t)) + np.kron(np.diag(obs.noise_variance), np.eye(obs.n))
    L, jitter = _jittered_cholesky(K)
    alpha = cho_solve((L, True), obs.y.T.reshape(-1), check_finite=False)
    for arr in (L, alpha):
        arr.setflags(write=False)
    return GpPosterior(kernel, obs, L, alpha, jitter)


# -- point-wise wrappers ---------------------------------------------------------


def posterior_mean(gp: GpPosterior, t_star: float) -> np.ndarray:
    return gp.mean(t_star)[0]


def posterior_cov(gp: GpPosterior, t1: float, t2: float) -> np.ndarray:
    return gp.cov_pairs(t1, t2)[0]


def posterior_deriv_mean(gp: GpPosterior, t_star: float) -> np.ndarray:
    return gp.deriv_mean(t_star)[0]


def posterior_deriv_cov(gp: GpPosterior, t1: float, t2: float) -> np.ndarray:
    return gp.deriv_cov_pairs(t1, t2)[0]


# -- sampling ---------------------------------------------------------------------


def draw_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for draw ``index``: Philox keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, int(index)]))


def path_sampler(gp: GpPosterior, grid):
    """Return ``draw(start, count, seed) -> (count, M, D)`` for joint paths on ``grid``.

    The covariance is factorised once.  Draw ``i`` depends only on
    ``(seed, i)``, so batches can be generated in any order.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid needs at least two points")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    M, D = grid.size, gp.output_dim

    if gp.is_prior:
        L_k, _ = _jittered_cholesky(gp.kernel.scalar.gram(grid), "prior grid covariance")
        F_b = _psd_sqrt(gp.kernel.B)
        mean = np.zeros((M, D))

        def transform(Z):  # Z: (count, M, D)
            cnt = Z.shape[0]
            W = (L_k @ Z.transpose(1, 0, 2).reshape(M, cnt * D)).reshape(M, cnt, D)
            return W.transpose(1, 0, 2) @ F_b.T
    else:
        C = gp.joint_cov(grid)
        L, _ = _jittered_cholesky(0.5 * (C + C.T), "posterior grid covariance")
        mean = gp.mean(grid)

        def transform(Z):
            cnt = Z.shape[0]
            z = Z.transpose(2, 1, 0).reshape(D * M, cnt)   # output-major columns
            W = (L @ z).reshape(D, M, cnt)
            return W.transpose(2, 1, 0)

    def draw(start: int, count: int, seed: int) -> np.ndarray:
        Z = np.stack([draw_rng(seed, start + i).standard_normal((M, D))
                      for i in range(count)]) if count else np.zeros((0, M, D))
        return mean[None] + transform(Z)

    return draw


def sample_paths(gp: GpPosterior, grid, count: int, seed: int) -> np.ndarray:
    """``count`` joint draws of f over ``grid``: array (count, M, D)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return path_sampler(gp, grid)(0, count, seed)
