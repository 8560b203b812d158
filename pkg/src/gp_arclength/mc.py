"""Monte Carlo ground truth for arc-length statistics.

Paths are drawn jointly on a grid and rectified by summing chord lengths.
Draw ``i`` uses a Philox stream keyed by the seed with counter block ``i``,
so the normals do not depend on batch size (the batched matrix products
may still differ in the last bit).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .arclength import Interval
from .gp import GpPosterior, path_sampler

_BATCH_ELEMENTS = 4_000_000


class LengthMode(str, Enum):
    GRAPH_1D = "graph_1d"     # length of the graph (t, f(t)), D = 1
    VECTOR = "vector"         # length of the curve f(t) in R^D


@dataclass
class McReport:
    sample_count: int
    empirical_mean: float
    empirical_variance: float
    mean_std_error: float
    grid_size: int
    seed: int
    lengths: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "sample_count": self.sample_count,
            "empirical_mean": self.empirical_mean,
            "empirical_variance": self.empirical_variance,
            "mean_std_error": self.mean_std_error,
            "grid_size": self.grid_size,
            "seed": self.seed,
        }


def path_length(points, grid=None) -> float | np.ndarray:
    """Polyline length sum_i |p_{i+1} - p_i|.

    ``points`` is (M, D) or a batch (..., M, D).  If ``grid`` is given it is
    prepended as an extra coordinate, giving the length of the graph
    (t, f(t)) rather than of the curve f(t).
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.shape[-2] < 2:
        raise ValueError("a path needs at least two points")
    steps = np.diff(P, axis=-2)
    sq = np.sum(steps * steps, axis=-1)
    if grid is not None:
        dt = np.diff(np.asarray(grid, dtype=float))
        if dt.size != P.shape[-2] - 1:
            raise ValueError("grid length does not match the number of points")
        sq = sq + dt * dt
    out = np.sum(np.sqrt(sq), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def sample_lengths(gp: GpPosterior, iv: Interval, grid_size: int, count: int,
                   seed: int, mode: LengthMode | str = LengthMode.VECTOR) -> np.ndarray:
    """Rectified lengths of ``count`` independent paths on an even grid."""
    mode = LengthMode(mode)
    if grid_size < 2 or count < 2:
        raise ValueError("grid_size and count must both be >= 2")
    if mode is LengthMode.GRAPH_1D and gp.output_dim != 1:
        raise ValueError("graph length is defined for scalar GPs only")
    grid = np.linspace(iv.a, iv.b, grid_size)
    draw = path_sampler(gp, grid)
    batch = max(1, _BATCH_ELEMENTS // (grid_size * gp.output_dim))
    out = np.empty(count)
    for start in range(0, count, batch):
        n = min(batch, count - start)
        paths = draw(start, n, seed)
        out[start:start + n] = path_length(paths, grid if mode is LengthMode.GRAPH_1D else None)
    return out


def summarize(lengths: np.ndarray, grid_size: int, seed: int) -> McReport:
    lengths = np.asarray(lengths, dtype=float)
    n = lengths.size
    mean = float(np.sum(lengths) / n)
    var = float(np.sum((lengths - mean) ** 2) / (n - 1))
    return McReport(n, mean, var, math.sqrt(var / n), grid_size, seed, lengths)


def empirical_arclength(gp: GpPosterior, iv: Interval, grid_size: int = 2000,
                        count: int = 2000, seed: int = 0,
                        mode: LengthMode | str = LengthMode.VECTOR) -> McReport:
    """Empirical arc-length statistics over ``count`` sampled paths."""
    lengths = sample_lengths(gp, iv, grid_size, count, seed, mode)
    return summarize(lengths, grid_size, seed)


def histogram(values, bin_count: int) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width bins spanning [min, max]; returns (edges, counts)."""
    if bin_count < 1:
        raise ValueError("bin_count must be >= 1")
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bin_count)
    return edges, counts


# ---------------------------------------------------------------------------
# raw-distribution samplers used as oracles
# ---------------------------------------------------------------------------


def integrand_samples(mu: float, sigma: float, count: int, seed: int) -> np.ndarray:
    """Draws of sqrt(1 + X^2), X ~ N(mu, sigma^2)."""
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    return np.hypot(1.0, rng.normal(mu, sigma, size=count))


def correlated_nakagami_pairs(m: float, omega: float, rho: float, count: int,
                              seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Pairs (W1, W2) of Nakagami(m, Omega) variables whose squares have
    correlation ``rho``.

    Built from 2m pairs of standard normals with per-pair correlation
    c = sqrt(rho): the sums of squares are Gamma(m, Omega/m) and their
    correlation is exactly c^2.  Needs 2m to be a positive integer.
    """
    dof = 2.0 * m
    if abs(dof - round(dof)) > 1e-12 or round(dof) < 1:
        raise ValueError("correlated Nakagami sampler needs 2m to be a positive integer")
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    k = int(round(dof))
    c = math.sqrt(rho)
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    x = rng.standard_normal((count, k))
    y = c * x + math.sqrt(1.0 - rho) * rng.standard_normal((count, k))
    scale = math.sqrt(omega / k)
    return scale * np.linalg.norm(x, axis=1), scale * np.linalg.norm(y, axis=1)
