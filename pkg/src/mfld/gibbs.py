"""Proximal Gibbs distribution: log-density, score, ULA sampler, oracles.

For a dual vector g the distribution is

    p(theta) propto exp( -(1/lambda) [ (1/n) sum_i g_i h_theta(x_i)
                                       + lambda_prime ||theta||^2 ] )

and equals the proximal Gibbs distribution p_q when g is the dual vector of
the current ensemble.  Normalization oracles: a closed form for g = 0 and a
trapezoid quadrature for parameter dimension d <= 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, DivergenceError, DomainError, EstimatorError, GridError
from .model import Dataset, dual_vector
from .rng import RngSpec, normal_steps

_DIVERGENCE_LIMIT = 1.0e8
_ULA_TAG = "ula"
_TAIL_RATIO = 1.0e-12


@dataclass(frozen=True, eq=False)
class ProximalGibbs:
    """Immutable bundle (g, dataset, model, lambda, lambda_prime)."""

    g: np.ndarray
    dataset: Dataset
    model: object
    lam: float
    lam_prime: float

    def __post_init__(self):
        g = np.asarray(self.g, dtype=np.float64).reshape(-1)
        if g.shape[0] != self.dataset.n:
            raise DimensionError(f"dual vector length {g.shape[0]} != n = {self.dataset.n}")
        if g.size and not np.isfinite(g).all():
            raise DomainError("non-finite dual vector")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise DomainError("lambda must be finite and > 0")
        if not (self.lam_prime > 0 and math.isfinite(self.lam_prime)):
            raise DomainError("lambda_prime must be finite and > 0")
        if self.dataset.n and self.dataset.d_in != self.model.d_in:
            raise DimensionError("dataset and model input dimensions differ")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)

    @property
    def d(self) -> int:
        return self.model.d

    @classmethod
    def from_ensemble(cls, ensemble, model, loss, dataset: Dataset, lam: float, lam_prime: float) -> "ProximalGibbs":
        """Proximal Gibbs distribution of the current ensemble (g = g_q)."""
        return cls(dual_vector(ensemble, model, loss, dataset), dataset, model, lam, lam_prime)


@dataclass(frozen=True)
class SamplerConfig:
    """ULA settings; step = None means the default rule 1e-2 * min(1, lambda/(2 lambda'))."""

    count: int = 20000
    step: Optional[float] = None
    burn_in: int = 1000
    thin: int = 10

    def __post_init__(self):
        if self.count < 0:
            raise DomainError("sampler count must be >= 0")
        if self.step is not None and not (self.step > 0 and math.isfinite(self.step)):
            raise DomainError("sampler step must be positive")
        if self.burn_in < 0 or self.thin < 0:
            raise DomainError("burn_in and thin must be >= 0")

    def step_for(self, lam: float, lam_prime: float) -> float:
        if self.step is not None:
            return self.step
        return 1.0e-2 * min(1.0, lam / (2.0 * lam_prime))


def unnorm_log_density_many(pg: ProximalGibbs, params: np.ndarray) -> np.ndarray:
    """Unnormalized log-density at each row of params (S x d)."""
    params = np.atleast_2d(np.asarray(params, dtype=np.float64))
    if params.shape[1] != pg.model.d:
        raise DimensionError(f"theta has dimension {params.shape[1]}, model.d = {pg.model.d}")
    sq = np.einsum("ij,ij->i", params, params)
    pot = pg.lam_prime * sq
    if pg.dataset.n:
        vals = pg.model.eval_many(params, pg.dataset.inputs)
        pot += vals @ pg.g / pg.dataset.n
    return pot / (-pg.lam)


def unnorm_log_density(pg: ProximalGibbs, theta) -> float:
    """-(1/lambda) [ (1/n) sum_i g_i h_theta(x_i) + lambda' ||theta||^2 ]."""
    theta = np.asarray(theta, dtype=np.float64).reshape(1, -1)
    return float(unnorm_log_density_many(pg, theta)[0])


def score(pg: ProximalGibbs, theta) -> np.ndarray:
    """Gradient of unnorm_log_density at theta."""
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if theta.shape[0] != pg.model.d:
        raise DimensionError(f"theta has dimension {theta.shape[0]}, model.d = {pg.model.d}")
    acc = 2.0 * pg.lam_prime * theta
    if pg.dataset.n:
        grads = pg.model.grad_many(theta, pg.dataset.inputs)
        acc = acc + pg.g @ grads / pg.dataset.n
    return acc / (-pg.lam)


def ula_sample(
    pg: ProximalGibbs,
    count: int,
    step: float,
    burn_in: int,
    thin: int,
    rng: RngSpec,
    chain: int = 0,
) -> np.ndarray:
    """Unadjusted Langevin chain targeting pg, started at theta = 0.

    The chain is theta <- theta + step * score(theta) + sqrt(2 step) xi.
    States 1 .. burn_in are discarded, then every thin-th state is kept
    (thin = 0 behaves like thin = 1).  ``chain`` selects an independent
    noise stream, so repeated sampling passes can use disjoint draws.
    """
    if step <= 0 or not math.isfinite(step):
        raise DomainError("ULA step must be positive")
    if burn_in < 0 or thin < 0:
        raise DomainError("burn_in and thin must be >= 0")
    if count < 0:
        raise DomainError("count must be >= 0")
    d = pg.model.d
    if count == 0:
        return np.empty((0, d))
    thin = max(1, thin)
    total = burn_in + count * thin
    root = math.sqrt(2.0 * step)
    theta = np.zeros(d)
    out = np.empty((count, d))
    kept = 0
    block = 4096
    for k0 in range(0, total, block):
        kb = min(block, total - k0)
        noise = normal_steps(rng, _ULA_TAG, k0, kb, chain, d)
        noise *= root
        # overflow inside a diverging chain is expected right up until the
        # guard below reports it, so silence the intermediate warnings
        with np.errstate(over="ignore", invalid="ignore"):
            for j in range(kb):
                theta = theta + step * score(pg, theta)
                theta += noise[j]
                state = k0 + j + 1
                if state > burn_in and (state - burn_in) % thin == 0:
                    out[kept] = theta
                    kept += 1
        if not np.isfinite(theta).all() or np.abs(theta).max() > _DIVERGENCE_LIMIT:
            raise DivergenceError(f"ULA chain diverged by state {k0 + kb} (step too large?)")
    if not np.isfinite(out).all():
        raise DivergenceError("ULA chain produced non-finite samples")
    return out


def gaussian_log_partition(lam: float, lam_prime: float, d: int) -> float:
    """log Z for g = 0: the Gaussian integral gives Z = (pi lam / lam')^{d/2}."""
    if not (lam > 0 and lam_prime > 0):
        raise DomainError("lambda and lambda_prime must be positive")
    if d < 0:
        raise DimensionError("d must be >= 0")
    return 0.5 * d * math.log(math.pi * lam / lam_prime)


def log_trapezoid(vals: np.ndarray, dx: float) -> float:
    """log of the trapezoid integral of exp(vals) on a uniform 1D grid."""
    m = float(np.max(vals))
    return m + math.log(float(np.trapezoid(np.exp(vals - m), dx=dx)))


def quadrature_log_partition(pg: ProximalGibbs, grid_extent: float, grid_points: int) -> float:
    """Trapezoid log-partition on [-extent, extent]^d for d <= 2.

    Raises GridError when the boundary density exceeds 1e-12 of the mode,
    which signals that the grid does not cover the effective support.
    """
    d = pg.model.d
    if d > 2 or d < 1:
        raise DimensionError("quadrature oracle supports d in {1, 2}")
    if grid_points < 2:
        raise GridError("need at least 2 grid points")
    if not (grid_extent > 0 and math.isfinite(grid_extent)):
        raise GridError("grid_extent must be positive")
    xs = np.linspace(-grid_extent, grid_extent, grid_points)
    dx = xs[1] - xs[0]
    log_tail = math.log(_TAIL_RATIO)
    if d == 1:
        vals = unnorm_log_density_many(pg, xs[:, None])
        peak = float(np.max(vals))
        if max(vals[0], vals[-1]) > peak + log_tail:
            raise GridError("extent too small: boundary mass above 1e-12 of the mode")
        return log_trapezoid(vals, dx)
    aa, bb = np.meshgrid(xs, xs, indexing="ij")
    params = np.column_stack([aa.reshape(-1), bb.reshape(-1)])
    vals = unnorm_log_density_many(pg, params).reshape(grid_points, grid_points)
    peak = float(np.max(vals))
    edge = max(
        float(np.max(vals[0])), float(np.max(vals[-1])),
        float(np.max(vals[:, 0])), float(np.max(vals[:, -1])),
    )
    if edge > peak + log_tail:
        raise GridError("extent too small: boundary mass above 1e-12 of the mode")
    inner = np.trapezoid(np.exp(vals - peak), dx=dx, axis=1)
    return peak + math.log(float(np.trapezoid(inner, dx=dx)))
