"""Discrete-time mean-field Langevin dynamics on a particle ensemble.

The update is noisy gradient descent

    theta_r <- theta_r - eta * grad_r + sqrt(2 * lambda * eta) * xi_{k,r}

where grad is the intrinsic gradient of the entropy-regularized objective and
xi are standard normals from the counter-based streams in :mod:`mfld.rng`.
The batch driver ``run_dynamics`` and the single-step ``noisy_gd_step``
produce bit-identical trajectories because both consume the same stream
addresses and apply the same floating-point operation sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import DimensionError, DivergenceError, DomainError
from .model import Dataset
from .rng import RngSpec, normal_block, normal_matrix

_DIVERGENCE_LIMIT = 1.0e8
_NOISE_TAG = "dyn"
_INIT_TAG = "init"
_BLOCK_BYTES = 32 * 1024 * 1024


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """M particles in R^d; rows of ``params`` are the theta_r."""

    params: np.ndarray

    def __post_init__(self):
        params = np.atleast_2d(np.asarray(self.params, dtype=np.float64))
        if params.ndim != 2:
            raise DimensionError("params must be an M x d matrix")
        if params.size and not np.isfinite(params).all():
            raise DivergenceError("non-finite particle parameters")
        params.setflags(write=False)
        object.__setattr__(self, "params", params)

    @property
    def m(self) -> int:
        return self.params.shape[0]

    @property
    def d(self) -> int:
        return self.params.shape[1]

    def second_moment(self) -> float:
        """Empirical (1/M) sum_r ||theta_r||^2."""
        v = self.params.reshape(-1)
        return float(np.dot(v, v)) / self.params.shape[0]


@dataclass(frozen=True)
class HyperParams:
    """Entropy weight lambda, L2 weight lambda_prime, step size, budget.

    lambda = 0 is accepted so the noiseless recursion can be exercised in
    tests; experiment configs require strict positivity.
    """

    lam: float
    lam_prime: float
    eta: float
    steps: int

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise DomainError("lambda must be finite and >= 0")
        if not (self.lam_prime >= 0 and math.isfinite(self.lam_prime)):
            raise DomainError("lambda_prime must be finite and >= 0")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise DomainError("eta must be finite and > 0")
        if self.steps < 0:
            raise DomainError("steps must be >= 0")
        if 2.0 * self.lam_prime * self.eta >= 1.0:
            raise DomainError("step-size hypothesis 2*lambda_prime*eta < 1 violated")


@dataclass(frozen=True, eq=False)
class DynamicsResult:
    ensemble: ParticleEnsemble
    second_moments: Optional[np.ndarray] = None


def _noise_scale(hp: HyperParams) -> float:
    return math.sqrt(2.0 * hp.lam * hp.eta)


def _gradient_arrays(params, model, loss, dataset: Dataset, lam_prime: float) -> np.ndarray:
    """Rows (1/n) sum_i d_z l(h_q(x_i), y_i) grad_theta h_{theta_r}(x_i) + 2 lam' theta_r.

    The shared predictions h_q(x_i) are computed once and reused for every
    particle row; with n = 0 only the regularizer term remains.
    """
    if dataset.n == 0:
        return (2.0 * lam_prime) * params
    hq = model.eval_many(params, dataset.inputs).mean(axis=0)
    g = np.asarray(loss.grad(hq, dataset.targets), dtype=np.float64)
    out = model.grad_weighted(params, dataset.inputs, g)
    out += (2.0 * lam_prime) * params
    return out


def intrinsic_gradient(ensemble: ParticleEnsemble, model, loss, dataset: Dataset, lam_prime: float) -> np.ndarray:
    """Gradient field of the regularized objective at each particle."""
    if ensemble.m < 1:
        raise DimensionError("dynamics requires M >= 1")
    if ensemble.d != model.d:
        raise DimensionError(f"ensemble d = {ensemble.d}, model.d = {model.d}")
    if dataset.n and dataset.d_in != model.d_in:
        raise DimensionError(f"dataset d_in = {dataset.d_in}, model.d_in = {model.d_in}")
    return _gradient_arrays(ensemble.params, model, loss, dataset, lam_prime)


def _check_state(params: np.ndarray, k: int) -> None:
    if not np.isfinite(params).all() or np.abs(params).max() > _DIVERGENCE_LIMIT:
        raise DivergenceError(f"particle state diverged by iteration {k} (step size too large?)")


def noisy_gd_step(ensemble: ParticleEnsemble, grad, hp: HyperParams, rng: RngSpec, k: int) -> ParticleEnsemble:
    """One update theta - eta*grad + sqrt(2 lambda eta) * xi_k."""
    params = ensemble.params
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape:
        raise DimensionError(f"grad shape {grad.shape} != params shape {params.shape}")
    noise = normal_matrix(rng, _NOISE_TAG, k, params.shape[0], params.shape[1])
    noise *= _noise_scale(hp)
    upd = grad * (-hp.eta)
    upd += noise
    upd += params
    _check_state(upd, k + 1)
    return ParticleEnsemble(upd)


def initialize_ensemble(m: int, d: int, init_std: float, rng: RngSpec) -> ParticleEnsemble:
    """i.i.d. N(0, init_std^2 I_d) rows from the stream keyed (k=-1, r, "init")."""
    if m < 1:
        raise DimensionError("M must be >= 1")
    if init_std < 0:
        raise DomainError("init_std must be >= 0")
    params = normal_matrix(rng, _INIT_TAG, -1, m, d)
    params *= init_std
    return ParticleEnsemble(params)


def run_dynamics(
    ensemble0: ParticleEnsemble,
    model,
    loss,
    dataset: Dataset,
    hp: HyperParams,
    rng: RngSpec,
    hooks: Optional[tuple[Iterable[int], Callable[[int, ParticleEnsemble], None]]] = None,
    track_second_moment: bool = False,
    noise_block: int = 4096,
) -> DynamicsResult:
    """Apply exactly hp.steps noisy-GD updates, firing hooks on a schedule.

    ``hooks`` is a pair (iteration indices, callback); the callback receives
    the iteration number (0 = initial state) and a read-only ensemble
    snapshot.  Noise is generated in blocks of up to ``noise_block`` steps;
    blocking does not change the trajectory because draws are addressed by
    iteration, not by generation order.
    """
    if ensemble0.m < 1:
        raise DimensionError("dynamics requires M >= 1")
    sched = frozenset(int(k) for k in hooks[0]) if hooks else frozenset()
    callback = hooks[1] if hooks else None
    params = ensemble0.params.copy()
    m, d = params.shape
    flat = params.reshape(-1)
    steps = hp.steps
    moments = np.empty(steps + 1) if track_second_moment else None
    if track_second_moment:
        moments[0] = np.dot(flat, flat) / m
    if callback is not None and 0 in sched:
        callback(0, ParticleEnsemble(params.copy()))
    neg_eta = -hp.eta
    root = _noise_scale(hp)
    lam_prime = hp.lam_prime
    block = max(1, min(int(noise_block), _BLOCK_BYTES // max(m * d * 8, 1) or 1))
    for k0 in range(0, steps, block):
        kb = min(block, steps - k0)
        noise = normal_block(rng, _NOISE_TAG, k0, kb, m, d)
        noise *= root
        for j in range(kb):
            grad = _gradient_arrays(params, model, loss, dataset, lam_prime)
            grad *= neg_eta
            grad += noise[j]
            params += grad
            k = k0 + j + 1
            if track_second_moment:
                moments[k] = np.dot(flat, flat) / m
            if callback is not None and k in sched:
                _check_state(params, k)
                callback(k, ParticleEnsemble(params.copy()))
        _check_state(params, k0 + kb)
    return DynamicsResult(ensemble=ParticleEnsemble(params), second_moments=moments)
