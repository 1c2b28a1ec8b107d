"""Closed-form theory quantities for the entropy-regularized objective.

Log-Sobolev constant, second-moment bound, one-step discretization error,
the convergence envelope, the proximal-Gibbs sandwich check, and a nominal
iteration-complexity gauge.  All formulas are pure float arithmetic; the LSI
constant is carried in log-space because it underflows at practical lambda.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

from .dynamics import HyperParams, ParticleEnsemble
from .errors import DomainError
from .estimators import ObjectiveReport, PrimalComponents
from .model import RegularityConstants


def _require_positive(**kwargs) -> None:
    for name, v in kwargs.items():
        if not (v > 0 and math.isfinite(v)):
            raise DomainError(f"{name} must be positive and finite, got {v}")


def lsi_log_constant(lam: float, lam_prime: float, c1: float, c5: float) -> float:
    """log alpha = log(2 lam'/lam) - 4 c1 c5 / lam, exact in log-space."""
    _require_positive(lam=lam, lam_prime=lam_prime, c1=c1, c5=c5)
    return math.log(2.0 * lam_prime / lam) - 4.0 * c1 * c5 / lam


def lsi_constant(lam: float, lam_prime: float, c1: float, c5: float) -> float:
    """alpha = 2 lam' / (lam exp(4 c1 c5 / lam)).

    Evaluated as exp(lsi_log_constant); may underflow to a subnormal or 0.0
    at small lambda, which is why the log-space value is also exposed.
    """
    return math.exp(lsi_log_constant(lam, lam_prime, c1, c5))


def moment_bound(eta: float, lam: float, lam_prime: float, c1: float, c3: float, d: int) -> float:
    """Second-moment bound (eta c1^2 c3^2 + 2 lam d) / (2 eta lam'^2)."""
    _require_positive(eta=eta, lam=lam, lam_prime=lam_prime, c1=c1, c3=c3)
    if d < 1:
        raise DomainError("d must be >= 1")
    if 2.0 * lam_prime * eta >= 1.0:
        raise DomainError("step-size hypothesis 2*lambda_prime*eta < 1 violated")
    return (eta * c1 * c1 * c3 * c3 + 2.0 * lam * d) / (2.0 * eta * lam_prime * lam_prime)


def moment_ok(ensemble: ParticleEnsemble, bound: float) -> bool:
    """Does the empirical second moment respect the bound?"""
    return ensemble.second_moment() <= bound


def discretization_error_bound(eta: float, lam: float, lam_prime: float,
                               consts: RegularityConstants, d: int) -> float:
    """delta_bar = 40 eta (c2^2 c3^4 + (c1 c4 + 2 lam')^2)(eta c1^2 c3^2 + lam d)."""
    _require_positive(eta=eta, lam=lam, lam_prime=lam_prime)
    if d < 1:
        raise DomainError("d must be >= 1")
    c1, c2, c3, c4 = consts.c1, consts.c2, consts.c3, consts.c4
    return (40.0 * eta
            * (c2 * c2 * c3 ** 4 + (c1 * c4 + 2.0 * lam_prime) ** 2)
            * (eta * c1 * c1 * c3 * c3 + lam * d))


def theorem2_envelope(k: int, eta: float, alpha: float, lam: float,
                      delta_bar: float, initial_gap: float) -> float:
    """delta_bar/(2 alpha lam) + exp(-alpha lam eta k) * initial_gap."""
    _require_positive(eta=eta, lam=lam)
    if not (alpha > 0):
        raise DomainError("alpha must be positive (use the log-space value to check underflow)")
    if delta_bar < 0 or initial_gap < 0:
        raise DomainError("delta_bar and initial_gap must be >= 0")
    if k < 0:
        raise DomainError("k must be >= 0")
    return delta_bar / (2.0 * alpha * lam) + math.exp(-alpha * lam * eta * k) * initial_gap


def iteration_complexity(eps: float, alpha: float, lam: float) -> float:
    """Nominal (1/(eps alpha^2 lam^2)) log(1/eps); order-of-magnitude gauge only."""
    _require_positive(eps=eps, alpha=alpha, lam=lam)
    return math.log(1.0 / eps) / (eps * alpha * alpha * lam * lam)


@dataclass(frozen=True)
class Theorem4Check:
    """Sides of 0 <= L(p_q) - D(g_q) <= (lam + 2 B^2 c2) KL(q || p_q)."""

    lhs: float
    rhs: float
    ok: bool
    std_error: float


def theorem4_check(report: ObjectiveReport, l_pq: Union[PrimalComponents, float],
                   lam: float, b: float, c2: float) -> Theorem4Check:
    """Check the proximal-Gibbs sandwich within 3 combined standard errors."""
    _require_positive(lam=lam, b=b, c2=c2)
    lpq_value = getattr(l_pq, "value", l_pq)
    lpq_se = getattr(l_pq, "se_value", 0.0)
    factor = lam + 2.0 * b * b * c2
    lhs = lpq_value - report.dual
    rhs = factor * report.kl_q_pq
    se_lhs = math.hypot(lpq_se, report.se_dual)
    se_rhs = factor * (report.se_gap / lam)
    tol = 3.0 * (se_lhs + se_rhs)
    ok = (lhs <= rhs + tol) and (lhs >= -3.0 * se_lhs)
    return Theorem4Check(lhs=lhs, rhs=rhs, ok=ok, std_error=se_lhs + se_rhs)


@dataclass(frozen=True)
class TheoryReport:
    """Theory constants for one experiment setup, serialized into metadata.

    envelope_vacuous is set when alpha*lam*eta is so small that the envelope
    cannot decay over the configured budget, which is the generic situation
    at practical lambda given the exponential form of alpha.
    """

    alpha: float
    alpha_log: float
    moment_bound: float
    delta_bar: float
    lam: float
    lam_prime: float
    eta: float
    d: int
    envelope_vacuous: bool

    @classmethod
    def from_setup(cls, hp: HyperParams, consts: RegularityConstants, d: int) -> "TheoryReport":
        _require_positive(lam=hp.lam, lam_prime=hp.lam_prime)
        alpha_log = lsi_log_constant(hp.lam, hp.lam_prime, consts.c1, consts.c5)
        alpha = math.exp(alpha_log)
        mb = moment_bound(hp.eta, hp.lam, hp.lam_prime, consts.c1, consts.c3, d)
        db = discretization_error_bound(hp.eta, hp.lam, hp.lam_prime, consts, d)
        decay = alpha * hp.lam * hp.eta * max(hp.steps, 1)
        return cls(alpha=alpha, alpha_log=alpha_log, moment_bound=mb, delta_bar=db,
                   lam=hp.lam, lam_prime=hp.lam_prime, eta=hp.eta, d=d,
                   envelope_vacuous=bool(decay < 1.0e-8))

    def envelope(self, k: int, initial_gap: float) -> float:
        return theorem2_envelope(k, self.eta, self.alpha, self.lam, self.delta_bar, initial_gap)

    def moment_ok(self, ensemble: ParticleEnsemble) -> bool:
        return moment_ok(ensemble, self.moment_bound)
