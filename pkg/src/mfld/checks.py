"""Self-contained verification suites behind the `check` CLI subcommand.

Each suite re-derives its expected values independently of the library code
it exercises: theory formulas against literal re-transcriptions in plain
math-module arithmetic, estimators against closed-form or quadrature
oracles.  Suites return per-check results; the CLI turns them into exit
codes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diagnostics import (
    discretization_error_bound,
    iteration_complexity,
    lsi_constant,
    moment_bound,
    theorem2_envelope,
)
from .dynamics import ParticleEnsemble
from .estimators import EstimatorConfig, duality_gap_report, is_log_partition, knn_entropy
from .gibbs import ProximalGibbs, gaussian_log_partition, quadrature_log_partition
from .model import Dataset, RegularityConstants, SquaredLoss, TanhScalar, make_loss, make_neuron
from .rng import RngSpec, normal_matrix


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _run(name: str, fn) -> CheckResult:
    try:
        detail = fn()
        return CheckResult(name=name, passed=True, detail=detail)
    except AssertionError as e:
        return CheckResult(name=name, passed=False, detail=str(e))
    except Exception as e:
        return CheckResult(name=name, passed=False, detail=f"{type(e).__name__}: {e}")


def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1.0e-300)


# ---- theory suite ----


def _theory_formula_check() -> str:
    rng = np.random.default_rng(20240811)
    worst = 0.0
    for _ in range(100):
        lam, lam_prime, eta = rng.uniform(0.05, 2.0, size=3)
        eta = min(eta, 0.9 / (2.0 * lam_prime))
        c1, c2, c3, c4, c5 = rng.uniform(0.1, 3.0, size=5)
        d = int(rng.integers(1, 8))
        k = int(rng.integers(0, 500))
        gap0 = float(rng.uniform(0.0, 5.0))

        alpha = lsi_constant(lam, lam_prime, c1, c5)
        alpha_alt = 2.0 * lam_prime / (lam * math.exp(4.0 * c1 * c5 / lam))
        worst = max(worst, _rel_err(alpha, alpha_alt))

        mb = moment_bound(eta, lam, lam_prime, c1, c3, d)
        mb_alt = (c1 * c1 * c3 * c3) / (2.0 * lam_prime * lam_prime) \
            + lam * d / (eta * lam_prime * lam_prime)
        worst = max(worst, _rel_err(mb, mb_alt))

        consts = RegularityConstants(c1=c1, c2=c2, c3=c3, c4=c4, c5=c5)
        db = discretization_error_bound(eta, lam, lam_prime, consts, d)
        inner2 = eta * c1 * c1 * c3 * c3 + lam * d
        db_alt = 40.0 * eta * (c2 * c2 * c3 * c3 * c3 * c3) * inner2 \
            + 40.0 * eta * ((c1 * c4 + 2.0 * lam_prime) ** 2) * inner2
        worst = max(worst, _rel_err(db, db_alt))

        env = theorem2_envelope(k, eta, alpha, lam, db, gap0)
        env_alt = 0.5 * db / alpha / lam + gap0 * math.exp(-(alpha * lam * eta) * k)
        worst = max(worst, _rel_err(env, env_alt))

        eps = float(rng.uniform(0.001, 1.0))
        ic = iteration_complexity(eps, alpha, lam)
        ic_alt = -math.log(eps) / eps / (alpha * alpha) / (lam * lam)
        worst = max(worst, _rel_err(ic, ic_alt))
    assert worst <= 1.0e-12, f"two-implementation mismatch, worst rel err {worst:.3e}"
    return f"100 random inputs, worst rel err {worst:.2e}"


def _envelope_shape_check() -> str:
    alpha, lam, eta, db, gap0 = 0.05, 0.5, 0.1, 0.3, 2.0
    floor = db / (2.0 * alpha * lam)
    ks = list(range(0, 4000, 50))
    vals = [theorem2_envelope(k, eta, alpha, lam, db, gap0) for k in ks]
    diffs = np.diff(vals)
    assert np.all(diffs <= 1.0e-15), "envelope not non-increasing"
    tail = theorem2_envelope(10_000_000, eta, alpha, lam, db, gap0)
    assert _rel_err(tail, floor) < 1.0e-9, f"envelope floor {tail} != delta_bar/(2 alpha lam) = {floor}"
    return f"floor {floor:.6g} reached, monotone over {len(ks)} points"


def suite_theory() -> list[CheckResult]:
    return [
        _run("theory.two-implementation", _theory_formula_check),
        _run("theory.envelope-shape", _envelope_shape_check),
    ]


# ---- estimator suite ----


def _entropy_gaussian_check() -> str:
    spec = RngSpec(271828)
    samples = normal_matrix(spec, "check-ent", 0, 20_000, 5)
    est = knn_entropy(samples, 10)
    exact = 2.5 * math.log(2.0 * math.pi * math.e)
    rel = _rel_err(est, exact)
    assert rel < 0.02, f"entropy {est:.4f} vs {exact:.4f}, rel err {rel:.3%}"
    return f"N(0,I_5): {est:.4f} vs {exact:.4f} (rel err {rel:.3%})"


def _entropy_scale_check() -> str:
    spec = RngSpec(1729)
    samples = normal_matrix(spec, "check-ent", 1, 2_000, 3)
    base = knn_entropy(samples, 5)
    scaled = knn_entropy(2.0 * samples, 5)
    shift = scaled - base
    expect = 3.0 * math.log(2.0)
    assert abs(shift - expect) < 1.0e-10, f"scale shift {shift} != d log 2 = {expect}"
    return f"scaling by 2 shifts estimate by {shift:.12f} = d log 2"


def _is_vs_quadrature_check() -> str:
    model = TanhScalar()
    dataset = Dataset(np.array([[1.0], [-0.5]]), np.array([0.2, -0.4]))
    g = np.array([0.7, -1.1])
    pg = ProximalGibbs(g, dataset, model, lam=1.0, lam_prime=1.0)
    exact = quadrature_log_partition(pg, 8.0, 20_001)
    est = is_log_partition(pg, 100_000, RngSpec(424242), k=0, tag="check-is")
    rel = _rel_err(est.value, exact)
    assert rel < 0.005, f"IS {est.value:.6f} vs quadrature {exact:.6f}, rel err {rel:.3%}"
    return f"IS {est.value:.6f} vs quadrature {exact:.6f} (rel err {rel:.4%}, se {est.se:.2e})"


def _fenchel_young_check() -> str:
    rng = np.random.default_rng(7)
    sq = make_loss("squared")
    lo = make_loss("logistic")
    worst = np.inf
    for _ in range(1000):
        z = float(rng.normal())
        y = float(rng.normal())
        gq = float(rng.normal())
        worst = min(worst, float(sq.eval(z, y) + sq.conjugate(gq, y) - z * gq))
        ylog = 1.0 if rng.random() < 0.5 else -1.0
        glog = -ylog * float(rng.uniform(0.0, 1.0))
        worst = min(worst, float(lo.eval(z, ylog) + lo.conjugate(glog, ylog) - z * glog))
    assert worst >= -1.0e-12, f"Fenchel-Young violated by {worst}"
    return f"1000 random triples, smallest slack {worst:.3e}"


def suite_estimators() -> list[CheckResult]:
    return [
        _run("estimators.entropy-gaussian", _entropy_gaussian_check),
        _run("estimators.entropy-scale-law", _entropy_scale_check),
        _run("estimators.is-vs-quadrature", _is_vs_quadrature_check),
        _run("estimators.fenchel-young", _fenchel_young_check),
    ]


# ---- gaussian oracle suite ----


def _closed_form_identity_check() -> str:
    lam, lam_prime, d, sigma2 = 0.01, 0.01, 2, 1.0
    s2 = lam / (2.0 * lam_prime)
    primal = lam_prime * d * sigma2 - lam * (0.5 * d) * math.log(2.0 * math.pi * math.e * sigma2)
    dual = -lam * gaussian_log_partition(lam, lam_prime, d)
    kl = (0.5 * d) * (sigma2 / s2 - 1.0 - math.log(sigma2 / s2))
    diff = abs((primal - dual) - lam * kl)
    assert diff < 1.0e-10, f"closed-form identity off by {diff:.3e}"
    return f"L - D = lambda*KL holds to {diff:.2e} (KL = {kl:.6f})"


def _estimated_gap_check() -> str:
    lam, lam_prime, d = 0.01, 0.01, 2
    spec = RngSpec(9)
    ens = ParticleEnsemble(normal_matrix(spec, "check-gauss", 0, 20_000, d))
    model = make_neuron("tanh", d_in=1)
    rep = duality_gap_report(ens, model, SquaredLoss(), Dataset.empty(1), lam, lam_prime,
                             EstimatorConfig(), spec)
    kl_exact = (0.5 * d) * (2.0 - 1.0 - math.log(2.0))
    rel = _rel_err(rep.kl_q_pq, kl_exact)
    assert rel < 0.05, f"gap/lambda {rep.kl_q_pq:.5f} vs KL {kl_exact:.5f}, rel err {rel:.3%}"
    assert rep.dual <= rep.primal + 3.0 * rep.se_gap, "weak duality violated beyond 3 SE"
    return f"gap/lambda {rep.kl_q_pq:.5f} vs closed-form {kl_exact:.5f} (rel err {rel:.3%})"


def suite_gaussian_oracle() -> list[CheckResult]:
    return [
        _run("gaussian-oracle.closed-form", _closed_form_identity_check),
        _run("gaussian-oracle.estimated-gap", _estimated_gap_check),
    ]


SUITES = {
    "theory": suite_theory,
    "estimators": suite_estimators,
    "gaussian-oracle": suite_gaussian_oracle,
}
