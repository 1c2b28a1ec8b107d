"""End-to-end acceptance runs with stated tolerances.

One test per criterion; each prints a single [PASS]/[FAIL] line with the
measured margins (visible under `pytest -s`, and in the failure report
otherwise) before asserting.  Statistical criteria run at pinned seeds whose
margins were verified when the seeds were frozen; tolerances are the stated
ones, not the observed spreads.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp

from mfld.diagnostics import (
    discretization_error_bound,
    lsi_constant,
    moment_bound,
    theorem2_envelope,
    theorem4_check,
)
from mfld.dynamics import (
    HyperParams,
    ParticleEnsemble,
    initialize_ensemble,
    intrinsic_gradient,
    run_dynamics,
)
from mfld.estimators import (
    EstimatorConfig,
    duality_gap_report,
    is_log_partition,
    knn_entropy,
    proximal_primal_objective,
)
from mfld.gibbs import (
    ProximalGibbs,
    SamplerConfig,
    gaussian_log_partition,
    quadrature_log_partition,
    score,
    unnorm_log_density,
)
from mfld.harness import (
    RECORD_FIELDS,
    DatasetSpec,
    ExperimentConfig,
    LoggingSpec,
    ModelSpec,
    build_dataset,
    read_records_csv,
    run_experiment,
)
from mfld.model import (
    Dataset,
    RegularityConstants,
    SquaredLoss,
    TanhAffine,
    TanhScalar,
    make_loss,
    make_neuron,
    model_constants,
    predictions,
)
from mfld.rng import RngSpec, normal_matrix


def _report(name, failures, detail):
    status = "FAIL" if failures else "PASS"
    print(f"[{status}] {name}: {detail}", flush=True)
    if failures:
        pytest.fail(f"{name}: " + "; ".join(failures), pytrace=False)


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1.0e-300)


# ---- criterion 1: Gaussian duality oracle ----


def test_gaussian_duality_oracle():
    t0 = time.perf_counter()
    failures = []
    lam, lam_prime, d, sigma2 = 0.01, 0.01, 2, 1.0
    s2 = lam / (2.0 * lam_prime)

    # closed form: L(q) - D = lam * KL(q || p_q) for q = N(0, sigma^2 I)
    primal = lam_prime * d * sigma2 - lam * (0.5 * d) * math.log(2.0 * math.pi * math.e * sigma2)
    dual = -lam * gaussian_log_partition(lam, lam_prime, d)
    kl_exact = (0.5 * d) * (sigma2 / s2 - 1.0 - math.log(sigma2 / s2))
    ident = abs((primal - dual) - lam * kl_exact)
    if ident >= 1.0e-10:
        failures.append(f"closed-form identity off by {ident:.2e}")

    # estimated gap through the full pipeline on 2e4 exact Gaussian particles
    spec = RngSpec(10)
    ens = ParticleEnsemble(normal_matrix(spec, "check-gauss", 0, 20_000, d))
    rep = duality_gap_report(ens, make_neuron("tanh", d_in=1), SquaredLoss(), Dataset.empty(1),
                            lam, lam_prime, EstimatorConfig(), spec)
    rel = _rel(rep.kl_q_pq, kl_exact)
    if rel >= 0.05:
        failures.append(f"estimated gap/lambda {rep.kl_q_pq:.5f} vs {kl_exact:.5f} ({rel:.2%})")
    elapsed = time.perf_counter() - t0
    if elapsed >= 30.0:
        failures.append(f"took {elapsed:.1f}s, budget 30s")
    _report("gaussian-duality", failures,
            f"identity {ident:.1e} (tol 1e-10), gap/lambda {rep.kl_q_pq:.5f} vs "
            f"{kl_exact:.5f} rel {rel:.3%} (tol 5%), {elapsed:.1f}s")


# ---- criterion 2: OU stationarity ----


def test_ou_stationarity():
    t0 = time.perf_counter()
    spec = RngSpec(118)
    ens0 = initialize_ensemble(1, 1, 0.5, spec)
    hp = HyperParams(lam=0.01, lam_prime=0.01, eta=0.01, steps=1_000_000)
    res = run_dynamics(ens0, None, SquaredLoss(), Dataset.empty(1), hp, spec,
                       track_second_moment=True)
    avg = float(res.second_moments[1:].mean())
    target = hp.lam / (2.0 * hp.lam_prime * (1.0 - hp.lam_prime * hp.eta))
    rel = _rel(avg, target)
    elapsed = time.perf_counter() - t0
    failures = []
    if rel >= 0.03:
        failures.append(f"time-averaged theta^2 {avg:.6f} vs {target:.6f} ({rel:.2%})")
    if elapsed >= 10.0:
        failures.append(f"took {elapsed:.1f}s, budget 10s")
    _report("ou-stationarity", failures,
            f"avg {avg:.6f} vs {target:.6f} rel {rel:.3%} (tol 3%), {elapsed:.1f}s")


# ---- criterion 3: entropy estimator ----


def test_entropy_gaussian_5d():
    t0 = time.perf_counter()
    samples = normal_matrix(RngSpec(271828), "check-ent", 0, 20_000, 5)
    est = knn_entropy(samples, 10)
    exact = 2.5 * math.log(2.0 * math.pi * math.e)  # 7.0947 nats
    rel = _rel(est, exact)
    elapsed = time.perf_counter() - t0
    failures = []
    if rel >= 0.02:
        failures.append(f"entropy {est:.4f} vs {exact:.4f} ({rel:.2%})")
    if elapsed >= 60.0:
        failures.append(f"took {elapsed:.1f}s, budget 60s")
    _report("entropy-gaussian-5d", failures,
            f"{est:.4f} vs {exact:.4f} rel {rel:.3%} (tol 2%), {elapsed:.1f}s")


# ---- criterion 4: log-partition cross-check ----


def test_log_partition_is_vs_quadrature():
    dataset = Dataset(np.array([[1.0], [-0.5]]), np.array([0.2, -0.4]))
    pg = ProximalGibbs(np.array([0.7, -1.1]), dataset, TanhScalar(), lam=1.0, lam_prime=1.0)
    exact = quadrature_log_partition(pg, 8.0, 20_001)
    est = is_log_partition(pg, 100_000, RngSpec(424242), k=0, tag="accept-is")
    rel = _rel(est.value, exact)
    failures = []
    if rel >= 0.005:
        failures.append(f"IS {est.value:.6f} vs quadrature {exact:.6f} ({rel:.3%})")
    _report("log-partition-cross-check", failures,
            f"IS {est.value:.6f} vs quadrature {exact:.6f} rel {rel:.4%} "
            f"(tol 0.5%), se {est.se:.1e}")


# ---- criterion 5 and 7: training-run analog, shared fixture ----


FIG2_CONFIG = ExperimentConfig(
    seed=0,
    dataset=DatasetSpec(kind="teacher-student", n=200, d_in=5, teacher_width=5, noise_std=0.05),
    model=ModelSpec(kind="tanh"),
    loss="squared",
    lam=0.01, lam_prime=0.01, eta=0.01, steps=3000, particles=400,
    logging=LoggingSpec(every=100),
)

CHECKPOINTS = (0, 1500, 3000)


@pytest.fixture(scope="module")
def fig2_run(tmp_path_factory):
    captured = {}

    def hook(k, rec, ens):
        if k in CHECKPOINTS:
            captured[k] = ens

    out = tmp_path_factory.mktemp("fig2") / "a"
    t0 = time.perf_counter()
    run_dir = run_experiment(FIG2_CONFIG, out, record_hook=hook)
    return run_dir, captured, time.perf_counter() - t0


def test_training_run_analog(fig2_run):
    run_dir, captured, t_run = fig2_run
    t0 = time.perf_counter()
    failures = []
    cols = read_records_csv(run_dir / "records.csv")
    it = cols["iter"].astype(int)
    gap0 = float(cols["gap"][it == 0][0])
    gap3 = float(cols["gap"][it == 3000][0])
    ratio = gap3 / gap0
    if not ratio <= 0.25:
        failures.append(f"gap(3000)/gap(0) = {ratio:.3f} > 0.25")

    weak = cols["dual_D"] <= cols["primal_L"] + 3.0 * cols["se_gap"]
    if not np.all(weak):
        failures.append(f"weak duality violated at iters {list(it[~weak])}")

    mok = cols["moment_bound_ok"] == 1.0
    if not np.all(mok):
        failures.append(f"moment bound violated at iters {list(it[~mok])}")

    cfg = FIG2_CONFIG
    ds = build_dataset(cfg, RngSpec(cfg.seed))
    model = make_neuron(cfg.model.kind, d_in=cfg.dataset.d_in)
    loss = make_loss(cfg.loss)
    consts = model_constants(model, loss, ds)
    est = EstimatorConfig()
    thm4 = {}
    for k in CHECKPOINTS:
        rep = duality_gap_report(captured[k], model, loss, ds, cfg.lam, cfg.lam_prime,
                                 est, RngSpec(cfg.seed), k=k)
        pg = ProximalGibbs.from_ensemble(captured[k], model, loss, ds, cfg.lam, cfg.lam_prime)
        lpq = proximal_primal_objective(pg, model, loss, ds, cfg.lam, cfg.lam_prime,
                                        SamplerConfig(), est, RngSpec(cfg.seed), chain=k)
        thm4[k] = theorem4_check(rep, lpq, cfg.lam, 1.0, consts.c2)
        if not thm4[k].ok:
            failures.append(f"theorem-4 check failed at iter {k}: "
                            f"lhs {thm4[k].lhs:.4f}, rhs {thm4[k].rhs:.4f}, "
                            f"se {thm4[k].std_error:.4f}")
    elapsed = t_run + time.perf_counter() - t0
    if elapsed >= 600.0:
        failures.append(f"took {elapsed:.0f}s, budget 600s")
    _report("training-run-analog", failures,
            f"gap ratio {ratio:.3f} (tol 0.25), weak duality {int(np.sum(weak))}/{weak.size}, "
            f"moment ok {int(np.sum(mok))}/{mok.size}, thm4 lhs/rhs "
            + " ".join(f"{k}:{thm4[k].lhs:.3f}/{thm4[k].rhs:.3f}" for k in CHECKPOINTS
                       if k in thm4)
            + f", {elapsed:.0f}s")


def test_determinism(fig2_run, tmp_path):
    run_a = fig2_run[0]
    run_b = run_experiment(FIG2_CONFIG, tmp_path / "b")
    wc = RECORD_FIELDS.index("wallclock_ms")

    def strip(path):
        rows = [line.split(",") for line in (path / "records.csv").read_text().splitlines()]
        return ["\x1f".join(v for j, v in enumerate(row) if j != wc) for row in rows]

    a, b = strip(run_a), strip(run_b)
    failures = []
    if a != b:
        diff = sum(x != y for x, y in zip(a, b)) + abs(len(a) - len(b))
        failures.append(f"records differ in {diff} rows after dropping wallclock")
    _report("determinism", failures,
            f"two runs, {len(a)} records byte-identical modulo wallclock")


# ---- criterion 6: gradient checks ----


def test_gradient_checks():
    failures = []
    # intrinsic gradient vs explicit double loop, M = 2, n = 2
    rng = np.random.default_rng(12)
    model = TanhAffine(2)
    ds = Dataset(rng.normal(size=(2, 2)), rng.normal(size=2))
    ens = ParticleEnsemble(rng.normal(size=(2, 3)))
    loss = SquaredLoss()
    lam_prime = 0.3
    hq = predictions(ens, model, ds)
    want = np.zeros_like(ens.params)
    for r in range(ens.m):
        for i in range(ds.n):
            want[r] += loss.grad(hq[i], ds.targets[i]) * model.grad_one(ens.params[r], ds.inputs[i])
        want[r] = want[r] / ds.n + 2.0 * lam_prime * ens.params[r]
    got = intrinsic_gradient(ens, model, loss, ds, lam_prime)
    worst_grad = float(np.max(np.abs(got - want)))
    if worst_grad >= 1.0e-12:
        failures.append(f"intrinsic gradient off by {worst_grad:.2e}")

    # score vs central differences
    ds2 = Dataset(rng.normal(size=(5, 2)), rng.normal(size=5))
    pg = ProximalGibbs(rng.normal(size=5), ds2, model, 0.3, 0.2)
    eps = 1.0e-6
    worst_score = 0.0
    for _ in range(100):
        theta = rng.normal(size=3)
        s = score(pg, theta)
        fd = np.zeros(3)
        for i in range(3):
            up, dn = theta.copy(), theta.copy()
            up[i] += eps
            dn[i] -= eps
            fd[i] = (unnorm_log_density(pg, up) - unnorm_log_density(pg, dn)) / (2.0 * eps)
        worst_score = max(worst_score, float(np.max(np.abs(s - fd) / (np.abs(fd) + 1.0e-8))))
    if worst_score >= 1.0e-5:
        failures.append(f"score vs finite differences rel {worst_score:.2e}")
    _report("gradient-checks", failures,
            f"double-loop max abs {worst_grad:.1e} (tol 1e-12), "
            f"score FD worst rel {worst_score:.1e} (tol 1e-5)")


# ---- criterion 8: theory formulas vs symbolic substitution ----


def _exact(x):
    """Lift a float into sympy without rounding."""
    return sp.Rational(Fraction(float(x)))


def test_theory_formulas_symbolic():
    lam_s, lp_s, eta_s = sp.symbols("lam lp eta", positive=True)
    c1_s, c2_s, c3_s, c4_s, c5_s = sp.symbols("c1 c2 c3 c4 c5", positive=True)
    d_s, k_s, a_s, db_s, g0_s = sp.symbols("d k a db g0", positive=True)

    alpha_expr = 2 * lp_s / (lam_s * sp.exp(4 * c1_s * c5_s / lam_s))
    mb_expr = (eta_s * c1_s**2 * c3_s**2 + 2 * lam_s * d_s) / (2 * eta_s * lp_s**2)
    db_expr = (40 * eta_s * (c2_s**2 * c3_s**4 + (c1_s * c4_s + 2 * lp_s) ** 2)
               * (eta_s * c1_s**2 * c3_s**2 + lam_s * d_s))
    env_expr = db_s / (2 * a_s * lam_s) + sp.exp(-a_s * lam_s * eta_s * k_s) * g0_s

    rng = np.random.default_rng(20260823)
    worst = 0.0
    for _ in range(100):
        lam = float(rng.uniform(0.2, 2.0))
        lp = float(rng.uniform(0.05, 2.0))
        eta = float(min(rng.uniform(0.05, 2.0), 0.9 / (2.0 * lp)))
        c1, c2, c3, c4, c5 = (float(v) for v in rng.uniform(0.1, 2.0, size=5))
        d = int(rng.integers(1, 8))
        k = int(rng.integers(0, 201))
        a = float(rng.uniform(0.01, 2.0))
        db = float(rng.uniform(0.01, 5.0))
        g0 = float(rng.uniform(0.0, 5.0))

        subs = {lam_s: _exact(lam), lp_s: _exact(lp), eta_s: _exact(eta),
                c1_s: _exact(c1), c2_s: _exact(c2), c3_s: _exact(c3),
                c4_s: _exact(c4), c5_s: _exact(c5), d_s: d, k_s: k,
                a_s: _exact(a), db_s: _exact(db), g0_s: _exact(g0)}

        worst = max(worst, _rel(lsi_constant(lam, lp, c1, c5),
                                float(alpha_expr.evalf(40, subs=subs))))
        worst = max(worst, _rel(moment_bound(eta, lam, lp, c1, c3, d),
                                float(mb_expr.evalf(40, subs=subs))))
        consts = RegularityConstants(c1=c1, c2=c2, c3=c3, c4=c4, c5=c5)
        worst = max(worst, _rel(discretization_error_bound(eta, lam, lp, consts, d),
                                float(db_expr.evalf(40, subs=subs))))
        worst = max(worst, _rel(theorem2_envelope(k, eta, a, lam, db, g0),
                                float(env_expr.evalf(40, subs=subs))))

    failures = []
    if worst > 1.0e-12:
        failures.append(f"worst rel err {worst:.2e} > 1e-12")

    # the envelope floor is delta_bar / (2 alpha lam), symbolically and numerically
    floor_sym = sp.limit(env_expr, k_s, sp.oo)
    if sp.simplify(floor_sym - db_s / (2 * a_s * lam_s)) != 0:
        failures.append(f"symbolic envelope floor is {floor_sym}")
    tail = theorem2_envelope(10**9, 0.1, 0.05, 0.5, 0.3, 2.0)
    floor = 0.3 / (2.0 * 0.05 * 0.5)
    if _rel(tail, floor) > 1.0e-12:
        failures.append(f"numeric envelope floor {tail} != {floor}")
    _report("theory-formulas-symbolic", failures,
            f"100 random inputs, worst rel err {worst:.1e} (tol 1e-12), "
            f"floor db/(2*alpha*lam) confirmed")
