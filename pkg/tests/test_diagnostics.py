"""Tests for the closed-form theory quantities and bound checks."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mfld.diagnostics import (
    Theorem4Check,
    TheoryReport,
    discretization_error_bound,
    iteration_complexity,
    lsi_constant,
    lsi_log_constant,
    moment_bound,
    moment_ok,
    theorem2_envelope,
    theorem4_check,
)
from mfld.dynamics import HyperParams, ParticleEnsemble
from mfld.errors import DomainError
from mfld.estimators import ObjectiveReport
from mfld.model import Dataset, RegularityConstants, SquaredLoss, TanhAffine, model_constants


def make_report(dual=0.0, kl=1.0, se_dual=0.0, se_gap=0.0, lam=1.0):
    """ObjectiveReport with only the fields theorem4_check reads populated."""
    return ObjectiveReport(
        risk=0.0, moment=0.0, entropy_est=0.0, neg_entropy=0.0,
        primal=dual + lam * kl, dual=dual, gap=lam * kl, kl_q_pq=kl, kl_indep=kl,
        second_moment=0.0, conjugate_term=0.0, log_partition=0.0,
        se_primal=0.0, se_dual=se_dual, se_gap=se_gap,
    )


# ---- LSI constant ----


def test_lsi_strongly_log_concave_limit():
    # c1 c5 -> 0 recovers alpha = 2 lam'/lam; use a tiny product
    got = lsi_log_constant(1.0, 3.0, 1e-300, 1e-300)
    assert_allclose(got, math.log(6.0), rtol=1e-12)


def test_lsi_example_value():
    assert_allclose(lsi_constant(1.0, 1.0, 1.0, 1.0), 2.0 / math.e**4, rtol=1e-12)
    assert_allclose(lsi_constant(1.0, 1.0, 1.0, 1.0), 0.036631, rtol=1e-4)


def test_lsi_log_space_small_lambda():
    # log-space value at lambda = 0.01 is exactly log 2 - 400; the linear
    # value survives here (~4e-174) but vanishes by lambda = 0.005
    got = lsi_log_constant(0.01, 0.01, 1.0, 1.0)
    assert_allclose(got, math.log(2.0) - 400.0, rtol=1e-13)
    assert_allclose(lsi_constant(0.01, 0.01, 1.0, 1.0), 2.0 * math.exp(-400.0), rtol=1e-12)
    assert lsi_constant(0.005, 0.005, 1.0, 1.0) == 0.0


def test_lsi_validation():
    with pytest.raises(DomainError):
        lsi_log_constant(0.0, 1.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        lsi_log_constant(1.0, -1.0, 1.0, 1.0)


# ---- moment bound ----


def test_moment_bound_example():
    # the (eta c1^2 c3^2 + 2 lam d) / (2 eta lam'^2) arithmetic at
    # parameters that satisfy the step-size hypothesis
    got = moment_bound(0.25, 1.0, 0.25, 2.0, 2.0, 1)
    assert_allclose(got, (0.25 * 4 * 4 + 2.0) / (2 * 0.25 * 0.0625), rtol=1e-14)
    assert_allclose(got, 192.0, rtol=1e-14)


def test_moment_bound_substitution():
    eta, lam, lam_prime, c1, c3, d = 0.01, 0.02, 0.03, 1.5, 2.5, 4
    want = (eta * c1**2 * c3**2 + 2 * lam * d) / (2 * eta * lam_prime**2)
    assert_allclose(moment_bound(eta, lam, lam_prime, c1, c3, d), want, rtol=1e-14)


def test_moment_bound_decreasing_in_lam_prime():
    a = moment_bound(0.1, 0.1, 0.1, 1.0, 1.0, 2)
    b = moment_bound(0.1, 0.1, 0.2, 1.0, 1.0, 2)
    assert b < a


def test_moment_bound_step_size_guard():
    with pytest.raises(DomainError):
        moment_bound(1.0, 1.0, 1.0, 1.0, 1.0, 1)  # 2 lam' eta = 2 >= 1


def test_moment_ok():
    assert moment_ok(ParticleEnsemble(np.zeros((3, 2))), 0.5)
    assert not moment_ok(ParticleEnsemble(np.full((2, 2), 10.0)), 0.5)


# ---- discretization error ----


def test_discretization_example():
    consts = RegularityConstants(c1=1.0, c2=1.0, c3=1.0, c4=1.0, c5=1.0, unit_ball=False)
    got = discretization_error_bound(0.1, 1.0, 1.0, consts, 1)
    assert_allclose(got, 44.0, rtol=1e-12)


def test_discretization_eta_scaling():
    consts = RegularityConstants(c1=0.5, c2=1.0, c3=2.0, c4=1.5, c5=1.0, unit_ball=False)
    a = discretization_error_bound(0.01, 0.1, 0.2, consts, 3)
    b = discretization_error_bound(0.02, 0.1, 0.2, consts, 3)
    assert b >= 2 * a  # at least linear in eta


def test_discretization_substitution():
    consts = RegularityConstants(c1=1.1, c2=0.25, c3=2.0, c4=8.0, c5=1.0, unit_ball=False)
    eta, lam, lam_prime, d = 0.05, 0.3, 0.2, 3
    want = (40 * eta * (0.25**2 * 2.0**4 + (1.1 * 8.0 + 2 * 0.2) ** 2)
            * (eta * 1.1**2 * 2.0**2 + lam * d))
    assert_allclose(discretization_error_bound(eta, lam, lam_prime, consts, d), want, rtol=1e-14)


# ---- envelope ----


def test_envelope_example():
    got = theorem2_envelope(1, 1.0, 1.0, 1.0, 2.0, 1.0)
    assert_allclose(got, 1.0 + math.exp(-1.0), rtol=1e-14)


def test_envelope_k_zero_and_floor():
    assert_allclose(theorem2_envelope(0, 0.1, 0.5, 0.2, 3.0, 2.0),
                    3.0 / (2 * 0.5 * 0.2) + 2.0, rtol=1e-14)
    floor = 3.0 / (2 * 0.5 * 0.2)
    assert_allclose(theorem2_envelope(10**9, 0.1, 0.5, 0.2, 3.0, 2.0), floor, rtol=1e-12)


def test_envelope_monotone_nonincreasing():
    vals = [theorem2_envelope(k, 0.05, 0.3, 0.4, 1.0, 5.0) for k in range(0, 200, 7)]
    diffs = np.diff(vals)
    assert np.all(diffs <= 1e-15)


def test_envelope_requires_positive_alpha():
    with pytest.raises(DomainError):
        theorem2_envelope(1, 0.1, 0.0, 0.1, 1.0, 1.0)


# ---- iteration complexity ----


def test_iteration_complexity_values():
    assert iteration_complexity(1.0, 2.0, 3.0) == 0.0
    assert_allclose(iteration_complexity(0.1, 1.0, 1.0), 10 * math.log(10.0), rtol=1e-14)
    # halving lambda quadruples the pre-log factor
    a = iteration_complexity(0.1, 1.0, 1.0)
    b = iteration_complexity(0.1, 1.0, 0.5)
    assert_allclose(b, 4 * a, rtol=1e-14)


# ---- theorem 4 ----


def test_theorem4_exact_case():
    rep = make_report(dual=1.0, kl=2.0)
    chk = theorem4_check(rep, 1.5, 1.0, 1.0, 1.0)
    assert isinstance(chk, Theorem4Check)
    assert_allclose(chk.lhs, 0.5, rtol=1e-15)
    assert_allclose(chk.rhs, (1.0 + 2.0) * 2.0, rtol=1e-15)
    assert chk.ok


def test_theorem4_b_doubling_algebra():
    rep = make_report(dual=0.0, kl=3.0, lam=0.5)
    a = theorem4_check(rep, 0.0, 0.5, 1.0, 0.25)
    b = theorem4_check(rep, 0.0, 0.5, 2.0, 0.25)
    # rhs gains 6 B^2 C2 kl when B doubles
    assert_allclose(b.rhs - a.rhs, 6 * 1.0 * 0.25 * 3.0, rtol=1e-13)


def test_theorem4_zero_kl():
    rep = make_report(dual=2.0, kl=0.0)
    chk = theorem4_check(rep, 2.0, 1.0, 1.0, 1.0)
    assert chk.rhs == 0.0
    assert chk.ok


def test_theorem4_violation_detected():
    # lhs far above rhs with no error budget
    rep = make_report(dual=0.0, kl=0.1)
    chk = theorem4_check(rep, 10.0, 1.0, 0.5, 0.5)
    assert not chk.ok


def test_theorem4_negative_lhs_detected():
    rep = make_report(dual=5.0, kl=1.0)
    chk = theorem4_check(rep, 0.0, 1.0, 1.0, 1.0)  # lhs = -5 with zero SE
    assert not chk.ok


def test_theorem4_error_budget():
    # same violation passes once the standard errors cover it
    rep = make_report(dual=0.0, kl=0.1, se_dual=2.0, se_gap=0.0)
    chk = theorem4_check(rep, 5.0, 1.0, 0.5, 0.5)
    assert chk.ok


# ---- theory report ----


def test_theory_report_from_setup():
    hp = HyperParams(lam=1.0, lam_prime=1.0, eta=0.1, steps=100)
    consts = RegularityConstants(c1=1.0, c2=1.0, c3=1.0, c4=1.0, c5=1.0, unit_ball=False)
    rep = TheoryReport.from_setup(hp, consts, d=1)
    assert_allclose(rep.alpha, 2.0 / math.e**4, rtol=1e-12)
    assert_allclose(rep.alpha_log, math.log(2.0) - 4.0, rtol=1e-13)
    assert_allclose(rep.moment_bound,
                    moment_bound(0.1, 1.0, 1.0, 1.0, 1.0, 1), rtol=1e-15)
    assert_allclose(rep.delta_bar,
                    discretization_error_bound(0.1, 1.0, 1.0, consts, 1), rtol=1e-15)
    assert not rep.envelope_vacuous
    assert rep.envelope(10, 1.0) < rep.envelope(0, 1.0)


def test_theory_report_vacuous_at_small_lambda():
    # realistic constants at lambda = 0.01 make alpha underflow entirely
    hp = HyperParams(lam=0.01, lam_prime=0.01, eta=0.01, steps=3000)
    rng = np.random.default_rng(0)
    ds = Dataset(rng.normal(size=(20, 2)), rng.normal(size=20))
    consts = model_constants(TanhAffine(2), SquaredLoss(), ds)
    rep = TheoryReport.from_setup(hp, consts, d=3)
    assert rep.envelope_vacuous
    assert rep.alpha == 0.0
    assert rep.alpha_log < -100
    with pytest.raises(DomainError):
        rep.envelope(10, 1.0)


def test_theory_report_moment_ok_roundtrip():
    hp = HyperParams(lam=0.1, lam_prime=0.1, eta=0.1, steps=10)
    consts = RegularityConstants(c1=1.0, c2=1.0, c3=1.0, c4=1.0, c5=1.0, unit_ball=False)
    rep = TheoryReport.from_setup(hp, consts, d=2)
    assert rep.moment_ok(ParticleEnsemble(np.zeros((4, 2))))
