"""Acceptance suite: one test per acceptance criterion.

Each test carries a ``criterion`` marker; the conftest prints one PASS/FAIL
line per criterion at the end of the run. Class indices are 0-based here,
so "class 2" of a 1-based statement is index 1.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from gammaphi.calibration import SamplingPlan, Verdict, calibration_gap, certify, sample_simplex
from gammaphi.consistency import Cell, DiscreteDistribution, adversarial_sequence, random_distribution, surrogate_descent
from gammaphi.counterexample import (
    CexParams,
    counterexample_loss,
    divergent_witness,
    f_derivative,
    f_profile,
    g_zero,
    verify_counterexample,
    violating_distribution,
)
from gammaphi.losses import loss_components, loss_jacobian, preset
from gammaphi.risk import (
    ExtendedScore,
    apply_permutation,
    bayes_conditional_risk,
    conditional_risk,
    conditional_risk_gradient,
    extended_risk,
    transposition,
)

from .oracles import bisect, central_difference, grid_bayes_risk

LN2 = math.log(2.0)
CERTIFIED_LOSSES = ("logistic", "coherence:0.5", "coherence:1", "coherence:2", "pairwise-exp", "sigmoid")
NAMED_LOSSES = ("logistic", "coherence:0.5", "coherence:1", "coherence:2", "pairwise-exp", "savage", "sigmoid", "cex")


@pytest.mark.criterion(1, "counterexample reproduction")
def test_counterexample_reproduction():
    p = violating_distribution(0.6, 3)
    spec = counterexample_loss(3)
    bayes = bayes_conditional_risk(p, spec).value
    assert bayes == pytest.approx(1.0, abs=1e-12)

    ts = np.geomspace(1.0, 1000.0, 61)
    risks = np.array([conditional_risk(p, spec, divergent_witness(3, t)) for t in ts])
    assert np.all(np.diff(risks) < 0)
    assert all(int(np.argmax(divergent_witness(3, t))) == 1 for t in ts)
    assert int(np.argmax(p)) == 0

    gap = {t: abs(conditional_risk(p, spec, divergent_witness(3, t)) - bayes) for t in (100.0, 1000.0)}
    assert gap[100.0] < 1e-2
    assert gap[1000.0] < 2e-3

    report = certify(preset("cex", 3), SamplingPlan(n=200, mode="stratified", seed=0))
    assert report.verdict is Verdict.VIOLATION_FOUND


@pytest.mark.criterion(2, "closed-form derivative anchors")
def test_closed_form_derivative_anchors():
    for r in (0.34, 0.5, 0.6, 2.0 / 3.0):
        assert abs(f_derivative(r, LN2) - (8.0 - 8.5 * r)) < 1e-12
        assert abs(f_derivative(r, -LN2) - (1.0 - 17.0 * r) / 2.0) < 1e-12

    r = 0.8
    root = bisect(lambda x: f_derivative(r, x), 1e-9, 5.0, tol=1e-14)
    expected = math.log(r / (2.0 * (1.0 - r))) / 3.0
    assert abs(root - expected) < 1e-8
    assert abs(g_zero(r, "plus") - expected) < 1e-12

    r = 0.25
    root = bisect(lambda x: f_derivative(r, x), -5.0, -1e-9, tol=1e-14)
    expected = math.log(2.0 * r / (1.0 - r)) / 3.0
    assert abs(root - expected) < 1e-8
    assert abs(g_zero(r, "minus") - expected) < 1e-12


@pytest.mark.criterion(3, "unique minimum of the profile")
def test_unique_minimum():
    xs = np.linspace(-5.0, 5.0, 2001)
    xs = xs[xs != 0.0]
    assert xs.shape == (2000,)
    gamma = counterexample_loss(3).gamma
    assert gamma.value(1.0) == 1.0
    for r in (1.0 / 3.0, 0.5, 0.6, 2.0 / 3.0):
        assert np.array_equal(np.sign(f_derivative(r, xs)), np.sign(xs))
        assert f_profile(r, 0.0) == 1.0


@pytest.mark.criterion(4, "positive certification")
def test_positive_certification():
    plan = SamplingPlan(n=200, mode="stratified", seed=0)
    failures = []
    for k in (2, 3, 4):
        P = sample_simplex(k, plan.n, plan.mode, plan.seed)
        assert np.mean(np.any(P == 0.0, axis=1)) >= 0.25
        for name in CERTIFIED_LOSSES:
            report = certify(preset(name, k), plan)
            assert all(probe["evaluated"] for probe in report.probes[1:])
            if report.verdict is not Verdict.CALIBRATED_EVIDENCE or not report.min_gap > 1e-3:
                failures.append((name, k, report.verdict.value, report.min_gap))
    assert not failures, failures


@pytest.mark.criterion(5, "binary closed-form gap")
def test_binary_closed_form_gap():
    expected = LN2 - (-0.6 * math.log(0.6) - 0.4 * math.log(0.4))
    rec = calibration_gap([0.6, 0.4], preset("logistic", 2), 1)
    assert abs(rec.gap - expected) < 1e-4
    assert abs(rec.gap - 0.02006) < 1e-4


@pytest.mark.criterion(6, "symmetry identity property suites")
def test_symmetry_identities():
    rng = np.random.default_rng(2024)
    tol = 1e-10
    worst = {"permutation": 0.0, "transposition": 0.0, "sorting": 0.0}
    for trial in range(1000):
        name = NAMED_LOSSES[trial % len(NAMED_LOSSES)]
        k = int(rng.integers(2, 7))
        spec = preset(name, k)
        p = rng.dirichlet(np.ones(k))
        v = rng.uniform(-3.0, 3.0, k)

        sigma = rng.permutation(k)
        a = conditional_risk(p, spec, v)
        b = conditional_risk(apply_permutation(p, sigma), spec, apply_permutation(v, sigma))
        worst["permutation"] = max(worst["permutation"], abs(a - b))

        y, z = rng.choice(k, size=2, replace=False)
        L = loss_components(spec, v)
        lhs = a - conditional_risk(p, spec, apply_permutation(v, transposition(k, int(y), int(z))))
        worst["transposition"] = max(worst["transposition"], abs(lhs - (p[y] - p[z]) * (L[y] - L[z])))

        p_desc = np.sort(p)[::-1]
        excess = conditional_risk(p_desc, spec, np.sort(v)[::-1]) - conditional_risk(p_desc, spec, v)
        worst["sorting"] = max(worst["sorting"], excess)
    assert all(value <= tol for value in worst.values()), worst


@pytest.mark.criterion(7, "gradient correctness")
def test_gradient_correctness():
    rng = np.random.default_rng(77)
    for name in NAMED_LOSSES:
        for _ in range(200):
            k = int(rng.integers(2, 6))
            spec = preset(name, k)
            p = rng.dirichlet(np.ones(k))
            v = rng.uniform(-2.0, 2.0, k)

            J = loss_jacobian(spec, v)
            fd_J = central_difference(lambda x: loss_components(spec, x), v, h=1e-7)
            assert np.abs(J - fd_J).max() <= 1e-6 * max(1.0, np.abs(fd_J).max()), name

            g = conditional_risk_gradient(p, spec, v)
            fd_g = central_difference(lambda x: conditional_risk(p, spec, x), v, h=1e-7)
            assert np.abs(g - fd_g).max() <= 1e-6 * max(1.0, np.abs(fd_g).max()), name
            assert abs(g.sum()) <= 1e-10, name
            assert np.abs(J.sum(axis=1)).max() <= 1e-10, name


def _random_points(rng, k, n):
    """Interior Dirichlet draws with every other point moved onto a face."""
    points = []
    for i in range(n):
        p = rng.dirichlet(np.ones(k))
        if i % 2 == 1:
            p[rng.integers(k)] = 0.0
            p /= p.sum()
        points.append(p)
    return points


@pytest.mark.criterion(8, "Bayes risk matches grid search; reduction identity")
def test_bayes_oracle_equivalence():
    rng = np.random.default_rng(8)
    for k in (2, 3):
        points = _random_points(rng, k, 20)
        for name in ("logistic", "pairwise-exp", "savage", "cex"):
            spec = preset(name, k)
            for p in points:
                solved = bayes_conditional_risk(p, spec).value
                assert abs(solved - grid_bayes_risk(name, p)) < 1e-3, (name, p)

    configurations = [
        ("logistic", [0.5, 0.3, 0.2, 0.0], ExtendedScore((0, 1, 2), (0.0, -0.4, -1.1))),
        ("coherence:1", [0.7, 0.3, 0.0], ExtendedScore((0, 1), (0.0, -0.8))),
        ("pairwise-exp", [0.6, 0.4, 0.0, 0.0], ExtendedScore((1, 0), (0.0, -0.2))),
        ("sigmoid", [0.5, 0.3, 0.2], bayes_conditional_risk([0.5, 0.3, 0.2], preset("sigmoid", 3)).witness),
        ("cex", [0.6, 0.4, 0.0], ExtendedScore((0, 1), (0.0, 0.0))),
    ]
    for name, p, e in configurations:
        spec = preset(name, len(p))
        d = extended_risk(p, spec, e)
        if e.lower:
            assert d.total == pytest.approx(d.S * d.reduced_risk + d.A, abs=1e-15)
        else:
            c_q = conditional_risk(d.q, spec.with_k(len(e.active)), e.alpha)
            assert d.total == pytest.approx(d.S * c_q + d.A, abs=1e-12)
        errs = [abs(conditional_risk(p, spec, e.at_depth(len(p), T)) - d.total) for T in (5.0, 10.0, 20.0, 40.0)]
        assert all(b < a or b == 0.0 for a, b in zip(errs, errs[1:])), (name, errs)


@pytest.mark.criterion(9, "consistency transfer")
def test_consistency_transfer():
    logistic = {k: preset("logistic", k) for k in (2, 3, 4)}
    for seed in range(20):
        k = 2 + seed % 3
        d = random_distribution(k, 5, seed=seed)
        traj = surrogate_descent(d, logistic[k], 200)
        assert traj.zero_one_regret()[-1] < 1e-6, seed

    single = DiscreteDistribution((Cell(1.0, (0.6, 0.4, 0.0)),))
    traj = adversarial_sequence(single, preset("cex", 3))
    assert traj.surrogate_regret()[-1] < 1e-2
    assert np.all(traj.zero_one_regret() >= 0.19)
    np.testing.assert_allclose(traj.zero_one_regret(), 0.2, atol=1e-12)


@pytest.mark.criterion(10, "determinism")
def test_determinism():
    for name, k in (("logistic", 3), ("sigmoid", 3), ("cex", 3)):
        plan = SamplingPlan(n=20, mode="stratified", seed=11)
        assert certify(preset(name, k), plan).to_json() == certify(preset(name, k), plan).to_json()
    for params in (CexParams(0.6, 3), CexParams(0.55, 5), CexParams(0.8, 3)):
        assert verify_counterexample(params).to_json() == verify_counterexample(params).to_json()
