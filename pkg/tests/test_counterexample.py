from __future__ import annotations

import csv
import io
import json
import math

import numpy as np
import pytest

from gammaphi.counterexample import (
    DEFAULT_T_GRID,
    CexParams,
    counterexample_loss,
    divergent_witness,
    f_derivative,
    f_profile,
    g_zero,
    profile_table_csv,
    risk_table_csv,
    verify_counterexample,
    violating_distribution,
)
from gammaphi.errors import ConfigurationError, DomainError
from gammaphi.risk import ExtendedScore, conditional_risk, extended_risk

from .oracles import bisect

LN2 = math.log(2.0)


class TestProfile:
    def test_value_at_zero(self):
        assert f_profile(0.6, 0.0) == 1.0

    def test_blows_up_to_the_right(self):
        assert f_profile(0.6, 30.0) > 1e12

    def test_symmetric_at_half(self):
        xs = np.linspace(-5, 5, 101)
        np.testing.assert_allclose(f_profile(0.5, xs), f_profile(0.5, -xs), atol=1e-12, rtol=0)

    def test_hand_value(self):
        # x = ln 2: gamma(1/2) = 3/4 and gamma(2) = 3
        assert f_profile(0.6, LN2) == pytest.approx(0.6 * 0.75 + 0.4 * 3.0, abs=1e-14)

    def test_overflow_is_infinite(self):
        assert f_profile(0.6, 1e4) == math.inf

    @pytest.mark.parametrize("r", [0.0, 1.0, -0.1, 1.5])
    def test_r_out_of_range(self, r):
        with pytest.raises(DomainError):
            f_profile(r, 0.0)


class TestDerivative:
    @pytest.mark.parametrize("r", [0.34, 0.5, 0.6, 2.0 / 3.0])
    def test_closed_form_anchors(self, r):
        assert abs(f_derivative(r, LN2) - (8.0 - 8.5 * r)) < 1e-12
        assert abs(f_derivative(r, -LN2) - (1.0 - 17.0 * r) / 2.0) < 1e-12

    def test_spot_values(self):
        assert f_derivative(0.6, LN2) == pytest.approx(2.9, abs=1e-12)
        assert f_derivative(0.6, -LN2) == pytest.approx(-4.6, abs=1e-12)
        assert f_derivative(0.3, 0.0) == 0.0

    @pytest.mark.parametrize("r", [0.2, 0.5, 0.6, 0.8])
    def test_matches_finite_differences(self, r):
        xs = np.linspace(-5, 5, 500)
        xs = xs[xs != 0.0]
        h = 1e-6
        fd = (f_profile(r, xs + h) - f_profile(r, xs - h)) / (2 * h)
        np.testing.assert_allclose(f_derivative(r, xs), fd, rtol=1e-7, atol=1e-7)
        at_zero = (f_profile(r, h) - f_profile(r, -h)) / (2 * h)
        assert abs(at_zero - f_derivative(r, 0.0)) < 1e-5

    @pytest.mark.parametrize("r", [1 / 3, 0.45, 0.6, 2 / 3])
    def test_sign_matches_x(self, r):
        xs = np.linspace(-5, 5, 2001)
        xs = xs[xs != 0.0]
        assert np.array_equal(np.sign(f_derivative(r, xs)), np.sign(xs))

    def test_array_and_scalar(self):
        assert isinstance(f_derivative(0.6, 1.0), float)
        assert f_derivative(0.6, [1.0, -1.0]).shape == (2,)


class TestZeros:
    def test_plus_side_exists_above_two_thirds(self):
        z = g_zero(0.8, "plus")
        assert z == pytest.approx(math.log(2.0) / 3.0, abs=1e-15)
        assert z == pytest.approx(bisect(lambda x: f_derivative(0.8, x), 1e-9, 5.0, tol=1e-13), abs=1e-10)

    def test_minus_side_exists_below_one_third(self):
        z = g_zero(0.25, "minus")
        assert z == pytest.approx(math.log(2.0 / 3.0) / 3.0, abs=1e-15)
        assert z == pytest.approx(bisect(lambda x: f_derivative(0.25, x), -5.0, -1e-9, tol=1e-13), abs=1e-10)

    @pytest.mark.parametrize("r, side", [(2.0 / 3.0, "plus"), (0.6, "plus"), (1.0 / 3.0, "minus"), (0.5, "minus")])
    def test_absent(self, r, side):
        assert g_zero(r, side) is None

    @pytest.mark.parametrize("r, side", [(0.7, "plus"), (0.95, "plus"), (0.1, "minus"), (0.3, "minus")])
    def test_zeros_are_stationary(self, r, side):
        assert abs(f_derivative(r, g_zero(r, side))) < 1e-10

    def test_bad_side(self):
        with pytest.raises(ConfigurationError):
            g_zero(0.5, "left")


class TestWitness:
    def test_values(self):
        np.testing.assert_array_equal(divergent_witness(3, 2.0), [0.0, 0.5, -2.0])
        np.testing.assert_array_equal(divergent_witness(2, 10.0), [0.0, 0.1])

    @pytest.mark.parametrize("t", [1e-3, 0.5, 1.0, 7.0, 1e4])
    def test_argmax_is_class_one(self, t):
        assert int(np.argmax(divergent_witness(5, t))) == 1

    @pytest.mark.parametrize("k, t", [(1, 1.0), (3, 0.0), (3, -1.0), (3, math.inf)])
    def test_bad_arguments(self, k, t):
        with pytest.raises((ConfigurationError, DomainError)):
            divergent_witness(k, t)

    def test_hand_check_at_t_10(self):
        # L_0 = gamma(e^{0.1} + e^{-10}), L_1 = gamma(e^{-0.1} + e^{-10.1})
        def gamma(x):
            return 1 - (x - 1) ** 2 if x < 1 else 2 * (x - 1) ** 2 + 1

        expected = 0.6 * gamma(math.exp(0.1) + math.exp(-10)) + 0.4 * gamma(math.exp(-0.1) + math.exp(-10.1))
        p = violating_distribution(0.6, 3)
        assert conditional_risk(p, counterexample_loss(3), divergent_witness(3, 10.0)) == pytest.approx(
            expected, abs=1e-14
        )

    @pytest.mark.parametrize("r", [0.51, 0.55, 0.6, 2.0 / 3.0])
    def test_risk_decreases_to_limit(self, r):
        p = violating_distribution(r, 3)
        spec = counterexample_loss(3)
        limit = extended_risk(p, spec, ExtendedScore((0, 1), (0.0, 0.0))).total
        assert limit == 1.0
        risks = [conditional_risk(p, spec, divergent_witness(3, t)) for t in (1, 2, 5, 10, 100, 1000)]
        assert all(b < a for a, b in zip(risks, risks[1:]))
        assert all(x >= limit for x in risks)


class TestParams:
    def test_defaults(self):
        params = CexParams()
        assert (params.r, params.k, params.t_grid) == (0.6, 3, DEFAULT_T_GRID)
        assert params.in_claimed_range

    @pytest.mark.parametrize(
        "kwargs",
        [{"r": 0.0}, {"r": 1.0}, {"k": 1}, {"t_grid": ()}, {"t_grid": (1.0, 1.0)}, {"t_grid": (2.0, 1.0)}, {"t_grid": (-1.0,)}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises((ConfigurationError, DomainError)):
            CexParams(**kwargs)

    @pytest.mark.parametrize("r, k, expected", [(0.5, 3, False), (0.55, 3, True), (0.7, 3, False), (0.6, 2, False)])
    def test_claimed_range(self, r, k, expected):
        assert CexParams(r=r, k=k).in_claimed_range is expected


class TestVerification:
    def test_passes_in_range(self):
        report = verify_counterexample(CexParams(0.6, 3))
        assert report.passed, report.failed_checks
        assert report.bayes == pytest.approx(1.0, abs=1e-12)
        gaps = [row["gap"] for row in report.rows]
        assert gaps[DEFAULT_T_GRID.index(100.0)] < 1e-2
        assert gaps[-1] < 2e-3

    def test_gap_shrinks_quadratically(self):
        # C_p(w_t) - 1 behaves like (3r - 1) / t^2 for large t
        report = verify_counterexample(CexParams(0.6, 3, (100.0, 1000.0)))
        g100, g1000 = (row["gap"] for row in report.rows)
        assert g100 * 1e4 == pytest.approx(0.8, rel=0.05)
        assert g1000 * 1e6 == pytest.approx(0.8, rel=0.01)

    def test_binary_case_fails_parameter_check(self):
        report = verify_counterexample(CexParams(0.6, 2))
        assert not report.passed
        assert report.failed_checks == ["parameters"]
        assert report.notes and "binary" in report.notes[0]

    @pytest.mark.parametrize("r", [0.7, 0.8])
    def test_minimum_moves_above_two_thirds(self, r):
        report = verify_counterexample(CexParams(r, 3))
        assert "unique_minimum" in report.failed_checks

    def test_tight_tolerance_fails_convergence(self):
        report = verify_counterexample(CexParams(0.6, 3, (1.0, 2.0, 5.0)), tol=1e-6)
        assert report.failed_checks == ["convergence"]

    def test_bad_tol(self):
        with pytest.raises(ConfigurationError):
            verify_counterexample(CexParams(), tol=0.0)

    def test_json_deterministic(self):
        a = verify_counterexample(CexParams(0.55, 4)).to_json()
        assert a == verify_counterexample(CexParams(0.55, 4)).to_json()
        doc = json.loads(a)
        assert doc["passed"] is True and doc["kind"] == "counterexample_verification"
        assert [c["name"] for c in doc["checks"]] == [
            "parameters",
            "convergence",
            "argmax",
            "unique_minimum",
            "zero_gap",
        ]


class TestTables:
    def test_risk_table(self):
        report = verify_counterexample(CexParams(0.6, 3, (1.0, 10.0)))
        rows = list(csv.reader(io.StringIO(risk_table_csv(report))))
        assert rows[0] == ["t", "risk"]
        assert [float(r[0]) for r in rows[1:]] == [1.0, 10.0]
        assert float(rows[2][1]) == report.rows[1]["risk"]

    def test_profile_table(self):
        rows = list(csv.reader(io.StringIO(profile_table_csv(0.6, [-1.0, 0.0, 1.0]))))
        assert rows[0] == ["x", "F", "Fprime"]
        assert rows[2] == ["0.0", "1.0", "0.0"]

    def test_default_profile_grid(self):
        assert profile_table_csv(0.6).count("\n") == 2002
