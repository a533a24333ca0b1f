"""Tests for boundary classification, D-set reduction and verdicts."""

from __future__ import annotations

import math

import numpy as np
import pytest

from diffusion_functionals.classify import (
    brownian_case_verdict,
    classify_recurrence,
    default_candidates,
    full_verdict,
    reduce_by_D,
    theorem2_verdict,
    theorem3_verdict,
    transform_problem,
    whole_line_brownian_verdict,
)
from diffusion_functionals.coeffspec import build_problem, parse_expr
from diffusion_functionals.quad import Tolerances
from diffusion_functionals.scale import ScaleFunction

TOL = Tolerances()


def test_recurrent_brownian_with_positive_f_is_infinite():
    p = build_problem(-math.inf, math.inf, 0.0, "0", "1", "indicator(0,1)")

    report = full_verdict(p, TOL)

    assert report.status == "conclusive"
    assert report.recurrence is not None and report.recurrence.recurrent
    assert report.on_event_A is not None
    assert report.on_event_A.kind == "infinite"
    assert 0.0 < report.on_event_A.witness < 1.0
    assert report.events() == {"on_event_A": "infinite"}


def test_recurrent_brownian_with_zero_f_is_zero():
    p = build_problem(-math.inf, math.inf, 0.0, "0", "1", "0")

    report = full_verdict(p, TOL)

    assert report.on_event_A is not None
    assert report.on_event_A.kind == "zero"


def test_declared_zero_skips_the_positivity_search():
    p = build_problem(-math.inf, math.inf, 0.0, "0", "1", "indicator(0,1e-300)")

    report = full_verdict(p, TOL, f_ae_zero=True)

    assert report.events() == {"on_event_A": "zero"}


@pytest.mark.parametrize(("f", "expected"), [("x^(-3)", "finite"), ("x^(-1)", "infinite")])
def test_bessel3_verdicts(f, expected):
    p = build_problem(0.0, math.inf, 1.0, "1/x", "1", f)

    report = full_verdict(p, TOL)

    assert report.status == "conclusive"
    assert report.recurrence is not None
    assert report.recurrence.kind == "transient"
    assert report.events() == {"on_limit_r": expected, "on_limit_l": "event_null"}


def test_driftless_gbm_time_to_zero_is_infinite():
    p = build_problem(0.0, math.inf, 1.0, "0", "x", "1")

    report = full_verdict(p, TOL)

    assert report.events() == {"on_limit_r": "event_null", "on_limit_l": "infinite"}
    assert report.recurrence is not None
    assert report.recurrence.left.attracted is True
    assert report.recurrence.left.explosive is False


def test_brownian_on_unit_interval_exits_in_finite_time():
    p = build_problem(0.0, 1.0, 0.5, "0", "1", "1")

    report = full_verdict(p, TOL)

    assert report.events() == {"on_limit_r": "finite", "on_limit_l": "finite"}
    assert report.recurrence is not None
    assert report.recurrence.right.explosive is True


def test_d_set_reduces_the_interval():
    p = build_problem(
        -math.inf, math.inf, 0.0, "0", "1", "abs(x-2)^(-1)", declared_singularities=[2.0]
    )

    report = full_verdict(p, TOL)

    assert report.reduced.D_points == [2.0]
    assert report.reduced.alpha == -math.inf
    assert report.reduced.beta == 2.0
    assert report.events() == {"on_limit_r": "finite", "on_limit_l": "event_null"}
    assert "eta_D" in report.finite_before_etaD


def test_start_inside_d_is_zero():
    p = build_problem(-1.0, 1.0, 0.0, "0", "1", "abs(x)^(-1)")

    report = full_verdict(p, TOL)

    assert report.reduced.x0_in_D
    assert report.on_start_in_D == "zero"
    assert report.recurrence is None


def test_reduce_by_d_keeps_integrable_candidates():
    p = build_problem(-5.0, 5.0, 0.0, "0", "1", "abs(x-1)^(-0.5) + abs(x+2)^(-2)")

    reduced = reduce_by_D(p, [-2.0, 1.0, 3.0], TOL)

    assert reduced.D_points == [-2.0]
    assert (reduced.alpha, reduced.beta) == (-2.0, 5.0)
    assert reduced.I is not None and reduced.I.x0 == 0.0


def test_brownian_case_verdict_threshold_at_two():
    finite = brownian_case_verdict(parse_expr("(1-x)^(-1.5)"), 0.0, 1.0, TOL)
    infinite = brownian_case_verdict(parse_expr("(1-x)^(-2.5)"), 0.0, 1.0, TOL)

    assert finite.kind == "finite"
    assert infinite.kind == "infinite"


def test_brownian_case_verdict_rejects_start_above_level():
    with pytest.raises(ValueError):
        brownian_case_verdict(parse_expr("1"), 2.0, 1.0, TOL)


def test_whole_line_brownian_verdict():
    singular = whole_line_brownian_verdict(parse_expr("abs(x)^(-1)"), TOL)
    bounded = whole_line_brownian_verdict(parse_expr("exp(-x^2)"), TOL)

    assert singular.kind == "infinite"
    assert singular.witness == 0.0
    assert bounded.kind == "finite"


def test_transformed_problem_matches_direct_endpoint_verdict():
    p = build_problem(0.0, math.inf, 1.0, "1/x", "1", "x^(-3)")
    sf = ScaleFunction(p, 1.0, TOL)

    transformed = transform_problem(p, sf, TOL)

    assert transformed.s_r == pytest.approx(1.0, rel=1e-6)
    assert transformed.s_l == -math.inf
    assert transformed.endpoint_check("r", TOL).kind == theorem3_verdict(p, sf, "r", TOL).kind
    assert transformed.endpoint_check("l", TOL).kind == "event_null"


def test_recurrent_verdict_requires_recurrence():
    p = build_problem(0.0, math.inf, 1.0, "1/x", "1", "1")
    sf = ScaleFunction(p, 1.0, TOL)

    assert classify_recurrence(p, sf, TOL).kind == "transient"
    with pytest.raises(ValueError):
        theorem2_verdict(p, sf, TOL)


@pytest.mark.parametrize(
    ("f", "support"),
    [
        ("indicator(100,101)", (100.0, 101.0)),
        ("indicator(-250.5,-250.25)", (-250.5, -250.25)),
        ("indicator(1e5, 1e5 + 0.5)", (1e5, 1e5 + 0.5)),
        ("max(x - 3000, 0) * indicator(3000, 3000.5)", (3000.0, 3000.5)),
    ],
)
def test_recurrent_verdict_finds_support_far_from_start(f, support):
    p = build_problem(-math.inf, math.inf, 0.0, "0", "1", f)

    report = full_verdict(p, TOL)

    assert report.events() == {"on_event_A": "infinite"}
    assert support[0] < report.on_event_A.witness < support[1]


def test_default_candidates_include_undeclared_singularities():
    p = build_problem(-math.inf, math.inf, 0.0, "0", "1", "abs(x - 37.3)^(-1)")

    assert 37.3 in default_candidates(p, 64)

    report = full_verdict(p, TOL)

    assert report.reduced.D_points == [37.3]
    assert report.reduced.beta == 37.3
    assert report.events() == {"on_limit_r": "finite", "on_limit_l": "event_null"}


@pytest.mark.parametrize(
    ("l", "r", "x0", "mu", "sigma", "f", "endpoint", "expected"),
    [
        (0.0, math.inf, 1.0, "1/x", "1", "x^(-3)", "r", "finite"),
        (0.0, math.inf, 1.0, "1/x", "1", "x^(-4)", "r", "finite"),
        (0.0, math.inf, 1.0, "1/x", "1", "x^(-1)", "r", "infinite"),
        (0.0, math.inf, 1.0, "0.1*x", "0.2*x", "x^(-2)", "r", "finite"),
        (0.0, math.inf, 1.0, "0.1*x", "0.2*x", "1", "r", "infinite"),
        (0.0, math.inf, 1.0, "0", "x", "x", "l", "finite"),
        (0.0, math.inf, 1.0, "0", "x", "1", "l", "infinite"),
        (-math.inf, 1.0, 0.0, "0", "1", "(1-x)^(-1.5)", "r", "finite"),
        (-math.inf, 1.0, 0.0, "0", "1", "(1-x)^(-2.5)", "r", "infinite"),
        (0.0, 1.0, 0.5, "0", "1", "1", "l", "finite"),
    ],
)
def test_transformed_check_agrees_across_closed_form_family(
    l, r, x0, mu, sigma, f, endpoint, expected
):
    p = build_problem(l, r, x0, mu, sigma, f)
    sf = ScaleFunction(p, x0, TOL)

    transformed = transform_problem(p, sf, TOL)

    assert theorem3_verdict(p, sf, endpoint, TOL).kind == expected
    assert transformed.endpoint_check(endpoint, TOL).kind == expected


def test_bessel_sigma_tilde_closed_form():
    p = build_problem(0.0, math.inf, 1.0, "1/x", "1", "1")
    sf = ScaleFunction(p, 1.0, TOL)
    u = np.array([-3.0, -1.0, 0.0, 0.5, 0.9])

    transformed = transform_problem(p, sf, TOL)

    assert np.allclose(transformed.s_inverse(u), 1.0 / (1.0 - u), rtol=1e-8)
    assert np.allclose(transformed.sigma_tilde(u), (1.0 - u) ** 2, rtol=1e-6)
    assert np.allclose(transformed.f_tilde(u), 1.0)
