"""Tests for compact quadrature and improper-integral classification."""

from __future__ import annotations

import math

import numpy as np
import pytest

from diffusion_functionals.coeffspec import StateSpace, evaluator, parse_expr
from diffusion_functionals.quad import (
    Tolerances,
    classify_improper,
    integrate_compact,
    local_integrability_at,
    nonintegrability_set,
    refinement_point,
)

TOL = Tolerances()


def _g(text: str):
    return evaluator(parse_expr(text))


def test_integrate_compact_polynomial():
    result = integrate_compact(_g("x^2"), 0.0, 1.0, TOL)

    assert result.value == pytest.approx(1.0 / 3.0, rel=1e-10)
    assert result.error_estimate < 1e-8


def test_integrate_compact_rejects_unbounded_interval():
    with pytest.raises(ValueError):
        integrate_compact(_g("1"), 0.0, math.inf, TOL)


def test_tolerance_target_mixes_absolute_and_relative():
    assert TOL.target(0.0) == TOL.abs_tol
    assert TOL.target(1e6) == pytest.approx(1e-2)


def test_refinement_points_shrink_toward_finite_endpoint():
    x1, eps1 = refinement_point(1.0, "left_of", 0.0, 1, 0.5)
    x2, eps2 = refinement_point(1.0, "left_of", 0.0, 2, 0.5)

    assert (x1, eps1) == (0.5, 0.5)
    assert (x2, eps2) == (0.75, 0.25)


def test_refinement_points_grow_toward_infinite_endpoint():
    x0, _ = refinement_point(-math.inf, "right_of", 1.0, 0, 0.5)
    x3, eps3 = refinement_point(-math.inf, "right_of", 1.0, 3, 0.5)

    assert x0 == -2.0
    assert x3 == -16.0
    assert eps3 == pytest.approx(1.0 / 16.0)


def test_integrable_power_singularity_is_finite():
    verdict = classify_improper(_g("(1-x)^(-0.5)"), 1.0, "left_of", 0.0, TOL)

    assert verdict.is_finite
    assert verdict.value == pytest.approx(2.0, rel=1e-6)
    assert verdict.exponent_estimate == pytest.approx(-0.5, abs=0.05)


def test_logarithmic_divergence_is_infinite():
    verdict = classify_improper(_g("(1-x)^(-1)"), 1.0, "left_of", 0.0, TOL)

    assert verdict.is_infinite
    assert verdict.value is None
    assert len(verdict.partial_integrals) == len(verdict.increments)


def test_tail_toward_infinity():
    decaying = classify_improper(_g("exp(-x)"), math.inf, "left_of", 0.0, TOL)
    harmonic = classify_improper(_g("1/(1+x)"), math.inf, "left_of", 0.0, TOL)

    assert decaying.is_finite
    assert decaying.value == pytest.approx(1.0, rel=1e-6)
    assert harmonic.is_infinite


def test_classify_improper_checks_orientation():
    with pytest.raises(ValueError):
        classify_improper(_g("1"), 1.0, "left_of", 2.0, TOL)


def test_local_integrability_at_a_point():
    assert local_integrability_at(_g("abs(x)^(-0.5)"), 0.0, TOL, radius=0.5).integrable is True
    assert local_integrability_at(_g("abs(x)^(-1)"), 0.0, TOL, radius=0.5).integrable is False
    bounded = local_integrability_at(_g("exp(x)"), 0.3, TOL)
    assert bounded.integrable is True and bounded.bounded


def test_nonintegrability_set_finds_the_singular_point():
    space = StateSpace(0.0, 10.0, 1.0)

    result = nonintegrability_set(_g("abs(x-2)^(-1)"), space, [1.0, 2.0, 3.0, 12.0], TOL)

    assert result.points == [2.0]
    assert result.tested == [1.0, 2.0, 3.0]
    assert not result.indeterminate


def test_integrate_compact_logarithm():
    result = integrate_compact(_g("log(x)"), 1.0, np.e, TOL)

    assert result.value == pytest.approx(1.0, rel=1e-10)


@pytest.mark.parametrize(
    ("text", "a", "b", "c"),
    [
        ("x^2", 0.0, 0.3, 1.0),
        ("log(x)", 0.5, 2.0, 10.0),
        ("1/(1+x^2)", -3.0, 0.1, 40.0),
        ("(1-x)^(-0.5)", 0.0, 0.5, 1.0),
        ("exp(-x) * indicator(0, 2)", -1.0, 0.5, 3.0),
    ],
)
def test_integrate_compact_is_additive(text, a, b, c):
    g = _g(text)

    left = integrate_compact(g, a, b, TOL)
    right = integrate_compact(g, b, c, TOL)
    whole = integrate_compact(g, a, c, TOL)

    slack = left.error_estimate + right.error_estimate + whole.error_estimate
    assert abs(left.value + right.value - whole.value) <= slack + TOL.target(whole.value)


@pytest.mark.parametrize(
    ("text", "endpoint", "side", "inner"),
    [
        ("x^(-0.5)", 0.0, "right_of", 1.0),
        ("x^(-1)", 0.0, "right_of", 1.0),
        ("exp(-x)", math.inf, "left_of", 0.0),
        ("1/(1+x)", math.inf, "left_of", 0.0),
        ("(1-x)^(-1.5)", 1.0, "left_of", 0.0),
    ],
)
def test_partial_integrals_are_nondecreasing(text, endpoint, side, inner):
    verdict = classify_improper(_g(text), endpoint, side, inner, TOL)

    partials = [total for _, total in verdict.partial_integrals]
    eps = [e for e, _ in verdict.partial_integrals]
    assert len(partials) >= TOL.decision_window
    assert all(b >= a for a, b in zip(partials, partials[1:]))
    assert all(b < a for a, b in zip(eps, eps[1:]))
