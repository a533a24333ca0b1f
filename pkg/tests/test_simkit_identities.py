"""Small-sample runs of the Brownian identity checks.

These only exercise the plumbing; the statistical claims are checked in
tests_acceptance with realistic path counts.
"""

from __future__ import annotations

import math

import pytest

from diffusion_functionals.coeffspec import parse_expr
from diffusion_functionals.simkit.identities import (
    cherny_dichotomy_check,
    expected_local_time,
    fubini_mean_check,
    ks_critical_value,
    local_time_positivity_check,
    occupation_check,
    ray_knight_check,
    reflection_median,
    williams_check,
)


def test_reflection_median_for_unit_gap():
    assert reflection_median(1.0) == pytest.approx(2.198, rel=1e-3)
    assert reflection_median(2.0) == pytest.approx(4.0 * reflection_median(1.0))


def test_ks_critical_value_shrinks_with_sample_size():
    assert ks_critical_value(100, 100, 0.01) > ks_critical_value(1000, 1000, 0.01)


def test_ray_knight_rejects_level_beyond_start():
    with pytest.raises(ValueError):
        ray_knight_check(1.0, 0.0, 1.5, 4, 1e-2, None, 0)


def test_ray_knight_small_run():
    kwargs = dict(max_time=1e3, block_size=3)
    result = ray_knight_check(1.0, 0.0, 0.5, 8, 1e-2, None, 17, **kwargs)
    again = ray_knight_check(1.0, 0.0, 0.5, 8, 1e-2, None, 17, threads=2, **kwargs)

    assert result.n_right == 8
    assert 0 < result.n_left <= 8
    assert 0.0 <= result.p_value <= 1.0
    assert "underpowered" in result.flags
    assert result.details["expected_mean"] == 1.0
    assert result.details["bandwidth"] == pytest.approx(0.2)
    assert again.statistic == result.statistic
    assert again.details["mean_local_time"] == result.details["mean_local_time"]


def test_williams_small_run():
    result = williams_check(1.0, 0.0, 8, 1e-2, 5, max_time=100.0)

    assert result.n_left == result.n_right == 8
    assert {"underpowered", "scaling_underpowered"} <= set(result.flags)
    assert result.details["scaling_paths"] == 2
    assert result.details["reference_median"] == pytest.approx(reflection_median(1.0))
    assert result.details["median_hitting_time"] <= 100.0


def test_williams_needs_start_below_level():
    with pytest.raises(ValueError):
        williams_check(0.0, 1.0, 4, 1e-2, 0)


def test_cherny_rejects_boundary_exponent():
    with pytest.raises(ValueError):
        cherny_dichotomy_check(2.0, 1.0, 10, 1e-2, 0)


@pytest.mark.parametrize(("exponent", "expected"), [(1.0, "Converging"), (3.0, "Diverging")])
def test_cherny_small_run(exponent, expected):
    summary = cherny_dichotomy_check(exponent, 1.0, 20, 1e-2, 23)

    assert summary.details["expected"] == expected
    assert summary.details["points_per_octave"] == 10
    assert summary.details["octaves"] == 32
    assert summary.estimate >= 0.7
    assert len(summary.per_path) == 20
    assert "underpowered" in summary.flags


def test_fubini_small_run():
    summary = fubini_mean_check(parse_expr("1"), 1.0, 0.0, 50, 1e-2, 3)

    assert summary.details["target"] == pytest.approx(0.5, rel=1e-10)
    assert summary.estimate > 0.0
    assert summary.std_error > 0.0
    assert 0.0 <= summary.details["p_value"] <= 1.0


def test_fubini_requires_finite_weights():
    with pytest.raises(ValueError):
        fubini_mean_check(parse_expr("x^(-1)"), 1.0, 0.0, 10, 1e-2, 3)


def test_occupation_small_run():
    summary = occupation_check(parse_expr("exp(x)"), 0.0, -1.0, 5, 1e-3, None, 2, max_time=100.0)

    assert len(summary.per_path) == 5
    assert all(error >= 0.0 for error in summary.per_path)
    assert summary.details["bandwidth"] == pytest.approx(2.0 * math.sqrt(1e-3))
    assert 0.0 <= summary.details["truncated_fraction"] <= 1.0


@pytest.mark.parametrize(
    ("level", "x0", "horizon", "expected"),
    [
        (0.0, 0.0, 1.0, math.sqrt(2.0 / math.pi)),
        (0.0, 0.0, 4.0, 2.0 * math.sqrt(2.0 / math.pi)),
        (0.5, 0.0, 1.0, 0.3955931),
        (-0.5, 0.0, 1.0, 0.3955931),
    ],
)
def test_expected_local_time_closed_form(level, x0, horizon, expected):
    assert expected_local_time(level, x0, horizon) == pytest.approx(expected, abs=1e-6)


def test_local_time_positivity_small_run():
    summary = local_time_positivity_check(0.5, 0.0, 1.0, 40, 1e-2, None, 9, block_size=7)

    details = summary.details
    assert details["target"] == pytest.approx(0.3955931, abs=1e-6)
    assert details["bandwidth"] == pytest.approx(0.2)
    assert details["early_hits"] > 0
    assert details["positive_fraction"] >= 0.9
    assert details["unvisited_zero"] is True
    assert summary.estimate >= 0.0
    assert "underpowered" in summary.flags


def test_local_time_positivity_from_the_level_counts_every_path_as_hit():
    summary = local_time_positivity_check(0.0, 0.0, 0.5, 12, 1e-2, None, 4)

    assert summary.details["early_hits"] == 12
    assert summary.details["far_paths"] == 0


def test_local_time_positivity_rejects_bad_horizon():
    with pytest.raises(ValueError):
        local_time_positivity_check(0.5, 0.0, 0.0, 4, 1e-2, None, 0)
