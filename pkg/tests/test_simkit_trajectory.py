"""Tests for checkpoints and the trend rule."""

from __future__ import annotations

import math

import numpy as np
import pytest

from diffusion_functionals.simkit.paths import ExitRecord, PathSample
from diffusion_functionals.simkit.trajectory import (
    checkpoint_times,
    classify_trend,
    functional_trajectory,
)


def _path(times, values, integral=None, exit_time=None):
    times = np.asarray(times, dtype=float)
    exit_record = (
        ExitRecord(kind="exit", time=exit_time, endpoint="r")
        if exit_time is not None
        else ExitRecord(kind="no_exit", time=float(times[-1]))
    )
    return PathSample(
        times=times,
        values=np.asarray(values, dtype=float),
        exit=exit_record,
        driving_seed=0,
        integral=None if integral is None else np.asarray(integral, dtype=float),
    )


def test_geometric_decay_converges():
    trend, slope, (s1, s2) = classify_trend(0.5 ** np.arange(16))

    assert trend == "Converging"
    assert slope == pytest.approx(math.log(1.0 / 16.0) / 4.0)
    assert s2 < s1


def test_level_increments_diverge():
    trend, slope, _ = classify_trend(np.ones(16))

    assert trend == "Diverging"
    assert slope == pytest.approx(0.0)


def test_slow_decay_is_undecided():
    increments = np.ones(16)
    increments[12:] = math.exp(-0.08)

    trend, slope, _ = classify_trend(increments)

    assert trend == "Undecided"
    assert slope == pytest.approx(-0.02)


def test_trend_edge_cases():
    assert classify_trend([1.0, 2.0])[0] == "Undecided"
    assert classify_trend(np.zeros(16))[0] == "Converging"
    assert classify_trend([1.0, 1.0, math.inf, 1.0])[0] == "Diverging"


def test_checkpoints_for_exited_and_running_paths():
    exited = _path([0.0, 1.0, 2.0], [0.0, 0.5, 1.0], exit_time=2.0)
    running = _path([0.0, 8.0], [0.0, 0.0])

    np.testing.assert_allclose(checkpoint_times(exited, 4), 2.0 * (1.0 - 2.0 ** -np.arange(1, 5)))
    np.testing.assert_allclose(checkpoint_times(running, 4), [1.0, 2.0, 4.0, 8.0])


def test_elapsed_time_diverges():
    times = np.linspace(0.0, 1024.0, 4097)
    path = _path(times, np.zeros_like(times), integral=times)

    diagnostic = functional_trajectory(path, dyadic_count=10)

    assert diagnostic.trend == "Diverging"
    assert len(diagnostic.checkpoints) == 10
    assert diagnostic.checkpoints[-1] == (1024.0, 1024.0)


def test_integrand_argument_recomputes_the_running_integral():
    times = np.linspace(0.0, 1000.0, 100_001)
    path = _path(times, times)

    diagnostic = functional_trajectory(path, f=lambda y: np.exp(-y))

    assert diagnostic.trend == "Converging"
    assert diagnostic.checkpoints[-1][1] == pytest.approx(1.0, rel=1e-3)


def test_functional_trajectory_needs_enough_checkpoints():
    path = _path([0.0, 1.0], [0.0, 0.0], integral=[0.0, 1.0])

    with pytest.raises(ValueError):
        functional_trajectory(path, dyadic_count=3)
