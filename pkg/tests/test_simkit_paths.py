"""Tests for seeding, block dispatch and the path samplers."""

from __future__ import annotations

import math

import numpy as np
import pytest

from diffusion_functionals.coeffspec import build_problem
from diffusion_functionals.simkit import paths as paths_module
from diffusion_functionals.simkit.paths import (
    ExitRecord,
    PathSample,
    SimulationError,
    bessel3_on_grid,
    first_hit,
    horizon_too_short,
    last_exit,
    simulate_bessel3,
    simulate_bm_to_hit,
    simulate_diffusion,
    simulate_paths,
    simulate_squared_bessel2,
)
from diffusion_functionals.simkit.seeding import (
    STREAM_BESSEL,
    STREAM_DIFFUSION,
    path_seed,
    path_seeds,
    run_blocks,
)


def _path(times, values, integral=None, kind="no_exit"):
    times = np.asarray(times, dtype=float)
    return PathSample(
        times=times,
        values=np.asarray(values, dtype=float),
        exit=ExitRecord(kind=kind, time=float(times[-1])),
        driving_seed=0,
        integral=None if integral is None else np.asarray(integral, dtype=float),
    )


def test_path_seeds_are_deterministic_and_stream_separated():
    assert path_seed(7, 3) == path_seed(7, 3)
    assert path_seed(7, 3) != path_seed(7, 4)
    assert path_seed(7, 3, STREAM_DIFFUSION) != path_seed(7, 3, STREAM_BESSEL)
    assert path_seeds(7, 3) == [path_seed(7, i) for i in range(3)]


def test_run_blocks_preserves_order_across_thread_counts():
    def task(block):
        return [i * i for i in block]

    serial = run_blocks(task, 23, block_size=4, threads=1)
    threaded = run_blocks(task, 23, block_size=4, threads=3)

    assert serial == threaded == [i * i for i in range(23)]


def test_run_blocks_rejects_empty_blocks():
    with pytest.raises(ValueError):
        run_blocks(lambda block: list(block), 3, block_size=0)


def test_brownian_paths_exit_unit_interval_and_integrate_time():
    p = build_problem(0.0, 1.0, 0.5, "0", "1", "1")

    paths = simulate_paths(
        p, 20, dt=1e-3, horizon=10.0, master_seed=11, integrand=p.f_eval, integrand_label="1"
    )

    for path in paths:
        assert path.exited
        assert path.exit.endpoint in ("l", "r")
        assert path.terminal_value == (0.0 if path.exit.endpoint == "l" else 1.0)
        assert np.all(np.diff(path.times) >= 0.0)
        assert path.integral[-1] == pytest.approx(path.exit.time, rel=1e-9)
    assert {path.index for path in paths} == set(range(20))


def test_simulate_paths_is_independent_of_threads_and_blocks():
    p = build_problem(0.0, math.inf, 1.0, "0.1*x", "0.2*x", "1")
    kwargs = dict(dt=1e-2, horizon=2.0, master_seed=5, integrand=p.f_eval)

    serial = simulate_paths(p, 9, block_size=9, threads=1, **kwargs)
    threaded = simulate_paths(p, 9, block_size=2, threads=3, **kwargs)

    for a, b in zip(serial, threaded):
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.integral, b.integral)


def test_single_path_matches_its_slot_in_a_batch():
    p = build_problem(0.0, math.inf, 1.0, "1/x", "1", "x^(-3)")
    batch = simulate_paths(p, 4, dt=1e-2, horizon=1.0, master_seed=3, integrand=p.f_eval)

    single = simulate_diffusion(
        p, 1e-2, 1.0, path_seed(3, 2), integrand=p.f_eval, index=2
    )

    np.testing.assert_array_equal(single.values, batch[2].values)
    assert single.index == 2


def test_euler_paths_run_to_the_horizon_without_exit():
    p = build_problem(0.0, math.inf, 1.0, "0.1*x", "0.2*x", "1")

    paths = simulate_paths(p, 5, dt=1e-2, horizon=3.0, master_seed=1, integrand=p.f_eval)

    for path in paths:
        assert path.exit.kind == "no_exit"
        assert path.terminal_time == pytest.approx(3.0)
        assert np.all(path.values > 0.0)
        assert path.integral[-1] == pytest.approx(3.0)


def test_halving_rule_refines_near_a_barrier():
    sigma = np.ones(3)
    dist = np.array([1.0, 0.1, 1e-12])

    m = paths_module._halvings(dist, sigma, 1e-2, 30)

    assert m[0] == 0
    assert m[1] == 7
    assert m[2] == 30


def test_simulate_paths_rejects_bad_steps():
    p = build_problem(0.0, 1.0, 0.5, "0", "1", "1")
    with pytest.raises(SimulationError):
        simulate_paths(p, 1, dt=0.0, horizon=1.0, master_seed=0)


def test_bm_to_hit_stops_at_the_level():
    path = simulate_bm_to_hit(0.0, 1.0, 1e-3, path_seed(2, 0), 100.0, integrand=lambda y: np.ones_like(y))

    assert np.all(path.values <= 1.0)
    if path.exited:
        assert path.terminal_value == 1.0
        assert path.integral[-1] == pytest.approx(path.exit.time, rel=1e-9)
    else:
        assert path.terminal_time == pytest.approx(100.0)


def test_bm_to_hit_edge_cases():
    with pytest.raises(SimulationError):
        simulate_bm_to_hit(2.0, 1.0, 1e-3, 0, 10.0)

    already = simulate_bm_to_hit(1.0, 1.0, 1e-3, 0, 10.0)
    assert already.exited
    assert already.exit.time == 0.0


def test_bm_to_hit_without_recording_keeps_endpoints():
    path = simulate_bm_to_hit(0.0, 0.5, 1e-3, 9, 50.0, record=False)

    assert path.times.size == 2
    assert path.times[0] == 0.0


def test_bessel3_stays_nonnegative_and_stops_far_out():
    path = simulate_bessel3(1e-3, 1e4, 4, level=0.5)

    assert path.values[0] == 0.0
    assert np.all(path.values >= 0.0)
    assert np.all(np.diff(path.times) > 0.0)
    assert path.terminal_value > 500.0 or path.terminal_time == pytest.approx(1e4)


def test_bessel3_requires_positive_level():
    with pytest.raises(SimulationError):
        simulate_bessel3(1e-3, 1.0, 0, level=0.0)


def test_last_exit_and_first_hit_interpolate():
    path = _path([0.0, 1.0, 2.0, 3.0], [0.0, 2.0, 0.5, 3.0])

    assert last_exit(path, 1.0) == pytest.approx(2.2)
    assert first_hit(path, 1.0) == pytest.approx(0.5)
    assert math.isnan(first_hit(path, 5.0))
    assert last_exit(_path([0.0, 1.0], [2.0, 3.0]), 1.0) == 0.0
    assert math.isnan(last_exit(_path([0.0, 1.0], [2.0, 0.5]), 1.0))
    assert horizon_too_short(path, 2.0)
    assert not horizon_too_short(path, 1.0)


def test_squared_bessel2_handles_unsorted_grids():
    sorted_values = simulate_squared_bessel2([1.0, 2.0, 3.0], 8)
    shuffled = simulate_squared_bessel2([2.0, 1.0, 3.0], 8)

    np.testing.assert_array_equal(shuffled, sorted_values[[1, 0, 2]])
    assert np.all(sorted_values >= 0.0)
    assert simulate_squared_bessel2([], 8).size == 0
    with pytest.raises(SimulationError):
        simulate_squared_bessel2([0.0, 1.0], 8)


def test_bessel3_on_grid_shape():
    values = bessel3_on_grid(np.array([0.5, 1.0, 4.0]), np.random.default_rng(0))

    assert values.shape == (3,)
    assert np.all(values >= 0.0)


@pytest.mark.parametrize(
    ("mu", "variance"),
    [("0", 1.0), ("-x", (1.0 - math.exp(-2.0)) / 2.0)],
    ids=["brownian", "ornstein_uhlenbeck"],
)
def test_terminal_law_at_time_one(mu, variance):
    p = build_problem(-math.inf, math.inf, 0.0, mu, "1", "1")

    paths = simulate_paths(p, 4000, dt=1e-3, horizon=1.0, master_seed=5, record_stride=100)

    terminal = np.array([path.terminal_value for path in paths])
    assert all(path.terminal_time == pytest.approx(1.0) for path in paths)
    se_mean = math.sqrt(variance / terminal.size)
    se_var = variance * math.sqrt(2.0 / (terminal.size - 1))
    assert abs(terminal.mean()) <= 3.0 * se_mean
    assert abs(terminal.var(ddof=1) - variance) <= 3.0 * se_var


def test_bm_hitting_probability_by_time_one():
    n = 4000
    hits = sum(
        simulate_bm_to_hit(0.0, 1.0, 1e-3, path_seed(17, i), 1.0, record=False).exited
        for i in range(n)
    )

    expected = 0.3173
    se = math.sqrt(expected * (1.0 - expected) / n)
    assert abs(hits / n - expected) <= 3.0 * se
