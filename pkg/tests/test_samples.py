"""Tests for the bundled problem library."""

from __future__ import annotations

import pytest

from diffusion_functionals.config import get_settings
from diffusion_functionals.models import ConfigError
from diffusion_functionals.samples import (
    get_problem_library,
    get_sample,
    list_problems,
    load_library,
    load_problem,
)

EXPECTED_NAMES = {
    "bessel3_q1",
    "bessel3_q3",
    "bm_line_indicator",
    "bm_line_zero",
    "bm_unit_interval",
    "d_set_example",
    "gbm_drift",
    "gbm_driftless",
    "stopped_bm_p15",
    "stopped_bm_p25",
}


def test_bundled_library_lists_every_problem():
    assert EXPECTED_NAMES <= set(list_problems())


def test_every_bundled_problem_builds():
    library = get_problem_library(get_settings().problem_library_path)

    for name in EXPECTED_NAMES:
        sample = library[name]
        assert sample.config.problem is not None
        assert sample.expected
        sample.config.problem.build()


def test_load_problem_returns_an_independent_copy():
    first = load_problem("bm_unit_interval")
    first.simulation.n_paths = 3

    assert load_problem("bm_unit_interval").simulation.n_paths == 500


def test_unknown_sample_lists_known_names():
    with pytest.raises(KeyError, match="bm_unit_interval"):
        get_sample("no_such_problem")


def test_custom_library_directory(tmp_path):
    (tmp_path / "custom.yml").write_text(
        "title: Custom\nconfig:\n  problem: {l: 0.0, r: 1.0, x0: 0.5, f: '1'}\n",
        encoding="utf-8",
    )

    library = load_library(tmp_path)

    assert list(library) == ["custom"]
    assert library["custom"].title == "Custom"


def test_sample_without_config_is_rejected(tmp_path):
    (tmp_path / "bad.yml").write_text("title: Missing\n", encoding="utf-8")

    with pytest.raises(ConfigError, match="config"):
        load_library(tmp_path)
