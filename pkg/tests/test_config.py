"""Tests for AppSettings parsing behavior."""

from diffusion_functionals.config import AppSettings


def test_log_level_is_normalised_from_env(monkeypatch):
    monkeypatch.setenv("LOG_LEVEL", "  debug ")

    settings = AppSettings()

    assert settings.log_level == "DEBUG"


def test_blank_log_level_falls_back_to_info(monkeypatch):
    monkeypatch.setenv("LOG_LEVEL", "   ")

    settings = AppSettings()

    assert settings.log_level == "INFO"


def test_data_dir_and_record_flag_from_env(monkeypatch, tmp_path):
    monkeypatch.setenv("DF_DATA_DIR", str(tmp_path))
    monkeypatch.setenv("DF_RECORD_RUNS", "true")

    settings = AppSettings()

    assert settings.data_dir == str(tmp_path)
    assert settings.record_runs is True


def test_default_problem_library_points_at_bundled_problems():
    settings = AppSettings()

    assert settings.problem_library_path.endswith("problems")
    assert settings.underpowered_paths >= 2
