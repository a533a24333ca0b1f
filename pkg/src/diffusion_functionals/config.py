"""Application configuration and settings."""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

_PACKAGE_DIR = Path(__file__).resolve().parent


class AppSettings(BaseSettings):
    """Load settings from environment variables or .env."""

    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", extra="allow"
    )

    log_level: str = Field(default="INFO", alias="LOG_LEVEL")
    data_dir: str = Field(default=".", alias="DF_DATA_DIR")
    problem_library_path: str = Field(
        default=str(_PACKAGE_DIR / "data" / "problems"),
        alias="DF_PROBLEM_LIBRARY",
    )
    record_runs: bool = Field(default=False, alias="DF_RECORD_RUNS")

    max_threads: int = Field(default=32, ge=1, le=512, alias="DF_MAX_THREADS")

    validation_probes: int = Field(default=64, ge=16)
    candidate_probes: int = Field(default=256, ge=16)
    positivity_probes: int = Field(default=1024, ge=16)

    min_event_paths: int = Field(default=30, ge=1)
    underpowered_paths: int = Field(default=100, ge=2)

    @field_validator("log_level", mode="before")
    @classmethod
    def _normalize_log_level(cls, value: object) -> object:
        if isinstance(value, str):
            return value.strip().upper() or "INFO"
        return value


@lru_cache(maxsize=1)
def get_settings() -> AppSettings:
    """Return cached settings instance."""

    return AppSettings()


__all__ = ["AppSettings", "get_settings"]
