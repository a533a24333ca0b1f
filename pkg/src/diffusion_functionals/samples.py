"""Bundled problem library: named run configs for the standard test families."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional

import yaml

from .config import get_settings
from .models import ConfigError, RunConfig, config_from_mapping


@dataclass(slots=True)
class ProblemSample:
    name: str
    title: str
    description: str
    config: RunConfig
    expected: Dict[str, str] = field(default_factory=dict)
    source: Optional[str] = None


def load_sample_file(path: Path) -> ProblemSample:
    with path.open("r", encoding="utf-8") as fp:
        raw = yaml.safe_load(fp) or {}
    if not isinstance(raw, dict) or "config" not in raw:
        raise ConfigError(f"{path}: sample files need a 'config' mapping")
    name = str(raw.get("name") or path.stem)
    return ProblemSample(
        name=name,
        title=str(raw.get("title") or name),
        description=str(raw.get("description") or "").strip(),
        config=config_from_mapping(raw["config"], str(path)),
        expected={str(k): str(v) for k, v in (raw.get("expected") or {}).items()},
        source=str(path),
    )


def load_library(directory: Path) -> Dict[str, ProblemSample]:
    library: Dict[str, ProblemSample] = {}
    for file in sorted(directory.glob("*.yml")):
        sample = load_sample_file(file)
        library[sample.name] = sample
    return library


@lru_cache(maxsize=8)
def get_problem_library(directory: str) -> Dict[str, ProblemSample]:
    """Return the cached library for the provided directory path."""

    return load_library(Path(directory))


def _library() -> Dict[str, ProblemSample]:
    return get_problem_library(get_settings().problem_library_path)


def list_problems() -> Dict[str, str]:
    return {name: sample.title for name, sample in _library().items()}


def get_sample(name: str) -> ProblemSample:
    library = _library()
    if name not in library:
        known = ", ".join(sorted(library)) or "none"
        raise KeyError(f"Sample '{name}' not found (known: {known})")
    return library[name]


def load_problem(name: str) -> RunConfig:
    return get_sample(name).config.model_copy(deep=True)


__all__ = [
    "ProblemSample",
    "get_problem_library",
    "get_sample",
    "list_problems",
    "load_library",
    "load_problem",
    "load_sample_file",
]
