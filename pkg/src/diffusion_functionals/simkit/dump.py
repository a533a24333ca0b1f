"""Per-path CSV dumps for external plotting."""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Iterable, List, Optional

import numpy as np

from .paths import PathSample

logger = logging.getLogger(__name__)

CSV_HEADER = ("t", "y", "partial_integral")


def write_path_csv(path: PathSample, directory: Path, index: Optional[int] = None) -> Path:
    """Write one path as ``path_{index:05d}.csv`` with columns t,y,partial_integral."""

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = path.index if index is None else index
    target = directory / f"path_{index:05d}.csv"
    integral = path.integral if path.integral is not None else np.zeros_like(path.times)
    with target.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_HEADER)
        for t, y, running in zip(path.times, path.values, integral):
            writer.writerow((repr(float(t)), repr(float(y)), repr(float(running))))
    return target


def write_paths(paths: Iterable[PathSample], directory: Path, limit: Optional[int] = None) -> List[Path]:
    written: List[Path] = []
    for count, sample in enumerate(paths):
        if limit is not None and count >= limit:
            break
        written.append(write_path_csv(sample, directory))
    logger.info("paths_dumped directory=%s count=%s", directory, len(written))
    return written


__all__ = ["CSV_HEADER", "write_path_csv", "write_paths"]
