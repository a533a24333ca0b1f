"""Monte Carlo engine: path samplers, local times, trend diagnostics and
identity checks."""

from .agreement import MCSummary, verdict_agreement
from .dump import write_path_csv, write_paths
from .identities import (
    TwoSampleResult,
    cherny_dichotomy_check,
    fubini_mean_check,
    local_time_positivity_check,
    occupation_check,
    ray_knight_check,
    williams_check,
)
from .local_time import LocalTimeProfile, OccupationAccumulator, local_time_profile
from .paths import (
    ExitRecord,
    PathSample,
    SimulationError,
    first_hit,
    last_exit,
    simulate_bessel3,
    simulate_bm_to_hit,
    simulate_diffusion,
    simulate_paths,
    simulate_squared_bessel2,
)
from .seeding import path_seed, run_blocks
from .trajectory import DichotomyDiagnostic, classify_trend, functional_trajectory

__all__ = [
    "DichotomyDiagnostic",
    "ExitRecord",
    "LocalTimeProfile",
    "MCSummary",
    "OccupationAccumulator",
    "PathSample",
    "SimulationError",
    "TwoSampleResult",
    "cherny_dichotomy_check",
    "classify_trend",
    "first_hit",
    "fubini_mean_check",
    "functional_trajectory",
    "last_exit",
    "local_time_positivity_check",
    "local_time_profile",
    "occupation_check",
    "path_seed",
    "ray_knight_check",
    "run_blocks",
    "simulate_bessel3",
    "simulate_bm_to_hit",
    "simulate_diffusion",
    "simulate_paths",
    "simulate_squared_bessel2",
    "verdict_agreement",
    "williams_check",
    "write_path_csv",
    "write_paths",
]
