"""Monte Carlo localization over occupancy grids."""

from .field import LikelihoodField
from .filter import (ParticleSet, PoseEstimate, StepInfo, converged, estimate,
                     init_global_uniform, init_tracking, kld_sample_count,
                     low_variance_resample, step)
from .runner import MCLRun, run_mcl, write_diagnostics_csv
from .ser import SimilarEnergyIndex, init_global_ser, scan_signature

__all__ = [
    "LikelihoodField",
    "MCLRun",
    "ParticleSet",
    "PoseEstimate",
    "SimilarEnergyIndex",
    "StepInfo",
    "converged",
    "estimate",
    "init_global_ser",
    "init_global_uniform",
    "init_tracking",
    "kld_sample_count",
    "low_variance_resample",
    "run_mcl",
    "scan_signature",
    "step",
    "write_diagnostics_csv",
]
