"""Grand-canonical hardcore spheres with a depletion area interaction.

The package splits into a small stack: geometry (ball unions and
intersections), energy (hardcore veto plus enlarged-union area), sampling
(birth/death/translate/resize chains, exact rejection, temperedness),
estimators (pressure, energy density, per-point identities), and a thin
service/CLI harness around them.
"""

from .energy import BoundaryCondition, area_energy, conditional_energy, hardcore_violated
from .estimators import (
    PressureEstimate,
    discontinuity_demo,
    energy_density_curve,
    finite_volume_palm_summand,
    palm_energy_identity_check,
    partition_direct,
    poisson_relative_entropy,
    pressure_bc_comparison,
    pressure_thermo_integration,
    temperedness_tail_stats,
)
from .geometry import Ball, QuadratureSpec, ball_volume, pair_intersection_volume, union_volume
from .model import Configuration, Estimate, MarkLaw, ModelParams, Window
from .sampling import (
    MoveMix,
    SamplerParams,
    batch_means_stderr,
    dlr_consistency_check,
    fkg_temperedness_check,
    gibbs_mcmc,
    rejection_sample_gibbs,
    sample_poisson,
)
from .specfile import CODE_VERSION, ExperimentSpec, RunManifest, SpecError, load_spec
from .verify import run_verification

__version__ = CODE_VERSION

__all__ = [
    "__version__",
    "CODE_VERSION",
    "Ball",
    "BoundaryCondition",
    "Configuration",
    "Estimate",
    "ExperimentSpec",
    "MarkLaw",
    "ModelParams",
    "MoveMix",
    "PressureEstimate",
    "QuadratureSpec",
    "RunManifest",
    "SamplerParams",
    "SpecError",
    "Window",
    "area_energy",
    "ball_volume",
    "batch_means_stderr",
    "conditional_energy",
    "discontinuity_demo",
    "dlr_consistency_check",
    "energy_density_curve",
    "finite_volume_palm_summand",
    "fkg_temperedness_check",
    "gibbs_mcmc",
    "hardcore_violated",
    "load_spec",
    "pair_intersection_volume",
    "palm_energy_identity_check",
    "partition_direct",
    "poisson_relative_entropy",
    "pressure_bc_comparison",
    "pressure_thermo_integration",
    "rejection_sample_gibbs",
    "run_verification",
    "sample_poisson",
    "temperedness_tail_stats",
    "union_volume",
]
