"""
Carlemanlab checks Carleman estimates for the linearized Navier-Stokes system on grids and measures the
stability of lateral Cauchy reconstructions and inverse source recovery.
"""
from .exceptions import *
from .domain import PRESETS, DomainSpec, build_domain, validate_domain
from .weight import WeightFunction, WeightProfile, build_weight_profile, weight_for_domain
from .field import ScalarField, VectorField, WeightedNorm, weighted_norm, extract_trace
from .constants import StabilityConstants, select_s_and_theta, stability_constants
from .flow import CoefficientFields, ManufacturedSolution, mms_forcing
from .source import FAMILIES, SourceModel, build_source, check_conditions
from .data import CauchyDataset, generate_cauchy_data, data_size
from .carleman import (CarlemanReport, NegativeNormWeight, check_slice_integration, verify_elliptic_estimate,
                       verify_navier_stokes_estimate, verify_negative_norm_estimate, verify_parabolic_estimate,
                       verify_space_time_elliptic_estimate)
from .reconstruction import QRProblem, ReconstructionResult, assemble_qr_system, reconstruct, solve_qr
from .inverse import invert_source, recover_source_field
from .stability import StabilityStudy, stability_sweep
from .experiment import EXPERIMENTS, ExperimentConfig, run, validate

__version__ = "0.1.0"
