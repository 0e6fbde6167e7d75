"""
Named, reproducible experiments.

Every run writes its CSV tables, ``summary.json`` and a ``MANIFEST`` into one directory per experiment and
config hash; the same config gives byte-identical files.
"""
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from .analytic import (ABCField, MatrixField, PolynomialBump, PolynomialProfile, TrigPotential, taylor_green_field,
                       time_profile)
from .carleman import (NegativeNormWeight, check_slice_integration, default_s_grid, slice_reports_for,
                       verify_elliptic_estimate, verify_navier_stokes_estimate, verify_negative_norm_estimate,
                       verify_parabolic_estimate, verify_space_time_elliptic_estimate)
from .constants import stability_constants
from .data import data_size, generate_cauchy_data
from .domain import MIN_NODES, MIN_TIME_NODES, PRESETS, build_domain
from .exceptions import (ConfigError, DataTierError, DiscretizationError, GeometryError, GridError, ParameterError,
                         ResolutionError, SolverError, SourceError, SupportError)
from .field import ScalarField, VectorField, curl, laplacian, time_derivative
from .flow import CoefficientFields, ManufacturedSolution, mms_forcing
from .helper import (config_hash, convergence_order, ensure_directory, file_digest, package_versions, to_plain,
                     write_csv, write_json)
from .inverse import exact_source_recovery, invert_source, recover_source_field
from .reconstruction import SOLVERS, QRProblem
from .source import CONDITION_HEADER, FAMILIES, build_source, check_conditions, source_from_solution
from .stability import StabilityStudy, check_noise_levels, stability_sweep
from .weight import PSI_MODES, psi_mode_note, weight_for_domain

logger = logging.getLogger(__name__)

COEFFICIENT_KINDS = ("zero", "affine")

# support radius of the compact vortex; its support stays 0.05 away from the boundary
COMPACT_RADIUS = 0.4

RUN_ERRORS = (ConfigError, DataTierError, DiscretizationError, GeometryError, GridError, ParameterError,
              ResolutionError, SolverError, SourceError, SupportError, ValueError, np.linalg.LinAlgError)


@dataclass
class ExperimentConfig:
    experiment: str = "carleman_estimate"
    preset: str = "rect2d_right_edge"
    resolution: int = 24
    n_t: int = 9
    t0: float = 0.5
    delta: float = 0.25
    lam: float = 2.0
    beta: float = 1.0
    psi_mode: str = "square"
    s_min: float = 2.0
    s_max: float = 256.0
    s_count: int = 8
    coefficients: str = "affine"
    pressure_term: bool = False
    source_family: str = "separated"
    source_params: dict = field(default_factory=dict)
    sigmas: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4, 1e-5])
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    s: float = 1.0
    s_limits: list = field(default_factory=lambda: [0.1, 1.0])
    alpha: float = 1e-6
    gamma_b: float = 1.0
    solver: str = "auto"
    tol: float = 1e-8
    maxiter: int = 0
    c_max: float = 1e3
    rotation_floor: float = 1e-2
    condition_samples: int = 20
    out_dir: str = "runs"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, document: Optional[dict] = None) -> "ExperimentConfig":
        """
        Validated config from a JSON-compatible document; missing keys take their defaults.

        :raises ConfigError: With the offending keys
        """
        report = validate(document)
        if not report.valid:
            message = "; ".join("{}: {}".format(k, v) for k, v in sorted(report.errors.items()))
            raise ConfigError("invalid configuration: {}".format(message), keys=sorted(report.errors))
        return report.config


@dataclass
class ValidationReport:
    valid: bool
    errors: Dict[str, str]
    config: Optional[ExperimentConfig]

    def to_dict(self) -> dict:
        return {"valid": self.valid, "errors": self.errors,
                "config": self.config.to_dict() if self.config is not None else None}


def _type_ok(value, expected) -> bool:
    if expected is bool:
        return isinstance(value, bool)
    if isinstance(value, bool):
        return False
    if expected is float:
        return isinstance(value, (int, float))
    return isinstance(value, expected)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _constraint_errors(doc: dict) -> Dict[str, str]:
    errors = {}

    def need(key, ok, message):
        if key in doc and key not in errors and not ok(doc[key]):
            errors[key] = message

    need("experiment", lambda v: v in EXPERIMENTS, "unknown experiment, choose one of {}".format(list(EXPERIMENTS)))
    need("preset", lambda v: v in PRESETS, "unknown preset, choose one of {}".format(list(PRESETS)))
    need("resolution", lambda v: v >= MIN_NODES, "needs at least {} nodes".format(MIN_NODES))
    need("n_t", lambda v: v >= MIN_TIME_NODES, "needs at least {} time slices".format(MIN_TIME_NODES))
    need("delta", lambda v: v > 0, "must be positive")
    need("lam", lambda v: v > 0, "must be positive")
    need("beta", lambda v: v >= 0, "must be nonnegative")
    need("psi_mode", lambda v: v in PSI_MODES, "must be one of {}".format(list(PSI_MODES)))
    need("s_min", lambda v: v > 0, "must be positive")
    need("s_count", lambda v: v >= 2, "needs at least two points")
    need("coefficients", lambda v: v in COEFFICIENT_KINDS, "must be one of {}".format(list(COEFFICIENT_KINDS)))
    need("source_family", lambda v: v in FAMILIES, "must be one of {}".format(list(FAMILIES)))
    need("seeds", lambda v: len(v) > 0 and all(isinstance(x, int) and not isinstance(x, bool) for x in v),
         "must be a non-empty list of integers")
    need("s", lambda v: v > 0, "must be positive")
    need("s_limits", lambda v: len(v) == 2 and all(_is_number(x) for x in v) and 0 < v[0] <= v[1],
         "must be [s_min, s_max] with 0 < s_min <= s_max")
    need("alpha", lambda v: v >= 0, "must be nonnegative")
    need("gamma_b", lambda v: v > 0, "must be positive")
    need("solver", lambda v: v in SOLVERS, "must be one of {}".format(list(SOLVERS)))
    need("tol", lambda v: v > 0, "must be positive")
    need("maxiter", lambda v: v >= 0, "must be nonnegative (0 picks a default)")
    need("c_max", lambda v: v > 0, "must be positive")
    need("rotation_floor", lambda v: v > 0, "must be positive")
    need("condition_samples", lambda v: v >= 1, "must be positive")
    if "s_max" in doc and "s_min" not in errors and "s_max" not in errors and not doc["s_max"] > doc["s_min"]:
        errors["s_max"] = "must exceed s_min"

    if "sigmas" in doc and "sigmas" not in errors:
        sigmas = doc["sigmas"]
        if not all(_is_number(x) for x in sigmas):
            errors["sigmas"] = "must be a list of numbers"
        elif any(x < 0 for x in sigmas):
            errors["sigmas"] = "noise levels must be nonnegative"
        elif any(b >= a for a, b in zip(sigmas, sigmas[1:])):
            errors["sigmas"] = "noise levels must be strictly decreasing"
        elif EXPERIMENTS.canonical(doc.get("experiment")) == "continuation_sweep":
            try:
                check_noise_levels(sigmas)
            except ValueError as e:
                errors["sigmas"] = str(e)
    return errors


def validate(document: Optional[dict] = None) -> ValidationReport:
    """
    Check a config document against the schema: unknown keys, types and constraints. Experiment aliases
    resolve to their catalog names.

    :param document: JSON-compatible dict, None or {} for all defaults
    :return: ValidationReport with the resolved config when valid

    :Example:

    >>> validate({}).valid
    True
    >>> validate({"sigmas": [1e-3, 1e-2]}).errors
    {'sigmas': 'noise levels must be strictly decreasing'}
    >>> validate({"experiment": "carleman_thm1"}).config.experiment
    'carleman_estimate'
    """
    document = dict(document or {})
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    errors = {key: "unknown key" for key in document if key not in known}
    for key, value in document.items():
        if key in known and not _type_ok(value, known[key]):
            errors[key] = "expected {}".format(known[key].__name__)
    defaults = ExperimentConfig().to_dict()
    merged = dict(defaults)
    merged.update({k: v for k, v in document.items() if k in known and k not in errors})
    merged["experiment"] = EXPERIMENTS.canonical(merged["experiment"])
    constraint_errors = _constraint_errors(merged)
    errors.update({k: v for k, v in constraint_errors.items() if k not in errors})
    if errors:
        return ValidationReport(False, errors, None)
    return ValidationReport(True, {}, ExperimentConfig(**merged))


def parse_overrides(items: Sequence[str]) -> dict:
    """
    ``key=value`` pairs; values are parsed as JSON and fall back to plain strings.

    :Example:

    >>> parse_overrides(["resolution=32", "preset=rect2d_corner", "sigmas=[0.1, 0.01]"])
    {'resolution': 32, 'preset': 'rect2d_corner', 'sigmas': [0.1, 0.01]}
    """
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError("override '{}' is not of the form key=value".format(item), keys=[item])
        key, raw = item.split("=", 1)
        try:
            out[key.strip()] = json.loads(raw)
        except ValueError:
            out[key.strip()] = raw
    return out


def load_document(path: Optional[Union[str, Path]] = None, overrides: Sequence[str] = ()) -> dict:
    """Config document from an optional JSON file plus ``key=value`` overrides."""
    document = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                document = json.load(fh)
            except ValueError as e:
                raise ConfigError("config file is not valid JSON: {}".format(e), keys=[str(path)])
        if not isinstance(document, dict):
            raise ConfigError("config file must hold a JSON object", keys=[str(path)])
    document.update(parse_overrides(overrides))
    return document


# run context
class ExperimentContext:
    """Grid, weight and output bookkeeping shared by the experiment runners."""
    def __init__(self, config: ExperimentConfig, directory: Path):
        self.config = config
        self.directory = directory
        self.domain = build_domain(config.preset, config.resolution, t0=config.t0, delta=config.delta,
                                   n_t=config.n_t)
        self.weight = weight_for_domain(self.domain, lam=config.lam, beta=config.beta, psi_mode=config.psi_mode)
        self.files = []
        self.checks = {}
        self.soft_flags = {}

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def s_grid(self) -> List[float]:
        return default_s_grid(self.config.s_min, self.config.s_max, self.config.s_count)

    def table(self, name: str, header: Sequence[str], rows) -> Path:
        path = write_csv(self.directory / "{}.csv".format(name), header, rows)
        self.files.append(path.name)
        return path

    def check(self, name: str, passed, soft: bool = False):
        target = self.soft_flags if soft else self.checks
        target[name] = bool(passed)
        if not passed:
            logger.warning("%s check '%s' failed", "soft" if soft else "hard", name)

    def solution(self, profile=None) -> ManufacturedSolution:
        if self.dimension == 2:
            return ManufacturedSolution.taylor_green(1.0, profile=profile)
        return ManufacturedSolution.abc_flow(1.0, profile=profile)

    def compact_solution(self) -> ManufacturedSolution:
        center = (0.55,) + (0.5,) * (self.dimension - 1)
        return ManufacturedSolution.compact_vortex(center, COMPACT_RADIUS, rate=1.0)

    def coefficients(self) -> CoefficientFields:
        dim = self.dimension
        if self.config.coefficients == "zero":
            return CoefficientFields.zero(dim)
        shear = np.zeros((dim, dim))
        shear[0, 1], shear[1, 0] = 0.25, -0.25
        advection = np.zeros(dim)
        advection[0] = 0.5
        return CoefficientFields.affine(dim, advection_offset=advection, shear_matrix=shear, rate=0.5)

    def problem(self, dataset, **changes) -> QRProblem:
        c = self.config
        params = dict(domain=self.domain, weight=self.weight, dataset=dataset, s=c.s, alpha=c.alpha,
                      gamma_b=c.gamma_b, solver=c.solver, tol=c.tol, maxiter=c.maxiter or None)
        params.update(changes)
        return QRProblem(**params)


def _ratios_close(a: Sequence[float], b: Sequence[float], rel: float) -> bool:
    for x, y in zip(a, b):
        if math.isnan(x) and math.isnan(y):
            continue
        if not abs(x - y) <= rel * max(abs(x), abs(y)):
            return False
    return True


# runners
def run_carleman_estimate(ctx: ExperimentContext) -> dict:
    domain = ctx.domain
    solution = ctx.solution()
    coeffs = ctx.coefficients()
    v = solution.sample(domain)
    forcing, methods = mms_forcing(solution, coeffs, domain)
    pressure = solution.sample_pressure(domain) if ctx.config.pressure_term else None
    report = verify_navier_stokes_estimate(v, forcing, ctx.weight, ctx.s_grid, pressure=pressure)
    ctx.table("carleman_estimate", report.header, report.rows())

    scaled = verify_navier_stokes_estimate(2.0 * v, 2.0 * forcing, ctx.weight, ctx.s_grid,
                                           pressure=2.0 * pressure if pressure is not None else None)
    reduced_forcing, _ = mms_forcing(solution, coeffs.without_shear(), domain)
    reduced = verify_navier_stokes_estimate(v, reduced_forcing, ctx.weight, ctx.s_grid, pressure=pressure,
                                            tag="navier_stokes_without_shear")
    ctx.table("carleman_estimate_without_shear", reduced.header, reduced.rows())
    shear_ratio = reduced.c_hat / report.c_hat if report.c_hat > 0 else math.nan

    ctx.check("finite_ratios", all(math.isfinite(r) for r in report.ratios))
    ctx.check("scale_invariant", _ratios_close(report.ratios, scaled.ratios, 1e-10))
    ctx.check("plateau_reached", report.flags.get("plateau_reached"), soft=True)
    ctx.check("shear_comparison_within_factor_2", 0.5 <= shear_ratio <= 2.0, soft=True)
    return {
        "report": report.summary(),
        "without_shear": reduced.summary(),
        "shear_ratio": shear_ratio,
        "forcing_methods": methods,
        "coefficients": coeffs.to_dict(),
        "dominant_term_at_largest_s": report.dominant_term(len(report.s_grid) - 1),
    }


def _potential_field(domain, timed: bool = True) -> ScalarField:
    potential = TrigPotential(1.0, (math.pi,) * domain.dimension)
    if timed:
        return ScalarField.from_function(domain, lambda pts, t: (1.0 + t) * potential.value(pts), timed=True)
    return ScalarField.from_function(domain, lambda pts, t: potential.value(pts), timed=False)


def run_carleman_lemmas(ctx: ExperimentContext) -> dict:
    domain = ctx.domain
    s_grid = ctx.s_grid
    v = ctx.solution().sample(domain)
    z = curl(v)
    r = _potential_field(domain)
    w = r.at_t0()
    bump = PolynomialBump((0.5,) * domain.dimension, 0.3)
    w4 = ScalarField(domain, bump.value(domain.points()), False)
    weight4 = NegativeNormWeight(domain, ctx.weight.profile, lam=ctx.config.lam).check()

    cases = {
        "parabolic": lambda a: verify_parabolic_estimate(a * z, a * (time_derivative(z) - laplacian(z)),
                                                         ctx.weight, s_grid),
        "space_time_elliptic": lambda a: verify_space_time_elliptic_estimate(a * r, -a * laplacian(r), ctx.weight,
                                                                             s_grid),
        "elliptic": lambda a: verify_elliptic_estimate(a * w, -a * laplacian(w), ctx.weight, s_grid),
        "negative_norm": lambda a: verify_negative_norm_estimate(a * w4, weight4, s_grid),
    }
    zeros = {
        "parabolic": lambda: verify_parabolic_estimate(0.0 * z, 0.0 * z, ctx.weight, s_grid),
        "space_time_elliptic": lambda: verify_space_time_elliptic_estimate(0.0 * r, 0.0 * r, ctx.weight, s_grid),
        "elliptic": lambda: verify_elliptic_estimate(0.0 * w, 0.0 * w, ctx.weight, s_grid),
        "negative_norm": lambda: verify_negative_norm_estimate(0.0 * w4, weight4, s_grid),
    }
    summaries = {}
    for name, build in cases.items():
        report = build(1.0)
        scaled = build(3.0)
        ctx.table(name, report.header, report.rows())
        ctx.check("{}_finite".format(name), all(math.isfinite(x) for x in report.ratios))
        ctx.check("{}_scale_invariant".format(name), _ratios_close(report.ratios, scaled.ratios, 1e-10))
        ctx.check("{}_trivial_on_zero".format(name), zeros[name]().trivial)
        ctx.check("{}_plateau".format(name), report.flags.get("plateau_reached"), soft=True)
        summaries[name] = report.summary()
    return {"reports": summaries, "negative_norm_weight": weight4.to_dict()}


def run_slice_integration(ctx: ExperimentContext) -> dict:
    domain = ctx.domain
    r = _potential_field(domain)
    g = -laplacian(r)
    space_time = verify_space_time_elliptic_estimate(r, g, ctx.weight, ctx.s_grid)
    slices = slice_reports_for(r, g, ctx.weight, ctx.s_grid)
    verdict = check_slice_integration(slices, space_time, ctx.weight)
    ctx.table("slice_integration", verdict.HEADER, verdict.rows)

    flat_weight = ctx.weight.replace(beta=0.0)
    r0 = _potential_field(domain, timed=False)
    r_const = ScalarField(domain, np.broadcast_to(r0.values, domain.time_shape), True)
    g_const = -laplacian(r_const)
    flat_space_time = verify_space_time_elliptic_estimate(r_const, g_const, flat_weight, ctx.s_grid)
    flat_slice = verify_elliptic_estimate(r0, -laplacian(r0), flat_weight, ctx.s_grid)
    agreement = _ratios_close(flat_space_time.ratios, flat_slice.ratios, 1e-2)

    ctx.check("pointwise_relation", verdict.holds)
    ctx.check("constant_relation", verdict.c_relation, soft=True)
    if verdict.threshold_relation is not None:
        ctx.check("threshold_relation", verdict.threshold_relation, soft=True)
    ctx.check("flat_weight_agreement", agreement, soft=True)
    return {"verdict": verdict.to_dict(), "space_time": space_time.summary(),
            "slice_c_hat": [rep.c_hat for rep in slices], "flat_weight_agreement": agreement}


def run_continuation_sweep(ctx: ExperimentContext) -> dict:
    config = ctx.config
    domain = ctx.domain
    constants = stability_constants(domain, ctx.weight, "continuation")
    weight = ctx.weight.replace(beta=constants.beta)
    solution = ctx.solution()
    coeffs = ctx.coefficients()
    forcing, _ = mms_forcing(solution, coeffs, domain)
    estimate = verify_navier_stokes_estimate(solution.sample(domain), forcing, weight, ctx.s_grid)
    c_hat = estimate.c_hat
    if not (math.isfinite(c_hat) and c_hat > 0):
        ctx.check("carleman_constant_usable", False, soft=True)
        c_hat = 1.0
    rotation = None if forcing.is_zero() else curl(forcing)
    dataset = generate_cauchy_data(solution, domain, "D", keep_truth=False)
    template = ctx.problem(dataset, weight=weight, coeffs=coeffs, forcing_rotation=rotation)
    study = stability_sweep(template, solution, config.sigmas, config.seeds, c_hat, constants.mu0,
                            s_limits=tuple(config.s_limits), window=constants.eps_tilde)
    ctx.table("continuation_sweep", StabilityStudy.HEADER, [run.row() for run in study.runs])

    ctx.check("theta_finite", math.isfinite(study.theta_hat))
    ctx.check("monotone", study.monotone, soft=True)
    ctx.check("theta_in_range", 0.05 < study.theta_hat < 1.0, soft=True)
    ctx.check("all_converged", study.flags["all_converged"], soft=True)
    return {"study": study.summary(), "constants": constants.to_dict(), "carleman_constant": c_hat}


def errors_decreasing(rows: Sequence[Sequence], column: int, floor_rtol: float = 1e-2) -> bool:
    """
    Errors over the positive noise levels below the largest one never grow by more than ``floor_rtol`` times
    the noise-free floor. Rows are (sigma, ..., error, ...) in decreasing sigma.
    """
    positive = [row[column] for row in rows if row[0] > 0]
    floors = [row[column] for row in rows if row[0] == 0]
    if len(positive) > 2:
        positive = positive[1:]
    floor = floors[0] if floors else min(positive, default=0.0)
    slack = floor_rtol * abs(floor) + 1e-14
    return all(b <= a + slack for a, b in zip(positive, positive[1:]))


def _noise_levels(config: ExperimentConfig) -> List[float]:
    levels = [float(s) for s in config.sigmas]
    return levels if levels and levels[-1] == 0 else levels + [0.0]


def run_inverse_source_rotation(ctx: ExperimentContext) -> dict:
    domain = ctx.domain
    solution = ctx.solution(profile=PolynomialProfile((1.0, 0.0, 1.0)))
    source = source_from_solution(solution, domain.t0)
    conditions = check_conditions(source, domain, ctx.config.c_max)
    rows = []
    for sigma in _noise_levels(ctx.config):
        data = generate_cauchy_data(solution, domain, "D1", sigma=sigma, seed=ctx.config.seeds[0], source=source)
        recovery = invert_source(ctx.problem(data, source_profile=source.time_profile), truth_source=source)
        rows.append([sigma, data_size(data), recovery.errors["rot_F_l2"], recovery.errors.get("q_l2", math.nan),
                     recovery.rot_F_norm, recovery.reconstruction.converged])
    ctx.table("inverse_source_rotation", ["sigma", "data_size", "rot_F_error", "q_error", "rot_F_norm",
                                          "converged"], rows)
    ctx.check("source_rotation_controlled", conditions["rotation_controlled"].passed)
    ctx.check("floor_within_tolerance", rows[-1][2] <= ctx.config.rotation_floor)
    ctx.check("error_decreasing", errors_decreasing(rows, 2), soft=True)
    return {"source": source.to_dict(), "conditions": conditions.to_dict(),
            "floor_error": rows[-1][2], "rows": rows}


def _matrix_source(ctx: ExperimentContext, solution: ManufacturedSolution):
    separated = source_from_solution(solution, ctx.domain.t0)
    return build_source("matrix", ctx.dimension, ctx.domain.t0, profile=separated.profile,
                        matrix=MatrixField(ctx.dimension), target=separated.factor)


def floor_refinement(ctx: ExperimentContext, solution: ManufacturedSolution, source) -> List[list]:
    """
    Noise-free errors of rot F(t0) and F(t0) from the exact velocity on the configured grid and on the grid
    with half the spacing. Rows are [resolution, h, rot_F_error, F_error_h1].
    """
    c = ctx.config
    rows = []
    for resolution in (c.resolution, 2 * c.resolution - 1):
        domain = build_domain(c.preset, resolution, t0=c.t0, delta=c.delta, n_t=MIN_TIME_NODES)
        recovery = exact_source_recovery(solution, domain, truth_source=source)
        rows.append([resolution, max(domain.h), recovery.errors["rot_F_l2"], recovery.errors["F_h1"]])
    return rows


def _field_recovery(ctx: ExperimentContext, boundary: str, name: str) -> dict:
    domain = ctx.domain
    solution = ctx.compact_solution()
    source = _matrix_source(ctx, solution)
    conditions = check_conditions(source, domain, ctx.config.c_max)
    rows = []
    note = None
    for sigma in _noise_levels(ctx.config):
        data = generate_cauchy_data(solution, domain, "D1", sigma=sigma, seed=ctx.config.seeds[0], source=source)
        recovery = invert_source(ctx.problem(data, source_profile=source.time_profile), truth_source=source,
                                 field_boundary=boundary)
        note = recovery.boundary_note
        rows.append([sigma, data_size(data), recovery.errors["rot_F_l2"], recovery.errors["F_h1"],
                     recovery.reconstruction.converged])
    ctx.table(name, ["sigma", "data_size", "rot_F_error", "F_error_h1", "converged"], rows)
    refinement = floor_refinement(ctx, solution, source)
    ctx.table("{}_refinement".format(name), ["resolution", "h", "rot_F_error", "F_error_h1"], refinement)
    (_, h_coarse, _, coarse), (_, h_fine, _, fine) = refinement
    order = convergence_order([coarse, fine], [h_coarse, h_fine]) if fine > 0 else math.inf

    ctx.check("source_gradient_controlled", conditions["gradient_controlled"].passed)
    ctx.check("source_factor_controlled", conditions["factor_controlled"].passed)
    ctx.check("floor_refines", fine < coarse)
    ctx.check("floor_order", order >= 1.5, soft=True)
    ctx.check("error_decreasing", errors_decreasing(rows, 3), soft=True)
    return {"source": source.to_dict(), "conditions": conditions.to_dict(), "boundary_note": note,
            "floor_error": rows[-1][3], "floor_order": order, "refinement": refinement, "rows": rows}


def run_inverse_source_field(ctx: ExperimentContext) -> dict:
    return _field_recovery(ctx, "gamma", "inverse_source_field")


def run_inverse_source_compact(ctx: ExperimentContext) -> dict:
    result = _field_recovery(ctx, "dirichlet", "inverse_source_compact")
    truth = _matrix_source(ctx, ctx.compact_solution()).at_time(ctx.domain)
    recovered = recover_source_field(-laplacian(truth), VectorField.zeros(ctx.domain, timed=False))
    consistency = (recovered - truth).max_abs() / max(truth.max_abs(), 1e-300)
    ctx.check("poisson_consistency", consistency <= 1e-6)
    result["poisson_consistency"] = consistency
    return result


def run_obstruction_demo(ctx: ExperimentContext) -> dict:
    domain = ctx.domain
    center = (0.5,) * ctx.dimension
    gradient_pair = ManufacturedSolution.pressure_only(center, 0.3)
    zero_pair = ManufacturedSolution.zero(ctx.dimension)
    gradient_source = source_from_solution(gradient_pair, domain.t0)
    profile = PolynomialProfile((1.0,))
    datasets, norms = [], []
    for solution, source in ((gradient_pair, gradient_source), (zero_pair, None)):
        data = generate_cauchy_data(solution, domain, "D1", source=source)
        recovery = invert_source(ctx.problem(data, source_profile=profile))
        datasets.append(data)
        norms.append(recovery.rot_F_norm)
    identical = datasets[0].same_data(datasets[1])
    recovered = max(norms)
    ctx.table("obstruction_demo", ["pair", "recovered_rot_F_norm"],
              [["gradient_source", norms[0]], ["zero_source", norms[1]]])
    ctx.check("datasets_identical", identical)
    ctx.check("rot_F_below_tolerance", recovered <= 1e-8)
    return {"datasets_identical": identical, "recovered_rot_F_norm": recovered,
            "gradient_source": gradient_source.to_dict()}


def _configured_source(ctx: ExperimentContext):
    params = dict(ctx.config.source_params)
    if "profile" in params:
        params["profile"] = time_profile(params["profile"])
    return build_source(ctx.config.source_family, ctx.dimension, ctx.domain.t0, **params)


def random_sources(rng: np.random.Generator, dimension: int, count: int, t0: float = 0.5) -> list:
    """Separated and vector-potential sources with random positive profiles and wavenumbers."""
    sources = []
    for i in range(count):
        profile = PolynomialProfile([float(c) for c in rng.uniform(0.5, 1.5, size=3)])
        k = float(rng.uniform(0.5, 2.0))
        if i % 2 == 0:
            spatial = taylor_green_field(k) if dimension == 2 else ABCField(k=k)
            sources.append(build_source("separated", dimension, t0, profile=profile, field=spatial))
        else:
            potential = TrigPotential(1.0 / k, (k,) * dimension, tuple(rng.uniform(0.0, 1.0, size=dimension)))
            sources.append(build_source("vector_potential", dimension, t0, terms=[(profile, potential)]))
    return sources


def run_condition_report(ctx: ExperimentContext) -> dict:
    domain = ctx.domain
    c_max = ctx.config.c_max
    rows = []
    reports = {}
    for family in FAMILIES:
        report = check_conditions(build_source(family, ctx.dimension, domain.t0), domain, c_max)
        reports[family] = report
        rows += [[family] + row for row in report.rows()]
    configured = check_conditions(_configured_source(ctx), domain, c_max)
    rows += [["configured:" + ctx.config.source_family] + row for row in configured.rows()]

    rng = np.random.default_rng(ctx.config.seeds[0])
    samples = random_sources(rng, ctx.dimension, ctx.config.condition_samples, domain.t0)
    chains = [check_conditions(source, domain, c_max).implication_chain_holds for source in samples]
    ctx.table("condition_report", ["source"] + CONDITION_HEADER, rows)

    ctx.check("separated_rotation_finite", math.isfinite(reports["separated"]["rotation_controlled"].constant))
    ctx.check("matrix_factor_controlled", reports["matrix"]["factor_controlled"].passed)
    ctx.check("obstruction_vacuous", reports["gradient_obstruction"]["rotation_controlled"].vacuous)
    ctx.check("implication_chain", all(chains))
    return {"families": {k: v.to_dict() for k, v in reports.items()}, "configured": configured.to_dict(),
            "random_samples": len(samples), "implication_chain_holds": sum(chains)}


# catalog
@dataclass(frozen=True)
class ExperimentInfo:
    name: str
    tier: Optional[str]
    anchor: str
    description: str
    runner: Callable[[ExperimentContext], dict]
    alias: Optional[str] = None

    def to_dict(self) -> dict:
        return {"name": self.name, "alias": self.alias, "tier": self.tier, "anchor": self.anchor,
                "description": self.description}


class ExperimentIterable:
    """Experiment catalog, implemented as iterable for easy autocomplete in the interactive shell"""
    def __init__(self, experiments: Sequence[ExperimentInfo]):
        self.__experiments = {e.name: e for e in experiments}
        self.__aliases = {e.alias: e.name for e in experiments if e.alias}
        for experiment in experiments:
            self.__setattr__(experiment.name, experiment)

    def __iter__(self):
        return iter(self.__experiments)

    def canonical(self, name):
        """Catalog name of an experiment name or alias; anything else is returned unchanged."""
        if isinstance(name, str):
            return self.__aliases.get(name, name)
        return name

    def __getitem__(self, item_key) -> ExperimentInfo:
        item_key = self.canonical(item_key)
        if item_key in self.__experiments:
            return self.__experiments[item_key]
        if type(item_key) == int:
            return list(self.__experiments.values())[item_key]
        raise IndexError("unknown experiment")

    def __contains__(self, item_key) -> bool:
        return self.canonical(item_key) in self.__experiments

    def __len__(self):
        return len(self.__experiments)

    def __repr__(self):
        return '<experiments {}>'.format(", ".join(self.__experiments))


EXPERIMENTS = ExperimentIterable([
    ExperimentInfo("carleman_estimate", None,
                   "Carleman estimate of the linearized Navier-Stokes system in the vorticity decomposition",
                   "term breakdown and empirical constant over the s-grid, with the shear-free comparison",
                   run_carleman_estimate, alias="carleman_thm1"),
    ExperimentInfo("carleman_lemmas", None,
                   "parabolic, space-time elliptic, elliptic and negative-norm Carleman estimates",
                   "trivial, homogeneity and plateau checks of the auxiliary estimates",
                   run_carleman_lemmas),
    ExperimentInfo("slice_integration", None,
                   "integration of the frozen-time elliptic estimate over the time slab",
                   "space-time elliptic ratio against the per-slice ratios times exp(3 lambda beta delta^2)",
                   run_slice_integration, alias="appendix_check"),
    ExperimentInfo("continuation_sweep", "D",
                   "conditional Hoelder stability of the lateral Cauchy problem",
                   "noise sweep of the quasi-reversibility reconstruction with a fitted exponent",
                   run_continuation_sweep),
    ExperimentInfo("inverse_source_rotation", "D1",
                   "stability of rot F(t0) for sources with controlled rotation",
                   "rot F(t0) from the reconstructed time derivative at t0",
                   run_inverse_source_rotation, alias="inverse_source_i"),
    ExperimentInfo("inverse_source_field", "D1",
                   "stability of F(t0) under the gradient condition with zero data on gamma",
                   "F(t0) from the Poisson relation with a Tikhonov extension on the unobserved boundary",
                   run_inverse_source_field, alias="inverse_source_ii"),
    ExperimentInfo("inverse_source_compact", "D1",
                   "stability of F(t0) for sources supported inside the domain",
                   "F(t0) from the Dirichlet Poisson problem",
                   run_inverse_source_compact, alias="proposition1"),
    ExperimentInfo("obstruction_demo", "D1",
                   "gradient sources leave no trace in the lateral data",
                   "F = grad psi and F = 0 give identical data and zero recovered rotation",
                   run_obstruction_demo),
    ExperimentInfo("condition_report", None,
                   "source conditions and their implication chain",
                   "constants of the five source conditions per family and on random sources",
                   run_condition_report),
])


def list_experiments() -> List[dict]:
    """
    Machine-readable catalog.

    :Example:

    >>> len(list_experiments())
    9
    """
    return [EXPERIMENTS[name].to_dict() for name in EXPERIMENTS]


@dataclass
class RunOutcome:
    status: int
    directory: Path
    summary: dict

    def __repr__(self):
        return '<run status={} in {}>'.format(self.status, self.directory)


def write_manifest(directory: Path, experiment: str, digest: str, files: Sequence[str]) -> Path:
    lines = ["experiment {}".format(experiment), "config_hash {}".format(digest)]
    lines += ["{} {}".format(name, version) for name, version in sorted(package_versions().items())]
    lines += ["file {} {}".format(name, file_digest(directory / name)) for name in sorted(files)]
    path = directory / "MANIFEST"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def run(config: Union[ExperimentConfig, dict, None] = None, out_dir: Optional[Union[str, Path]] = None) -> RunOutcome:
    """
    Run one experiment.

    Exit status: 0 when every check passes, 2 when only soft flags fail, 1 on a failed hard check or an
    error raised by the numerics.

    :param config: ExperimentConfig or config document
    :param out_dir: Output root, default ``config.out_dir``
    :return: RunOutcome

    :Example:

    >>> outcome = run({"experiment": "obstruction_demo", "resolution": 16})
    >>> outcome.status
    0
    """
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.from_dict(config)
    info = EXPERIMENTS[config.experiment]
    config = replace(config, experiment=info.name)
    document = config.to_dict()
    document.pop("out_dir")
    digest = config_hash(document)
    directory = ensure_directory(Path(out_dir or config.out_dir) / "{}_{}".format(config.experiment, digest[:12]))
    logger.info("running %s into %s", config.experiment, directory)

    ctx = None
    try:
        ctx = ExperimentContext(config, directory)
        results = info.runner(ctx)
        checks, soft = ctx.checks, ctx.soft_flags
        status = 1 if not all(checks.values()) else (2 if not all(soft.values()) else 0)
    except RUN_ERRORS as e:
        logger.error("%s failed: %s", config.experiment, e)
        results = {"error": "{}: {}".format(type(e).__name__, e)}
        checks = dict(ctx.checks) if ctx is not None else {}
        soft = dict(ctx.soft_flags) if ctx is not None else {}
        status = 1

    summary = dict(to_plain(results))
    summary.update({
        "experiment": config.experiment,
        "anchor": info.anchor,
        "tier": info.tier,
        "psi_mode_note": psi_mode_note(config.psi_mode),
        "config": document,
        "config_hash": digest,
        "checks": checks,
        "soft_flags": soft,
        "status": status,
    })
    write_json(directory / "summary.json", summary)
    files = (list(ctx.files) if ctx is not None else []) + ["summary.json"]
    write_manifest(directory, config.experiment, digest, files)
    logger.info("%s finished with status %d", config.experiment, status)
    return RunOutcome(status, directory, summary)


def compare_golden(summary: dict, golden: dict, rtol: float = 1e-6, atol: float = 1e-12) -> List[str]:
    """
    Differences between a run summary and a golden summary. Only the keys present in the golden document
    are compared: numbers within ``atol + rtol·|golden|``, everything else exactly.

    :param summary: ``RunOutcome.summary`` or a loaded ``summary.json``
    :param golden: Golden document, usually a trimmed ``summary.json``
    :param rtol: Relative tolerance of numbers
    :param atol: Absolute tolerance of numbers
    :return: One message per difference, empty when the run matches

    :Example:

    >>> compare_golden({"status": 0, "floor_error": 1.0 + 1e-9}, {"status": 0, "floor_error": 1.0})
    []
    """
    mismatches = []

    def walk(path, actual, expected):
        if isinstance(expected, dict):
            if not isinstance(actual, dict):
                mismatches.append("{}: expected an object".format(path))
                return
            for key, value in expected.items():
                where = "{}.{}".format(path, key) if path else str(key)
                if key not in actual:
                    mismatches.append("{}: missing".format(where))
                else:
                    walk(where, actual[key], value)
        elif isinstance(expected, list):
            if not isinstance(actual, list) or len(actual) != len(expected):
                mismatches.append("{}: expected a list of {} items".format(path, len(expected)))
                return
            for i, (a, e) in enumerate(zip(actual, expected)):
                walk("{}[{}]".format(path, i), a, e)
        elif _is_number(expected) and _is_number(actual):
            if math.isnan(expected) or math.isnan(actual):
                if not (math.isnan(expected) and math.isnan(actual)):
                    mismatches.append("{}: {} != {}".format(path, actual, expected))
            elif not abs(actual - expected) <= atol + rtol * abs(expected):
                mismatches.append("{}: {} != {}".format(path, actual, expected))
        elif actual != expected:
            mismatches.append("{}: {!r} != {!r}".format(path, actual, expected))

    walk("", summary, golden)
    return mismatches


def load_golden(path: Union[str, Path]) -> dict:
    """
    :raises ConfigError: If the file is not a JSON object
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            golden = json.load(fh)
        except ValueError as e:
            raise ConfigError("golden file is not valid JSON: {}".format(e), keys=[str(path)])
    if not isinstance(golden, dict):
        raise ConfigError("golden file must hold a JSON object", keys=[str(path)])
    return golden
