"""
Lateral Cauchy data on Γ × I in three tiers with the data functionals D, D₁, D₂, the a-priori bounds
M, M₁, M₂, m₁ and a seeded additive noise model.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from .analytic import curl_from_jacobian
from .domain import DomainSpec
from .exceptions import DataTierError
from .field import (TRACE_HEADER, Field, ScalarField, Trace, VectorField, curl, extract_trace, sobolev_norm,
                    time_derivative)
from .helper import ensure_directory, write_csv, write_json

logger = logging.getLogger(__name__)

TIERS = ("D", "D1", "D2")

TIER_ORDER = {"D": 0, "D1": 1, "D2": 2}

TRACE_KEYS = (("v", "z"), ("v_t", "z_t"), ("v_tt", "z_tt"))


def tier_order(tier: str) -> int:
    """
    Number of time derivatives a tier carries.

    :Example:

    >>> tier_order("D1")
    1
    """
    try:
        return TIER_ORDER[tier]
    except KeyError:
        raise ValueError("tier must be one of {}".format(TIERS))


@dataclass
class CauchyDataset:
    domain: DomainSpec
    tier: str
    traces: Dict[str, Trace]
    snapshot: Optional[VectorField]
    magnitudes: Dict[str, float]
    bounds: Dict[str, float]
    noise: Dict[str, object]
    time_derivatives: str
    truth: Dict[str, Field] = field(default_factory=dict)

    def __repr__(self):
        return '<cauchy data {} on {} sigma={}>'.format(self.tier, self.domain.preset, self.noise.get("sigma"))

    @property
    def order(self) -> int:
        return tier_order(self.tier)

    def require(self, tier: str):
        """Raise :class:`DataTierError` unless this dataset carries ``tier``."""
        if self.order < tier_order(tier):
            raise DataTierError("dataset tier {} is below the required tier {}".format(self.tier, tier))

    def same_data(self, other: "CauchyDataset") -> bool:
        """Whether the measured data (traces and snapshot) are bit-identical."""
        if self.tier != other.tier or set(self.traces) != set(other.traces):
            return False
        for key, trace in self.traces.items():
            if not trace.equals(other.traces[key]):
                return False
        if (self.snapshot is None) != (other.snapshot is None):
            return False
        return self.snapshot is None or np.array_equal(self.snapshot.values, other.snapshot.values)

    def manifest(self) -> dict:
        return {
            "tier": self.tier,
            "preset": self.domain.preset,
            "shape": list(self.domain.shape),
            "n_t": self.domain.n_t,
            "t0": self.domain.t0,
            "delta": self.domain.delta,
            "magnitudes": self.magnitudes,
            "bounds": self.bounds,
            "noise": self.noise,
            "time_derivatives": self.time_derivatives,
            "traces": sorted(self.traces),
        }

    def save(self, directory: Union[str, Path]) -> Path:
        """
        One CSV per trace, the snapshot as CSV and ``manifest.json``.
        """
        directory = ensure_directory(directory)
        for key, trace in self.traces.items():
            write_csv(directory / "trace_{}.csv".format(key), TRACE_HEADER, trace.rows())
        if self.snapshot is not None:
            self.snapshot.to_csv(directory / "snapshot.csv")
        write_json(directory / "manifest.json", self.manifest())
        logger.info("saved %s to %s", self, directory)
        return directory


def _rotation(v: VectorField) -> Field:
    return curl(v)


def _analytic_fields(solution, domain: DomainSpec, order: int) -> Dict[str, Field]:
    fields = {}
    pts = domain.points()
    spatial_curl = curl_from_jacobian(solution.velocity.jacobian(pts))
    for k in range(order + 1):
        suffix = ("", "_t", "_tt")[k]
        fields["v" + suffix] = solution.sample(domain, k)
        z = np.stack([solution.profile.value(t, k) * spatial_curl for t in domain.times],
                     axis=0 if domain.dimension == 2 else 1)
        fields["z" + suffix] = ScalarField(domain, z, True) if domain.dimension == 2 else VectorField(domain, z, True)
    return fields


def _stencil_fields(v: VectorField, order: int) -> Dict[str, Field]:
    if order >= 2 and v.domain.n_t < 4:
        raise DataTierError("second time derivatives need at least 4 time slices")
    fields = {"v": v, "z": _rotation(v)}
    if order >= 1:
        fields["v_t"] = time_derivative(v)
        fields["z_t"] = _rotation(fields["v_t"])
    if order >= 2:
        fields["v_tt"] = time_derivative(v, 2)
        fields["z_tt"] = _rotation(fields["v_tt"])
    return fields


def trace_functional(traces: Dict[str, Trace], order: int) -> float:
    """
    Σ_{k<=order} Σ_{j<=1} ‖∇ʲ_{x,t} ∂ₜᵏ z‖ + ‖∇ʲ ∂ₜᵏ v‖ over the traces' region.
    """
    total = 0.0
    for v_key, z_key in TRACE_KEYS[:order + 1]:
        z, v = traces[z_key], traces[v_key]
        total += z.norm(0) + z.norm(1, with_time=True) + v.norm(0) + v.norm(1, with_time=False)
    return total


def _slice_rotation_norms(fields: Dict[str, Field], domain: DomainSpec, order: int) -> float:
    """Σ over both slab ends and k <= order of ‖∂ₜᵏ rot v(·, t₀ ± δ)‖_{H¹(Ω)}."""
    total = 0.0
    for k in range(order + 1):
        z = fields[("z", "z_t", "z_tt")[k]]
        for index in (0, domain.n_t - 1):
            total += sobolev_norm(z.slice_time(index), 1)
    return total


def generate_cauchy_data(solution, domain: DomainSpec, tier: str = "D", sigma: float = 0.0, seed: int = 0,
                         source=None, keep_truth: bool = True) -> CauchyDataset:
    """
    Lateral Cauchy data of a solution on Γ × I.

    :param solution: ManufacturedSolution (analytic time derivatives) or a timed VectorField (stencils)
    :param domain: Grid
    :param tier: "D", "D1" or "D2"
    :param sigma: Relative noise level (Gaussian, relative to each trace array's RMS)
    :param seed: Seed of the noise generator
    :param source: Optional SourceModel for m₁ = ‖F(·,t₀)‖_{H²(Ω)}
    :param keep_truth: Keep the exact fields for error evaluation
    :return: CauchyDataset
    :raises DataTierError: If the tier needs derivatives the solution cannot supply

    :Example:

    >>> data = generate_cauchy_data(ManufacturedSolution.taylor_green(), domain, tier="D1", sigma=1e-3)
    """
    order = tier_order(tier)
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if isinstance(solution, VectorField):
        if not solution.timed:
            raise DataTierError("data need a velocity over the whole time slab")
        fields = _stencil_fields(solution, order)
        method = "stencil"
    else:
        fields = _analytic_fields(solution, domain, order)
        method = "analytic"

    clean = {}
    for v_key, z_key in TRACE_KEYS[:order + 1]:
        clean[v_key] = extract_trace(fields[v_key], "gamma")
        clean[z_key] = extract_trace(fields[z_key], "gamma")

    rng = np.random.default_rng(seed)
    if sigma > 0:
        traces = {key: clean[key].perturbed(rng, sigma) for key in sorted(clean)}
    else:
        traces = clean
    noise_traces = {key: traces[key].difference(clean[key]) for key in clean}

    snapshot = fields["v"].at_t0()
    magnitudes = {"D": trace_functional(traces, 0)}
    if order >= 1:
        magnitudes["D1"] = trace_functional(traces, 1) + sobolev_norm(snapshot, 3)
    if order >= 2:
        magnitudes["D2"] = trace_functional(traces, 2) + sobolev_norm(snapshot, 4)

    boundary = {}
    for v_key, z_key in TRACE_KEYS[:order + 1]:
        boundary[v_key] = extract_trace(fields[v_key], "boundary")
        boundary[z_key] = extract_trace(fields[z_key], "boundary")
    z = fields["z"]
    bounds = {"M": trace_functional(boundary, 0)
              + max(sobolev_norm(z.slice_time(n), 1) for n in range(domain.n_t))}
    if order >= 1:
        bounds["M1"] = trace_functional(boundary, 1) + _slice_rotation_norms(fields, domain, 1)
    if order >= 2:
        bounds["M2"] = trace_functional(boundary, 2) + _slice_rotation_norms(fields, domain, 2)
    if source is not None:
        bounds["m1"] = sobolev_norm(source.at_time(domain), 2)

    noise = {"seed": int(seed), "sigma": float(sigma), "model": "gaussian_relative_rms",
             "magnitude": trace_functional(noise_traces, order)}
    truth = fields if keep_truth else {}
    dataset = CauchyDataset(domain, tier, traces, snapshot, magnitudes, bounds, noise, method, truth)
    logger.info("cauchy data %s: D=%.4g, M=%.4g, noise %.3g", tier, magnitudes["D"], bounds["M"],
                noise["magnitude"])
    return dataset


def data_size(dataset: CauchyDataset) -> float:
    """Size of the data perturbation, the D of the stability estimates."""
    return float(dataset.noise.get("magnitude", 0.0))
