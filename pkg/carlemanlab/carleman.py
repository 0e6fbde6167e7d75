"""
Numerical evaluation of both sides of the Carleman estimates on grid fields across an s-grid.

Every side is a sum of named terms; each term is a :class:`~carlemanlab.field.WeightedNorm` that
already carries its power of s. A report turns the term lists into the ratio curve
ρ(s) = LHS(s)/RHS(s) and extracts the empirical constant Ĉ and threshold ŝ₀.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from .domain import DomainSpec
from .exceptions import DiscretizationError, SupportError
from .field import (Field, ScalarField, VectorField, WeightedNorm, curl, gradient, laplacian, sum_norms,
                    time_derivative, weighted_norm)
from .helper import ensure_directory, write_csv, write_json
from .weight import WeightFunction, WeightProfile, build_weight_profile, check_profile

logger = logging.getLogger(__name__)

PLATEAU_BAND = 0.1
SLICE_SLACK = 1.05


def default_s_grid(s_min: float = 2.0, s_max: float = 256.0, count: int = 8) -> List[float]:
    """
    Geometric s-grid.

    :Example:

    >>> default_s_grid()[:3]
    [2.0, 4.0, 8.0]
    """
    if not 0 < s_min < s_max or count < 2:
        raise ValueError("need 0 < s_min < s_max and at least two points")
    return [float(s) for s in np.geomspace(s_min, s_max, count)]


@dataclass
class CarlemanReport:
    """
    Term breakdown of one estimate over an s-grid.
    """
    tag: str
    s_grid: List[float]
    lhs: Dict[str, List[WeightedNorm]]
    rhs: Dict[str, List[WeightedNorm]]
    flags: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.s_grid)
        self.lhs_total = [sum_norms((t[i] for t in self.lhs.values()), s, "lhs") for i, s in enumerate(self.s_grid)]
        self.rhs_total = [sum_norms((t[i] for t in self.rhs.values()), s, "rhs") for i, s in enumerate(self.s_grid)]
        self.trivial = all(x.is_zero() for x in self.lhs_total + self.rhs_total)
        ratios = []
        for i in range(n):
            lhs, rhs = self.lhs_total[i], self.rhs_total[i]
            if rhs.is_zero() and not lhs.is_zero():
                raise DiscretizationError("{}: right-hand side vanishes at s={} while the left-hand side does not"
                                          .format(self.tag, self.s_grid[i]))
            ratios.append(lhs.ratio(rhs))
        self.ratios = ratios
        self._extract()

    def __repr__(self):
        return '<carleman report "{}" C={} s0={}>'.format(self.tag, self.c_hat, self.s0_hat)

    def _extract(self):
        finite = [r for r in self.ratios if math.isfinite(r)]
        if self.trivial or len(finite) < len(self.ratios) or len(finite) < 3:
            self.plateau = math.nan
            self.s0_hat = None
            self.c_hat = max(finite) if finite else math.nan
            self.flags.setdefault("plateau_reached", False)
            return
        self.plateau = float(np.median(self.ratios[-3:]))
        start = None
        for i in range(len(self.ratios)):
            if all(abs(r - self.plateau) <= PLATEAU_BAND * self.plateau for r in self.ratios[i:]):
                start = i
                break
        if start is None:
            self.s0_hat = None
            self.c_hat = max(self.ratios)
            self.flags.setdefault("plateau_reached", False)
        else:
            self.s0_hat = self.s_grid[start]
            self.c_hat = max(self.ratios[start:])
            self.flags.setdefault("plateau_reached", True)

    def offsets(self) -> List[float]:
        """Shared exponent offset per s: the largest offset among its terms."""
        result = []
        for i in range(len(self.s_grid)):
            terms = [t[i] for t in list(self.lhs.values()) + list(self.rhs.values()) if not t[i].is_zero()]
            result.append(max((t.offset for t in terms), default=0.0))
        return result

    def dominant_term(self, i: int) -> str:
        """Name of the largest left-hand term at the i-th s."""
        return max(self.lhs, key=lambda name: self.lhs[name][i].log)

    @property
    def header(self) -> List[str]:
        return (["s", "offset"] + ["lhs_" + n for n in self.lhs] + ["rhs_" + n for n in self.rhs]
                + ["lhs_total", "rhs_total", "rho"])

    def rows(self) -> List[list]:
        """CSV rows; every integral is written as value·e^{−offset} with the row's shared offset."""
        rows = []
        for i, (s, offset) in enumerate(zip(self.s_grid, self.offsets())):
            row = [s, offset]
            row += [t[i].in_units_of(offset) for t in self.lhs.values()]
            row += [t[i].in_units_of(offset) for t in self.rhs.values()]
            row += [self.lhs_total[i].in_units_of(offset), self.rhs_total[i].in_units_of(offset), self.ratios[i]]
            rows.append(row)
        return rows

    def summary(self) -> dict:
        return {
            "tag": self.tag,
            "s_grid": self.s_grid,
            "ratios": self.ratios,
            "c_hat": self.c_hat,
            "s0_hat": self.s0_hat,
            "plateau": self.plateau,
            "trivial": self.trivial,
            "offsets": self.offsets(),
            "flags": self.flags,
        }

    def save(self, directory: Union[str, Path], stem: Optional[str] = None) -> Path:
        directory = ensure_directory(directory)
        stem = stem or self.tag
        write_csv(directory / "{}.csv".format(stem), self.header, self.rows())
        write_json(directory / "{}.json".format(stem), self.summary())
        return directory


def evaluate_terms(tag: str, s_grid: Sequence[float], lhs: Dict[str, Callable[[float], WeightedNorm]],
                   rhs: Dict[str, Callable[[float], WeightedNorm]], flags: Optional[dict] = None) -> CarlemanReport:
    """
    Evaluate term callables s -> WeightedNorm at every s, in s order.
    """
    s_grid = [float(s) for s in s_grid]
    if not s_grid or any(not s > 0 for s in s_grid):
        raise ValueError("s-grid needs positive values")
    lhs_values = {name: [fn(s) for s in s_grid] for name, fn in lhs.items()}
    rhs_values = {name: [fn(s) for s in s_grid] for name, fn in rhs.items()}
    report = CarlemanReport(tag, s_grid, lhs_values, rhs_values, dict(flags or {}))
    logger.info("%s: C=%s, s0=%s, plateau=%s", tag, report.c_hat, report.s0_hat, report.plateau)
    return report


def _term(fields: Sequence[Field], weight, region="Q", power: int = 0, t: Optional[float] = None):
    def evaluate(s: float) -> WeightedNorm:
        return weighted_norm(list(fields), weight, s, region, t=t).scaled(s ** power) if power \
            else weighted_norm(list(fields), weight, s, region, t=t)
    return evaluate


def _end_slice_term(fields: Sequence[Field], weight: WeightFunction, power: int = 3):
    """Σ over both slab ends of ∫_Ω |·|² e^{2sφ(x, t₀+δ)} for timed fields."""
    domain = fields[0].domain
    t_end = weight.t0 + weight.delta
    ends = [[f.slice_time(index) for f in fields] for index in (0, domain.n_t - 1)]

    def evaluate(s: float) -> WeightedNorm:
        total = sum_norms((weighted_norm(group, weight, s, "omega", t=t_end) for group in ends), s, "end_slices")
        return total.scaled(s ** power)
    return evaluate


def verify_navier_stokes_estimate(v: VectorField, forcing: VectorField, weight: WeightFunction,
                                  s_grid: Optional[Sequence[float]] = None, z: Optional[Field] = None,
                                  pressure: Optional[ScalarField] = None, tag: str = "navier_stokes") -> CarlemanReport:
    """
    Both sides of the Navier-Stokes Carleman estimate with z = rot v.

    LHS: ∫_Q {(1/s)(|∂ₜz|²+|∂ₜv|²+|Δz|²+|Δv|²) + s(|∇z|²+|∇v|²) + s³(|z|²+|v|²)} e^{2sφ}, plus
    (1/s)|∇p|² when ``pressure`` is given.
    RHS: ∫_Q |rot F|² e^{2sφ} (plus |F|² with ``pressure``), s³ ∫_{∂Ω×I} Σ_{j<=1}(|∇ʲ_{x,t}z|²+|∇ʲv|²) e^{2sφ},
    s³ Σ_± ∫_Ω (|∇z(t₀±δ)|²+|z(t₀±δ)|²) e^{2sφ(x,t₀+δ)}.

    :param v: Velocity over Q
    :param forcing: F over Q
    :param weight: Carleman weight
    :param s_grid: s values, default :func:`default_s_grid`
    :param z: rot v, default the stencil curl of v
    :param pressure: Optional pressure over Q
    :param tag: Report tag
    :return: CarlemanReport
    """
    s_grid = s_grid or default_s_grid()
    z = curl(v) if z is None else z
    lhs = {
        "time_derivative": _term([time_derivative(z), time_derivative(v)], weight, power=-1),
        "laplacian": _term([laplacian(z), laplacian(v)], weight, power=-1),
        "gradient": _term([gradient(z), gradient(v)], weight, power=1),
        "zero_order": _term([z, v], weight, power=3),
    }
    rhs = {"rot_forcing": _term([curl(forcing)], weight)}
    flags = {"pressure_term": pressure is not None}
    if pressure is not None:
        lhs["pressure"] = _term([gradient(pressure)], weight, power=-1)
        rhs["forcing"] = _term([forcing], weight)
    rhs["boundary"] = _term([z, gradient(z), time_derivative(z), v, gradient(v)], weight, "boundary", power=3)
    rhs["end_slices"] = _end_slice_term([z, gradient(z)], weight)
    return evaluate_terms(tag, s_grid, lhs, rhs, flags)


def verify_parabolic_estimate(u: Field, source: Field, weight: WeightFunction,
                              s_grid: Optional[Sequence[float]] = None, tag: str = "parabolic") -> CarlemanReport:
    """
    Carleman estimate of ∂ₜu − Δu = G with boundary and end-slice terms.
    """
    s_grid = s_grid or default_s_grid()
    lhs = {
        "time_derivative": _term([time_derivative(u), laplacian(u)], weight, power=-1),
        "gradient": _term([gradient(u)], weight, power=1),
        "zero_order": _term([u], weight, power=3),
    }
    rhs = {
        "source": _term([source], weight),
        "boundary": _term([u, gradient(u), time_derivative(u)], weight, "boundary", power=3),
        "end_slices": _end_slice_term([u, gradient(u)], weight),
    }
    return evaluate_terms(tag, s_grid, lhs, rhs)


def verify_space_time_elliptic_estimate(r: Field, g: Field, weight: WeightFunction,
                                        s_grid: Optional[Sequence[float]] = None,
                                        tag: str = "space_time_elliptic") -> CarlemanReport:
    """
    Elliptic estimate of −Δr = g integrated over the time slab with the time-dependent weight.
    """
    s_grid = s_grid or default_s_grid()
    lhs = {"gradient": _term([gradient(r)], weight, power=1), "zero_order": _term([r], weight, power=3)}
    rhs = {"source": _term([g], weight), "boundary": _term([r, gradient(r)], weight, "boundary", power=3)}
    return evaluate_terms(tag, s_grid, lhs, rhs)


def verify_elliptic_estimate(w: Field, h: Field, weight: WeightFunction, s_grid: Optional[Sequence[float]] = None,
                             t: Optional[float] = None, tag: str = "elliptic") -> CarlemanReport:
    """
    Elliptic estimate of −Δw = h on Ω with the weight frozen at time t (default t₀).
    """
    s_grid = s_grid or default_s_grid()
    grad = gradient(w)
    lhs = {"gradient": _term([grad], weight, "omega", power=1, t=t),
           "zero_order": _term([w], weight, "omega", power=3, t=t)}
    rhs = {"source": _term([h], weight, "omega", t=t),
           "boundary": _term([w, grad], weight, "boundary", power=3, t=t)}
    return evaluate_terms(tag, s_grid, lhs, rhs)


class NegativeNormWeight:
    """
    Weight φ₀ = e^{λη} of the negative-norm estimate on E = Ω inside Ẽ = Ω₁ with η = d.
    """
    SUPPORT_LAYERS = 2

    def __init__(self, domain: DomainSpec, profile: Optional[WeightProfile] = None, lam: float = 2.0):
        self.domain = domain
        self.profile = profile or build_weight_profile(domain)
        self.lam = float(lam)
        self.weight = WeightFunction(self.profile, lam=self.lam, beta=0.0, t0=domain.t0, delta=domain.delta,
                                     psi_mode="linear")

    def __repr__(self):
        return '<negative norm weight lambda={}>'.format(self.lam)

    def check(self) -> "NegativeNormWeight":
        """Re-check η = 0 on ∂Ẽ, η > 0 in Ẽ and |∇η| > 0 away from the opening on the grid."""
        check_profile(self.profile, self.domain)
        return self

    def phi0(self, points) -> np.ndarray:
        return np.exp(self.lam * self.profile.value(points))

    def check_support(self, w: Field, tol: float = 1e-12):
        """
        :raises SupportError: If w is not numerically zero within two node layers of ∂E
        """
        scale = w.max_abs()
        if scale == 0:
            return
        near = np.zeros(self.domain.shape, dtype=bool)
        layers = self.SUPPORT_LAYERS
        for k in range(self.domain.dimension):
            index = [slice(None)] * self.domain.dimension
            index[k] = slice(0, layers)
            near[tuple(index)] = True
            index[k] = slice(-layers, None)
            near[tuple(index)] = True
        magnitude = np.sqrt(w.squared_magnitude())
        if np.any(magnitude[near] > tol * scale):
            raise SupportError("field does not vanish within {} layers of the boundary".format(layers))

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "profile": self.weight.to_dict()["profile"]}


def rotation_fluxes(z: Field) -> List[Field]:
    """
    Fluxes g_j with ΔF = Σ_j ∂_j g_j when −ΔF = rot z for z = rot F (divergence-free F).

    2D: g₁ = (0, z), g₂ = (−z, 0). 3D: (g_j)_a = −ε_{ajk} z_k.
    """
    domain = z.domain
    if domain.dimension == 2:
        zero = np.zeros_like(z.values)
        return [VectorField(domain, np.stack([zero, z.values]), z.timed),
                VectorField(domain, np.stack([-z.values, zero]), z.timed)]
    eps = np.zeros((3, 3, 3))
    eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1.0
    eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1.0
    return [VectorField(domain, -np.einsum("ak,k...->a...", eps[:, j, :], z.values), z.timed) for j in range(3)]


def verify_negative_norm_estimate(w: Field, weight4: NegativeNormWeight, s_grid: Optional[Sequence[float]] = None,
                                  fluxes: Optional[Sequence[Field]] = None,
                                  tag: str = "negative_norm") -> CarlemanReport:
    """
    ∫_E (|∇w|² + s²|w|²) e^{2sφ₀} against s Σ_j ∫_E |g_j|² e^{2sφ₀} for w vanishing near ∂E with
    Δw = Σ_j ∂_j g_j; the default fluxes are g_j = ∂_j w.

    :raises SupportError: If w does not vanish near ∂E
    """
    if w.timed:
        raise ValueError("the negative-norm estimate takes a field on Ω")
    weight4.check_support(w)
    s_grid = s_grid or default_s_grid()
    grad = gradient(w)
    if fluxes is None:
        dim = w.dimension
        comps = grad.values.reshape((-1, dim) + w.domain.shape)
        fluxes = [make_flux(w, comps[:, j]) for j in range(dim)]
    wt = weight4.weight
    lhs = {"gradient": _term([grad], wt, "omega"), "zero_order": _term([w], wt, "omega", power=2)}
    rhs = {"fluxes": _term(list(fluxes), wt, "omega", power=1)}
    return evaluate_terms(tag, s_grid, lhs, rhs)


def make_flux(w: Field, values: np.ndarray) -> Field:
    if w.rank == 0:
        return ScalarField(w.domain, values[0], w.timed)
    return VectorField(w.domain, values, w.timed)


# slice integration
def slice_factor(weight: WeightFunction) -> float:
    """e^{3λβδ²}."""
    return weight.slice_factor()


def slice_reports_for(r: Field, g: Field, weight: WeightFunction,
                      s_grid: Optional[Sequence[float]] = None) -> List[CarlemanReport]:
    """
    Per time slice, the elliptic estimate of −Δr(t) = g(t) at s̃ = s·e^{−λβ(t−t₀)²} with the weight frozen
    at t₀, so that s̃φ(x,t₀) = sφ(x,t).
    """
    s_grid = s_grid or default_s_grid()
    domain = r.domain
    reports = []
    for k, t in enumerate(domain.times):
        shrink = math.exp(-weight.lam * weight.beta * (t - weight.t0) ** 2)
        reports.append(verify_elliptic_estimate(r.slice_time(k), g.slice_time(k), weight,
                                                [s * shrink for s in s_grid], t=weight.t0,
                                                tag="elliptic_slice_{}".format(k)))
    return reports


@dataclass
class SliceIntegrationVerdict:
    holds: bool
    factor: float
    rows: List[list]
    c_relation: bool
    threshold_relation: Optional[bool]
    s1: Optional[float]
    flags: Dict[str, object] = field(default_factory=dict)

    HEADER = ["s", "rho_space_time", "max_rho_slices", "bound", "holds"]

    def to_dict(self) -> dict:
        return {"holds": self.holds, "factor": self.factor, "c_relation": self.c_relation,
                "threshold_relation": self.threshold_relation, "s1": self.s1, "flags": self.flags}


def check_slice_integration(slice_reports: Sequence[CarlemanReport], space_time_report: CarlemanReport,
                            weight: WeightFunction, s1: Optional[float] = None) -> SliceIntegrationVerdict:
    """
    Pointwise in s: ρ_space_time(s) <= e^{3λβδ²}·max_t ρ_t(s̃) with 5% slack. The relation of the
    constants Ĉ and the threshold ŝ₀ <= s₁e^{λβδ²} are recorded as flags.

    :param slice_reports: Output of :func:`slice_reports_for`
    :param space_time_report: Space-time elliptic report on the same fields and s-grid
    :param weight: Weight of both
    :param s1: Threshold of the slice estimates, default the largest ŝ₀ among the slices
    :return: SliceIntegrationVerdict
    """
    factor = slice_factor(weight)
    rows = []
    holds = True
    for i, s in enumerate(space_time_report.s_grid):
        slice_ratios = [rep.ratios[i] for rep in slice_reports if math.isfinite(rep.ratios[i])]
        rho = space_time_report.ratios[i]
        if not slice_ratios or not math.isfinite(rho):
            rows.append([s, rho, math.nan, math.nan, 1])
            continue
        bound = factor * max(slice_ratios)
        ok = rho <= SLICE_SLACK * bound
        holds = holds and ok
        rows.append([s, rho, max(slice_ratios), bound, int(ok)])

    slice_c = [rep.c_hat for rep in slice_reports if math.isfinite(rep.c_hat)]
    c_relation = bool(slice_c) and space_time_report.c_hat <= SLICE_SLACK * factor * max(slice_c)
    thresholds = [rep.s0_hat for rep in slice_reports if rep.s0_hat is not None]
    if s1 is None and thresholds:
        s1 = max(thresholds)
    if s1 is None or space_time_report.s0_hat is None:
        threshold_relation = None
    else:
        threshold_relation = space_time_report.s0_hat <= s1 * math.exp(weight.lam * weight.beta * weight.delta ** 2)
    flags = {"c_relation": c_relation, "threshold_relation": threshold_relation}
    if not holds:
        logger.warning("slice integration relation fails; refine the quadrature or inspect the fields")
    return SliceIntegrationVerdict(holds, factor, rows, c_relation, threshold_relation, s1, flags)
