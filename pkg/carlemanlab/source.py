"""
Source families F(x,t) of the inverse problem and the grid checks of their structural conditions.

Every family is stored as a finite sum Σ r_i(t)·f_i(x) of time profiles and spatial fields with exact
derivatives, so ∂ₜ^k F, ∇F and rot ∂ₜ^k F are closed form.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .analytic import (ABCField, ExponentialProfile, LinearCombination, MatrixField, MatrixProductField,
                       MatrixSolvedField, PolynomialBump, PolynomialProfile, PotentialField, ScalarPotential,
                       SpatialVectorField, TimeProfile, TrigPotential, curl_from_jacobian, taylor_green_field)
from .domain import DomainSpec
from .exceptions import SourceError
from .field import ScalarField, VectorField

logger = logging.getLogger(__name__)

FAMILIES = ("vector_potential", "separated", "matrix", "gradient_obstruction")

CONDITIONS = ("divergence_free", "rotation_controlled", "gradient_controlled",
              "gradient_controlled_first_order", "factor_controlled")


class SourceModel:
    """
    F(x,t) = Σ r_i(t) f_i(x).

    :param family: One of :data:`FAMILIES`
    :param terms: List of (TimeProfile, SpatialVectorField) pairs
    :param params: JSON-compatible description
    :param factor: The spatial factor f of the separated and matrix families
    :param matrix: M(x) of the matrix family, R(x,t) = ρ(t)M(x)
    """
    def __init__(self, family: str, terms: Sequence[Tuple[TimeProfile, SpatialVectorField]], params: dict,
                 factor: Optional[SpatialVectorField] = None, matrix: Optional[MatrixField] = None):
        if family not in FAMILIES:
            raise SourceError("unknown source family {!r}".format(family))
        if not terms:
            raise SourceError("a source needs at least one term")
        self.family = family
        self.terms = list(terms)
        self.params = params
        self.factor = factor
        self.matrix = matrix
        self.dimension = self.terms[0][1].dimension

    def __repr__(self):
        return '<{} source ({} terms)>'.format(self.family, len(self.terms))

    @property
    def time_profile(self) -> Optional[TimeProfile]:
        """r(t) when rot F(x,t) = r(t)·rot f(x) is separated, else None."""
        if self.family in ("separated", "matrix") or len(self.terms) == 1:
            return self.terms[0][0]
        return None

    @property
    def profile(self) -> TimeProfile:
        return self.terms[0][0]

    def value(self, points, t, k: int = 0):
        """∂ₜ^k F at (x, t)."""
        return sum(r.value(t, k) * f.value(points) for r, f in self.terms)

    def jacobian(self, points, t, k: int = 0):
        """∇∂ₜ^k F, array (ncomp, dimension, ...)."""
        return sum(r.value(t, k) * f.jacobian(points) for r, f in self.terms)

    def rotation(self, points, t, k: int = 0):
        """rot ∂ₜ^k F: scalar array in 2D, (3, ...) in 3D."""
        if self.family == "gradient_obstruction":
            shape = np.shape(points)[1:]
            return np.zeros(shape) if self.dimension == 2 else np.zeros((3,) + shape)
        return curl_from_jacobian(self.jacobian(points, t, k))

    def divergence(self, points, t, k: int = 0):
        jac = self.jacobian(points, t, k)
        return sum(jac[j, j] for j in range(self.dimension))

    def factor_value(self, points):
        if self.factor is None:
            raise SourceError("{} sources carry no spatial factor".format(self.family))
        return self.factor.value(points)

    def factor_jacobian(self, points):
        if self.factor is None:
            raise SourceError("{} sources carry no spatial factor".format(self.family))
        return self.factor.jacobian(points)

    # grid sampling
    def sample(self, domain: DomainSpec, k: int = 0) -> VectorField:
        return VectorField.from_function(domain, lambda pts, t: self.value(pts, t, k), timed=True)

    def at_time(self, domain: DomainSpec, t: Optional[float] = None) -> VectorField:
        t = domain.t0 if t is None else t
        return VectorField(domain, self.value(domain.points(), t), False)

    def rotation_at_time(self, domain: DomainSpec, t: Optional[float] = None):
        t = domain.t0 if t is None else t
        rot = self.rotation(domain.points(), t)
        return ScalarField(domain, rot, False) if domain.dimension == 2 else VectorField(domain, rot, False)

    def to_dict(self) -> dict:
        return {"family": self.family, "params": self.params}


def _magnitude(array, lead: int) -> np.ndarray:
    """Euclidean norm over the first ``lead`` axes (0 for scalars)."""
    if lead == 0:
        return np.abs(array)
    flat = np.reshape(array, (-1,) + np.shape(array)[lead:])
    return np.sqrt(np.sum(flat ** 2, axis=0))


def spot_check(source: SourceModel, rng: np.random.Generator, count: int = 100, step: float = 1e-4) -> float:
    """
    Compare the stored derivative closures with central differences at random points of the unit box
    and random times in [0, 1].

    :return: Largest relative discrepancy
    """
    dim = source.dimension
    pts = rng.uniform(0.0, 1.0, size=(dim, count))
    ts = rng.uniform(0.0, 1.0, size=count)
    worst = 0.0
    for i in range(count):
        x = pts[:, i:i + 1]
        t = float(ts[i])
        jac = source.jacobian(x, t)
        fd = np.stack([(source.value(x + step * _column(dim, j), t) - source.value(x - step * _column(dim, j), t))
                       / (2 * step) for j in range(dim)], axis=1)
        scale = max(float(np.max(np.abs(jac))), 1.0)
        worst = max(worst, float(np.max(np.abs(jac - fd))) / scale)
        for k in (1, 2):
            exact = source.value(x, t, k)
            fd_t = (source.value(x, t + step, k - 1) - source.value(x, t - step, k - 1)) / (2 * step)
            scale = max(float(np.max(np.abs(exact))), 1.0)
            worst = max(worst, float(np.max(np.abs(exact - fd_t))) / scale)
    return worst


def _column(dim: int, j: int) -> np.ndarray:
    e = np.zeros((dim, 1))
    e[j, 0] = 1.0
    return e


def _default_field(dimension: int) -> SpatialVectorField:
    if dimension == 2:
        return taylor_green_field(math.pi / 2.0)
    return ABCField(k=1.0)


def build_source(family: str, dimension: int = 2, t0: float = 0.5, check: bool = True, seed: int = 0,
                 **params) -> SourceModel:
    """
    Build a source of one family and validate it.

    vector_potential: ``terms`` = [(profile, ScalarPotential)], F = Σ r_i rot q_i (q = (0, 0, ψ) in 3D).
    separated: ``profile`` r(t) and a divergence-free ``field`` f; r(t₀) must not vanish.
    matrix: ``profile`` ρ(t), ``matrix`` M(x), ``field`` f (or ``target`` g with f = M⁻¹g), R = ρM;
    |det R(·,t₀)| must stay above ``c0``.
    gradient_obstruction: ``potential`` ψ, F = ∇ψ.

    :param family: Family tag
    :param dimension: 2 or 3
    :param t0: Reference time
    :param check: Spot-check the closures against central differences
    :param seed: Seed of the spot check
    :return: SourceModel
    :raises SourceError: On ill-formed parameters

    :Example:

    >>> source = build_source("separated", profile=PolynomialProfile((1.0, 0.0, 1.0)))
    """
    rng = np.random.default_rng(seed)
    samples = rng.uniform(0.0, 1.0, size=(dimension, 64))
    if family == "vector_potential":
        terms = params.get("terms")
        if terms is None:
            terms = [(PolynomialProfile((1.0, 0.5)), TrigPotential(1.0 / math.pi, (math.pi,) * dimension))]
        source = SourceModel(family, [(r, PotentialField.rotated(q)) for r, q in terms],
                             {"terms": [[r.to_dict(), repr(q)] for r, q in terms]})
    elif family == "separated":
        r = params.get("profile") or PolynomialProfile((1.0, 0.0, 1.0))
        f = params.get("field") or _default_field(dimension)
        if abs(float(r.value(t0))) < 1e-14:
            raise SourceError("separated source needs r(t0) != 0")
        div = f.divergence(samples)
        if float(np.max(np.abs(div))) > 1e-10 * max(1.0, float(np.max(np.abs(f.jacobian(samples))))):
            raise SourceError("separated source needs div f = 0")
        source = SourceModel(family, [(r, f)], {"profile": r.to_dict(), "field": repr(f)}, factor=f)
    elif family == "matrix":
        rho = params.get("profile") or PolynomialProfile((1.0, 0.5))
        matrix = params.get("matrix") or MatrixField(dimension)
        if "target" in params:
            f = MatrixSolvedField(matrix, params["target"])
        else:
            f = params.get("field") or _default_field(dimension)
        c0 = float(params.get("c0", 1e-3))
        det = float(rho.value(t0)) ** dimension * matrix.determinant(_unit_grid(dimension, 21))
        if float(np.min(np.abs(det))) < c0:
            raise SourceError("det R(x, t0) falls below c0={} on the closed domain".format(c0))
        source = SourceModel(family, [(rho, MatrixProductField(matrix, f))],
                             {"profile": rho.to_dict(), "matrix": repr(matrix), "field": repr(f), "c0": c0},
                             factor=f, matrix=matrix)
    elif family == "gradient_obstruction":
        psi = params.get("potential") or PolynomialBump((0.5,) * dimension, 0.3)
        r = params.get("profile") or PolynomialProfile((1.0,))
        source = SourceModel(family, [(r, PotentialField.gradient_of(psi))], {"potential": repr(psi)})
    else:
        raise SourceError("unknown source family {!r}".format(family))

    if check:
        worst = spot_check(source, rng)
        if worst > 1e-4:
            raise SourceError("stored derivatives disagree with differences (relative {:.3g})".format(worst))
        logger.debug("%s: closures agree with differences to %.2g", source, worst)
    return source


def _unit_grid(dimension: int, n: int) -> np.ndarray:
    axis = np.linspace(0.0, 1.0, n)
    return np.stack(np.meshgrid(*([axis] * dimension), indexing="ij"))


def source_from_solution(solution, t0: float = 0.5) -> SourceModel:
    """
    Forcing of a manufactured solution without coefficients as a source model.

    Eigenfields (−Δu = κu) without pressure give F = (g' + κg)u; exponential profiles g = ae^{ct} give
    F = g·(cu − Δu); a pure pressure pair (0, q(t)P) gives F = q∇P.
    """
    if solution.is_zero_velocity and solution.has_pressure:
        return build_source("gradient_obstruction", solution.dimension, t0, potential=solution.pressure,
                            profile=solution.pressure_profile)
    if solution.has_pressure:
        raise SourceError("manufactured forcing with pressure is not a supported family")
    g = solution.profile
    u = solution.velocity
    if u.eigenvalue is not None:
        return build_source("separated", solution.dimension, t0, profile=_shifted_derivative(g, u.eigenvalue),
                            field=u)
    if isinstance(g, ExponentialProfile):
        f = LinearCombination([(g.rate, u), (-1.0, u.laplacian_field())])
        return build_source("separated", solution.dimension, t0, profile=g, field=f)
    raise SourceError("forcing of {} is not separated".format(solution))


def _shifted_derivative(profile: TimeProfile, kappa: float) -> TimeProfile:
    """g' + κg."""
    if isinstance(profile, PolynomialProfile):
        poly = profile.polynomial.deriv() + kappa * profile.polynomial
        return PolynomialProfile(poly.coef)
    if isinstance(profile, ExponentialProfile):
        return ExponentialProfile(profile.rate, profile.amplitude * (profile.rate + kappa))
    raise SourceError("unsupported time profile {!r}".format(profile))


# condition checks
@dataclass
class ConditionResult:
    name: str
    constant: float
    passed: bool
    applicable: bool = True
    vacuous: bool = False
    offending: List[list] = field(default_factory=list)
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "constant": self.constant, "passed": self.passed,
                "applicable": self.applicable, "vacuous": self.vacuous,
                "offending": self.offending[:20], "detail": self.detail}


@dataclass
class ConditionReport:
    family: str
    c_max: float
    results: Dict[str, ConditionResult]

    def __getitem__(self, name: str) -> ConditionResult:
        try:
            return self.results[name]
        except KeyError:
            raise IndexError("unknown condition")

    @property
    def implication_chain_holds(self) -> bool:
        """
        A finite rotation constant implies a finite gradient constant, which implies a finite
        first-order gradient constant.
        """
        chain = [self.results[n].constant for n in CONDITIONS[1:4]]
        if math.isfinite(chain[0]) and not math.isfinite(chain[1]):
            return False
        if math.isfinite(chain[1]) and not math.isfinite(chain[2]):
            return False
        return True

    def rows(self) -> List[list]:
        return [[r.name, r.constant, int(r.passed), int(r.applicable), int(r.vacuous), len(r.offending)]
                for r in self.results.values()]

    def to_dict(self) -> dict:
        return {"family": self.family, "c_max": self.c_max,
                "implication_chain_holds": self.implication_chain_holds,
                "results": {k: v.to_dict() for k, v in self.results.items()}}


CONDITION_HEADER = ["condition", "constant", "passed", "applicable", "vacuous", "offending_cells"]


def ratio_constant(numerator: np.ndarray, denominator: np.ndarray, name: str, c_max: float) -> ConditionResult:
    """
    Smallest C with numerator <= C·denominator on the grid.

    Numerators below 1e-9·max count as zero, denominators below 1e-12·max count as zero; a nonzero
    numerator over a zero denominator gives C = ∞ and lists the cells.
    """
    scale = float(np.max(numerator)) if numerator.size else 0.0
    if scale == 0.0:
        return ConditionResult(name, 0.0, True, vacuous=True, detail="numerator vanishes identically")
    num_zero = numerator <= 1e-9 * scale
    den_scale = float(np.max(denominator))
    den_zero = denominator <= 1e-12 * max(den_scale, scale)
    bad = ~num_zero & den_zero
    if np.any(bad):
        cells = np.argwhere(bad).tolist()
        return ConditionResult(name, math.inf, False, offending=cells,
                               detail="numerator nonzero where the bound vanishes")
    active = ~num_zero
    c = float(np.max(numerator[active] / denominator[active]))
    return ConditionResult(name, c, c <= c_max)


def check_conditions(source: SourceModel, domain: DomainSpec, c_max: float = 1e3,
                     t0: Optional[float] = None) -> ConditionReport:
    """
    Grid evaluation of the divergence, rotation, gradient, first-order gradient and factor conditions
    over Ω × I.

    :param source: The source
    :param domain: Grid
    :param c_max: Constant under which a condition passes
    :param t0: Reference time, default the domain's t₀
    :return: ConditionReport
    """
    t0 = domain.t0 if t0 is None else t0
    pts = domain.points()
    lead = 0 if domain.dimension == 2 else 1
    results = {}

    jac0 = source.jacobian(pts, t0)
    div0 = np.abs(source.divergence(pts, t0))
    grad_scale = max(float(np.max(np.abs(jac0))), 1.0)
    div_max = float(np.max(div0))
    results["divergence_free"] = ConditionResult("divergence_free", div_max, div_max <= 1e-8 * grad_scale,
                                                 detail="max |div F(t0)|")

    rot = {k: np.stack([_magnitude(source.rotation(pts, t, k), lead) for t in domain.times]) for k in (0, 1, 2)}
    rot0 = _magnitude(source.rotation(pts, t0), lead)
    first = np.maximum(rot[0].max(axis=0), rot[1].max(axis=0))
    second = np.maximum(first, rot[2].max(axis=0))
    grad_bound = _magnitude(jac0, 2) + _magnitude(source.value(pts, t0), 1)

    results["rotation_controlled"] = ratio_constant(first, rot0, "rotation_controlled", c_max)
    results["gradient_controlled"] = ratio_constant(second, grad_bound, "gradient_controlled", c_max)
    results["gradient_controlled_first_order"] = ratio_constant(first, grad_bound,
                                                                "gradient_controlled_first_order", c_max)
    if source.factor is not None:
        factor_size = _magnitude(source.factor_jacobian(pts), 2) + _magnitude(source.factor_value(pts), 1)
        results["factor_controlled"] = ratio_constant(factor_size, grad_bound, "factor_controlled", c_max)
    else:
        results["factor_controlled"] = ConditionResult("factor_controlled", 0.0, True, applicable=False,
                                                       detail="no spatial factor")

    report = ConditionReport(source.family, c_max, results)
    for r in results.values():
        logger.info("condition %s: C=%s passed=%s", r.name, r.constant, r.passed)
    if not report.implication_chain_holds:
        logger.warning("condition constants violate the implication chain for %s", source)
    return report
