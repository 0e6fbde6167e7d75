"""
Linearized Navier-Stokes forward problem: coefficient fields, manufactured solutions, the induced forcing
and a Chorin-type projection stepper used as an independent cross-check.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .analytic import (ABCField, AffineCoefficient, ExponentialProfile, LinearField, PolynomialBump,
                       PolynomialProfile, PotentialField, ScalarPotential, SpatialVectorField, TimeProfile,
                       ZeroField, taylor_green_field, vortex_field)
from .domain import DomainSpec
from .exceptions import SolverError
from .field import (ScalarField, VectorField, advect, axis_operator, divergence, first_difference_matrix,
                    gradient, laplacian, second_difference_matrix, time_derivative, transport)

logger = logging.getLogger(__name__)


class CoefficientFields:
    """
    The coefficients A (advection) and B (shear) of (A·∇)v + (v·∇)B, with exact time derivatives.
    """
    def __init__(self, advection: AffineCoefficient, shear: AffineCoefficient):
        if advection.dimension != shear.dimension:
            raise ValueError("coefficients must share the dimension")
        self.advection = advection
        self.shear = shear
        self.dimension = advection.dimension

    def __repr__(self):
        return '<coefficients A={} B={}>'.format("0" if self.advection.is_zero() else "A",
                                                 "0" if self.shear.is_zero() else "B")

    @classmethod
    def zero(cls, dimension: int) -> "CoefficientFields":
        return cls(AffineCoefficient(dimension), AffineCoefficient(dimension))

    @classmethod
    def affine(cls, dimension: int, advection_offset=None, advection_matrix=None, shear_offset=None,
               shear_matrix=None, rate: float = 0.0) -> "CoefficientFields":
        return cls(AffineCoefficient(dimension, advection_offset, advection_matrix, rate),
                   AffineCoefficient(dimension, shear_offset, shear_matrix, rate))

    def without_shear(self) -> "CoefficientFields":
        return CoefficientFields(self.advection, AffineCoefficient(self.dimension))

    def is_zero(self) -> bool:
        return self.advection.is_zero() and self.shear.is_zero()

    def sample(self, domain: DomainSpec, which: str = "advection", t: Optional[float] = None, k: int = 0) -> VectorField:
        """
        Coefficient on the grid, over all time slices (t is None) or at one time.
        """
        coefficient = self.advection if which == "advection" else self.shear
        pts = domain.points()
        if t is None:
            return VectorField(domain, np.stack([coefficient.value(pts, s, k) for s in domain.times], axis=1), True)
        return VectorField(domain, coefficient.value(pts, t, k), False)

    def to_dict(self) -> dict:
        return {"advection": self.advection.to_dict(), "shear": self.shear.to_dict()}


class ManufacturedSolution:
    """
    A separated exact solution v(x,t) = g(t)u(x), p(x,t) = q(t)P(x) with div u = 0.
    """
    def __init__(self, velocity: SpatialVectorField, profile: TimeProfile,
                 pressure: Optional[ScalarPotential] = None, pressure_profile: Optional[TimeProfile] = None,
                 name: str = "manufactured"):
        self.velocity = velocity
        self.profile = profile
        self.pressure = pressure
        self.pressure_profile = pressure_profile or PolynomialProfile((1.0,))
        self.dimension = velocity.dimension
        self.name = name

    def __repr__(self):
        return '<manufactured solution "{}">'.format(self.name)

    # closures
    def velocity_value(self, points, t, k: int = 0):
        """∂ₜ^k v at (x, t)."""
        return self.profile.value(t, k) * self.velocity.value(points)

    def velocity_jacobian(self, points, t, k: int = 0):
        return self.profile.value(t, k) * self.velocity.jacobian(points)

    def velocity_laplacian(self, points, t, k: int = 0):
        return self.profile.value(t, k) * self.velocity.laplacian(points)

    def divergence(self, points, t):
        return self.profile.value(t) * self.velocity.divergence(points)

    def pressure_value(self, points, t):
        if self.pressure is None:
            return np.zeros(np.shape(points)[1:])
        return self.pressure_profile.value(t) * self.pressure.value(points)

    def pressure_gradient(self, points, t):
        if self.pressure is None:
            return np.zeros(np.shape(points))
        return self.pressure_profile.value(t) * self.pressure.gradient(points)

    @property
    def has_pressure(self) -> bool:
        return self.pressure is not None

    @property
    def is_zero_velocity(self) -> bool:
        return isinstance(self.velocity, ZeroField)

    # grid sampling
    def sample(self, domain: DomainSpec, k: int = 0) -> VectorField:
        """∂ₜ^k v on the grid over all time slices."""
        return VectorField.from_function(domain, lambda pts, t: self.velocity_value(pts, t, k), timed=True)

    def sample_pressure(self, domain: DomainSpec) -> ScalarField:
        return ScalarField.from_function(domain, self.pressure_value, timed=True)

    def to_dict(self) -> dict:
        return {"name": self.name, "profile": self.profile.to_dict(),
                "pressure": self.pressure is not None}

    # catalog
    @classmethod
    def taylor_green(cls, k: float = 1.0, profile: Optional[TimeProfile] = None, amplitude: float = 1.0):
        """
        (sin kx₁ cos kx₂, −cos kx₁ sin kx₂)·g(t); the default g = e^{−2k²t} solves the heat part exactly.
        """
        profile = profile or ExponentialProfile(-2.0 * k ** 2)
        return cls(taylor_green_field(k, amplitude), profile, name="taylor_green")

    @classmethod
    def abc_flow(cls, k: float = 1.0, profile: Optional[TimeProfile] = None, scale: float = 1.0):
        profile = profile or ExponentialProfile(-k ** 2)
        return cls(ABCField(k=k, scale=scale), profile, name="abc_flow")

    @classmethod
    def linear_flow(cls, matrix: Sequence[Sequence[float]], offset=None, profile: Optional[TimeProfile] = None):
        profile = profile or PolynomialProfile((1.0, 1.0))
        return cls(LinearField(matrix, offset), profile, name="linear_flow")

    @classmethod
    def compact_vortex(cls, center: Sequence[float], radius: float, rate: float = 1.0, power: int = 6,
                       amplitude: float = 1.0):
        """
        e^{ct}·rot ψ for a polynomial bump ψ; the induced forcing e^{ct}(c·rot ψ − Δ rot ψ) is compactly supported.
        """
        return cls(vortex_field(center, radius, power, amplitude), ExponentialProfile(rate), name="compact_vortex")

    @classmethod
    def pressure_only(cls, center: Sequence[float], radius: float, power: int = 6, amplitude: float = 1.0):
        """v = 0, p = ψ: the pair whose forcing ∇ψ is invisible in the data."""
        bump = PolynomialBump(center, radius, power, amplitude)
        return cls(ZeroField(bump.dimension), PolynomialProfile((1.0,)), pressure=bump, name="pressure_only")

    @classmethod
    def zero(cls, dimension: int):
        return cls(ZeroField(dimension), PolynomialProfile((0.0,)), name="zero")


def mms_forcing(solution: ManufacturedSolution, coeffs: CoefficientFields,
                domain: DomainSpec) -> Tuple[VectorField, Dict[str, str]]:
    """
    F = ∂ₜv − Δv + (A·∇)v + (v·∇)B + ∇p on the grid.

    :param solution: Manufactured (v, p)
    :param coeffs: A and B
    :param domain: Grid
    :return: (F over Q, evaluation method per term)
    """
    pts = domain.points()
    methods = {"time_derivative": "analytic", "transport": "analytic", "pressure": "analytic"}
    try:
        solution.velocity.laplacian_field()
        methods["laplacian"] = "analytic"
    except NotImplementedError:
        methods["laplacian"] = "stencil"
        stencil_laplacian = laplacian(solution.sample(domain)).values

    slices = []
    for n, t in enumerate(domain.times):
        v = solution.velocity_value(pts, t)
        jac = solution.velocity_jacobian(pts, t)
        a = coeffs.advection.value(pts, t)
        jac_b = coeffs.shear.jacobian(pts, t)
        lap = solution.velocity_laplacian(pts, t) if methods["laplacian"] == "analytic" \
            else stencil_laplacian[:, n]
        adv = np.einsum("j...,cj...->c...", a, jac)
        shear = np.einsum("j...,cj...->c...", v, jac_b)
        slices.append(solution.velocity_value(pts, t, 1) - lap + adv + shear + solution.pressure_gradient(pts, t))
    return VectorField(domain, np.stack(slices, axis=1), True), methods


def momentum_residual(v: VectorField, p: ScalarField, forcing: VectorField, coeffs: CoefficientFields) -> VectorField:
    """
    Grid residual ∂ₜv − Δv + (A·∇)v + (v·∇)B + ∇p − F with stencil derivatives.
    """
    domain = v.domain
    A = coeffs.sample(domain, "advection")
    B = coeffs.sample(domain, "shear")
    return time_derivative(v) - laplacian(v) + transport(A, B, v) + gradient(p) - forcing


# projection stepper
@dataclass(frozen=True)
class ProjectionState:
    velocity: VectorField
    t: float
    divergence: float = 0.0
    iterations: int = 0


class ProjectionOperators:
    """
    Sparse operators of one grid: compact Laplacian, interior-masked gradients, divergence and the
    projection system with Neumann closure and mean-zero gauge.
    """
    NEUMANN_WEIGHT = 1e-3

    def __init__(self, domain: DomainSpec):
        self.domain = domain
        shape = domain.shape
        n = int(np.prod(shape))
        self.size = n
        self.interior = (~domain.boundary).ravel()
        self.D = [axis_operator(shape, k, first_difference_matrix(shape[k], domain.h[k]))
                  for k in range(domain.dimension)]
        self.L = sum(axis_operator(shape, k, second_difference_matrix(shape[k], domain.h[k]))
                     for k in range(domain.dimension))
        mask = sparse.diags(self.interior.astype(float))
        self.G = [mask @ d for d in self.D]
        rows_int = sparse.identity(n, format="csr")[np.flatnonzero(self.interior)]
        self.restrict_interior = rows_int
        div_grad = sum(d @ g for d, g in zip(self.D, self.G))
        blocks = [rows_int @ div_grad]
        for face in domain.faces:
            idx = np.flatnonzero(domain.face_mask(face).ravel())
            blocks.append(self.NEUMANN_WEIGHT * self.D[face[0]][idx])
        blocks.append(self.NEUMANN_WEIGHT * sparse.csr_matrix(np.ones((1, n))))
        self.projection = sparse.vstack(blocks, format="csr")
        self.extra_rows = self.projection.shape[0] - rows_int.shape[0]
        self._implicit = {}

    def implicit_matrix(self, dt: float):
        if dt not in self._implicit:
            n = self.size
            keep = sparse.diags(self.interior.astype(float))
            fix = sparse.diags((~self.interior).astype(float))
            m = keep @ (sparse.identity(n) - dt * self.L) + fix
            self._implicit[dt] = spla.splu(m.tocsc())
        return self._implicit[dt]

    def divergence(self, values: np.ndarray) -> np.ndarray:
        return sum(d @ values[k].ravel() for k, d in enumerate(self.D))


def _evaluate(source, points, t, shape):
    if source is None:
        return np.zeros(shape)
    if isinstance(source, VectorField):
        if source.timed:
            return source.values[:, source.domain.time_index(t)]
        return source.values
    return np.asarray(source(points, t), dtype=float)


def step_projection(state: ProjectionState, coeffs: CoefficientFields,
                    forcing: Union[Callable, VectorField, None], dt: float, variant: str = "implicit",
                    boundary: Optional[Callable] = None, tol: float = 1e-12,
                    operators: Optional[ProjectionOperators] = None) -> ProjectionState:
    """
    One Chorin step: predictor (explicit or implicit diffusion, explicit transport), then projection of the
    interior velocity onto discretely divergence-free fields.

    :param state: Velocity at tₙ (untimed field)
    :param coeffs: A and B
    :param forcing: Callable (points, t) -> (dim, ...), a VectorField, or None for F = 0
    :param dt: Time step
    :param variant: "explicit" (needs dt <= h²/(2·dim)) or "implicit"
    :param boundary: Dirichlet velocity callable (points, t), default zero
    :param tol: Projection solver tolerance
    :param operators: Cached operators of the grid
    :return: State at tₙ₊₁
    """
    u = state.velocity
    domain = u.domain
    ops = operators or ProjectionOperators(domain)
    pts = domain.points()
    dim = domain.dimension
    shape = (dim,) + domain.shape
    t_next = state.t + dt

    A = VectorField(domain, coeffs.advection.value(pts, state.t), False)
    B = VectorField(domain, coeffs.shear.value(pts, state.t), False)
    adv = (advect(A, u) + advect(u, B)).values
    g_next = _evaluate(boundary, pts, t_next, shape)
    interior = ops.interior.reshape(domain.shape)

    if variant == "explicit":
        limit = min(domain.h) ** 2 / (2.0 * dim)
        if dt > limit * (1 + 1e-12):
            raise ValueError("explicit diffusion needs dt <= {:.4g}".format(limit))
        f_now = _evaluate(forcing, pts, state.t, shape)
        star = u.values + dt * (laplacian(u).values - adv + f_now)
        star = np.where(interior[None, ...], star, g_next)
    elif variant == "implicit":
        f_next = _evaluate(forcing, pts, t_next, shape)
        rhs = u.values + dt * (-adv + f_next)
        rhs = np.where(interior[None, ...], rhs, g_next)
        lu = ops.implicit_matrix(dt)
        star = np.stack([lu.solve(rhs[k].ravel()).reshape(domain.shape) for k in range(dim)])
    else:
        raise ValueError("variant must be 'explicit' or 'implicit'")

    rhs = np.zeros(ops.projection.shape[0])
    rhs[:ops.restrict_interior.shape[0]] = ops.restrict_interior @ ops.divergence(star) / dt
    result = spla.lsqr(ops.projection, rhs, atol=tol, btol=tol, iter_lim=20 * ops.size)
    phi, istop, iterations = result[0], result[1], result[2]
    if istop == 7:
        raise SolverError("pressure projection did not converge in {} iterations".format(iterations))
    correction = np.stack([(g @ phi).reshape(domain.shape) for g in ops.G])
    new = star - dt * correction
    new = np.where(interior[None, ...], new, g_next)
    div = ops.divergence(new).reshape(domain.shape)
    max_div = float(np.max(np.abs(div[interior]))) if interior.any() else 0.0
    logger.debug("projection step t=%.4g: %d iterations, max div %.3g", t_next, iterations, max_div)
    return ProjectionState(VectorField(domain, new, False), t_next, max_div, int(iterations))


def integrate_projection(initial: VectorField, coeffs: CoefficientFields, forcing, t_start: float,
                         t_end: float, steps: int, variant: str = "implicit", boundary=None,
                         tol: float = 1e-12) -> ProjectionState:
    """
    March ``steps`` projection steps from t_start to t_end.
    """
    if steps < 1:
        raise ValueError("need at least one step")
    dt = (t_end - t_start) / steps
    ops = ProjectionOperators(initial.domain)
    state = ProjectionState(initial, t_start)
    worst = 0.0
    for _ in range(steps):
        state = step_projection(state, coeffs, forcing, dt, variant=variant, boundary=boundary, tol=tol,
                                operators=ops)
        worst = max(worst, state.divergence)
    logger.info("projection: %d steps to t=%.4g, max interior divergence %.3g", steps, state.t, worst)
    return ProjectionState(state.velocity, state.t, worst, state.iterations)


def solution_forcing_callable(solution: ManufacturedSolution, coeffs: CoefficientFields) -> Callable:
    """
    Pointwise forcing closure of a manufactured solution for the stepper (analytic Laplacian required).
    """
    def forcing(points, t):
        v = solution.velocity_value(points, t)
        jac = solution.velocity_jacobian(points, t)
        adv = np.einsum("j...,cj...->c...", coeffs.advection.value(points, t), jac)
        shear = np.einsum("j...,cj...->c...", v, coeffs.shear.jacobian(points, t))
        return (solution.velocity_value(points, t, 1) - solution.velocity_laplacian(points, t) + adv + shear
                + solution.pressure_gradient(points, t))
    return forcing


def projection_error(solution: ManufacturedSolution, domain: DomainSpec, steps: int,
                     coeffs: Optional[CoefficientFields] = None, variant: str = "implicit") -> float:
    """
    L²(Ω) error at t₀+δ of the projection stepper started from the exact v(t₀−δ) with exact Dirichlet data.
    """
    coeffs = coeffs or CoefficientFields.zero(domain.dimension)
    t_start, t_end = domain.times[0], domain.times[-1]
    initial = VectorField(domain, solution.velocity_value(domain.points(), t_start), False)
    final = integrate_projection(initial, coeffs, solution_forcing_callable(solution, coeffs), t_start, t_end,
                                 steps, variant=variant, boundary=solution.velocity_value)
    exact = solution.velocity_value(domain.points(), t_end)
    err = final.velocity.values - exact
    return math.sqrt(float(np.sum(domain.space_weights() * np.sum(err ** 2, axis=0))))
