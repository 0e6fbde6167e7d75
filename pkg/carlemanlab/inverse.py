"""
Inverse source recovery at t₀.

rot F(·,t₀) = rot ∂ₜv(·,t₀) + a with a = rot(−Δv(t₀) + (A·∇)v(t₀) + (v(t₀)·∇)B(t₀)), and for
divergence-free sources −ΔF(·,t₀) = rot rot ∂ₜv(·,t₀) + rot a.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .domain import DomainSpec
from .exceptions import GridError, SolverError
from .field import (Field, VectorField, axis_operator, curl, first_difference_matrix, laplacian,
                    second_difference_matrix, sobolev_norm, space_norm, transport)
from .flow import CoefficientFields
from .helper import ensure_directory, write_json
from .reconstruction import QRProblem, ReconstructionResult, reconstruct
from .weight import WeightFunction

logger = logging.getLogger(__name__)

FIELD_BOUNDARIES = ("dirichlet", "gamma")

DIRICHLET_NOTE = "homogeneous Dirichlet data on the whole boundary (source supported inside the domain)"

GAMMA_NOTE = ("zero value and normal derivative on gamma only; the unobserved boundary is closed by a "
              "Tikhonov extension with alpha={}")


def estimate_dtv_at_t0(v: VectorField) -> VectorField:
    """
    Central difference (v(t₀+Δt) − v(t₀−Δt)) / 2Δt.

    :param v: Velocity over the time slab
    :return: Untimed field ∂ₜv(·,t₀)
    :raises GridError: If t₀ sits on an end of the slab
    """
    if not v.timed:
        raise GridError("field has no time axis")
    domain = v.domain
    k = domain.t0_index
    if k == 0 or k == domain.n_t - 1:
        raise GridError("t0 lies on the end of the time slab")
    values = (v.values[:, k + 1] - v.values[:, k - 1]) / (2.0 * domain.dt)
    return VectorField(domain, values, False)


def assemble_a(v0: VectorField, coeffs: Optional[CoefficientFields] = None, t0: Optional[float] = None) -> Field:
    """
    a = rot(−Δv₀ + (A·∇)v₀ + (v₀·∇)B) with the coefficients frozen at t₀.

    :param v0: v(·,t₀)
    :param coeffs: A and B, zero when omitted
    :param t0: Time of the coefficients, default the domain's t₀
    :return: Scalar field in 2D, vector field in 3D
    """
    domain = v0.domain
    t0 = domain.t0 if t0 is None else t0
    inner = -laplacian(v0)
    if coeffs is not None and not coeffs.is_zero():
        A = coeffs.sample(domain, "advection", t=t0)
        B = coeffs.sample(domain, "shear", t=t0)
        inner = inner + transport(A, B, v0)
    return curl(inner)


def recover_rot_F(dtv: VectorField, a: Field) -> Field:
    """rot F(·,t₀) = rot ∂ₜv(·,t₀) + a."""
    return curl(dtv) + a


def _interior_poisson(domain: DomainSpec) -> sparse.csr_matrix:
    shape = domain.shape
    return sum(axis_operator(shape, k, second_difference_matrix(shape[k], domain.h[k]))
               for k in range(domain.dimension)).tocsr()


def _dirichlet_solve(rhs: np.ndarray, domain: DomainSpec, tol: float) -> np.ndarray:
    interior = np.flatnonzero((~domain.boundary).ravel())
    lap = _interior_poisson(domain)
    system = -lap[interior][:, interior]
    out = np.zeros(rhs.shape)
    for c in range(rhs.shape[0]):
        b = rhs[c].ravel()[interior]
        x, info = spla.cg(system, b, rtol=tol, maxiter=20 * len(interior))
        if info != 0:
            raise SolverError("Poisson solve did not converge (info={})".format(info))
        flat = np.zeros(int(np.prod(domain.shape)))
        flat[interior] = x
        out[c] = flat.reshape(domain.shape)
    return out


def _gamma_solve(rhs: np.ndarray, domain: DomainSpec, weight: Optional[WeightFunction], s: float, alpha: float,
                 gamma_b: float, tol: float) -> np.ndarray:
    n = int(np.prod(domain.shape))
    identity = sparse.identity(n, format="csr")
    interior = np.flatnonzero((~domain.boundary).ravel())
    quad = np.sqrt(domain.space_weights()).ravel()
    if weight is not None:
        phi = weight.on_grid(domain, domain.t0).ravel()
        quad = quad * np.exp(s * (phi - phi.max()))
    lap = _interior_poisson(domain)
    blocks = [sparse.diags(quad[interior]) @ (-lap[interior])]
    for face in domain.gamma_faces:
        index = np.flatnonzero(domain.face_mask(face).ravel())
        normal = domain.outward_sign(face) * axis_operator(domain.shape, face[0],
                                                           first_difference_matrix(domain.shape[face[0]],
                                                                                   domain.h[face[0]]))
        blocks.append(gamma_b * identity[index])
        blocks.append(gamma_b * normal.tocsr()[index])
    free = np.flatnonzero((domain.free_boundary & ~domain.gamma).ravel())
    blocks.append(alpha * identity[free])
    matrix = sparse.vstack(blocks, format="csr")
    out = np.zeros(rhs.shape)
    for c in range(rhs.shape[0]):
        b = np.zeros(matrix.shape[0])
        b[:len(interior)] = quad[interior] * rhs[c].ravel()[interior]
        result = spla.lsqr(matrix, b, atol=tol, btol=tol, iter_lim=50 * n)
        x, istop, iterations = result[0], result[1], result[2]
        if istop == 7:
            raise SolverError("gamma-only Poisson solve did not converge in {} iterations".format(iterations))
        out[c] = x.reshape(domain.shape)
    return out


def recover_source_field(rot_rot_dtv: VectorField, rot_a: VectorField, boundary: str = "dirichlet",
                         weight: Optional[WeightFunction] = None, s: float = 1.0, alpha: float = 1e-6,
                         gamma_b: float = 1.0, tol: float = 1e-10) -> VectorField:
    """
    Solve −ΔF(·,t₀) = rot rot ∂ₜv(·,t₀) + rot a.

    ``"dirichlet"`` assumes F(·,t₀) = 0 on all of ∂Ω and solves the SPD interior system with CG.
    ``"gamma"`` only uses F = ∂ₙF = 0 on Γ: the weighted equation rows, the Γ rows and α-rows on
    ∂Ω∖Γ go to LSQR.

    :param rot_rot_dtv: rot rot ∂ₜv(·,t₀)
    :param rot_a: rot a
    :param boundary: "dirichlet" or "gamma"
    :param weight: Weight of the equation rows in the gamma path
    :param s: Carleman parameter of that weight
    :param alpha: Extension penalty on ∂Ω∖Γ
    :param gamma_b: Penalty of the Γ rows
    :param tol: Solver tolerance
    :return: F(·,t₀)
    :raises SolverError: If the Poisson solve fails
    """
    if boundary not in FIELD_BOUNDARIES:
        raise ValueError("boundary must be one of {}".format(FIELD_BOUNDARIES))
    rhs = (rot_rot_dtv + rot_a).values
    domain = rot_rot_dtv.domain
    if boundary == "dirichlet":
        values = _dirichlet_solve(rhs, domain, tol)
    else:
        values = _gamma_solve(rhs, domain, weight, s, alpha, gamma_b, tol)
    logger.info("source field recovered with %s boundary data", boundary)
    return VectorField(domain, values, False)


def relative_error(error: float, reference: float) -> float:
    """Error relative to the reference, or absolute when the reference vanishes."""
    return error / reference if reference > 0 else error


@dataclass
class SourceRecovery:
    rot_F: Field
    a: Field
    dtv: VectorField
    F: Optional[VectorField] = None
    q: Optional[Field] = None
    errors: Dict[str, float] = field(default_factory=dict)
    boundary_note: Optional[str] = None
    reconstruction: Optional[ReconstructionResult] = None

    def __repr__(self):
        return '<source recovery |rot F|={:.3g}>'.format(self.rot_F_norm)

    @property
    def rot_F_norm(self) -> float:
        return space_norm(self.rot_F, self.rot_F.domain.observation)

    def summary(self) -> dict:
        return {
            "rot_F_norm": self.rot_F_norm,
            "errors": self.errors,
            "boundary_note": self.boundary_note,
            "field_recovered": self.F is not None,
        }

    def save(self, directory: Union[str, Path]) -> Path:
        directory = ensure_directory(directory)
        self.rot_F.save(directory / "rot_F.bin")
        if self.F is not None:
            self.F.save(directory / "F.bin")
        write_json(directory / "recovery.json", self.summary())
        return directory


def source_errors(recovery: SourceRecovery, truth_source, domain: DomainSpec) -> Dict[str, float]:
    """
    Relative L²(Ω₀) error of rot F(·,t₀) and of the direct estimate r(t₀)q; relative H¹(Ω₀) error of F(·,t₀).
    """
    mask = domain.observation
    true_rot = truth_source.rotation_at_time(domain)
    errors = {"rot_F_l2": relative_error(space_norm(recovery.rot_F - true_rot, mask), space_norm(true_rot, mask))}
    if recovery.q is not None:
        errors["q_l2"] = relative_error(space_norm(recovery.q - true_rot, mask), space_norm(true_rot, mask))
    if recovery.F is not None:
        true_F = truth_source.at_time(domain)
        errors["F_h1"] = relative_error(sobolev_norm(recovery.F - true_F, 1, mask), sobolev_norm(true_F, 1, mask))
    return errors


def invert_source(problem: QRProblem, truth_source=None, field_boundary: Optional[str] = None,
                  window: Optional[float] = None) -> SourceRecovery:
    """
    Reconstruct v from tier D1 data, then recover rot F(·,t₀) and optionally F(·,t₀).

    :param problem: Inverse QRProblem (with ``source_profile``)
    :param truth_source: Optional SourceModel for the error norms
    :param field_boundary: None (rot F only), "dirichlet" or "gamma"
    :param window: Evaluation window of the velocity error
    :return: SourceRecovery

    :Example:

    >>> recovery = invert_source(problem, truth_source=source, field_boundary="dirichlet")
    >>> recovery.errors["rot_F_l2"] < 0.1
    True
    """
    if not problem.inverse:
        raise ValueError("inverse source recovery needs a source profile")
    domain = problem.domain
    result = reconstruct(problem, window=window)
    dtv = estimate_dtv_at_t0(result.v)
    v0 = problem.dataset.snapshot
    a = assemble_a(v0, problem.coeffs, domain.t0)
    rot_F = recover_rot_F(dtv, a)
    r0 = float(problem.source_profile.value(domain.t0))
    q = result.q * r0 if result.q is not None else None
    recovery = SourceRecovery(rot_F, a, dtv, q=q, reconstruction=result)
    if field_boundary is not None:
        recovery.F = recover_source_field(curl(curl(dtv)), curl(a), boundary=field_boundary, weight=problem.weight,
                                          s=problem.s, alpha=problem.alpha or 1e-6, gamma_b=problem.gamma_b)
        recovery.boundary_note = DIRICHLET_NOTE if field_boundary == "dirichlet" else \
            GAMMA_NOTE.format(problem.alpha or 1e-6)
    if truth_source is not None:
        recovery.errors = source_errors(recovery, truth_source, domain)
    logger.info("rot F(t0) recovered: norm on the observation region %.4g, errors %s", recovery.rot_F_norm,
                recovery.errors)
    return recovery


def exact_source_recovery(solution, domain: DomainSpec, coeffs: Optional[CoefficientFields] = None,
                          truth_source=None, field_boundary: str = "dirichlet") -> SourceRecovery:
    """
    rot F(·,t₀) and F(·,t₀) from the exact ∂ₜv(·,t₀) and v(·,t₀) sampled on the grid, so that the errors
    measure the stencils and the Poisson solve alone.

    :param solution: ManufacturedSolution providing v
    :param domain: Grid
    :param coeffs: A and B, zero when omitted
    :param truth_source: Optional SourceModel for the error norms
    :param field_boundary: "dirichlet" or "gamma"
    :return: SourceRecovery without reconstruction
    """
    t0 = domain.t0
    dtv = VectorField.from_function(domain, lambda pts, t: solution.velocity_value(pts, t0, 1), timed=False)
    v0 = VectorField.from_function(domain, lambda pts, t: solution.velocity_value(pts, t0), timed=False)
    a = assemble_a(v0, coeffs, t0)
    recovery = SourceRecovery(recover_rot_F(dtv, a), a, dtv)
    recovery.F = recover_source_field(curl(curl(dtv)), curl(a), boundary=field_boundary)
    recovery.boundary_note = DIRICHLET_NOTE if field_boundary == "dirichlet" else GAMMA_NOTE.format(1e-6)
    if truth_source is not None:
        recovery.errors = source_errors(recovery, truth_source, domain)
    return recovery
