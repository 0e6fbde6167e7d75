"""
Carleman-weighted quasi-reversibility for the lateral Cauchy problem.

The velocity is split into z ≈ rot v, which solves the parabolic vorticity equation, and v itself, which
solves Δv + rot z = 0 with div v = 0. Both unknowns are fitted in weighted least squares to the equations
on Q and to the Cauchy data on Γ × I. Equation rows carry e^{sφ}, normalised by e^{−s·max φ}.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .analytic import TimeProfile
from .data import TRACE_KEYS, CauchyDataset
from .domain import DomainSpec
from .exceptions import DataTierError, GridError, SolverError
from .field import (Field, ScalarField, VectorField, axis_operator, first_difference_matrix, gradient, laplacian,
                    second_difference_matrix, space_time_norm, time_derivative)
from .flow import CoefficientFields
from .helper import ensure_directory, write_json
from .weight import WeightFunction

logger = logging.getLogger(__name__)

SOLVERS = ("auto", "cg", "direct")

# "auto" factorises up to this many unknowns and runs CG above
DIRECT_LIMIT = 250_000

ROW_GROUPS = ("parabolic", "elliptic", "divergence", "cauchy", "snapshot", "tikhonov")


def rotation_components(dimension: int) -> int:
    """Number of components of rot v: 1 in 2D, 3 in 3D."""
    return 1 if dimension == 2 else 3


@dataclass(frozen=True)
class QRProblem:
    """
    One quasi-reversibility problem.

    ``source_profile`` turns the problem into the inverse one: the vorticity equation then carries the
    unknown r(t)·q(x) with q = rot f, and tier D1 data are required.
    """
    domain: DomainSpec
    weight: WeightFunction
    dataset: CauchyDataset
    s: float = 1.0
    alpha: float = 1e-6
    gamma_b: float = 1.0
    coeffs: Optional[CoefficientFields] = None
    source_profile: Optional[TimeProfile] = None
    forcing_rotation: Optional[Field] = None
    use_snapshot: bool = False
    solver: str = "auto"
    tol: float = 1e-8
    maxiter: Optional[int] = None

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("s must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if not self.gamma_b > 0:
            raise ValueError("gamma_b must be positive")
        if self.solver not in SOLVERS:
            raise ValueError("solver must be one of {}".format(SOLVERS))
        if self.dataset.domain is not self.domain:
            raise GridError("dataset lives on another grid")

    @property
    def inverse(self) -> bool:
        return self.source_profile is not None

    def replace(self, **changes) -> "QRProblem":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "alpha": self.alpha,
            "gamma_b": self.gamma_b,
            "inverse": self.inverse,
            "use_snapshot": self.use_snapshot,
            "solver": self.solver,
            "tol": self.tol,
            "maxiter": self.maxiter,
            "tier": self.dataset.tier,
        }


class QRLayout:
    """
    Unknown vector [z components, v components, q components]; z and v live on the space-time lattice
    (time-major, row-major), q on the spatial lattice.
    """
    def __init__(self, domain: DomainSpec, inverse: bool):
        self.domain = domain
        self.n_space = int(np.prod(domain.shape))
        self.n_st = domain.n_t * self.n_space
        self.rot_comps = rotation_components(domain.dimension)
        blocks = [("z", c, self.n_st) for c in range(self.rot_comps)]
        blocks += [("v", c, self.n_st) for c in range(domain.dimension)]
        if inverse:
            blocks += [("q", c, self.n_space) for c in range(self.rot_comps)]
        self.blocks = blocks
        self.offsets = {}
        position = 0
        for kind, c, n in blocks:
            self.offsets[(kind, c)] = position
            position += n
        self.size = position

    def __repr__(self):
        return '<qr layout {} unknowns>'.format(self.size)

    @property
    def inverse(self) -> bool:
        return ("q", 0) in self.offsets

    def row(self, parts: Dict[Tuple[str, int], sparse.spmatrix], rows: int) -> sparse.csr_matrix:
        """Horizontal block row; missing unknown blocks are zero."""
        columns = []
        for kind, c, n in self.blocks:
            block = parts.get((kind, c))
            columns.append(sparse.csr_matrix((rows, n)) if block is None else sparse.csr_matrix(block))
        return sparse.hstack(columns, format="csr")

    def pack(self, z: Field, v: VectorField, q: Optional[Field] = None) -> np.ndarray:
        x = np.zeros(self.size)
        for c, values in enumerate(z.component_values()):
            start = self.offsets[("z", c)]
            x[start:start + self.n_st] = values.ravel()
        for c, values in enumerate(v.values):
            start = self.offsets[("v", c)]
            x[start:start + self.n_st] = values.ravel()
        if q is not None and self.inverse:
            for c, values in enumerate(q.component_values()):
                start = self.offsets[("q", c)]
                x[start:start + self.n_space] = values.ravel()
        return x

    def unpack(self, x: np.ndarray) -> Tuple[Field, VectorField, Optional[Field]]:
        domain = self.domain
        st_shape = domain.time_shape

        def take(kind, c, n, shape):
            start = self.offsets[(kind, c)]
            return x[start:start + n].reshape(shape)

        z = np.stack([take("z", c, self.n_st, st_shape) for c in range(self.rot_comps)])
        v = np.stack([take("v", c, self.n_st, st_shape) for c in range(domain.dimension)])
        z_field = ScalarField(domain, z[0], True) if self.rot_comps == 1 else VectorField(domain, z, True)
        q_field = None
        if self.inverse:
            q = np.stack([take("q", c, self.n_space, domain.shape) for c in range(self.rot_comps)])
            q_field = ScalarField(domain, q[0], False) if self.rot_comps == 1 else VectorField(domain, q, False)
        return z_field, VectorField(domain, v, True), q_field


class SpaceTimeOperators:
    """
    Sparse ∂ₜ, ∂_k and Δ on the space-time lattice, the same stencils as the field operators.
    """
    def __init__(self, domain: DomainSpec):
        shape = domain.time_shape
        self.dt = axis_operator(shape, 0, first_difference_matrix(domain.n_t, domain.dt))
        self.dx = [axis_operator(shape, k + 1, first_difference_matrix(domain.shape[k], domain.h[k]))
                   for k in range(domain.dimension)]
        self.laplacian = sum(axis_operator(shape, k + 1, second_difference_matrix(domain.shape[k], domain.h[k]))
                             for k in range(domain.dimension))
        self.identity = sparse.identity(int(np.prod(shape)), format="csr")

    def time_power(self, k: int) -> sparse.csr_matrix:
        result = self.identity
        for _ in range(k):
            result = self.dt @ result
        return result.tocsr()


def _compose(op: sparse.spmatrix, parts: Dict) -> Dict:
    return {key: op @ m for key, m in parts.items()}


def _combine(a: Dict, b: Dict, sign: float = 1.0) -> Dict:
    out = dict(a)
    for key, m in b.items():
        out[key] = out[key] + sign * m if key in out else sign * m
    return out


def _rotation_of_scalar_parts(ops: SpaceTimeOperators, parts: List[Dict], dimension: int) -> List[Dict]:
    """rot applied to a vector of operator rows (2D gives one row, 3D three rows)."""
    d = ops.dx
    if dimension == 2:
        return [_combine(_compose(d[0], parts[1]), _compose(d[1], parts[0]), -1.0)]
    return [
        _combine(_compose(d[1], parts[2]), _compose(d[2], parts[1]), -1.0),
        _combine(_compose(d[2], parts[0]), _compose(d[0], parts[2]), -1.0),
        _combine(_compose(d[0], parts[1]), _compose(d[1], parts[0]), -1.0),
    ]


def _transport_parts(ops: SpaceTimeOperators, coeffs: CoefficientFields, domain: DomainSpec) -> List[Dict]:
    """Rows of (A·∇)v + (v·∇)B, one dict per component, acting on the v blocks."""
    pts = domain.points()
    dim = domain.dimension
    a = np.stack([coeffs.advection.value(pts, t) for t in domain.times], axis=1)
    jb = np.stack([coeffs.shear.jacobian(pts, t) for t in domain.times], axis=2)
    advection = sum(sparse.diags(a[j].ravel()) @ ops.dx[j] for j in range(dim))
    parts = []
    for c in range(dim):
        row = {("v", c): advection}
        for j in range(dim):
            row = _combine(row, {("v", j): sparse.diags(jb[c, j].ravel())})
        parts.append(row)
    return parts


def equation_row_weights(domain: DomainSpec, weight: WeightFunction, s: float) -> np.ndarray:
    """sqrt(trapezoid weight)·e^{s(φ − max φ)} on the space-time lattice."""
    phi = weight.on_grid(domain)
    quad = np.multiply.outer(domain.time_weights(), domain.space_weights())
    return (np.sqrt(quad) * np.exp(s * (phi - phi.max()))).ravel()


@dataclass
class QRSystem:
    problem: QRProblem
    layout: QRLayout
    matrix: sparse.csr_matrix
    rhs: np.ndarray
    groups: Dict[str, slice]

    def __repr__(self):
        return '<qr system {}x{}>'.format(*self.matrix.shape)

    def pack(self, z: Field, v: VectorField, q: Optional[Field] = None) -> np.ndarray:
        return self.layout.pack(z, v, q)

    def unpack(self, x: np.ndarray):
        return self.layout.unpack(x)

    def residual_groups(self, x: np.ndarray) -> Dict[str, float]:
        """Euclidean norm of the weighted residual per row group."""
        residual = self.matrix @ x - self.rhs
        return {name: float(np.linalg.norm(residual[rows])) for name, rows in self.groups.items()}


def _gamma_rows(problem: QRProblem, layout: QRLayout, ops: SpaceTimeOperators):
    """Cauchy mismatch rows for every trace the dataset carries."""
    domain = problem.domain
    dataset = problem.dataset
    lattice = np.arange(layout.n_st).reshape(domain.time_shape)
    blocks, rhs = [], []
    for k, keys in enumerate(TRACE_KEYS[:dataset.order + 1]):
        time_op = ops.time_power(k)
        for key in keys:
            trace = dataset.traces[key]
            kind = key[0]
            for face in domain.gamma_faces:
                index = lattice[(slice(None),) + domain.face_index(face)].ravel()
                select = ops.identity[index]
                scale = problem.gamma_b * np.sqrt(np.multiply.outer(domain.time_weights(),
                                                                    domain.face_weights(face)).ravel())
                w = sparse.diags(scale)
                normal_op = domain.outward_sign(face) * (select @ ops.dx[face[0]] @ time_op)
                values = trace.values[face]
                normals = trace.normal_derivative(face)
                for c in range(values.shape[0]):
                    blocks.append(layout.row({(kind, c): w @ (select @ time_op)}, len(index)))
                    rhs.append(scale * values[c].ravel())
                    blocks.append(layout.row({(kind, c): w @ normal_op}, len(index)))
                    rhs.append(scale * normals[c].ravel())
    return blocks, rhs


def assemble_qr_system(problem: QRProblem) -> QRSystem:
    """
    Stack the weighted quasi-reversibility rows.

    Row groups: the parabolic vorticity residual ∂ₜz − Δz + rot((A·∇)v + (v·∇)B) − r(t)q − rot F, the
    elliptic residual Δv + rot z, div v, the Cauchy mismatch on Γ × I (values and outward normal
    derivatives of every trace up to the dataset tier), the snapshot v(·,t₀) when used and α·I.

    :param problem: QRProblem
    :return: QRSystem
    :raises DataTierError: For data below tier D1 when the problem needs the snapshot
    """
    domain = problem.domain
    dataset = problem.dataset
    dataset.require("D")
    use_snapshot = problem.use_snapshot or problem.inverse
    if problem.inverse:
        dataset.require("D1")
    if use_snapshot and dataset.snapshot is None:
        raise DataTierError("the problem needs the snapshot v(t0)")
    dim = domain.dimension
    layout = QRLayout(domain, problem.inverse)
    ops = SpaceTimeOperators(domain)
    n = layout.n_st
    w = sparse.diags(equation_row_weights(domain, problem.weight, problem.s))
    w_values = w.diagonal()

    blocks, rhs, groups = [], [], {}
    row = 0

    def add(name, group_blocks, group_rhs):
        nonlocal row
        size = sum(b.shape[0] for b in group_blocks)
        blocks.extend(group_blocks)
        rhs.extend(group_rhs)
        groups[name] = slice(row, row + size)
        row += size

    # parabolic
    heat = ops.dt - ops.laplacian
    transport_rot = None
    if problem.coeffs is not None and not problem.coeffs.is_zero():
        transport_rot = _rotation_of_scalar_parts(ops, _transport_parts(ops, problem.coeffs, domain), dim)
    forcing = None
    if problem.forcing_rotation is not None:
        forcing = problem.forcing_rotation.component_values().reshape(layout.rot_comps, -1)
    coupling = None
    if problem.inverse:
        r = np.asarray(problem.source_profile.value(domain.times), dtype=float).reshape(-1, 1)
        coupling = sparse.kron(sparse.csr_matrix(r), sparse.identity(layout.n_space), format="csr")
    group_blocks, group_rhs = [], []
    for c in range(layout.rot_comps):
        parts = {("z", c): heat}
        if transport_rot is not None:
            parts = _combine(parts, transport_rot[c])
        if coupling is not None:
            parts[("q", c)] = -coupling
        group_blocks.append(layout.row(_compose(w, parts), n))
        group_rhs.append(w_values * forcing[c] if forcing is not None else np.zeros(n))
    add("parabolic", group_blocks, group_rhs)

    # elliptic: Δv + rot z
    if dim == 2:
        rot_z = [{("z", 0): ops.dx[1]}, {("z", 0): -ops.dx[0]}]
    else:
        d = ops.dx
        rot_z = [{("z", 2): d[1], ("z", 1): -d[2]},
                 {("z", 0): d[2], ("z", 2): -d[0]},
                 {("z", 1): d[0], ("z", 0): -d[1]}]
    group_blocks = [layout.row(_compose(w, _combine({("v", c): ops.laplacian}, rot_z[c])), n) for c in range(dim)]
    add("elliptic", group_blocks, [np.zeros(n)] * dim)

    add("divergence", [layout.row(_compose(w, {("v", k): ops.dx[k] for k in range(dim)}), n)], [np.zeros(n)])

    gamma_blocks, gamma_rhs = _gamma_rows(problem, layout, ops)
    add("cauchy", gamma_blocks, gamma_rhs)

    if use_snapshot:
        index = domain.t0_index * layout.n_space + np.arange(layout.n_space)
        select = ops.identity[index]
        scale = problem.gamma_b * np.sqrt(domain.space_weights()).ravel()
        snap = dataset.snapshot.values
        add("snapshot", [layout.row({("v", c): sparse.diags(scale) @ select}, layout.n_space) for c in range(dim)],
            [scale * snap[c].ravel() for c in range(dim)])

    if problem.alpha > 0:
        add("tikhonov", [problem.alpha * sparse.identity(layout.size, format="csr")], [np.zeros(layout.size)])

    matrix = sparse.vstack(blocks, format="csr")
    system = QRSystem(problem, layout, matrix, np.concatenate(rhs), groups)
    logger.info("assembled %r: s=%g, alpha=%g, gamma_b=%g, groups %s", system, problem.s, problem.alpha,
                problem.gamma_b, list(groups))
    return system


@dataclass
class ReconstructionResult:
    v: VectorField
    z: Field
    q: Optional[Field]
    diagnostics: Dict[str, object]
    errors: Dict[str, float] = field(default_factory=dict)

    def __repr__(self):
        return '<reconstruction converged={} iterations={}>'.format(self.diagnostics.get("converged"),
                                                                     self.diagnostics.get("iterations"))

    @property
    def converged(self) -> bool:
        return bool(self.diagnostics.get("converged"))

    def save(self, directory: Union[str, Path]) -> Path:
        directory = ensure_directory(directory)
        self.v.save(directory / "v.bin")
        self.z.save(directory / "z.bin")
        if self.q is not None:
            self.q.save(directory / "q.bin")
        write_json(directory / "reconstruction.json", {"diagnostics": self.diagnostics, "errors": self.errors})
        return directory


def resolve_solver(solver: str, unknowns: int) -> str:
    """
    The solver that actually runs.

    >>> resolve_solver("auto", 15552)
    'direct'
    """
    if solver == "auto":
        return "direct" if unknowns <= DIRECT_LIMIT else "cg"
    return solver


def solve_qr(system: QRSystem, truth: Optional[Dict[str, Field]] = None,
             window: Optional[float] = None) -> ReconstructionResult:
    """
    Solve the normal equations of a quasi-reversibility system.

    ``"cg"`` runs conjugate gradients with a Jacobi preconditioner on AᵀA; ``"direct"`` factorises AᵀA;
    ``"auto"`` factorises up to ``DIRECT_LIMIT`` unknowns and runs CG above.
    Reaching ``maxiter`` is reported as ``converged=False`` and logged, never raised.

    :param system: Assembled system
    :param truth: Optional exact fields {"v": ..., "z": ...} for the error functional
    :param window: Half width of the evaluation window around t₀
    :return: ReconstructionResult
    :raises SolverError: On a CG breakdown or a singular normal matrix
    """
    problem = system.problem
    a = system.matrix
    b = system.rhs
    at = a.T.tocsr()
    rhs = at @ b
    iterations = 0
    solver = resolve_solver(problem.solver, a.shape[1])
    if solver == "direct":
        normal = (at @ a).tocsc()
        x = spla.spsolve(normal, rhs) if np.any(rhs) else np.zeros(a.shape[1])
        if not np.all(np.isfinite(x)):
            raise SolverError("the normal matrix is numerically singular, raise alpha")
        converged = True
    else:
        diag = np.asarray(a.multiply(a).sum(axis=0)).ravel()
        diag[diag == 0] = 1.0
        normal = spla.LinearOperator((a.shape[1], a.shape[1]), matvec=lambda y: at @ (a @ y), dtype=float)
        preconditioner = spla.LinearOperator(normal.shape, matvec=lambda y: y / diag, dtype=float)

        def count(_):
            nonlocal iterations
            iterations += 1

        maxiter = problem.maxiter or 10 * a.shape[1]
        x, info = spla.cg(normal, rhs, rtol=problem.tol, maxiter=maxiter, M=preconditioner, callback=count)
        if info < 0:
            raise SolverError("conjugate gradients broke down")
        converged = info == 0
        if not converged:
            logger.warning("quasi-reversibility CG stopped after %d iterations without reaching tol=%g",
                           iterations, problem.tol)

    rhs_norm = float(np.linalg.norm(rhs))
    normal_residual = float(np.linalg.norm(at @ (a @ x) - rhs))
    b_norm = float(np.linalg.norm(b))
    data_residual = float(np.linalg.norm(a @ x - b))
    diagnostics = {
        "solver": solver,
        "iterations": int(iterations),
        "converged": bool(converged),
        "relative_residual": normal_residual / rhs_norm if rhs_norm > 0 else normal_residual,
        "least_squares_residual": data_residual / b_norm if b_norm > 0 else data_residual,
        "groups": system.residual_groups(x),
        "problem": problem.to_dict(),
    }
    z, v, q = system.unpack(x)
    result = ReconstructionResult(v, z, q, diagnostics)
    if truth:
        result.errors = continuation_error(result, truth, window)
    logger.info("reconstruction: %s, %d iterations, relative residual %.3g, errors %s", solver,
                iterations, diagnostics["relative_residual"], result.errors)
    return result


def window_mask(domain: DomainSpec, window: Optional[float] = None) -> np.ndarray:
    """Time nodes with |t − t₀| <= window (default δ/2)."""
    window = 0.5 * domain.delta if window is None else window
    if window < 0:
        raise ValueError("window must be nonnegative")
    return np.abs(domain.times - domain.t0) <= window + 1e-12 * max(1.0, window)


def _h11(error: Field, mask: np.ndarray, times: np.ndarray) -> float:
    parts = [error, time_derivative(error), gradient(error)]
    return math.sqrt(sum(space_time_norm(p, mask, times) ** 2 for p in parts))


def continuation_error(result: ReconstructionResult, truth: Dict[str, Field],
                       window: Optional[float] = None) -> Dict[str, float]:
    """
    Errors on Ω₀ × [t₀−w, t₀+w].

    ``full`` is Σ_{ℓ=0,1} ‖rot^ℓ e‖²_{H^{1,1}} + ‖Δ rot^ℓ e‖², square-rooted, with rot e taken from the
    reconstructed z; ``h11`` drops the Laplacian terms and is the quantity the stability fits use.
    ``relative_l2`` is the L² error of v relative to the truth (absolute when the truth vanishes there).

    :param result: ReconstructionResult
    :param truth: {"v": timed VectorField, "z": timed rot v}
    :param window: Half width around t₀
    :return: Dict of error measures
    """
    domain = result.v.domain
    mask = domain.observation
    times = window_mask(domain, window)
    errors = [result.v - truth["v"], result.z - truth["z"]]
    h11 = [_h11(e, mask, times) for e in errors]
    laplace = [space_time_norm(laplacian(e), mask, times) for e in errors]
    l2 = space_time_norm(errors[0], mask, times)
    reference = space_time_norm(truth["v"], mask, times)
    return {
        "l2": l2,
        "relative_l2": l2 / reference if reference > 0 else l2,
        "h11": math.sqrt(sum(x ** 2 for x in h11)),
        "full": math.sqrt(sum(x ** 2 for x in h11 + laplace)),
        "window": 0.5 * domain.delta if window is None else float(window),
    }


def reconstruct(problem: QRProblem, truth: Optional[Dict[str, Field]] = None,
                window: Optional[float] = None) -> ReconstructionResult:
    """
    Assemble and solve in one call.

    :Example:

    >>> data = generate_cauchy_data(ManufacturedSolution.taylor_green(), domain)
    >>> result = reconstruct(QRProblem(domain, weight, data), truth=data.truth)
    """
    system = assemble_qr_system(problem)
    if truth is None and problem.dataset.truth:
        truth = problem.dataset.truth
    return solve_qr(system, truth, window)
