"""
Collocated grid fields over Ω and Q with second-order stencils, Carleman-weighted norms and boundary traces.

Layouts: scalar values are ``([n_t], *shape)``, vector values ``(ncomp, [n_t], *shape)``.
"""
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from .domain import MIN_NODES, MIN_TIME_NODES, DomainSpec
from .exceptions import GridError
from .helper import write_csv

_MAGIC = b"CLF1"


class Field:
    """
    Base class of scalar and vector fields. Values are read-only after creation.
    """
    rank = None

    def __init__(self, domain: DomainSpec, values, timed: bool = False):
        self.domain = domain
        self.timed = bool(timed)
        values = np.array(values, dtype=float)
        expected = self._expected_shape(values)
        if values.shape != expected:
            raise GridError("field shape {} does not match grid shape {}".format(values.shape, expected))
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains NaN or infinite values")
        values.setflags(write=False)
        self.values = values

    def _grid_shape(self) -> tuple:
        return (self.domain.n_t,) + self.domain.shape if self.timed else self.domain.shape

    def _expected_shape(self, values) -> tuple:
        raise NotImplementedError

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    def _like(self, values, timed=None):
        return type(self)(self.domain, values, self.timed if timed is None else timed)

    def _check_compatible(self, other):
        if not isinstance(other, Field):
            raise TypeError("expected a field")
        if other.domain is not self.domain:
            raise GridError("fields live on different grids")
        if other.timed != self.timed or other.values.shape != self.values.shape:
            raise GridError("fields have different layouts")

    def __add__(self, other):
        self._check_compatible(other)
        return self._like(self.values + other.values)

    def __sub__(self, other):
        self._check_compatible(other)
        return self._like(self.values - other.values)

    def __mul__(self, factor):
        if isinstance(factor, Field):
            raise TypeError("use pointwise helpers for field products")
        return self._like(self.values * float(factor))

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def component_values(self) -> np.ndarray:
        """Values with a leading component axis (length 1 for scalars)."""
        return self.values[None, ...] if self.rank == 0 else self.values

    def squared_magnitude(self) -> np.ndarray:
        return np.sum(self.component_values() ** 2, axis=0)

    def slice_time(self, k: int) -> "Field":
        if not self.timed:
            raise GridError("field has no time axis")
        if self.rank == 0:
            return self._like(self.values[k], timed=False)
        return self._like(self.values[:, k], timed=False)

    def at_t0(self) -> "Field":
        return self.slice_time(self.domain.t0_index)

    def interior_values(self, layers: int = 2) -> np.ndarray:
        """
        Values with ``layers`` node layers removed along every spatial axis.
        """
        lead = (slice(None),) * (self.values.ndim - self.dimension)
        return self.values[lead + (slice(layers, -layers),) * self.dimension]

    # serialization
    def to_bytes(self) -> bytes:
        """
        Flat binary layout: magic, header of little-endian doubles
        [rank, ncomp, timed, dimension, n_t, *shape, *h, dt], then row-major values.
        """
        ncomp = 1 if self.rank == 0 else self.values.shape[0]
        header = [float(self.rank), float(ncomp), float(self.timed), float(self.dimension), float(self.domain.n_t)]
        header += [float(n) for n in self.domain.shape] + list(self.domain.h) + [self.domain.dt]
        head = struct.pack("<I", len(header)) + np.asarray(header, dtype="<f8").tobytes()
        return _MAGIC + head + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    @staticmethod
    def from_bytes(data: bytes, domain: DomainSpec) -> "Field":
        if data[:4] != _MAGIC:
            raise ValueError("not a field snapshot")
        (count,) = struct.unpack("<I", data[4:8])
        header = np.frombuffer(data[8:8 + 8 * count], dtype="<f8")
        rank, ncomp, timed, dim, n_t = (int(v) for v in header[:5])
        shape = tuple(int(v) for v in header[5:5 + dim])
        if shape != domain.shape or (timed and n_t != domain.n_t):
            raise GridError("snapshot grid {} does not match domain {}".format(shape, domain.shape))
        body = np.frombuffer(data[8 + 8 * count:], dtype="<f8")
        lead = () if rank == 0 else (ncomp,)
        full = lead + ((n_t,) if timed else ()) + shape
        cls = ScalarField if rank == 0 else VectorField
        return cls(domain, body.reshape(full), bool(timed))

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        return path

    def to_csv(self, path: Union[str, Path]) -> Path:
        """
        CSV with node coordinates, time (timed fields) and components; meant for small grids.
        """
        dim = self.dimension
        pts = self.domain.points().reshape(dim, -1)
        comps = self.component_values()
        header = ["x{}".format(k + 1) for k in range(dim)]
        if self.timed:
            header.append("t")
        header += ["c{}".format(c + 1) for c in range(comps.shape[0])]

        def rows():
            if self.timed:
                for k, t in enumerate(self.domain.times):
                    flat = comps[:, k].reshape(comps.shape[0], -1)
                    for i in range(pts.shape[1]):
                        yield list(pts[:, i]) + [t] + list(flat[:, i])
            else:
                flat = comps.reshape(comps.shape[0], -1)
                for i in range(pts.shape[1]):
                    yield list(pts[:, i]) + list(flat[:, i])
        return write_csv(path, header, rows())


class ScalarField(Field):
    """Scalar field on the Ω lattice, optionally over all time slices."""
    rank = 0

    def _expected_shape(self, values):
        return self._grid_shape()

    def __repr__(self):
        return '<scalar field on {}{}>'.format(self.domain.preset, " x I" if self.timed else "")

    @classmethod
    def from_function(cls, domain: DomainSpec, func: Callable, timed: bool = True) -> "ScalarField":
        """
        Sample ``func(points, t)`` on the grid.
        """
        pts = domain.points()
        if timed:
            return cls(domain, np.stack([func(pts, t) * np.ones(domain.shape) for t in domain.times]), True)
        return cls(domain, func(pts, domain.t0) * np.ones(domain.shape), False)

    @classmethod
    def zeros(cls, domain: DomainSpec, timed: bool = True) -> "ScalarField":
        return cls(domain, np.zeros(((domain.n_t,) if timed else ()) + domain.shape), timed)


class VectorField(Field):
    """Vector field with any number of components on the Ω lattice."""
    rank = 1

    def _expected_shape(self, values):
        if values.ndim < 1:
            return (None,)
        return (values.shape[0],) + self._grid_shape()

    def __repr__(self):
        return '<vector field ({} components) on {}{}>'.format(self.ncomp, self.domain.preset,
                                                              " x I" if self.timed else "")

    @property
    def ncomp(self) -> int:
        return self.values.shape[0]

    def component(self, c: int) -> ScalarField:
        return ScalarField(self.domain, self.values[c], self.timed)

    @classmethod
    def from_components(cls, components: Sequence[ScalarField]) -> "VectorField":
        first = components[0]
        return cls(first.domain, np.stack([c.values for c in components]), first.timed)

    @classmethod
    def from_function(cls, domain: DomainSpec, func: Callable, timed: bool = True) -> "VectorField":
        """
        Sample ``func(points, t)`` returning (ncomp, *shape) on the grid.
        """
        pts = domain.points()
        if timed:
            slices = [np.asarray(func(pts, t), dtype=float) for t in domain.times]
            return cls(domain, np.stack(slices, axis=1), True)
        return cls(domain, np.asarray(func(pts, domain.t0), dtype=float), False)

    @classmethod
    def zeros(cls, domain: DomainSpec, ncomp: Optional[int] = None, timed: bool = True) -> "VectorField":
        ncomp = domain.dimension if ncomp is None else ncomp
        return cls(domain, np.zeros((ncomp,) + ((domain.n_t,) if timed else ()) + domain.shape), timed)


# stencils
def first_derivative(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    return np.gradient(values, h, axis=axis, edge_order=2)


def second_derivative(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """
    Compact (1, −2, 1)/h² stencil, one-sided (2, −5, 4, −1)/h² at both ends.
    """
    f = np.moveaxis(values, axis, 0)
    if f.shape[0] < MIN_NODES:
        raise GridError("second derivative needs at least {} nodes".format(MIN_NODES))
    out = np.empty_like(f)
    out[1:-1] = f[2:] - 2.0 * f[1:-1] + f[:-2]
    out[0] = 2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]
    out[-1] = 2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]
    return np.moveaxis(out / h ** 2, 0, axis)


def _check_grid(field: Field):
    if min(field.domain.shape) < MIN_NODES:
        raise GridError("every axis needs at least {} nodes".format(MIN_NODES))


def _space_axis(field: Field, k: int) -> int:
    """Axis index of x_k inside a single component array."""
    return k + (1 if field.timed else 0)


def _partial(field: Field, comp_values: np.ndarray, k: int) -> np.ndarray:
    return first_derivative(comp_values, field.domain.h[k], _space_axis(field, k))


def gradient(f: Field) -> VectorField:
    """
    Gradient of a scalar field, or flattened Jacobian ∂_j v_c (component-major) of a vector field.

    :param f: Field
    :return: VectorField with dimension (scalar) or ncomp·dimension components

    :Example:

    >>> g = gradient(ScalarField.zeros(domain))
    """
    _check_grid(f)
    parts = []
    for comp in f.component_values():
        for k in range(f.dimension):
            parts.append(_partial(f, comp, k))
    return VectorField(f.domain, np.stack(parts), f.timed)


def divergence(v: VectorField) -> ScalarField:
    _check_grid(v)
    if v.rank != 1 or v.ncomp != v.dimension:
        raise TypeError("divergence needs a vector field with {} components".format(v.dimension))
    total = sum(_partial(v, v.values[k], k) for k in range(v.dimension))
    return ScalarField(v.domain, total, v.timed)


def laplacian(f: Field) -> Field:
    """
    Componentwise Laplacian with the compact stencil.
    """
    _check_grid(f)
    out = []
    for comp in f.component_values():
        out.append(sum(second_derivative(comp, f.domain.h[k], _space_axis(f, k)) for k in range(f.dimension)))
    values = out[0] if f.rank == 0 else np.stack(out)
    return f._like(values)


def curl(f: Field) -> Field:
    """
    rot in 2D (vector → scalar ∂₁v₂ − ∂₂v₁, scalar → vector (∂₂z, −∂₁z)) and 3D (vector → vector).
    """
    _check_grid(f)
    dim = f.dimension
    if dim == 2 and f.rank == 1 and f.ncomp == 2:
        return ScalarField(f.domain, _partial(f, f.values[1], 0) - _partial(f, f.values[0], 1), f.timed)
    if dim == 2 and f.rank == 0:
        return VectorField(f.domain, np.stack([_partial(f, f.values, 1), -_partial(f, f.values, 0)]), f.timed)
    if dim == 3 and f.rank == 1 and f.ncomp == 3:
        v = f.values
        return VectorField(f.domain, np.stack([
            _partial(f, v[2], 1) - _partial(f, v[1], 2),
            _partial(f, v[0], 2) - _partial(f, v[2], 0),
            _partial(f, v[1], 0) - _partial(f, v[0], 1),
        ]), f.timed)
    raise TypeError("curl is not defined for this field")


def time_derivative(f: Field, order: int = 1) -> Field:
    """
    ∂ₜ (central, one-sided second order at the ends) or ∂ₜ² (compact).
    """
    if not f.timed:
        raise GridError("field has no time axis")
    axis = 1 if f.rank == 1 else 0
    if order == 1:
        if f.domain.n_t < MIN_TIME_NODES:
            raise GridError("time derivative needs at least {} slices".format(MIN_TIME_NODES))
        return f._like(first_derivative(f.values, f.domain.dt, axis))
    if order == 2:
        return f._like(second_derivative(f.values, f.domain.dt, axis))
    raise ValueError("order must be 1 or 2")


def advect(a: VectorField, f: Field) -> Field:
    """(a·∇)f for a scalar or vector field f."""
    if a.ncomp != f.dimension:
        raise TypeError("advecting field needs {} components".format(f.dimension))
    if a.timed != f.timed:
        raise GridError("advecting field and target must share the time axis")
    out = []
    for comp in f.component_values():
        out.append(sum(a.values[j] * _partial(f, comp, j) for j in range(f.dimension)))
    return f._like(out[0] if f.rank == 0 else np.stack(out))


def transport(A: VectorField, B: VectorField, v: VectorField) -> VectorField:
    """(A·∇)v + (v·∇)B."""
    return advect(A, v) + advect(v, B)


def vector_identity_residual(w: VectorField) -> ScalarField:
    """
    Pointwise |−Δw − rot rot w + ∇ div w|; vanishes for smooth fields up to truncation error.
    """
    residual = -laplacian(w) - curl(curl(w)) + gradient(divergence(w))
    return ScalarField(w.domain, np.sqrt(residual.squared_magnitude()), w.timed)


def sobolev_norm(f: Field, order: int, mask: Optional[np.ndarray] = None) -> float:
    """
    Discrete H^m norm of an untimed field: square root of the quadrature of all squared stencil
    derivatives up to order m.

    :param f: Untimed field
    :param order: m >= 0
    :param mask: Optional spatial mask
    :return: Norm value
    """
    if f.timed:
        raise GridError("sobolev_norm expects a field without time axis")
    w = f.domain.space_weights()
    if mask is not None:
        w = w * mask
    level = [c for c in f.component_values()]
    total = sum(float(np.sum(w * c ** 2)) for c in level)
    for _ in range(order):
        level = [first_derivative(c, f.domain.h[k], k) for c in level for k in range(f.dimension)]
        total += sum(float(np.sum(w * c ** 2)) for c in level)
    return math.sqrt(total)


def space_time_norm(f: Field, mask: Optional[np.ndarray] = None, time_mask: Optional[np.ndarray] = None) -> float:
    """
    Trapezoidal L² norm over Q (or a masked part of it) of a timed field.
    """
    w = np.multiply.outer(f.domain.time_weights(), f.domain.space_weights())
    if mask is not None:
        w = w * mask[None, ...]
    if time_mask is not None:
        w = w * np.asarray(time_mask, dtype=float).reshape((-1,) + (1,) * f.dimension)
    return math.sqrt(float(np.sum(w * f.squared_magnitude())))


def space_norm(f: Field, mask: Optional[np.ndarray] = None) -> float:
    w = f.domain.space_weights()
    if mask is not None:
        w = w * mask
    return math.sqrt(float(np.sum(w * f.squared_magnitude())))


# weighted norms
@dataclass(frozen=True)
class WeightedNorm:
    """
    ∫ |·|² e^{2sφ} stored as mantissa·e^{offset}.
    """
    mantissa: float
    offset: float
    s: float
    region: str

    @property
    def value(self) -> float:
        if self.mantissa == 0.0:
            return 0.0
        return self.mantissa * math.exp(self.offset) if self.offset < 700 else math.inf

    @property
    def log(self) -> float:
        return math.log(self.mantissa) + self.offset if self.mantissa > 0 else -math.inf

    def is_zero(self) -> bool:
        return self.mantissa == 0.0

    def scaled(self, factor: float) -> "WeightedNorm":
        if factor < 0:
            raise ValueError("weighted norms only scale by nonnegative factors")
        if factor == 0 or self.mantissa == 0:
            return WeightedNorm(0.0, self.offset, self.s, self.region)
        return WeightedNorm(self.mantissa, self.offset + math.log(factor), self.s, self.region)

    def __add__(self, other: "WeightedNorm") -> "WeightedNorm":
        region = self.region if self.region == other.region else "{}+{}".format(self.region, other.region)
        if self.mantissa == 0:
            return WeightedNorm(other.mantissa, other.offset, self.s, region)
        if other.mantissa == 0:
            return WeightedNorm(self.mantissa, self.offset, self.s, region)
        offset = max(self.offset, other.offset)
        mantissa = self.mantissa * math.exp(self.offset - offset) + other.mantissa * math.exp(other.offset - offset)
        return WeightedNorm(mantissa, offset, self.s, region)

    def in_units_of(self, offset: float) -> float:
        """Value times e^{−offset}."""
        if self.mantissa == 0:
            return 0.0
        return self.mantissa * math.exp(self.offset - offset)

    def ratio(self, other: "WeightedNorm") -> float:
        if other.mantissa == 0:
            return math.nan if self.mantissa == 0 else math.inf
        return math.exp(self.log - other.log) if self.mantissa > 0 else 0.0


def zero_norm(s: float, region: str) -> WeightedNorm:
    return WeightedNorm(0.0, 0.0, s, region)


def sum_norms(norms: Iterable[WeightedNorm], s: float, region: str = "sum") -> WeightedNorm:
    total = zero_norm(s, region)
    for n in norms:
        total = total + n
    return total


def _weighted_sum(magnitude: np.ndarray, quad: np.ndarray, exponent: np.ndarray, s: float, region: str) -> WeightedNorm:
    """Log-sum-exp of quad·|f|²·e^{exponent} over the points that contribute."""
    terms = quad * magnitude
    support = terms > 0
    if not np.any(support):
        return zero_norm(s, region)
    logs = exponent[support] + np.log(terms[support])
    offset = float(np.max(logs))
    mantissa = float(np.sum(np.exp(logs - offset)))
    return WeightedNorm(mantissa, offset, s, region)


RegionT = Union[str, Tuple[str, int]]


def weighted_norm(fields: Union[Field, Sequence[Field]], weight, s: float, region: RegionT = "Q",
                  t: Optional[float] = None) -> WeightedNorm:
    """
    Trapezoidal quadrature of ∫ Σ|field|² e^{2sφ} over a region.

    Timed fields: "Q", "observation" (Ω₀ × I), "boundary" (∂Ω × I), "gamma" (Γ × I) or
    ("slice", k) (Ω × {t_k}, weighted with φ(·, t_k)). Untimed fields: "omega", "observation",
    "boundary" or "gamma", with the weight taken at time ``t`` (default t₀).

    :param fields: A field or a list of fields sharing grid and time axis; squares are summed
    :param weight: WeightFunction
    :param s: Carleman parameter s > 0
    :param region: Region tag
    :param t: Weight time for untimed fields
    :return: WeightedNorm
    """
    if isinstance(fields, Field):
        fields = [fields]
    if not s > 0:
        raise ValueError("s must be positive")
    first = fields[0]
    domain = first.domain
    for f in fields[1:]:
        if f.domain is not domain or f.timed != first.timed:
            raise GridError("fields of a weighted norm must share grid and time axis")
    magnitude = sum(f.squared_magnitude() for f in fields)
    pts = domain.points()
    tag = region if isinstance(region, str) else "{}:{}".format(*region)

    if first.timed:
        if isinstance(region, tuple) and region[0] == "slice":
            k = int(region[1])
            exponent = 2.0 * s * weight.phi(pts, domain.times[k])
            return _weighted_sum(magnitude[k], domain.space_weights(), exponent, s, tag)
        exponent = 2.0 * s * weight.phi(pts, domain.times)
        tw = domain.time_weights()
        if region in ("Q", "observation"):
            quad = np.multiply.outer(tw, domain.space_weights())
            if region == "observation":
                quad = quad * domain.observation[None, ...]
            return _weighted_sum(magnitude, quad, exponent, s, tag)
        if region in ("boundary", "gamma"):
            faces = domain.faces if region == "boundary" else domain.gamma_faces
            total = zero_norm(s, tag)
            for face in faces:
                index = (slice(None),) + domain.face_index(face)
                quad = np.multiply.outer(tw, domain.face_weights(face))
                total = total + _weighted_sum(magnitude[index], quad, exponent[index], s, tag)
            return total
        raise ValueError("unknown region {!r} for a timed field".format(region))

    t = weight.t0 if t is None else t
    exponent = 2.0 * s * weight.phi(pts, t)
    if region in ("omega", "observation", "Q"):
        quad = domain.space_weights()
        if region == "observation":
            quad = quad * domain.observation
        return _weighted_sum(magnitude, quad, exponent, s, tag)
    if region in ("boundary", "gamma"):
        faces = domain.faces if region == "boundary" else domain.gamma_faces
        total = zero_norm(s, tag)
        for face in faces:
            index = domain.face_index(face)
            total = total + _weighted_sum(magnitude[index], domain.face_weights(face), exponent[index], s, tag)
        return total
    raise ValueError("unknown region {!r} for a field without time axis".format(region))


# traces
class Trace:
    """
    Restriction of a field and its first derivatives to boundary faces.
    """
    def __init__(self, domain: DomainSpec, region: str, faces, values: Dict, grad: Dict, dt: Dict, weights: Dict,
                 rank: int, timed: bool):
        self.domain = domain
        self.region = region
        self.faces = tuple(faces)
        self.values = values
        self.grad = grad
        self.dt = dt
        self.weights = weights
        self.rank = rank
        self.timed = timed

    def __repr__(self):
        return '<trace on {} ({} faces)>'.format(self.region, len(self.faces))

    def _norm(self, parts: Dict) -> float:
        total = 0.0
        for face in self.faces:
            arr = parts[face]
            total += float(np.sum(self.weights[face] * np.sum(arr ** 2, axis=0)))
        return math.sqrt(total)

    def norm(self, order: int = 0, with_time: bool = True) -> float:
        """
        L² norm of the trace (order 0) or of its first derivatives (order 1; spatial gradient plus
        ∂ₜ when ``with_time``).
        """
        if order == 0:
            return self._norm(self.values)
        if order == 1:
            total = self._norm(self.grad) ** 2
            if with_time and self.timed and self.dt:
                total += self._norm(self.dt) ** 2
            return math.sqrt(total)
        raise ValueError("order must be 0 or 1")

    def normal_derivative(self, face) -> np.ndarray:
        """
        Outward normal derivative on a face, array (ncomp, [n_t], *face_shape).
        """
        axis = face[0]
        dim = self.domain.dimension
        ncomp = self.grad[face].shape[0] // dim
        picked = self.grad[face][[c * dim + axis for c in range(ncomp)]]
        return self.domain.outward_sign(face) * picked

    def perturbed(self, rng: np.random.Generator, sigma: float) -> "Trace":
        """
        Additive Gaussian noise of relative size sigma: every array gets sigma·rms(array)·N(0, 1).
        """
        def noisy(parts):
            out = {}
            for face in self.faces:
                arr = parts[face]
                rms = math.sqrt(float(np.mean(arr ** 2))) if arr.size else 0.0
                out[face] = arr + sigma * rms * rng.standard_normal(arr.shape)
            return out
        values = noisy(self.values)
        grad = noisy(self.grad)
        dt = noisy(self.dt) if self.dt else {}
        return Trace(self.domain, self.region, self.faces, values, grad, dt, self.weights, self.rank, self.timed)

    def difference(self, other: "Trace") -> "Trace":
        def sub(a, b):
            return {face: a[face] - b[face] for face in self.faces}
        dt = sub(self.dt, other.dt) if self.dt else {}
        return Trace(self.domain, self.region, self.faces, sub(self.values, other.values),
                     sub(self.grad, other.grad), dt, self.weights, self.rank, self.timed)

    def scaled(self, factor: float) -> "Trace":
        def mul(a):
            return {face: factor * a[face] for face in self.faces}
        return Trace(self.domain, self.region, self.faces, mul(self.values), mul(self.grad),
                     mul(self.dt) if self.dt else {}, self.weights, self.rank, self.timed)

    def equals(self, other: "Trace") -> bool:
        for parts, other_parts in ((self.values, other.values), (self.grad, other.grad), (self.dt, other.dt)):
            if set(parts) != set(other_parts):
                return False
            for face in parts:
                if not np.array_equal(parts[face], other_parts[face]):
                    return False
        return True

    def rows(self) -> List[list]:
        """
        Long-format rows: face axis, face side, kind, component, flat node index, value.
        """
        rows = []
        for face in self.faces:
            for kind, parts in (("value", self.values), ("grad", self.grad), ("dt", self.dt)):
                if face not in parts:
                    continue
                arr = parts[face]
                flat = arr.reshape(arr.shape[0], -1)
                for c in range(flat.shape[0]):
                    for i, value in enumerate(flat[c]):
                        rows.append([face[0], face[1], kind, c, i, value])
        return rows


TRACE_HEADER = ["face_axis", "face_side", "kind", "component", "node", "value"]


def extract_trace(field: Field, region: RegionT = "gamma", derivatives: bool = True):
    """
    Restriction to Γ (× I), to ∂Ω (× I), or to a time slice Ω × {t_k}.

    :param field: Field (timed fields keep their time axis on the faces)
    :param region: "gamma", "boundary" or ("slice", k)
    :param derivatives: Also restrict the full spatial gradient and ∂ₜ
    :return: Trace, or the untimed field for a slice
    """
    if isinstance(region, tuple) and region[0] == "slice":
        return field.slice_time(int(region[1]))
    domain = field.domain
    if region == "gamma":
        faces = domain.gamma_faces
    elif region == "boundary":
        faces = domain.faces
    else:
        raise ValueError("unknown trace region {!r}".format(region))

    comps = field.component_values()
    lead = (slice(None), slice(None)) if field.timed else (slice(None),)
    grad_values = gradient(field).values if derivatives else None
    dt_values = time_derivative(field).component_values() if (derivatives and field.timed) else None

    values, grad, dt, weights = {}, {}, {}, {}
    for face in faces:
        index = lead + domain.face_index(face)
        values[face] = np.array(comps[index])
        if grad_values is not None:
            grad[face] = np.array(grad_values[index])
        if dt_values is not None:
            dt[face] = np.array(dt_values[index])
        fw = domain.face_weights(face)
        weights[face] = np.multiply.outer(domain.time_weights(), fw) if field.timed else fw
    return Trace(domain, region, faces, values, grad, dt, weights, field.rank, field.timed)


# sparse stencil matrices shared with the assembled operators
def first_difference_matrix(n: int, h: float) -> sparse.csr_matrix:
    """Matrix form of ``np.gradient(edge_order=2)``."""
    if n < MIN_TIME_NODES:
        raise GridError("need at least {} nodes".format(MIN_TIME_NODES))
    m = sparse.lil_matrix((n, n))
    for i in range(1, n - 1):
        m[i, i - 1] = -0.5
        m[i, i + 1] = 0.5
    m[0, 0], m[0, 1], m[0, 2] = -1.5, 2.0, -0.5
    m[n - 1, n - 3], m[n - 1, n - 2], m[n - 1, n - 1] = 0.5, -2.0, 1.5
    return (m / h).tocsr()


def second_difference_matrix(n: int, h: float) -> sparse.csr_matrix:
    """Matrix form of :func:`second_derivative`."""
    if n < MIN_NODES:
        raise GridError("need at least {} nodes".format(MIN_NODES))
    m = sparse.lil_matrix((n, n))
    for i in range(1, n - 1):
        m[i, i - 1], m[i, i], m[i, i + 1] = 1.0, -2.0, 1.0
    m[0, 0], m[0, 1], m[0, 2], m[0, 3] = 2.0, -5.0, 4.0, -1.0
    m[n - 1, n - 1], m[n - 1, n - 2], m[n - 1, n - 3], m[n - 1, n - 4] = 2.0, -5.0, 4.0, -1.0
    return (m / h ** 2).tocsr()


def axis_operator(shape: Sequence[int], axis: int, matrix: sparse.spmatrix) -> sparse.csr_matrix:
    """
    Lift a 1D operator acting along ``axis`` to the row-major flattened lattice of ``shape``.
    """
    ops = [sparse.identity(n, format="csr") for n in shape]
    ops[axis] = sparse.csr_matrix(matrix)
    result = ops[0]
    for op in ops[1:]:
        result = sparse.kron(result, op, format="csr")
    return result.tocsr()
