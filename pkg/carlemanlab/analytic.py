"""
Closed-form building blocks with exact derivatives: time profiles, scalar potentials, divergence-free
vector fields, matrix fields and affine coefficients.

Points are arrays of shape (dimension, ...); vector values have shape (ncomp, ...), Jacobians
(ncomp, dimension, ...) with ``J[c, j] = ∂_j u_c``.
"""
import itertools
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from numpy.polynomial import Polynomial


# time profiles
class TimeProfile:
    """A scalar function of time with exact derivatives."""
    def value(self, t, k: int = 0):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class PolynomialProfile(TimeProfile):
    """
    r(t) = Σ c_i t^i.

    :param coefficients: Ascending coefficients, e.g. (1, 0, 1) for 1 + t²
    """
    def __init__(self, coefficients: Sequence[float]):
        self.polynomial = Polynomial(np.asarray(coefficients, dtype=float))

    def __repr__(self):
        return '<polynomial profile {}>'.format(list(self.polynomial.coef))

    def value(self, t, k: int = 0):
        return self.polynomial.deriv(k)(t) if k else self.polynomial(t)

    def to_dict(self) -> dict:
        return {"kind": "polynomial", "coefficients": list(self.polynomial.coef)}


class ExponentialProfile(TimeProfile):
    """r(t) = a·e^{ct}."""
    def __init__(self, rate: float, amplitude: float = 1.0):
        self.rate = float(rate)
        self.amplitude = float(amplitude)

    def __repr__(self):
        return '<exponential profile {}*exp({}t)>'.format(self.amplitude, self.rate)

    def value(self, t, k: int = 0):
        return self.amplitude * self.rate ** k * np.exp(self.rate * np.asarray(t, dtype=float))

    def to_dict(self) -> dict:
        return {"kind": "exponential", "rate": self.rate, "amplitude": self.amplitude}


def time_profile(spec) -> TimeProfile:
    """
    Build a time profile from a config value: a list of polynomial coefficients, a dict with
    ``kind``, or an existing profile.
    """
    if isinstance(spec, TimeProfile):
        return spec
    if isinstance(spec, (list, tuple)):
        return PolynomialProfile(spec)
    if isinstance(spec, dict):
        if spec.get("kind") == "exponential":
            return ExponentialProfile(spec.get("rate", 1.0), spec.get("amplitude", 1.0))
        if spec.get("kind") == "polynomial":
            return PolynomialProfile(spec.get("coefficients", (1.0,)))
    raise ValueError("unknown time profile {!r}".format(spec))


# scalar potentials
class ScalarPotential:
    """A scalar function of x with derivatives of any multi-index."""
    dimension = None

    def derivative(self, points: np.ndarray, alpha: Sequence[int]) -> np.ndarray:
        raise NotImplementedError

    def value(self, points: np.ndarray) -> np.ndarray:
        return self.derivative(points, (0,) * self.dimension)

    def gradient(self, points: np.ndarray) -> np.ndarray:
        return np.stack([self.derivative(points, _unit(self.dimension, j)) for j in range(self.dimension)])

    def hessian(self, points: np.ndarray) -> np.ndarray:
        dim = self.dimension
        return np.stack([np.stack([self.derivative(points, _add(_unit(dim, i), _unit(dim, j)))
                                   for j in range(dim)]) for i in range(dim)])


def _unit(dim: int, j: int) -> Tuple[int, ...]:
    return tuple(1 if k == j else 0 for k in range(dim))


def _add(a, b) -> Tuple[int, ...]:
    return tuple(x + y for x, y in zip(a, b))


class TrigPotential(ScalarPotential):
    """
    Q(x) = a·Π sin(k_i x_i + b_i).
    """
    def __init__(self, amplitude: float, wavenumbers: Sequence[float], phases: Optional[Sequence[float]] = None):
        self.amplitude = float(amplitude)
        self.wavenumbers = tuple(float(k) for k in wavenumbers)
        self.dimension = len(self.wavenumbers)
        self.phases = tuple(float(p) for p in (phases or (0.0,) * self.dimension))

    def __repr__(self):
        return '<trig potential k={}>'.format(self.wavenumbers)

    def derivative(self, points, alpha):
        result = self.amplitude * np.ones(np.shape(points)[1:])
        for i, n in enumerate(alpha):
            k = self.wavenumbers[i]
            result = result * k ** n * np.sin(k * points[i] + self.phases[i] + n * math.pi / 2.0)
        return result


class PolynomialBump(ScalarPotential):
    """
    ψ(x) = (1 − |x−c|²/ρ²)^m inside the ball, 0 outside; C^{m−1} and compactly supported.

    Inside the support ψ is a polynomial in y = x − c; its coefficients are expanded once, so every
    derivative is evaluated exactly with ``numpy.polynomial``.
    """
    def __init__(self, center: Sequence[float], radius: float, power: int = 6, amplitude: float = 1.0):
        self.center = np.asarray(center, dtype=float)
        self.dimension = len(self.center)
        if self.dimension not in (2, 3):
            raise ValueError("bumps exist in 2D and 3D")
        self.radius = float(radius)
        self.power = int(power)
        self.amplitude = float(amplitude)
        m = self.power
        size = 2 * m + 1
        coef = np.zeros((size,) * self.dimension)
        for exps in itertools.product(range(m + 1), repeat=self.dimension):
            total = sum(exps)
            if total > m:
                continue
            multinomial = math.factorial(m) / (math.factorial(m - total) * np.prod([math.factorial(e) for e in exps]))
            coef[tuple(2 * e for e in exps)] = self.amplitude * multinomial * (-1.0) ** total \
                / self.radius ** (2 * total)
        self.coefficients = coef

    def __repr__(self):
        return '<polynomial bump at {} radius {}>'.format(tuple(self.center), self.radius)

    def support(self, points) -> np.ndarray:
        y = np.asarray(points, dtype=float) - self.center.reshape((-1,) + (1,) * (np.ndim(points) - 1))
        return np.sum(y ** 2, axis=0) < self.radius ** 2

    def derivative(self, points, alpha):
        points = np.asarray(points, dtype=float)
        coef = self.coefficients
        for axis, n in enumerate(alpha):
            if n:
                coef = P.polyder(coef, m=n, axis=axis)
        y = points - self.center.reshape((-1,) + (1,) * (points.ndim - 1))
        if self.dimension == 2:
            values = P.polyval2d(y[0], y[1], coef)
        else:
            values = P.polyval3d(y[0], y[1], y[2], coef)
        return np.where(self.support(points), values, 0.0)


# vector fields
class SpatialVectorField:
    """A time-independent vector field with exact value, Jacobian and Laplacian."""
    dimension = None
    ncomp = None
    eigenvalue = None

    def value(self, points):
        raise NotImplementedError

    def jacobian(self, points):
        raise NotImplementedError

    def laplacian_field(self) -> "SpatialVectorField":
        raise NotImplementedError

    def laplacian(self, points):
        return self.laplacian_field().value(points)

    def divergence(self, points):
        jac = self.jacobian(points)
        return sum(jac[j, j] for j in range(self.dimension))

    def curl(self, points):
        jac = self.jacobian(points)
        return curl_from_jacobian(jac)


def curl_from_jacobian(jac: np.ndarray) -> np.ndarray:
    """rot of a vector field from its Jacobian: a scalar in 2D, a vector in 3D."""
    if jac.shape[0] == 2:
        return jac[1, 0] - jac[0, 1]
    return np.stack([jac[2, 1] - jac[1, 2], jac[0, 2] - jac[2, 0], jac[1, 0] - jac[0, 1]])


class PotentialField(SpatialVectorField):
    """
    Components that are linear combinations of derivatives of one potential:
    u_c = Σ coef·∂^α ψ over ``terms[c]``.
    """
    def __init__(self, potential: ScalarPotential, terms: Sequence[Sequence[Tuple[float, Tuple[int, ...]]]],
                 eigenvalue: Optional[float] = None):
        self.potential = potential
        self.dimension = potential.dimension
        self.terms = [list(t) for t in terms]
        self.ncomp = len(self.terms)
        self.eigenvalue = eigenvalue

    def __repr__(self):
        return '<potential field of {}>'.format(self.potential)

    @classmethod
    def rotated(cls, potential: ScalarPotential, eigenvalue: Optional[float] = None) -> "PotentialField":
        """
        2D: (∂₂ψ, −∂₁ψ). 3D: rot(0, 0, ψ) = (∂₂ψ, −∂₁ψ, 0). Divergence-free.
        """
        dim = potential.dimension
        terms = [[(1.0, _unit(dim, 1))], [(-1.0, _unit(dim, 0))]]
        if dim == 3:
            terms.append([])
        return cls(potential, terms, eigenvalue)

    @classmethod
    def gradient_of(cls, potential: ScalarPotential) -> "PotentialField":
        dim = potential.dimension
        return cls(potential, [[(1.0, _unit(dim, j))] for j in range(dim)])

    def _evaluate(self, points, terms):
        shape = np.shape(points)[1:]
        result = np.zeros(shape)
        for coef, alpha in terms:
            result = result + coef * self.potential.derivative(points, alpha)
        return result

    def value(self, points):
        return np.stack([self._evaluate(points, t) for t in self.terms])

    def jacobian(self, points):
        dim = self.dimension
        return np.stack([np.stack([self._evaluate(points, [(c, _add(a, _unit(dim, j))) for c, a in t])
                                   for j in range(dim)]) for t in self.terms])

    def laplacian_field(self):
        dim = self.dimension
        shifted = []
        for t in self.terms:
            shifted.append([(c, _add(a, tuple(2 * u for u in _unit(dim, k)))) for c, a in t for k in range(dim)])
        eigen = None if self.eigenvalue is None else self.eigenvalue
        return PotentialField(self.potential, shifted, eigen)


class ABCField(SpatialVectorField):
    """
    3D Beltrami flow (a sin kx₃ + c cos kx₂, b sin kx₁ + a cos kx₃, c sin kx₂ + b cos kx₁); −Δu = k²u.
    """
    dimension = 3
    ncomp = 3

    def __init__(self, a: float = 1.0, b: float = 1.0, c: float = 1.0, k: float = 1.0, scale: float = 1.0):
        self.a, self.b, self.c, self.k = float(a), float(b), float(c), float(k)
        self.scale = float(scale)
        self.eigenvalue = self.k ** 2

    def __repr__(self):
        return '<ABC field k={}>'.format(self.k)

    def value(self, points):
        a, b, c, k = self.a, self.b, self.c, self.k
        x, y, z = points
        return self.scale * np.stack([a * np.sin(k * z) + c * np.cos(k * y),
                                      b * np.sin(k * x) + a * np.cos(k * z),
                                      c * np.sin(k * y) + b * np.cos(k * x)])

    def jacobian(self, points):
        a, b, c, k = self.a, self.b, self.c, self.k
        x, y, z = points
        zero = np.zeros(np.shape(x))
        return self.scale * np.stack([
            np.stack([zero, -c * k * np.sin(k * y), a * k * np.cos(k * z)]),
            np.stack([b * k * np.cos(k * x), zero, -a * k * np.sin(k * z)]),
            np.stack([-b * k * np.sin(k * x), c * k * np.cos(k * y), zero]),
        ])

    def laplacian_field(self):
        return LinearCombination([(-self.k ** 2, self)])


class LinearField(SpatialVectorField):
    """u(x) = c + Gx with trace G = 0."""
    def __init__(self, matrix: Sequence[Sequence[float]], offset: Optional[Sequence[float]] = None):
        self.matrix = np.asarray(matrix, dtype=float)
        self.dimension = self.matrix.shape[0]
        self.ncomp = self.dimension
        if abs(np.trace(self.matrix)) > 1e-14:
            raise ValueError("a linear divergence-free field needs a trace-free matrix")
        self.offset = np.zeros(self.dimension) if offset is None else np.asarray(offset, dtype=float)
        self.eigenvalue = 0.0

    def __repr__(self):
        return '<linear field>'

    def value(self, points):
        points = np.asarray(points, dtype=float)
        return np.einsum("ij,j...->i...", self.matrix, points) + self.offset.reshape((-1,) + (1,) * (points.ndim - 1))

    def jacobian(self, points):
        shape = np.shape(points)[1:]
        return self.matrix.reshape(self.matrix.shape + (1,) * len(shape)) * np.ones(shape)

    def laplacian_field(self):
        return ZeroField(self.dimension)


class ZeroField(SpatialVectorField):
    def __init__(self, dimension: int, ncomp: Optional[int] = None):
        self.dimension = dimension
        self.ncomp = dimension if ncomp is None else ncomp
        self.eigenvalue = 0.0

    def __repr__(self):
        return '<zero field>'

    def value(self, points):
        return np.zeros((self.ncomp,) + np.shape(points)[1:])

    def jacobian(self, points):
        return np.zeros((self.ncomp, self.dimension) + np.shape(points)[1:])

    def laplacian_field(self):
        return self


class LinearCombination(SpatialVectorField):
    """Σ a_i u_i."""
    def __init__(self, terms: Sequence[Tuple[float, SpatialVectorField]]):
        self.terms = [(float(a), f) for a, f in terms]
        first = self.terms[0][1]
        self.dimension = first.dimension
        self.ncomp = first.ncomp
        self.eigenvalue = None

    def __repr__(self):
        return '<combination of {} fields>'.format(len(self.terms))

    def value(self, points):
        return sum(a * f.value(points) for a, f in self.terms)

    def jacobian(self, points):
        return sum(a * f.jacobian(points) for a, f in self.terms)

    def laplacian_field(self):
        return LinearCombination([(a, f.laplacian_field()) for a, f in self.terms])


class MatrixSolvedField(SpatialVectorField):
    """
    f = M⁻¹F₀ pointwise for a matrix field M and a vector field F₀, with the exact Jacobian
    ∂_j f = M⁻¹(∂_j F₀ − ∂_j M·f).
    """
    def __init__(self, matrix: "MatrixField", target: SpatialVectorField):
        self.matrix = matrix
        self.target = target
        self.dimension = target.dimension
        self.ncomp = target.ncomp

    def __repr__(self):
        return '<solved field>'

    def value(self, points):
        m = np.moveaxis(self.matrix.value(points), (0, 1), (-2, -1))
        rhs = np.moveaxis(self.target.value(points), 0, -1)[..., None]
        return np.moveaxis(np.linalg.solve(m, rhs)[..., 0], -1, 0)

    def jacobian(self, points):
        f = self.value(points)
        dm = self.matrix.derivative(points)
        dF = self.target.jacobian(points)
        m = np.moveaxis(self.matrix.value(points), (0, 1), (-2, -1))
        cols = []
        for j in range(self.dimension):
            rhs = dF[:, j] - np.einsum("ab...,b...->a...", dm[:, :, j], f)
            sol = np.linalg.solve(m, np.moveaxis(rhs, 0, -1)[..., None])[..., 0]
            cols.append(np.moveaxis(sol, -1, 0))
        return np.stack(cols, axis=1)

    def laplacian_field(self):
        raise NotImplementedError("solved fields carry first derivatives only")


class MatrixProductField(SpatialVectorField):
    """M(x)f(x), Jacobian ∂_j(Mf) = (∂_j M)f + M∂_j f."""
    def __init__(self, matrix: "MatrixField", factor: SpatialVectorField):
        self.matrix = matrix
        self.factor = factor
        self.dimension = factor.dimension
        self.ncomp = factor.ncomp

    def __repr__(self):
        return '<matrix product with {}>'.format(self.factor)

    def value(self, points):
        return np.einsum("ab...,b...->a...", self.matrix.value(points), self.factor.value(points))

    def jacobian(self, points):
        m = self.matrix.value(points)
        dm = self.matrix.derivative(points)
        f = self.factor.value(points)
        return (np.einsum("abj...,b...->aj...", dm, f)
                + np.einsum("ab...,bj...->aj...", m, self.factor.jacobian(points)))

    def laplacian_field(self):
        raise NotImplementedError("matrix products carry first derivatives only")


class MatrixField:
    """
    M(x) = I + ε·diag(sin x₂, cos x₁[, sin x₁]); det M ≥ (1 − ε)^dim > 0 for ε < 1.
    """
    def __init__(self, dimension: int, eps: float = 0.3):
        if not 0 <= eps < 1:
            raise ValueError("eps must lie in [0, 1)")
        self.dimension = dimension
        self.eps = float(eps)

    def __repr__(self):
        return '<matrix field eps={}>'.format(self.eps)

    def _diagonal(self, points):
        x = points
        entries = [np.sin(x[1]), np.cos(x[0])]
        if self.dimension == 3:
            entries.append(np.sin(x[0]))
        return entries

    def _diagonal_derivative(self, points):
        """d[a][j] = ∂_j of diagonal entry a."""
        x = points
        zero = np.zeros(np.shape(x[0]))
        rows = [[zero, np.cos(x[1])] + ([zero] if self.dimension == 3 else []),
                [-np.sin(x[0]), zero] + ([zero] if self.dimension == 3 else [])]
        if self.dimension == 3:
            rows.append([np.cos(x[0]), zero, zero])
        return rows

    def value(self, points):
        points = np.asarray(points, dtype=float)
        shape = points.shape[1:]
        m = np.zeros((self.dimension, self.dimension) + shape)
        for a, entry in enumerate(self._diagonal(points)):
            m[a, a] = 1.0 + self.eps * entry
        return m

    def derivative(self, points):
        """∂_j M_ab as array (dimension, dimension, dimension, ...)."""
        points = np.asarray(points, dtype=float)
        shape = points.shape[1:]
        d = np.zeros((self.dimension,) * 3 + shape)
        for a, row in enumerate(self._diagonal_derivative(points)):
            for j, entry in enumerate(row):
                d[a, a, j] = self.eps * entry
        return d

    def determinant(self, points):
        det = np.ones(np.shape(points)[1:])
        for entry in self._diagonal(np.asarray(points, dtype=float)):
            det = det * (1.0 + self.eps * entry)
        return det


# coefficients
class AffineCoefficient:
    """
    A(x,t) = (c + Gx)(1 + ωt), bounded with bounded derivatives on bounded cylinders.
    """
    def __init__(self, dimension: int, offset: Optional[Sequence[float]] = None,
                 matrix: Optional[Sequence[Sequence[float]]] = None, rate: float = 0.0):
        self.dimension = dimension
        self.offset = np.zeros(dimension) if offset is None else np.asarray(offset, dtype=float)
        self.matrix = np.zeros((dimension, dimension)) if matrix is None else np.asarray(matrix, dtype=float)
        self.rate = float(rate)

    def __repr__(self):
        return '<affine coefficient>'

    def is_zero(self) -> bool:
        return not (np.any(self.offset) or np.any(self.matrix))

    def _space(self, points):
        points = np.asarray(points, dtype=float)
        return np.einsum("ij,j...->i...", self.matrix, points) + self.offset.reshape((-1,) + (1,) * (points.ndim - 1))

    def value(self, points, t, k: int = 0):
        """∂ₜ^k A at (x, t)."""
        factor = (1.0 + self.rate * t) if k == 0 else (self.rate if k == 1 else 0.0)
        return factor * self._space(points)

    def jacobian(self, points, t):
        shape = np.shape(points)[1:]
        return (1.0 + self.rate * t) * self.matrix.reshape(self.matrix.shape + (1,) * len(shape)) * np.ones(shape)

    def to_dict(self) -> dict:
        return {"offset": self.offset.tolist(), "matrix": self.matrix.tolist(), "rate": self.rate}


def taylor_green_field(k: float = 1.0, amplitude: float = 1.0) -> PotentialField:
    """
    2D field a·(sin kx₁ cos kx₂, −cos kx₁ sin kx₂); −Δu = 2k²u.
    """
    potential = TrigPotential(amplitude / k, (k, k))
    return PotentialField.rotated(potential, eigenvalue=2.0 * k ** 2)


def vortex_field(center: Sequence[float], radius: float, power: int = 6, amplitude: float = 1.0) -> PotentialField:
    """Compactly supported divergence-free field rot ψ of a polynomial bump."""
    return PotentialField.rotated(PolynomialBump(center, radius, power, amplitude))
