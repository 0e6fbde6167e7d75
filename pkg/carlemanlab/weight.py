"""
Carleman weights φ(x,t) = exp(λ(ψ(x) − β(t−t₀)²)) with ψ = d or ψ = d².
"""
import logging
import math
from typing import Optional, Sequence

import numpy as np

from .domain import DomainSpec
from .exceptions import WeightProfileError

logger = logging.getLogger(__name__)

PSI_MODES = ("linear", "square")

PSI_MODE_NOTES = {
    "linear": "psi = d: the weight exponent uses the profile itself; the interval arithmetic of the "
              "stability constants is then expressed in d0, d1 rather than their squares",
    "square": "psi = d^2: the weight exponent uses the squared profile so that the displayed constants "
              "d0^2, d1^2 of the stability argument are reproduced literally",
}


def psi_mode_note(mode: str) -> str:
    """
    Text describing how the ψ-mode reconciles the weight definition with the constants.

    :param mode: "linear" or "square"
    :return: Note surfaced in reports
    """
    if mode not in PSI_MODES:
        raise ValueError("psi_mode must be one of {}".format(PSI_MODES))
    return PSI_MODE_NOTES[mode]


class WeightProfile:
    """
    Closed-form profile d on the box Ω₁ = Π (a_k, a_k + L_k).

    d(x) = Π g_k(x_k) / Π g_k(c_k) with g(x) = sin(π(x−a)/L)·exp(κ(x−a)). κ is chosen so that
    g'(c) = 0, hence the only critical point of d is the centre c of the opening ω and d(c) = 1.
    """
    def __init__(self, lower: Sequence[float], upper: Sequence[float], center: Sequence[float]):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.center = np.asarray(center, dtype=float)
        self.dimension = len(self.lower)
        self.length = self.upper - self.lower
        if np.any(self.center <= self.lower) or np.any(self.center >= self.upper):
            raise ValueError("profile centre must lie inside the box")
        theta = math.pi * (self.center - self.lower) / self.length
        self.kappa = -(math.pi / self.length) * np.cos(theta) / np.sin(theta)
        self.scale = float(np.prod([self._factor(k, self.center[k]) for k in range(self.dimension)]))

    def __repr__(self):
        return '<weight profile centred at {}>'.format(tuple(float(c) for c in self.center))

    def _factor(self, k, x):
        y = np.asarray(x, dtype=float) - self.lower[k]
        return np.sin(math.pi * y / self.length[k]) * np.exp(self.kappa[k] * y)

    def _factor_derivative(self, k, x):
        y = np.asarray(x, dtype=float) - self.lower[k]
        arg = math.pi * y / self.length[k]
        return np.exp(self.kappa[k] * y) * (math.pi / self.length[k] * np.cos(arg) + self.kappa[k] * np.sin(arg))

    def value(self, points: np.ndarray) -> np.ndarray:
        """
        :param points: Array (dimension, ...)
        :return: d at the points
        """
        points = np.asarray(points, dtype=float)
        result = np.ones(points.shape[1:])
        for k in range(self.dimension):
            result = result * self._factor(k, points[k])
        return result / self.scale

    def gradient(self, points: np.ndarray) -> np.ndarray:
        """
        :param points: Array (dimension, ...)
        :return: ∇d, array (dimension, ...)
        """
        points = np.asarray(points, dtype=float)
        factors = [self._factor(k, points[k]) for k in range(self.dimension)]
        grads = []
        for j in range(self.dimension):
            g = self._factor_derivative(j, points[j])
            for k in range(self.dimension):
                if k != j:
                    g = g * factors[k]
            grads.append(g / self.scale)
        return np.stack(grads)


def _boundary_tolerance(domain: DomainSpec) -> float:
    return 10.0 * max(domain.h) ** 2


def check_profile(profile: WeightProfile, domain: DomainSpec) -> WeightProfile:
    """
    Grid scan of the profile conditions on Ω̄ and on the extended lattice of Ω₁.

    :param profile: The profile
    :param domain: The domain
    :return: The profile
    :raises WeightProfileError: With the violating cells
    """
    tol = _boundary_tolerance(domain)

    ext = domain.extended_points()
    d_ext = profile.value(ext)
    bad = np.argwhere(domain.extended_inside & ~(d_ext > 0))
    if bad.size:
        raise WeightProfileError("d is not positive inside the extended domain", cells=bad.tolist())
    bad = np.argwhere(domain.extended_boundary & (np.abs(d_ext) > tol))
    if bad.size:
        raise WeightProfileError("d does not vanish on the extended boundary", cells=bad.tolist())
    grad_ext = np.sqrt(np.sum(profile.gradient(ext) ** 2, axis=0))
    checked = ~domain.opening & ~domain.extended_corners
    bad = np.argwhere(checked & ~(grad_ext > 1e-12))
    if bad.size:
        raise WeightProfileError("grad d vanishes outside the opening", cells=bad.tolist())

    pts = domain.points()
    d = profile.value(pts)
    bad = np.argwhere(domain.free_boundary & (np.abs(d) > tol))
    if bad.size:
        raise WeightProfileError("d does not vanish on the unobserved boundary", cells=bad.tolist())
    bad = np.argwhere(domain.observation & ~(d > 0))
    if bad.size:
        raise WeightProfileError("d is not positive on the observation region", cells=bad.tolist())
    grad = np.sqrt(np.sum(profile.gradient(pts) ** 2, axis=0))
    bad = np.argwhere(~_omega_corners(profile, domain) & ~(grad > 1e-12))
    if bad.size:
        raise WeightProfileError("grad d vanishes on the closure of the domain", cells=bad.tolist())
    return profile


def _omega_corners(profile: WeightProfile, domain: DomainSpec) -> np.ndarray:
    """Ω nodes where two faces of ∂Ω₁ meet."""
    pts = domain.points()
    tol = domain.tolerance
    count = np.zeros(domain.shape, dtype=int)
    for k in range(domain.dimension):
        on_face = (np.abs(pts[k] - profile.lower[k]) <= tol) | (np.abs(pts[k] - profile.upper[k]) <= tol)
        count = count + on_face
    return count >= 2


def build_weight_profile(domain: DomainSpec) -> WeightProfile:
    """
    Build and check the closed-form profile d for a preset domain.

    :param domain: The domain
    :return: WeightProfile satisfying positivity, boundary and gradient conditions

    :Example:

    >>> import carlemanlab
    >>> domain = carlemanlab.build_domain("rect2d_right_edge", 32)
    >>> profile = carlemanlab.build_weight_profile(domain)
    """
    geometry = domain.geometry
    profile = WeightProfile(geometry.extended_lower, geometry.extended_upper, geometry.opening_center)
    return check_profile(profile, domain)


class WeightFunction:
    """
    The space-time weight φ(x,t) = exp(λ(ψ(x) − β(t−t₀)²)).
    """
    def __init__(self, profile: WeightProfile, lam: float = 2.0, beta: float = 1.0, t0: float = 0.5,
                 delta: float = 0.25, psi_mode: str = "square"):
        if psi_mode not in PSI_MODES:
            raise ValueError("psi_mode must be one of {}".format(PSI_MODES))
        if lam <= 0:
            raise ValueError("lambda must be positive")
        if beta < 0:
            raise ValueError("beta must be nonnegative")
        self.profile = profile
        self.lam = float(lam)
        self.beta = float(beta)
        self.t0 = float(t0)
        self.delta = float(delta)
        self.psi_mode = psi_mode
        logger.info("weight: lambda=%g, beta=%g, psi_mode=%s", self.lam, self.beta, self.psi_mode)

    def __repr__(self):
        return '<carleman weight lambda={} beta={} psi={}>'.format(self.lam, self.beta, self.psi_mode)

    def replace(self, **changes) -> "WeightFunction":
        params = dict(profile=self.profile, lam=self.lam, beta=self.beta, t0=self.t0, delta=self.delta,
                      psi_mode=self.psi_mode)
        params.update(changes)
        return WeightFunction(**params)

    def psi(self, points: np.ndarray) -> np.ndarray:
        d = self.profile.value(points)
        return d if self.psi_mode == "linear" else d ** 2

    def exponent(self, points: np.ndarray, t) -> np.ndarray:
        """λ(ψ(x) − β(t−t₀)²), broadcasting t over a leading axis when it is an array."""
        psi = self.psi(points)
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return self.lam * (psi - self.beta * (float(t) - self.t0) ** 2)
        shift = (self.beta * (t - self.t0) ** 2).reshape(t.shape + (1,) * psi.ndim)
        return self.lam * (psi[None, ...] - shift)

    def phi(self, points: np.ndarray, t) -> np.ndarray:
        return np.exp(self.exponent(points, t))

    def on_grid(self, domain: DomainSpec, t: Optional[float] = None) -> np.ndarray:
        """
        φ on the Ω lattice.

        :param domain: The domain
        :param t: A single time, or None for all time nodes
        :return: Array (*shape) or (n_t, *shape)
        """
        pts = domain.points()
        return self.phi(pts, domain.times if t is None else t)

    def slice_factor(self) -> float:
        """exp(3λβδ²), the factor relating the space-time and per-slice elliptic estimates."""
        return math.exp(3.0 * self.lam * self.beta * self.delta ** 2)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "beta": self.beta,
            "t0": self.t0,
            "delta": self.delta,
            "psi_mode": self.psi_mode,
            "profile": {
                "lower": self.profile.lower.tolist(),
                "upper": self.profile.upper.tolist(),
                "center": self.profile.center.tolist(),
                "kappa": self.profile.kappa.tolist(),
            },
        }


def eval_phi(weight: WeightFunction, x, t):
    """
    Evaluate φ(x,t).

    :param weight: The weight
    :param x: A point (dimension,) or an array of points (dimension, ...)
    :param t: Time or array of times
    :return: Positive value(s)
    """
    x = np.asarray(x, dtype=float)
    value = weight.phi(x if x.ndim > 1 else x.reshape(-1, 1), t)
    if x.ndim == 1:
        value = value[..., 0]
        if np.ndim(value) == 0:
            return float(value)
    return value


def weight_for_domain(domain: DomainSpec, lam: float = 2.0, beta: float = 1.0,
                      psi_mode: str = "square") -> WeightFunction:
    """
    Profile plus weight centred on the domain's time slab.
    """
    profile = build_weight_profile(domain)
    return WeightFunction(profile, lam=lam, beta=beta, t0=domain.t0, delta=domain.delta, psi_mode=psi_mode)
