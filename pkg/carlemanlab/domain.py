"""
Discretized domains: the cylinder Q = Ω × I, the observed boundary part Γ, the observation region Ω₀,
the extended domain Ω₁ and the opening ω used by the weight profile.
"""
import logging
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from .exceptions import GeometryError, GridError, PresetError, ResolutionError
from .helper import outer_weights, rle_encode, trapezoid_weights

logger = logging.getLogger(__name__)

MIN_NODES = 4
MIN_TIME_NODES = 3


@dataclass(frozen=True)
class Preset:
    """Geometry of one preset: boxes are given as (lower, upper) corner tuples."""
    name: str
    lengths: Tuple[float, ...]
    gamma_faces: Tuple[Tuple[int, int], ...]
    extended_lower: Tuple[float, ...]
    extended_upper: Tuple[float, ...]
    opening_center: Tuple[float, ...]
    opening_radius: float
    observation_lower: Tuple[float, ...]
    observation_upper: Tuple[float, ...]

    @property
    def dimension(self) -> int:
        return len(self.lengths)


class PresetIterable:
    """Preset catalog, implemented as iterable for easy autocomplete in the interactive shell"""
    def __init__(self, presets: Sequence[Preset]):
        self.__presets = {p.name: p for p in presets}
        for preset in presets:
            self.__setattr__(preset.name, preset)

    def __iter__(self):
        return iter(self.__presets)

    def __getitem__(self, item_key) -> Preset:
        if item_key in self.__presets:
            return self.__presets[item_key]
        if type(item_key) == int:
            return list(self.__presets.values())[item_key]
        raise IndexError("unknown preset")

    def __contains__(self, item_key) -> bool:
        return item_key in self.__presets

    def __len__(self):
        return len(self.__presets)

    def __repr__(self):
        return '<domain presets {}>'.format(", ".join(self.__presets))


PRESETS = PresetIterable([
    Preset(
        name="rect2d_right_edge",
        lengths=(1.0, 1.0),
        gamma_faces=((0, 1),),
        extended_lower=(0.0, 0.0),
        extended_upper=(1.4, 1.0),
        opening_center=(1.2, 0.5),
        opening_radius=0.1,
        observation_lower=(0.6, 0.25),
        observation_upper=(1.0, 0.75),
    ),
    Preset(
        name="rect2d_corner",
        lengths=(1.0, 1.0),
        gamma_faces=((0, 1), (1, 1)),
        extended_lower=(0.0, 0.0),
        extended_upper=(1.4, 1.4),
        opening_center=(1.2, 1.2),
        opening_radius=0.1,
        observation_lower=(0.6, 0.6),
        observation_upper=(1.0, 1.0),
    ),
    Preset(
        name="box3d_face",
        lengths=(1.0, 1.0, 1.0),
        gamma_faces=((0, 1),),
        extended_lower=(0.0, 0.0, 0.0),
        extended_upper=(1.4, 1.0, 1.0),
        opening_center=(1.2, 0.5, 0.5),
        opening_radius=0.1,
        observation_lower=(0.6, 0.25, 0.25),
        observation_upper=(1.0, 0.75, 0.75),
    ),
])


class DomainSpec:
    """
    Structured grid over Ω̄ = [0, L₁] × ... with the time slab I = [t₀−δ, t₀+δ] and all masks.

    Masks live on the Ω lattice (shape ``self.shape``), except the Ω₁ masks, which live on the
    extended lattice (shape ``self.extended_shape``) with the same spacing.
    """
    def __init__(self, preset: Preset, shape: Sequence[int], t0: float = 0.5, delta: float = 0.25,
                 n_t: int = 17):
        self.preset = preset.name
        self.geometry = preset
        self.dimension = preset.dimension
        self.shape = tuple(int(n) for n in shape)
        if len(self.shape) != self.dimension:
            raise GridError("resolution has {} axes, preset needs {}".format(len(self.shape), self.dimension))
        if min(self.shape) < MIN_NODES:
            raise GridError("every axis needs at least {} nodes".format(MIN_NODES))
        if n_t < MIN_TIME_NODES:
            raise GridError("the time axis needs at least {} nodes".format(MIN_TIME_NODES))
        if delta <= 0:
            raise ValueError("delta must be positive")

        self.lengths = tuple(float(v) for v in preset.lengths)
        self.h = tuple(L / (n - 1) for L, n in zip(self.lengths, self.shape))
        self.axes = tuple(np.linspace(0.0, L, n) for L, n in zip(self.lengths, self.shape))

        # odd number of slices so t0 is a node
        if n_t % 2 == 0:
            n_t += 1
        self.t0 = float(t0)
        self.delta = float(delta)
        self.n_t = int(n_t)
        self.times = np.linspace(self.t0 - self.delta, self.t0 + self.delta, self.n_t)
        self.dt = float(self.times[1] - self.times[0])
        self.t0_index = (self.n_t - 1) // 2

        self.faces = tuple((axis, side) for axis in range(self.dimension) for side in (0, 1))
        self.gamma_faces = tuple(tuple(f) for f in preset.gamma_faces)
        self.free_faces = tuple(f for f in self.faces if f not in self.gamma_faces)

        self._build_masks()
        self._build_extended()

    def __repr__(self):
        return '<domain "{}" {}, {} slices>'.format(self.preset, "x".join(str(n) for n in self.shape), self.n_t)

    # grid helpers
    @property
    def tolerance(self) -> float:
        return 1e-9 * min(self.h)

    @property
    def time_shape(self) -> Tuple[int, ...]:
        return (self.n_t,) + self.shape

    def points(self) -> np.ndarray:
        """
        Node coordinates of the Ω lattice.

        :return: Array of shape (dimension, *shape)
        """
        return np.stack(np.meshgrid(*self.axes, indexing="ij"))

    def extended_points(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.extended_axes, indexing="ij"))

    def face_index(self, face) -> tuple:
        """
        Index tuple selecting the nodes of a face from a spatial array.

        :param face: (axis, side) with side 0 for x_axis = 0 and 1 for x_axis = L
        :return: Tuple usable as array index
        """
        axis, side = face
        index = [slice(None)] * self.dimension
        index[axis] = 0 if side == 0 else self.shape[axis] - 1
        return tuple(index)

    def face_mask(self, face) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[self.face_index(face)] = True
        return mask

    def face_weights(self, face) -> np.ndarray:
        """
        Trapezoidal surface weights of a face (empty product in 1D, i.e. 1).
        """
        axis = face[0]
        return outer_weights([trapezoid_weights(n, h) for k, (n, h) in enumerate(zip(self.shape, self.h))
                              if k != axis])

    def outward_sign(self, face) -> float:
        return -1.0 if face[1] == 0 else 1.0

    def space_weights(self) -> np.ndarray:
        return outer_weights([trapezoid_weights(n, h) for n, h in zip(self.shape, self.h)])

    def time_weights(self) -> np.ndarray:
        return trapezoid_weights(self.n_t, self.dt)

    def time_index(self, t: float) -> int:
        """
        Index of the time node t.

        :param t: A time node
        :return: Index into ``self.times``
        """
        k = int(round((t - self.times[0]) / self.dt))
        if k < 0 or k >= self.n_t or abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError("t={} is not a time node".format(t))
        return k

    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    # masks
    def _build_masks(self):
        preset = self.geometry
        tol = self.tolerance
        self.omega = np.ones(self.shape, dtype=bool)
        self.boundary = np.zeros(self.shape, dtype=bool)
        for face in self.faces:
            self.boundary |= self.face_mask(face)
        self.gamma = np.zeros(self.shape, dtype=bool)
        for face in self.gamma_faces:
            self.gamma |= self.face_mask(face)
        self.free_boundary = np.zeros(self.shape, dtype=bool)
        for face in self.free_faces:
            self.free_boundary |= self.face_mask(face)

        # relative interior of Γ: Γ nodes not touching ∂Ω∖Γ
        near_free = ndimage.binary_dilation(self.free_boundary, structure=np.ones((3,) * self.dimension))
        self.gamma_interior = self.gamma & ~near_free

        pts = self.points()
        inside = np.ones(self.shape, dtype=bool)
        for k in range(self.dimension):
            inside &= (pts[k] >= preset.observation_lower[k] - tol) & (pts[k] <= preset.observation_upper[k] + tol)
        self.observation = inside

    def _build_extended(self):
        preset = self.geometry
        tol = self.tolerance
        counts = []
        for k in range(self.dimension):
            span = preset.extended_upper[k] - preset.extended_lower[k]
            counts.append(max(MIN_NODES, int(round(span / self.h[k])) + 1))
        self.extended_shape = tuple(counts)
        self.extended_axes = tuple(np.linspace(lo, hi, n) for lo, hi, n in
                                   zip(preset.extended_lower, preset.extended_upper, counts))
        pts = self.extended_points()
        interior = np.ones(self.extended_shape, dtype=bool)
        in_omega = np.ones(self.extended_shape, dtype=bool)
        for k in range(self.dimension):
            ax_interior = np.zeros(self.extended_shape[k], dtype=bool)
            ax_interior[1:-1] = True
            shape = [1] * self.dimension
            shape[k] = -1
            interior &= ax_interior.reshape(shape)
            in_omega &= (pts[k] >= -tol) & (pts[k] <= self.lengths[k] + tol)
        self.extended_inside = interior
        self.extended_boundary = ~interior
        self.extended_outside = interior & ~in_omega
        center = np.asarray(preset.opening_center).reshape((-1,) + (1,) * self.dimension)
        distance = np.sqrt(np.sum((pts - center) ** 2, axis=0))
        self.opening = distance < preset.opening_radius - tol

        corners = np.zeros(self.extended_shape, dtype=bool)
        edge_count = np.zeros(self.extended_shape, dtype=int)
        for k in range(self.dimension):
            ax_edge = np.zeros(self.extended_shape[k], dtype=int)
            ax_edge[0] = ax_edge[-1] = 1
            shape = [1] * self.dimension
            shape[k] = -1
            edge_count = edge_count + ax_edge.reshape(shape)
        corners |= edge_count >= 2
        # nodes where two faces of ∂Ω₁ meet: no C¹ profile vanishing on both faces has nonzero gradient there
        self.extended_corners = corners

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "dimension": self.dimension,
            "shape": list(self.shape),
            "h": list(self.h),
            "lengths": list(self.lengths),
            "t0": self.t0,
            "delta": self.delta,
            "n_t": self.n_t,
            "dt": self.dt,
            "gamma_faces": [list(f) for f in self.gamma_faces],
            "masks": {
                "gamma": rle_encode(self.gamma),
                "free_boundary": rle_encode(self.free_boundary),
                "observation": rle_encode(self.observation),
            },
            "extended": {
                "shape": list(self.extended_shape),
                "lower": list(self.geometry.extended_lower),
                "upper": list(self.geometry.extended_upper),
                "inside": rle_encode(self.extended_inside),
                "opening": rle_encode(self.opening),
            },
        }


def validate_domain(domain: DomainSpec) -> DomainSpec:
    """
    Check every geometric invariant on the grid.

    :param domain: The domain
    :return: The same domain
    :raises GeometryError: With the violating cells
    """
    # Γ cells on ∂Ω
    bad = np.argwhere(domain.gamma & ~domain.boundary)
    if bad.size:
        raise GeometryError("gamma cells off the boundary", cells=bad.tolist())
    # Ω₀ closure meets ∂Ω only inside Γ
    bad = np.argwhere(domain.observation & domain.boundary & ~domain.gamma_interior)
    if bad.size:
        raise GeometryError("observation region touches the boundary outside the interior of gamma",
                            cells=bad.tolist())
    # Ω ⊊ Ω₁
    if not domain.extended_outside.any():
        raise GeometryError("extended domain does not strictly contain the domain")
    # ω̄ ⊂ Ω₁ ∖ Ω̄
    bad = np.argwhere(domain.opening & ~domain.extended_outside)
    if bad.size:
        raise GeometryError("opening is not inside the extended domain minus the closure of the domain",
                            cells=bad.tolist())
    return domain


def build_domain(preset: str, resolution: Union[int, Sequence[int]] = 32, t0: float = 0.5,
                 delta: float = 0.25, n_t: int = 17) -> DomainSpec:
    """
    Build a validated domain from a preset.

    :param preset: One of ``PRESETS`` (rect2d_right_edge, rect2d_corner, box3d_face)
    :param resolution: Nodes per axis, an int or one int per axis
    :param t0: Centre of the time slab
    :param delta: Half width of the time slab
    :param n_t: Number of time slices (made odd)
    :return: DomainSpec

    :Example:

    >>> import carlemanlab
    >>> carlemanlab.build_domain("rect2d_right_edge", 32)
    <domain "rect2d_right_edge" 32x32, 17 slices>
    """
    if preset not in PRESETS:
        raise PresetError("unknown preset '{}', choose one of {}".format(preset, ", ".join(PRESETS)))
    spec = PRESETS[preset]
    if isinstance(resolution, (int, np.integer)):
        resolution = (int(resolution),) * spec.dimension
    if any(int(n) <= 0 for n in resolution):
        raise ValueError("resolution must be positive")
    if min(resolution) < MIN_NODES:
        raise GridError("resolution {} is too coarse, need {} nodes per axis".format(tuple(resolution), MIN_NODES))

    domain = DomainSpec(spec, resolution, t0=t0, delta=delta, n_t=n_t)

    # Ω₀ needs nodes off Γ and two clear layers towards ∂Ω∖Γ
    off_gamma = domain.observation & ~domain.gamma
    if off_gamma.sum() < 2:
        raise ResolutionError("resolution {} cannot place the observation region inside the domain"
                              .format(domain.shape))
    near_free = ndimage.binary_dilation(domain.free_boundary, structure=np.ones((3,) * domain.dimension),
                                        iterations=2)
    if (domain.observation & near_free).any():
        raise ResolutionError("resolution {} puts the observation region next to the unobserved boundary"
                              .format(domain.shape))

    validate_domain(domain)
    logger.info("built %r, h=%s, dt=%.4g", domain, ["{:.4g}".format(h) for h in domain.h], domain.dt)
    return domain
