"""
Test domain presets, grids and masks.
"""
import numpy as np
import pytest

import carlemanlab
from carlemanlab.domain import PRESETS
from carlemanlab.helper import rle_decode


def test_presets():
    assert len(PRESETS) == 3
    assert PRESETS["box3d_face"].dimension == 3
    assert PRESETS[0].name == "rect2d_right_edge"
    with pytest.raises(IndexError):
        PRESETS["sphere"]

    for name in PRESETS:
        resolution = 12 if PRESETS[name].dimension == 2 else 10
        domain = carlemanlab.build_domain(name, resolution, n_t=3)
        assert carlemanlab.validate_domain(domain) is domain
        assert domain.dimension == PRESETS[name].dimension
        assert domain.observation.any()


def test_time_axis(domain: carlemanlab.DomainSpec):
    odd = carlemanlab.build_domain("rect2d_right_edge", 12, t0=0.5, delta=0.25, n_t=8)
    assert odd.n_t == 9
    assert odd.times[odd.t0_index] == pytest.approx(0.5)
    assert odd.times[0] == pytest.approx(0.25)
    assert odd.times[-1] == pytest.approx(0.75)
    assert odd.time_index(0.5) == odd.t0_index
    with pytest.raises(ValueError):
        odd.time_index(0.51)
    assert domain.time_shape == (9, 16, 16)


def test_invalid_domains():
    with pytest.raises(carlemanlab.PresetError):
        carlemanlab.build_domain("sphere", 16)
    with pytest.raises(carlemanlab.GridError):
        carlemanlab.build_domain("rect2d_right_edge", 3)
    # the observation region would touch the two layers next to the unobserved boundary
    with pytest.raises(carlemanlab.ResolutionError):
        carlemanlab.build_domain("rect2d_right_edge", 8)


def test_masks(domain: carlemanlab.DomainSpec):
    assert domain.gamma_faces == ((0, 1),)
    assert domain.gamma[-1, :].all()
    assert domain.gamma.sum() == 16
    assert not domain.gamma_interior[-1, 0]
    assert domain.gamma_interior[-1, 8]
    assert not (domain.observation & domain.free_boundary).any()
    assert not (domain.gamma & ~domain.boundary).any()
    assert domain.opening.any()
    assert not (domain.opening & ~domain.extended_outside).any()

    corner = carlemanlab.build_domain("rect2d_corner", 16, n_t=3)
    assert corner.gamma[-1, :].all() and corner.gamma[:, -1].all()
    assert corner.gamma_interior[-1, -1]


def test_quadrature(domain: carlemanlab.DomainSpec):
    assert domain.space_weights().sum() == pytest.approx(1.0)
    assert domain.face_weights((0, 1)).sum() == pytest.approx(1.0)
    assert domain.time_weights().sum() == pytest.approx(2 * domain.delta)
    assert domain.outward_sign((0, 0)) == -1.0
    assert domain.outward_sign((0, 1)) == 1.0


def test_to_dict(domain: carlemanlab.DomainSpec):
    doc = domain.to_dict()
    assert doc["shape"] == [16, 16]
    assert doc["gamma_faces"] == [[0, 1]]
    assert np.array_equal(rle_decode(doc["masks"]["gamma"], domain.shape), domain.gamma)
    assert np.array_equal(rle_decode(doc["masks"]["observation"], domain.shape), domain.observation)
