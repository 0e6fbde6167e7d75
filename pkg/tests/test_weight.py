"""
Test the weight profile and the Carleman weight.
"""
import math

import numpy as np
import pytest

import carlemanlab
from carlemanlab.weight import WeightProfile, check_profile, eval_phi, psi_mode_note


def test_profile_conditions(domain: carlemanlab.DomainSpec, weight: carlemanlab.WeightFunction):
    profile = weight.profile
    d = profile.value(domain.points())
    assert (d[domain.observation] > 0).all()
    assert np.abs(d[domain.free_boundary]).max() < 1e-10
    assert profile.value(profile.center.reshape(-1, 1))[0] == pytest.approx(1.0)
    assert np.abs(profile.gradient(profile.center.reshape(-1, 1))).max() < 1e-10


def test_profile_gradient(weight: carlemanlab.WeightFunction):
    rng = np.random.default_rng(3)
    profile = weight.profile
    points = rng.uniform(0.1, 0.9, size=(2, 20))
    step = 1e-6
    for j in range(2):
        e = np.zeros((2, 1))
        e[j] = step
        fd = (profile.value(points + e) - profile.value(points - e)) / (2 * step)
        assert np.allclose(profile.gradient(points)[j], fd, rtol=1e-5, atol=1e-8)


def test_bad_profile(domain: carlemanlab.DomainSpec):
    # a box ending at x = 1 makes d negative on the part of the extended domain beyond it
    profile = WeightProfile((0.0, 0.0), (1.0, 1.0), (0.5, 0.5))
    with pytest.raises(carlemanlab.WeightProfileError) as info:
        check_profile(profile, domain)
    assert info.value.cells


def test_weight_values(domain: carlemanlab.DomainSpec, weight: carlemanlab.WeightFunction):
    center = weight.profile.center
    assert eval_phi(weight, center, weight.t0) == pytest.approx(math.exp(2.0))
    linear = weight.replace(psi_mode="linear")
    assert linear.profile is weight.profile
    assert eval_phi(linear, center, weight.t0) == pytest.approx(math.exp(2.0))

    grid = weight.on_grid(domain)
    assert grid.shape == domain.time_shape
    assert (grid[0] < grid[domain.t0_index]).all()
    assert np.allclose(grid[0], grid[-1])
    flat = weight.replace(beta=0.0).on_grid(domain)
    assert np.allclose(flat[0], flat[domain.t0_index])

    assert weight.slice_factor() == pytest.approx(math.exp(3 * 2.0 * 1.0 * 0.25 ** 2))


def test_weight_errors(weight: carlemanlab.WeightFunction):
    with pytest.raises(ValueError):
        weight.replace(lam=0.0)
    with pytest.raises(ValueError):
        weight.replace(beta=-1.0)
    with pytest.raises(ValueError):
        weight.replace(psi_mode="cubic")
    with pytest.raises(ValueError):
        psi_mode_note("cubic")
    assert "d^2" in psi_mode_note("square")
    assert weight.to_dict()["psi_mode"] == "square"
