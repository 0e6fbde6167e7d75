"""
Test Cauchy data generation.
"""
import json

import pytest

import carlemanlab
from carlemanlab.data import TIERS, tier_order
from carlemanlab.field import TRACE_HEADER, VectorField
from carlemanlab.helper import read_csv
from carlemanlab.flow import ManufacturedSolution


@pytest.fixture(scope="module")
def solution():
    return ManufacturedSolution.taylor_green(1.0)


def test_tiers(small_domain: carlemanlab.DomainSpec, solution):
    assert [tier_order(t) for t in TIERS] == [0, 1, 2]
    with pytest.raises(ValueError):
        tier_order("D3")

    first = carlemanlab.generate_cauchy_data(solution, small_domain, tier="D1")
    assert set(first.traces) == {"v", "z", "v_t", "z_t"}
    assert set(first.magnitudes) == {"D", "D1"}
    assert "M1" in first.bounds
    assert first.time_derivatives == "analytic"
    first.require("D")
    first.require("D1")
    with pytest.raises(carlemanlab.DataTierError):
        first.require("D2")

    second = carlemanlab.generate_cauchy_data(solution, small_domain, tier="D2")
    assert "z_tt" in second.traces and "M2" in second.bounds


def test_noise(small_domain: carlemanlab.DomainSpec, solution):
    clean = carlemanlab.generate_cauchy_data(solution, small_domain)
    assert carlemanlab.data_size(clean) == 0.0

    noisy = carlemanlab.generate_cauchy_data(solution, small_domain, sigma=1e-2, seed=3)
    again = carlemanlab.generate_cauchy_data(solution, small_domain, sigma=1e-2, seed=3)
    other = carlemanlab.generate_cauchy_data(solution, small_domain, sigma=1e-2, seed=4)
    assert noisy.same_data(again)
    assert not noisy.same_data(other)
    assert not noisy.same_data(clean)
    assert carlemanlab.data_size(noisy) > 0
    assert noisy.noise["seed"] == 3
    with pytest.raises(ValueError):
        carlemanlab.generate_cauchy_data(solution, small_domain, sigma=-1.0)


def test_stencil_data(small_domain: carlemanlab.DomainSpec, solution):
    sampled = solution.sample(small_domain)
    data = carlemanlab.generate_cauchy_data(sampled, small_domain, tier="D1")
    assert data.time_derivatives == "stencil"
    with pytest.raises(carlemanlab.DataTierError):
        carlemanlab.generate_cauchy_data(VectorField.zeros(small_domain, timed=False), small_domain)


def test_invisible_pressure(small_domain: carlemanlab.DomainSpec):
    pressure = carlemanlab.generate_cauchy_data(ManufacturedSolution.pressure_only((0.5, 0.5), 0.3), small_domain,
                                                tier="D1")
    zero = carlemanlab.generate_cauchy_data(ManufacturedSolution.zero(2), small_domain, tier="D1")
    assert pressure.same_data(zero)
    assert pressure.magnitudes["D"] == 0.0


def test_save(tmp_path, small_domain: carlemanlab.DomainSpec, solution):
    data = carlemanlab.generate_cauchy_data(solution, small_domain)
    directory = data.save(tmp_path / "data")
    assert (directory / "trace_v.csv").exists()
    assert (directory / "snapshot.csv").exists()
    manifest = json.loads((directory / "manifest.json").read_text())
    assert manifest["tier"] == "D"
    assert manifest["traces"] == ["v", "z"]
    header, rows = read_csv(directory / "trace_v.csv")
    assert header == TRACE_HEADER
    assert len(rows) == len(data.traces["v"].rows())
