"""
Test noise sweeps and the Hölder exponent fit.
"""
import math

import pytest

import carlemanlab
from carlemanlab.flow import ManufacturedSolution
from carlemanlab.stability import StabilityRun, StabilityStudy, check_noise_levels, fit_exponent

SIGMAS = [1e-2, 1e-3, 1e-4, 1e-5]


def test_noise_levels():
    assert check_noise_levels(SIGMAS + [0.0]) == SIGMAS
    with pytest.raises(ValueError):
        check_noise_levels(list(reversed(SIGMAS)))
    with pytest.raises(ValueError):
        check_noise_levels(SIGMAS[:3])
    with pytest.raises(ValueError):
        check_noise_levels([1e-2, 8e-3, 6e-3, 4e-3])
    with pytest.raises(ValueError):
        check_noise_levels(SIGMAS + [-1.0])


def test_fit_exponent():
    errors = [10 ** -1.0, 10 ** -1.5, 10 ** -2.0, 10 ** -2.5]
    theta, (lower, upper) = fit_exponent(SIGMAS, errors)
    assert theta == pytest.approx(0.5)
    assert lower <= 0.5 + 1e-9 and upper >= 0.5 - 1e-9
    with pytest.raises(ValueError):
        fit_exponent(SIGMAS[:3], errors[:3])


def test_levels_and_monotone():
    runs = [StabilityRun(sigma, seed, sigma, 1.0, False, sigma ** 0.5 * (1 + 0.01 * seed), 0.1, True)
            for sigma in SIGMAS for seed in (0, 1)]
    study = StabilityStudy(runs, 0.5, (0.4, 0.6), 0.5, 1.0, 1.0, 1.0, True)
    levels = study.levels()
    assert [level[0] for level in levels] == SIGMAS
    assert levels[0][3] == pytest.approx(0.01 * 0.1)
    assert study.summary()["levels"][0][0] == 1e-2


def test_sweep(small_domain, small_weight):
    solution = ManufacturedSolution.taylor_green(1.0)
    data = carlemanlab.generate_cauchy_data(solution, small_domain)
    template = carlemanlab.QRProblem(small_domain, small_weight, data, alpha=1e-3, solver="direct")
    with pytest.raises(ValueError):
        carlemanlab.stability_sweep(template, solution, SIGMAS, seeds=())
    with pytest.raises(ValueError):
        carlemanlab.stability_sweep(template, solution, SIGMAS, s_limits=(1.0, 0.5))

    study = carlemanlab.stability_sweep(template, solution, SIGMAS, seeds=(0,), carleman_constant=2.0, mu0=1.0)
    assert len(study.runs) == 4
    assert math.isfinite(study.theta_hat)
    assert study.theta_predicted == pytest.approx(1.0 / 3.0)
    assert all(0.1 <= run.s <= 1.0 for run in study.runs)
    assert study.flags["levels_fitted"] == 4
    assert not study.flags["floor_included"]
    assert [run.sigma for run in study.runs] == SIGMAS
