"""
Test the quasi-reversibility assembly and solvers.
"""
import numpy as np
import pytest

import carlemanlab
from carlemanlab.analytic import PolynomialProfile
from carlemanlab.flow import ManufacturedSolution
from carlemanlab.reconstruction import DIRECT_LIMIT, QRLayout, assemble_qr_system, resolve_solver, solve_qr, window_mask


@pytest.fixture(scope="module")
def dataset(small_domain):
    return carlemanlab.generate_cauchy_data(ManufacturedSolution.taylor_green(1.0), small_domain, tier="D1")


def test_problem_checks(small_domain, small_weight, dataset):
    with pytest.raises(ValueError):
        carlemanlab.QRProblem(small_domain, small_weight, dataset, s=0.0)
    with pytest.raises(ValueError):
        carlemanlab.QRProblem(small_domain, small_weight, dataset, solver="lu")
    other = carlemanlab.build_domain("rect2d_right_edge", 12, n_t=7)
    with pytest.raises(carlemanlab.GridError):
        carlemanlab.QRProblem(other, small_weight, dataset)

    plain = carlemanlab.generate_cauchy_data(ManufacturedSolution.taylor_green(1.0), small_domain)
    inverse = carlemanlab.QRProblem(small_domain, small_weight, plain, source_profile=PolynomialProfile((1.0,)))
    with pytest.raises(carlemanlab.DataTierError):
        assemble_qr_system(inverse)


def test_layout(small_domain, small_weight, dataset):
    layout = QRLayout(small_domain, inverse=False)
    assert layout.size == 3 * small_domain.n_t * 144
    truth = dataset.truth
    z, v, q = layout.unpack(layout.pack(truth["z"], truth["v"]))
    assert np.array_equal(v.values, truth["v"].values)
    assert np.array_equal(z.values, truth["z"].values)
    assert q is None

    inverse = carlemanlab.QRProblem(small_domain, small_weight, dataset, source_profile=PolynomialProfile((1.0,)))
    system = assemble_qr_system(inverse)
    assert system.layout.inverse
    assert system.layout.size == layout.size + 144
    assert list(system.groups) == ["parabolic", "elliptic", "divergence", "cauchy", "snapshot", "tikhonov"]


def test_zero_data_gives_zero(small_domain, small_weight):
    data = carlemanlab.generate_cauchy_data(ManufacturedSolution.zero(2), small_domain)
    result = carlemanlab.reconstruct(carlemanlab.QRProblem(small_domain, small_weight, data))
    assert result.v.is_zero()
    assert result.converged
    assert result.errors["l2"] == 0.0


def test_direct_solve_is_least_squares(small_domain, small_weight, dataset):
    problem = carlemanlab.QRProblem(small_domain, small_weight, dataset, alpha=1e-2, solver="direct")
    system = assemble_qr_system(problem)
    result = solve_qr(system, dataset.truth)
    estimate = system.pack(result.z, result.v)
    exact = system.pack(dataset.truth["z"], dataset.truth["v"])
    fitted = np.linalg.norm(system.matrix @ estimate - system.rhs)
    assert fitted <= np.linalg.norm(system.matrix @ exact - system.rhs) * (1 + 1e-6)
    assert np.isfinite(result.errors["relative_l2"])
    assert set(result.diagnostics["groups"]) == set(system.groups)


def test_linearity(small_domain, small_weight, dataset):
    doubled = carlemanlab.generate_cauchy_data(ManufacturedSolution.taylor_green(1.0, amplitude=2.0), small_domain,
                                               tier="D1")
    problem = carlemanlab.QRProblem(small_domain, small_weight, dataset, alpha=1e-3, solver="direct")
    single = carlemanlab.reconstruct(problem)
    double = carlemanlab.reconstruct(problem.replace(dataset=doubled))
    assert np.allclose(double.v.values, 2.0 * single.v.values, atol=1e-10)


def test_cg_iteration_limit(small_domain, small_weight, dataset):
    problem = carlemanlab.QRProblem(small_domain, small_weight, dataset, solver="cg", maxiter=1)
    result = carlemanlab.reconstruct(problem)
    assert not result.converged
    assert result.diagnostics["iterations"] == 1


def test_window_mask(small_domain):
    assert window_mask(small_domain).sum() == 3
    assert window_mask(small_domain, 0.0).sum() == 1
    assert window_mask(small_domain, 1.0).all()
    with pytest.raises(ValueError):
        window_mask(small_domain, -0.1)


def test_default_solver_converges(small_domain, small_weight, dataset):
    problem = carlemanlab.QRProblem(small_domain, small_weight, dataset)
    assert problem.solver == "auto"
    result = carlemanlab.reconstruct(problem)
    assert result.converged
    assert result.diagnostics["solver"] == "direct"

    assert resolve_solver("auto", DIRECT_LIMIT) == "direct"
    assert resolve_solver("auto", DIRECT_LIMIT + 1) == "cg"
    assert resolve_solver("cg", 10) == "cg"
