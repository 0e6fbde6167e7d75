"""
Test source recovery at t0.
"""
import math

import numpy as np
import pytest

import carlemanlab
from carlemanlab.analytic import PolynomialProfile
from carlemanlab.field import VectorField, curl, laplacian
from carlemanlab.flow import CoefficientFields, ManufacturedSolution
from carlemanlab.inverse import (assemble_a, estimate_dtv_at_t0, exact_source_recovery, recover_rot_F,
                                 recover_source_field, relative_error)
from carlemanlab.source import source_from_solution


def test_time_derivative_at_t0(small_domain):
    solution = ManufacturedSolution.taylor_green(1.0, profile=PolynomialProfile((1.0, 0.0, 1.0)))
    dtv = estimate_dtv_at_t0(solution.sample(small_domain))
    assert np.allclose(dtv.values, solution.sample(small_domain, 1).at_t0().values)
    with pytest.raises(carlemanlab.GridError):
        estimate_dtv_at_t0(dtv)


def test_rotation_of_forcing(small_domain):
    solution = ManufacturedSolution.taylor_green(1.0)
    v = solution.sample(small_domain)
    v0 = v.at_t0()
    a = assemble_a(v0)
    assert np.allclose(a.values, curl(-laplacian(v0)).values)
    coeffs = CoefficientFields.affine(2, advection_offset=(0.5, 0.0))
    assert not np.allclose(assemble_a(v0, coeffs).values, a.values)
    rot_F = recover_rot_F(estimate_dtv_at_t0(v), a)
    assert rot_F.timed is False


def test_dirichlet_recovery(small_domain):
    truth = VectorField.from_function(small_domain, lambda pts, t: np.stack(
        [np.sin(math.pi * pts[0]) * np.sin(math.pi * pts[1])] * 2), timed=False)
    zero = VectorField.zeros(small_domain, timed=False)
    recovered = recover_source_field(-laplacian(truth), zero)
    assert np.allclose(recovered.values, truth.values, atol=1e-6)
    assert recover_source_field(zero, zero).is_zero()
    assert recover_source_field(zero, zero, boundary="gamma").is_zero()
    with pytest.raises(ValueError):
        recover_source_field(zero, zero, boundary="neumann")


def test_relative_error():
    assert relative_error(1.0, 4.0) == 0.25
    assert relative_error(1.0, 0.0) == 1.0


def test_invisible_gradient_source(small_domain, small_weight):
    solution = ManufacturedSolution.pressure_only((0.5, 0.5), 0.3)
    data = carlemanlab.generate_cauchy_data(solution, small_domain, tier="D1")
    problem = carlemanlab.QRProblem(small_domain, small_weight, data, solver="direct",
                                    source_profile=PolynomialProfile((1.0,)))
    truth = carlemanlab.build_source("gradient_obstruction", potential=solution.pressure)
    recovery = carlemanlab.invert_source(problem, truth_source=truth, field_boundary="dirichlet")
    assert recovery.rot_F.is_zero()
    assert recovery.errors["rot_F_l2"] == 0.0
    # the recovered field is zero while the true one is not
    assert recovery.errors["F_h1"] == pytest.approx(1.0)
    assert recovery.summary()["field_recovered"]

    plain = problem.replace(source_profile=None)
    with pytest.raises(ValueError):
        carlemanlab.invert_source(plain)


def test_exact_velocity_recovery_refines():
    vortex = ManufacturedSolution.compact_vortex((0.55, 0.5), 0.4)
    source = source_from_solution(vortex, 0.5)
    errors = []
    for n in (16, 31):
        grid = carlemanlab.build_domain("rect2d_right_edge", n, n_t=3)
        recovery = exact_source_recovery(vortex, grid, truth_source=source)
        assert recovery.reconstruction is None
        errors.append(recovery.errors)
    assert errors[1]["rot_F_l2"] < errors[0]["rot_F_l2"]
    assert errors[1]["F_h1"] < errors[0]["F_h1"]
