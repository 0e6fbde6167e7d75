"""
Test the forward problem: manufactured forcing, residuals and the projection stepper.
"""
import numpy as np
import pytest

import carlemanlab
from carlemanlab.analytic import PolynomialProfile
from carlemanlab.field import ScalarField, VectorField
from carlemanlab.flow import (CoefficientFields, ManufacturedSolution, integrate_projection, mms_forcing,
                              momentum_residual, projection_error)
from carlemanlab.helper import convergence_order


def test_taylor_green_is_force_free(small_domain: carlemanlab.DomainSpec):
    solution = ManufacturedSolution.taylor_green(1.0)
    forcing, methods = mms_forcing(solution, CoefficientFields.zero(2), small_domain)
    assert set(methods.values()) == {"analytic"}
    assert forcing.timed
    assert forcing.max_abs() < 1e-12
    assert np.abs(solution.divergence(small_domain.points(), 0.5)).max() < 1e-12


def test_forcing_with_coefficients(domain: carlemanlab.DomainSpec):
    solution = ManufacturedSolution.taylor_green(1.0)
    coeffs = CoefficientFields.affine(2, advection_offset=(0.5, 0.0), shear_matrix=[[0.0, 0.25], [-0.25, 0.0]],
                                      rate=0.5)
    forcing, _ = mms_forcing(solution, coeffs, domain)
    assert forcing.max_abs() > 0.1
    residual = momentum_residual(solution.sample(domain), ScalarField.zeros(domain), forcing, coeffs)
    assert residual.max_abs() < 0.1
    assert coeffs.without_shear().shear.is_zero()
    assert not coeffs.is_zero()


def test_pressure_only(small_domain: carlemanlab.DomainSpec):
    solution = ManufacturedSolution.pressure_only((0.5, 0.5), 0.3)
    assert solution.is_zero_velocity and solution.has_pressure
    forcing, _ = mms_forcing(solution, CoefficientFields.zero(2), small_domain)
    expected = solution.pressure.gradient(small_domain.points())
    assert np.allclose(forcing.values[:, 0], expected)
    assert solution.sample(small_domain).is_zero()


def test_projection_stepper(small_domain: carlemanlab.DomainSpec):
    solution = ManufacturedSolution.taylor_green(1.0)
    assert projection_error(solution, small_domain, steps=8) < 0.05

    rest = VectorField.zeros(small_domain, timed=False)
    state = integrate_projection(rest, CoefficientFields.zero(2), None, 0.0, 0.1, steps=2)
    assert state.velocity.is_zero()
    assert state.t == pytest.approx(0.1)
    with pytest.raises(ValueError):
        integrate_projection(rest, CoefficientFields.zero(2), None, 0.0, 0.1, steps=0)
    with pytest.raises(ValueError):
        integrate_projection(rest, CoefficientFields.zero(2), None, 0.0, 0.1, steps=1, variant="explicit")


def test_projection_stepper_time_order(small_domain: carlemanlab.DomainSpec):
    # a shear flow is reproduced exactly by the stencils, which leaves the time stepping error alone
    shear = ManufacturedSolution.linear_flow([[0.0, 1.0], [0.0, 0.0]], profile=PolynomialProfile((1.0, 0.0, 1.0)))
    steps = [4, 8, 16]
    errors = [projection_error(shear, small_domain, n) for n in steps]
    assert errors[0] > errors[1] > errors[2] > 0
    assert convergence_order(errors, [1.0 / n for n in steps]) > 0.8
