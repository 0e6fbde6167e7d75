"""
Test grid fields, stencils, norms and traces.
"""
import math

import numpy as np
import pytest

import carlemanlab
from carlemanlab.analytic import PolynomialBump
from carlemanlab.field import (ScalarField, VectorField, WeightedNorm, axis_operator, curl, divergence,
                               extract_trace, first_difference_matrix, gradient, laplacian,
                               second_difference_matrix, sobolev_norm, space_time_norm, sum_norms,
                               time_derivative, transport, vector_identity_residual, weighted_norm)
from carlemanlab.helper import convergence_order


def _scalar(domain, func, timed=False):
    return ScalarField.from_function(domain, func, timed=timed)


def test_field_values(domain: carlemanlab.DomainSpec):
    f = ScalarField.zeros(domain, timed=False)
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0
    with pytest.raises(carlemanlab.GridError):
        ScalarField(domain, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        ScalarField(domain, np.full(domain.shape, np.nan))
    with pytest.raises(carlemanlab.GridError):
        f + ScalarField.zeros(domain, timed=True)
    g = _scalar(domain, lambda pts, t: pts[0])
    assert (2.0 * g - g).max_abs() == pytest.approx(1.0)
    assert (-g).max_abs() == pytest.approx(1.0)
    assert ScalarField.from_bytes(g.to_bytes(), domain).values.tolist() == g.values.tolist()


def test_exact_stencils(domain: carlemanlab.DomainSpec):
    linear = _scalar(domain, lambda pts, t: 2.0 * pts[0] + 3.0 * pts[1])
    grad = gradient(linear)
    assert np.allclose(grad.values[0], 2.0)
    assert np.allclose(grad.values[1], 3.0)

    quadratic = _scalar(domain, lambda pts, t: pts[0] ** 2 + pts[1] ** 2)
    assert np.allclose(laplacian(quadratic).values, 4.0)

    rotation = VectorField.from_function(domain, lambda pts, t: np.stack([-pts[1], pts[0]]), timed=False)
    assert np.allclose(curl(rotation).values, 2.0)
    assert np.allclose(divergence(rotation).values, 0.0)
    along_x = VectorField.from_function(domain, lambda pts, t: np.stack([np.ones_like(pts[0]), np.zeros_like(pts[0])]),
                                        timed=False)
    moved = transport(along_x, along_x, rotation)
    assert np.allclose(moved.values[0], 0.0)
    assert np.allclose(moved.values[1], 1.0)

    in_time = _scalar(domain, lambda pts, t: t * pts[0], timed=True)
    assert np.allclose(time_derivative(in_time).values, domain.points()[0][None, ...])
    with pytest.raises(carlemanlab.GridError):
        time_derivative(linear)


def test_discrete_identities(domain: carlemanlab.DomainSpec):
    f = _scalar(domain, lambda pts, t: np.sin(3 * pts[0]) * np.exp(pts[1]))
    assert np.abs(curl(gradient(f)).values).max() < 1e-9
    assert np.abs(divergence(curl(f)).values).max() < 1e-9

    # stencils are exact on quadratics, so the vector identity holds to rounding
    w = VectorField.from_function(domain, lambda pts, t: np.stack([pts[0] ** 2, pts[0] * pts[1]]), timed=False)
    assert vector_identity_residual(w).max_abs() < 1e-8


def test_sparse_operators(domain: carlemanlab.DomainSpec):
    f = _scalar(domain, lambda pts, t: np.cos(2 * pts[0]) * pts[1] ** 3)
    dx = axis_operator(domain.shape, 0, first_difference_matrix(domain.shape[0], domain.h[0]))
    assert np.allclose(dx @ f.values.ravel(), gradient(f).values[0].ravel())
    lap = sum(axis_operator(domain.shape, k, second_difference_matrix(domain.shape[k], domain.h[k]))
              for k in range(2))
    assert np.allclose(lap @ f.values.ravel(), laplacian(f).values.ravel())


def test_norms(domain: carlemanlab.DomainSpec, weight: carlemanlab.WeightFunction):
    one = _scalar(domain, lambda pts, t: np.ones(domain.shape))
    assert sobolev_norm(one, 0) == pytest.approx(1.0)
    assert sobolev_norm(one, 2) == pytest.approx(1.0)
    timed_one = _scalar(domain, lambda pts, t: np.ones(domain.shape), timed=True)
    assert space_time_norm(timed_one) == pytest.approx(math.sqrt(2 * domain.delta))

    norm = weighted_norm(one, weight, 1.5, "omega")
    direct = np.sum(domain.space_weights() * np.exp(3.0 * weight.on_grid(domain, weight.t0)))
    assert norm.value == pytest.approx(direct)
    assert weighted_norm(one * 2.0, weight, 1.5, "omega").ratio(norm) == pytest.approx(4.0)
    assert weighted_norm(timed_one, weight, 1.5, "gamma").value > 0
    with pytest.raises(ValueError):
        weighted_norm(one, weight, 0.0)


def test_weighted_norm_arithmetic():
    big = WeightedNorm(1.0, 1000.0, 1.0, "Q")
    bigger = WeightedNorm(2.0, 1000.0, 1.0, "Q")
    assert math.isinf(big.value)
    assert big.ratio(bigger) == pytest.approx(0.5)
    assert (big + bigger).in_units_of(1000.0) == pytest.approx(3.0)
    assert big.scaled(math.e).log == pytest.approx(1001.0)
    zero = WeightedNorm(0.0, 0.0, 1.0, "Q")
    assert math.isnan(zero.ratio(zero))
    assert math.isinf(big.ratio(zero))
    assert sum_norms([zero, big], 1.0).in_units_of(1000.0) == pytest.approx(1.0)


def test_traces(domain: carlemanlab.DomainSpec):
    f = _scalar(domain, lambda pts, t: pts[0] + 2.0 * pts[1])
    trace = extract_trace(f, "gamma")
    assert trace.faces == ((0, 1),)
    assert np.allclose(trace.values[(0, 1)][0], 1.0 + 2.0 * domain.axes[1])
    assert np.allclose(trace.normal_derivative((0, 1)), 1.0)
    assert trace.norm(0) > 0
    assert trace.equals(extract_trace(f, "gamma"))
    assert trace.difference(trace).norm(0) == 0.0

    rng = np.random.default_rng(1)
    noisy = trace.perturbed(rng, 0.1)
    assert not noisy.equals(trace)
    assert len(extract_trace(f, "boundary").faces) == 4
    assert len(trace.rows()) == 16 * 3


def test_stencil_convergence_order():
    spacings, gradient_errors, laplacian_errors, identity_errors = [], [], [], []
    for n in (17, 33, 65):
        grid = carlemanlab.build_domain("rect2d_right_edge", n, n_t=3)
        x, y = grid.points()
        f = _scalar(grid, lambda pts, t: np.sin(2 * pts[0]) * np.cos(3 * pts[1]))
        grad = gradient(f)
        gradient_errors.append(max(np.abs(grad.values[0] - 2 * np.cos(2 * x) * np.cos(3 * y)).max(),
                                   np.abs(grad.values[1] + 3 * np.sin(2 * x) * np.sin(3 * y)).max()))
        exact_laplacian = -13.0 * np.sin(2 * x) * np.cos(3 * y)
        laplacian_errors.append(np.abs(laplacian(f).values - exact_laplacian)[1:-1, 1:-1].max())
        w = VectorField.from_function(grid, lambda pts, t: np.stack([np.sin(2 * pts[0]) * np.cos(pts[1]),
                                                                    np.cos(pts[0]) * np.sin(3 * pts[1])]),
                                      timed=False)
        identity_errors.append(vector_identity_residual(w).interior_values(2).max())
        spacings.append(grid.h[0])

    for errors in (gradient_errors, laplacian_errors, identity_errors):
        assert convergence_order(errors, spacings) == pytest.approx(2.0, abs=0.3)
    with pytest.raises(ValueError):
        convergence_order([1.0], [0.1])


def test_weighted_norm_of_compact_field_at_large_s(domain: carlemanlab.DomainSpec,
                                                   weight: carlemanlab.WeightFunction):
    bump = PolynomialBump((0.5, 0.5), 0.3)
    w = _scalar(domain, lambda pts, t: bump.value(pts))
    norm = weighted_norm(w, weight, 256.0, "omega")
    assert not norm.is_zero()
    assert math.isfinite(norm.log)
    assert weighted_norm(2.0 * w, weight, 256.0, "omega").ratio(norm) == pytest.approx(4.0)
