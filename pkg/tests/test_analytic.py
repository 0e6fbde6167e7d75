"""
Test the closed-form fields and profiles.
"""
import math

import numpy as np
import pytest

from carlemanlab.analytic import (ABCField, AffineCoefficient, ExponentialProfile, LinearField, MatrixField,
                                  MatrixSolvedField, PolynomialBump, PolynomialProfile, TrigPotential,
                                  taylor_green_field, time_profile)


@pytest.fixture
def points():
    rng = np.random.default_rng(7)
    return rng.uniform(0.0, 1.0, size=(2, 30))


def _jacobian_fd(field, points, step=1e-6):
    cols = []
    for j in range(points.shape[0]):
        e = np.zeros((points.shape[0], 1))
        e[j] = step
        cols.append((field.value(points + e) - field.value(points - e)) / (2 * step))
    return np.stack(cols, axis=1)


def test_time_profiles():
    quadratic = time_profile([1.0, 0.0, 1.0])
    assert isinstance(quadratic, PolynomialProfile)
    assert quadratic.value(0.5) == pytest.approx(1.25)
    assert quadratic.value(0.5, 1) == pytest.approx(1.0)
    assert quadratic.value(0.5, 2) == pytest.approx(2.0)

    decay = time_profile({"kind": "exponential", "rate": -2.0})
    assert isinstance(decay, ExponentialProfile)
    assert decay.value(1.0, 2) == pytest.approx(4.0 * math.exp(-2.0))
    assert time_profile(decay) is decay
    assert time_profile(decay.to_dict()).rate == -2.0
    with pytest.raises(ValueError):
        time_profile("quadratic")


def test_potentials(points):
    potential = TrigPotential(2.0, (1.0, 3.0), (0.0, 0.5))
    expected = 2.0 * np.sin(points[0]) * np.sin(3.0 * points[1] + 0.5)
    assert np.allclose(potential.value(points), expected)
    assert np.allclose(potential.derivative(points, (0, 2)), -9.0 * expected)

    bump = PolynomialBump((0.5, 0.5), 0.3, amplitude=2.0)
    center = np.array([[0.5], [0.5]])
    assert bump.value(center)[0] == pytest.approx(2.0)
    outside = np.array([[0.9], [0.9]])
    assert bump.value(outside)[0] == 0.0
    assert bump.gradient(outside)[:, 0].tolist() == [0.0, 0.0]
    inside = np.array([[0.6], [0.45]])
    step = 1e-6
    fd = (bump.value(inside + [[step], [0.0]]) - bump.value(inside - [[step], [0.0]])) / (2 * step)
    assert bump.gradient(inside)[0, 0] == pytest.approx(fd[0], rel=1e-6)
    with pytest.raises(ValueError):
        PolynomialBump((0.5,), 0.3)


def test_taylor_green(points):
    field = taylor_green_field(2.0)
    assert field.eigenvalue == pytest.approx(8.0)
    assert np.allclose(field.laplacian(points), -8.0 * field.value(points))
    assert np.allclose(field.divergence(points), 0.0)
    assert np.allclose(field.jacobian(points), _jacobian_fd(field, points), atol=1e-6)


def test_abc_field():
    rng = np.random.default_rng(2)
    points = rng.uniform(0.0, 1.0, size=(3, 20))
    field = ABCField(k=2.0)
    assert np.allclose(field.laplacian(points), -4.0 * field.value(points))
    assert np.allclose(field.divergence(points), 0.0)
    assert np.allclose(field.jacobian(points), _jacobian_fd(field, points), atol=1e-6)


def test_matrix_fields(points):
    assert np.allclose(MatrixField(2, eps=0.0).value(points), np.eye(2)[..., None])
    with pytest.raises(ValueError):
        MatrixField(2, eps=1.0)

    matrix = MatrixField(2)
    assert (matrix.determinant(points) >= 0.7 ** 2).all()
    solved = MatrixSolvedField(matrix, taylor_green_field(1.0))
    product = np.einsum("ab...,b...->a...", matrix.value(points), solved.value(points))
    assert np.allclose(product, taylor_green_field(1.0).value(points))
    assert np.allclose(solved.jacobian(points), _jacobian_fd(solved, points), atol=1e-6)
    with pytest.raises(NotImplementedError):
        solved.laplacian_field()


def test_linear_and_affine(points):
    with pytest.raises(ValueError):
        LinearField([[1.0, 0.0], [0.0, 1.0]])
    shear = LinearField([[0.0, 1.0], [0.0, 0.0]], offset=(1.0, 0.0))
    assert np.allclose(shear.value(points)[0], 1.0 + points[1])
    assert np.allclose(shear.laplacian(points), 0.0)

    coefficient = AffineCoefficient(2, offset=(1.0, 0.0), rate=0.5)
    assert np.allclose(coefficient.value(points, 2.0)[0], 2.0)
    assert np.allclose(coefficient.value(points, 2.0, k=1)[0], 0.5)
    assert np.allclose(coefficient.value(points, 2.0, k=2), 0.0)
    assert not coefficient.is_zero()
    assert AffineCoefficient(2).is_zero()
