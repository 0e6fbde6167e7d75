"""
Test source families and their structural conditions.
"""
import math

import numpy as np
import pytest

import carlemanlab
from carlemanlab.analytic import MatrixField, PolynomialProfile, PotentialField, TrigPotential, taylor_green_field
from carlemanlab.experiment import random_sources
from carlemanlab.flow import ManufacturedSolution
from carlemanlab.source import FAMILIES, ConditionResult, ratio_constant, source_from_solution, spot_check


def test_families():
    assert len(FAMILIES) == 4
    for family in FAMILIES:
        source = carlemanlab.build_source(family)
        assert source.family == family
        assert source.dimension == 2
    assert carlemanlab.build_source("separated", dimension=3).dimension == 3


def test_separated_conditions(small_domain: carlemanlab.DomainSpec):
    source = carlemanlab.build_source("separated")
    report = carlemanlab.check_conditions(source, small_domain)
    assert report["divergence_free"].passed
    # rot F = r(t) rot f, so the constant is max over the slab of |r|, |r'| divided by r(t0)
    assert report["rotation_controlled"].constant == pytest.approx(1.5625 / 1.25)
    assert report["factor_controlled"].applicable
    assert math.isfinite(report["factor_controlled"].constant)
    assert report.implication_chain_holds
    assert len(report.rows()) == 5
    with pytest.raises(IndexError):
        report["smoothness"]


def test_obstruction_is_vacuous(small_domain: carlemanlab.DomainSpec):
    report = carlemanlab.check_conditions(carlemanlab.build_source("gradient_obstruction"), small_domain)
    assert report["rotation_controlled"].vacuous
    assert not report["divergence_free"].passed
    assert not report["factor_controlled"].applicable
    assert report.to_dict()["family"] == "gradient_obstruction"


def test_matrix_source(small_domain: carlemanlab.DomainSpec):
    source = carlemanlab.build_source("matrix", profile=PolynomialProfile((1.0, 0.5)), matrix=MatrixField(2),
                                      target=taylor_green_field(1.0))
    points = small_domain.points()
    assert np.allclose(source.value(points, 0.0), taylor_green_field(1.0).value(points))
    report = carlemanlab.check_conditions(source, small_domain)
    assert report["factor_controlled"].passed
    assert spot_check(source, np.random.default_rng(4), count=10) < 1e-4


def test_source_errors():
    with pytest.raises(carlemanlab.SourceError):
        carlemanlab.build_source("random")
    with pytest.raises(carlemanlab.SourceError):
        carlemanlab.build_source("separated", profile=PolynomialProfile((0.5, -1.0)))
    with pytest.raises(carlemanlab.SourceError):
        carlemanlab.build_source("separated", field=PotentialField.gradient_of(TrigPotential(1.0, (1.0, 2.0))))
    with pytest.raises(carlemanlab.SourceError):
        carlemanlab.build_source("matrix", profile=PolynomialProfile((0.0, 0.0)))
    with pytest.raises(carlemanlab.SourceError):
        carlemanlab.build_source("vector_potential").factor_value(np.zeros((2, 1)))


def test_source_from_solution(small_domain: carlemanlab.DomainSpec):
    source = source_from_solution(ManufacturedSolution.taylor_green(1.0, profile=PolynomialProfile((1.0, 0.0, 1.0))))
    assert source.family == "separated"
    # g' + 2g for g = 1 + t^2
    assert list(source.profile.polynomial.coef) == pytest.approx([2.0, 2.0, 2.0])

    obstruction = source_from_solution(ManufacturedSolution.pressure_only((0.5, 0.5), 0.3))
    assert obstruction.family == "gradient_obstruction"
    assert obstruction.rotation_at_time(small_domain).is_zero()

    vortex = source_from_solution(ManufacturedSolution.compact_vortex((0.5, 0.5), 0.3))
    assert vortex.family == "separated"
    assert vortex.factor is not None


def test_ratio_constant():
    assert ratio_constant(np.zeros(4), np.ones(4), "c", 10.0).vacuous
    assert ratio_constant(np.array([1.0, 2.0]), np.array([1.0, 1.0]), "c", 10.0).constant == 2.0
    failed = ratio_constant(np.array([1.0, 2.0]), np.array([1.0, 0.0]), "c", 10.0)
    assert math.isinf(failed.constant)
    assert failed.offending == [[1]]
    assert not ratio_constant(np.array([50.0]), np.array([1.0]), "c", 10.0).passed
    assert isinstance(failed, ConditionResult)


def test_implication_chain_on_random_sources(small_domain: carlemanlab.DomainSpec):
    samples = random_sources(np.random.default_rng(0), 2, 20)
    assert len(samples) == 20
    assert {s.family for s in samples} == {"separated", "vector_potential"}
    for source in samples:
        assert carlemanlab.check_conditions(source, small_domain).implication_chain_holds
