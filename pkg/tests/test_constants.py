"""
Test the stability constant calculators.
"""
import math

import numpy as np
import pytest

import carlemanlab
from carlemanlab.constants import (StabilityConstants, compute_mu, random_admissible_tuples, select_beta,
                                   select_N_eps, select_s_and_theta)


def test_select_n_eps():
    assert select_N_eps(4.0, 1.0, 4.0) == (5, 1.0, 5.0)
    N, eps_tilde, delta2 = select_N_eps(0.1, 0.5, 0.6)
    assert N == 2
    assert delta2 == pytest.approx(2 * eps_tilde)
    with pytest.raises(carlemanlab.ParameterError):
        select_N_eps(4.0, 1.0, 4.0, horizon=8.0)
    with pytest.raises(carlemanlab.ParameterError):
        select_N_eps(1.0, 2.0, 1.0)
    with pytest.raises(carlemanlab.ParameterError):
        select_N_eps(0.0, 1.0, 2.0)


def test_random_tuples_are_admissible():
    rng = np.random.default_rng(0)
    for d0, d1, eps in random_admissible_tuples(rng, 200):
        N, eps_tilde, delta2 = select_N_eps(eps, d0, d1)
        assert N > d1 / d0
        base = StabilityConstants(mode="continuation", psi_mode="square", lam=1.0, d0=d0, d1=d1, d_sup=d1,
                                  eps=eps, eps_tilde=eps_tilde, delta2=delta2)
        beta, (lower, upper) = select_beta(base)
        assert lower < beta < upper
        mu1, mu2, mu0 = compute_mu(1.0, base, beta)
        assert mu0 > 0
        assert mu2 >= 1.0


def test_select_s_and_theta():
    choice = select_s_and_theta(10.0, 0.1, 3.0, 1.0)
    assert choice.case == 1
    assert choice.theta == pytest.approx(0.25)
    assert choice.s == pytest.approx(2.0 / 4.0 * math.log(100.0))

    floor = select_s_and_theta(10.0, 0.0, 3.0, 1.0)
    assert math.isinf(floor.s)
    assert floor.bound == 0.0

    large = select_s_and_theta(1.0, 2.0, 3.0, 1.0)
    assert large.case == 2
    assert large.s == 1.0

    with pytest.raises(carlemanlab.ParameterError):
        select_s_and_theta(1.0, 0.5, 0.0, 1.0)
    with pytest.raises(carlemanlab.ParameterError):
        select_s_and_theta(1.0, -0.5, 1.0, 1.0)


def test_stability_constants(domain: carlemanlab.DomainSpec, weight: carlemanlab.WeightFunction):
    constants = carlemanlab.stability_constants(domain, weight, "continuation")
    assert constants.N >= 2
    assert constants.delta2 == pytest.approx(0.5 * domain.delta)
    lower, upper = constants.beta_interval
    assert lower < constants.beta < upper
    assert constants.mu0 > 0
    assert constants.mu0 == pytest.approx(constants.mu1 - constants.mu2)

    inverse = carlemanlab.stability_constants(domain, weight, "inverse_source")
    assert inverse.eps1 == pytest.approx(0.5 * inverse.d0)
    assert inverse.beta == pytest.approx(1.5 * (inverse.d_sup - inverse.eps1) / domain.delta ** 2)
    assert inverse.mu0 > 0

    with_c = constants.with_carleman_constant(2.0)
    assert with_c.theta == pytest.approx(constants.mu0 / (2.0 + constants.mu0))
    with pytest.raises(carlemanlab.ParameterError):
        constants.with_carleman_constant(0.0)
    with pytest.raises(ValueError):
        carlemanlab.stability_constants(domain, weight, "forward")


def _worked_constants(lam=1.0):
    return StabilityConstants(mode="continuation", psi_mode="square", lam=lam, d0=1.0, d1=4.0, d_sup=4.0, eps=4.0,
                              eps_tilde=1.0, delta2=5.0)


def test_worked_constants():
    beta, (lower, upper) = select_beta(_worked_constants())
    assert lower == pytest.approx(0.125, abs=1e-9)
    assert upper == pytest.approx(1.0, abs=1e-9)
    assert beta == pytest.approx(0.5625, abs=1e-9)

    mu1, mu2, mu0 = compute_mu(1.0, _worked_constants(), beta=0.5)
    assert mu1 == pytest.approx(math.exp(0.5), abs=1e-9)
    assert mu2 == 1.0
    assert mu0 == pytest.approx(0.6487212707, abs=1e-9)
    assert compute_mu(2.0, _worked_constants(2.0), beta=0.5)[2] > mu0

    assert select_s_and_theta(10.0, 0.1, mu0, mu0).theta == pytest.approx(0.5, abs=1e-9)
    assert select_s_and_theta(math.e, 1.0, 0.5, 0.5).s == pytest.approx(2.0, abs=1e-9)
