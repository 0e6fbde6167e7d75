"""
The place for fixtures
"""
import pytest
import carlemanlab


@pytest.fixture(scope="session")
def domain():
    return carlemanlab.build_domain("rect2d_right_edge", 16, n_t=9)


@pytest.fixture(scope="session")
def weight(domain):
    return carlemanlab.weight_for_domain(domain, lam=2.0, beta=1.0)


@pytest.fixture(scope="session")
def small_domain():
    return carlemanlab.build_domain("rect2d_right_edge", 12, n_t=7)


@pytest.fixture(scope="session")
def small_weight(small_domain):
    return carlemanlab.weight_for_domain(small_domain, lam=2.0, beta=1.0)
