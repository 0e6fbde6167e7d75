"""
Stability constants of the continuation and inverse source arguments: N, ε̃, δ₂, the β interval,
μ₀ = μ₁ − μ₂ and the choice of the Carleman parameter s with the Hölder exponent θ.

All profile quantities (d0, d1, d_sup) are expressed in the active ψ-mode, i.e. they are bounds of ψ.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .domain import DomainSpec
from .exceptions import ParameterError
from .weight import WeightFunction

logger = logging.getLogger(__name__)

MODES = ("continuation", "inverse_source")


@dataclass(frozen=True)
class StabilityConstants:
    mode: str
    psi_mode: str
    lam: float
    d0: float
    d1: float
    d_sup: float
    N: Optional[int] = None
    eps: Optional[float] = None
    eps_tilde: Optional[float] = None
    delta2: Optional[float] = None
    eps1: Optional[float] = None
    delta: Optional[float] = None
    beta: Optional[float] = None
    beta_interval: Optional[Tuple[float, float]] = None
    mu1: Optional[float] = None
    mu2: Optional[float] = None
    mu0: Optional[float] = None
    carleman_constant: Optional[float] = None
    theta: Optional[float] = None

    def with_carleman_constant(self, c: float) -> "StabilityConstants":
        """
        Attach an (empirical) Carleman constant and the resulting Hölder exponent.

        :param c: Constant C > 0
        :return: New constants with theta = mu0 / (C + mu0)
        """
        if self.mu0 is None:
            raise ParameterError("mu0 is not computed yet")
        if not c > 0:
            raise ParameterError("Carleman constant must be positive")
        return replace(self, carleman_constant=float(c), theta=self.mu0 / (c + self.mu0))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class SChoice(NamedTuple):
    s: float
    theta: float
    bound: float
    case: int


def profile_bounds(domain: DomainSpec, weight: WeightFunction) -> Tuple[float, float, float]:
    """
    Bounds of ψ: minimum over the observation region, maximum over the closed domain.

    :param domain: The domain
    :param weight: Weight providing ψ
    :return: (d0, d1, d_sup)
    """
    psi = weight.psi(domain.points())
    d0 = float(psi[domain.observation].min())
    d1 = float(psi.max())
    return d0, d1, d1


def select_N_eps(eps: float, d0: float, d1: float, horizon: Optional[float] = None) -> Tuple[int, float, float]:
    """
    Choose the smallest integer N > d1/d0, then ε̃ = ε/(N−1) and δ₂ = Nε̃.

    :param eps: Time margin ε > 0
    :param d0: Lower bound of ψ on the observation region
    :param d1: Upper bound of ψ on the domain
    :param horizon: Length T of the time interval; δ₂ must stay below T/2
    :return: (N, eps_tilde, delta2)

    :Example:

    >>> select_N_eps(4.0, 1.0, 4.0)
    (5, 1.0, 5.0)
    """
    if not eps > 0:
        raise ParameterError("eps must be positive")
    if not (0 < d0 <= d1):
        raise ParameterError("need 0 < d0 <= d1, got d0={}, d1={}".format(d0, d1))
    ratio = d1 / d0
    N = max(2, int(math.floor(ratio)) + 1)
    eps_tilde = eps / (N - 1)
    delta2 = N * eps_tilde
    if horizon is not None and delta2 >= horizon / 2.0:
        raise ParameterError("eps too large for horizon T={}: delta2={} >= T/2".format(horizon, delta2))
    if not (d1 - d0) / (delta2 ** 2 - eps_tilde ** 2) < d0 / eps_tilde ** 2:
        raise ParameterError("empty beta interval for d0={}, d1={}, N={}".format(d0, d1, N))
    return N, eps_tilde, delta2


def select_beta(constants: StabilityConstants, mode: Optional[str] = None) -> Tuple[float, Tuple[float, float]]:
    """
    Deterministic choice of β.

    continuation mode: midpoint of ((d1−d0)/(δ₂²−ε̃²), d0/ε̃²).
    inverse-source mode: 1.5 × (d_sup − ε₁)/δ², so that ε₁ > d_sup − βδ² holds strictly.

    :param constants: Constants with the fields the mode needs
    :param mode: "continuation" or "inverse_source", default the constants' mode
    :return: (beta, admissible open interval)
    """
    mode = mode or constants.mode
    if mode == "continuation":
        c = constants
        if None in (c.eps_tilde, c.delta2):
            raise ParameterError("continuation mode needs eps_tilde and delta2")
        if c.delta2 <= c.eps_tilde:
            raise ParameterError("delta2 must exceed eps_tilde")
        lower = (c.d1 - c.d0) / (c.delta2 ** 2 - c.eps_tilde ** 2)
        upper = c.d0 / c.eps_tilde ** 2
        if not lower < upper:
            raise ParameterError("empty beta interval ({}, {})".format(lower, upper))
        return 0.5 * (lower + upper), (lower, upper)
    if mode == "inverse_source":
        c = constants
        if None in (c.eps1, c.delta):
            raise ParameterError("inverse-source mode needs eps1 and delta")
        threshold = (c.d_sup - c.eps1) / c.delta ** 2
        beta = 1.5 * threshold
        if not beta > 0:
            raise ParameterError("eps1={} leaves no positive beta (d_sup={})".format(c.eps1, c.d_sup))
        return beta, (threshold, math.inf)
    raise ValueError("mode must be one of {}".format(MODES))


def compute_mu(lam: float, constants: StabilityConstants, beta: Optional[float] = None) -> Tuple[float, float, float]:
    """
    μ₁, μ₂ and μ₀ = μ₁ − μ₂.

    continuation: μ₁ = exp(λ(d0 − βε̃²)), μ₂ = max{1, exp(λ(d1 − βδ₂²))}.
    inverse_source: μ₁ = exp(λε₁), μ₂ = max{1, exp(λ(d_sup − βδ²))}.

    :param lam: λ
    :param constants: Constants of either mode
    :param beta: β, default the constants' β
    :return: (mu1, mu2, mu0)
    :raises ParameterError: if μ₀ <= 0
    """
    beta = constants.beta if beta is None else beta
    if beta is None:
        raise ParameterError("beta is required")
    c = constants
    if c.mode == "continuation":
        mu1 = math.exp(lam * (c.d0 - beta * c.eps_tilde ** 2))
        mu2 = max(1.0, math.exp(lam * (c.d1 - beta * c.delta2 ** 2)))
    else:
        mu1 = math.exp(lam * c.eps1)
        mu2 = max(1.0, math.exp(lam * (c.d_sup - beta * c.delta ** 2)))
    mu0 = mu1 - mu2
    if not mu0 > 0:
        raise ParameterError("inconsistent parameter set: mu0 = {} <= 0".format(mu0))
    return mu1, mu2, mu0


def select_s_and_theta(M: float, D: float, C: float, mu0: float) -> SChoice:
    """
    Balance M²e^{−sμ₀} against D²e^{Cs}.

    Case 1 (D < M): s = 2 ln(M/D)/(C+μ₀), bound 2C·M^{2C/(C+μ₀)}·D^{2θ}.
    Case 2 (D >= M): s = 1, bound C·D²·(e^{−μ₀} + e^{C}).

    :param M: A-priori bound
    :param D: Data size
    :param C: Carleman constant
    :param mu0: μ₀
    :return: SChoice(s, theta, bound, case)
    """
    if not (M > 0 and C > 0 and mu0 > 0):
        raise ParameterError("need M, C, mu0 > 0")
    if D < 0:
        raise ParameterError("data size must be nonnegative")
    theta = mu0 / (C + mu0)
    if D == 0:
        return SChoice(math.inf, theta, 0.0, 1)
    if D < M:
        s = 2.0 / (C + mu0) * math.log(M / D)
        bound = 2.0 * C * M ** (2.0 * C / (C + mu0)) * D ** (2.0 * theta)
        return SChoice(s, theta, bound, 1)
    return SChoice(1.0, theta, C * D ** 2 * (math.exp(-mu0) + math.exp(C)), 2)


def stability_constants(domain: DomainSpec, weight: WeightFunction, mode: str = "continuation",
                        eps: Optional[float] = None, eps1: Optional[float] = None) -> StabilityConstants:
    """
    Compute every constant of a mode for a domain and weight (the weight's β is ignored and replaced by
    the selected one).

    :param domain: The domain
    :param weight: Weight providing λ and ψ
    :param mode: "continuation" (continuation) or "inverse_source" (inverse source)
    :param eps: Time margin for continuation, default so that δ₂ = δ/2
    :param eps1: Level ε₁ for the inverse-source mode, default d0/2
    :return: StabilityConstants
    """
    d0, d1, d_sup = profile_bounds(domain, weight)
    base = StabilityConstants(mode=mode, psi_mode=weight.psi_mode, lam=weight.lam, d0=d0, d1=d1, d_sup=d_sup)
    if mode == "continuation":
        if eps is None:
            N = max(2, int(math.floor(d1 / d0)) + 1)
            eps = 0.5 * domain.delta * (N - 1) / N
        N, eps_tilde, delta2 = select_N_eps(eps, d0, d1, horizon=2.0 * domain.delta)
        base = replace(base, N=N, eps=eps, eps_tilde=eps_tilde, delta2=delta2, delta=domain.delta)
    elif mode == "inverse_source":
        eps1 = 0.5 * d0 if eps1 is None else eps1
        base = replace(base, eps1=eps1, delta=domain.delta)
    else:
        raise ValueError("mode must be one of {}".format(MODES))
    beta, interval = select_beta(base, mode)
    mu1, mu2, mu0 = compute_mu(weight.lam, base, beta)
    logger.info("constants (%s): d0=%.4g d1=%.4g N=%s beta=%.4g in (%.4g, %.4g) mu0=%.4g",
                mode, d0, d1, base.N, beta, interval[0], interval[1], mu0)
    return replace(base, beta=beta, beta_interval=interval, mu1=mu1, mu2=mu2, mu0=mu0)


def random_admissible_tuples(rng: np.random.Generator, count: int):
    """
    Random (d0, d1, eps) tuples for sweeps over the constant calculators.

    :param rng: Seeded generator
    :param count: Number of tuples
    :return: List of (d0, d1, eps)
    """
    tuples = []
    for _ in range(count):
        d0 = float(rng.uniform(0.05, 2.0))
        d1 = d0 * float(rng.uniform(1.0, 20.0))
        eps = float(rng.uniform(0.01, 5.0))
        tuples.append((d0, d1, eps))
    return tuples
