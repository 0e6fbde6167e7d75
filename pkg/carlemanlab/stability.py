"""
Empirical Hölder stability: reconstruction error against data size over a noise sweep.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .constants import select_s_and_theta
from .data import data_size, generate_cauchy_data
from .helper import ensure_directory, write_csv, write_json
from .reconstruction import QRProblem, reconstruct

logger = logging.getLogger(__name__)

MIN_LEVELS = 4
MIN_DECADES = 2.0


@dataclass(frozen=True)
class StabilityRun:
    sigma: float
    seed: int
    data_size: float
    s: float
    clipped: bool
    error: float
    relative_l2: float
    converged: bool

    def row(self) -> list:
        return [self.sigma, self.seed, self.data_size, self.s, self.clipped, self.error, self.relative_l2,
                self.converged]


@dataclass
class StabilityStudy:
    runs: List[StabilityRun]
    theta_hat: float
    theta_band: Tuple[float, float]
    theta_predicted: float
    carleman_constant: float
    mu0: float
    bound: float
    monotone: bool
    flags: Dict[str, object] = field(default_factory=dict)

    HEADER = ["sigma", "seed", "data_size", "s", "s_clipped", "error", "relative_l2", "converged"]

    def __repr__(self):
        return '<stability study theta={:.3g} predicted={:.3g}>'.format(self.theta_hat, self.theta_predicted)

    def levels(self) -> List[Tuple[float, float, float, float]]:
        """Per noise level: (sigma, mean D, mean error, error spread over seeds)."""
        out = []
        for sigma in sorted({r.sigma for r in self.runs}, reverse=True):
            group = [r for r in self.runs if r.sigma == sigma]
            errors = np.array([r.error for r in group])
            out.append((sigma, float(np.mean([r.data_size for r in group])), float(errors.mean()),
                        float(errors.max() - errors.min())))
        return out

    def summary(self) -> dict:
        return {
            "theta_hat": self.theta_hat,
            "theta_band": list(self.theta_band),
            "theta_predicted": self.theta_predicted,
            "carleman_constant": self.carleman_constant,
            "mu0": self.mu0,
            "bound": self.bound,
            "monotone": self.monotone,
            "levels": [list(level) for level in self.levels()],
            "flags": self.flags,
        }

    def save(self, directory: Union[str, Path], stem: str = "stability") -> Path:
        directory = ensure_directory(directory)
        write_csv(directory / "{}.csv".format(stem), self.HEADER, [r.row() for r in self.runs])
        write_json(directory / "{}.json".format(stem), self.summary())
        return directory


def check_noise_levels(sigmas: Sequence[float]) -> List[float]:
    """
    Validate a noise sweep: strictly decreasing, at least four positive levels spanning two decades, and
    optionally a final σ = 0 floor run.

    :return: The positive levels
    """
    sigmas = [float(s) for s in sigmas]
    if any(s < 0 for s in sigmas):
        raise ValueError("noise levels must be nonnegative")
    if any(b >= a for a, b in zip(sigmas, sigmas[1:])):
        raise ValueError("noise levels must be strictly decreasing")
    positive = [s for s in sigmas if s > 0]
    if len(positive) < MIN_LEVELS:
        raise ValueError("a sweep needs at least {} positive noise levels".format(MIN_LEVELS))
    if math.log10(positive[0] / positive[-1]) < MIN_DECADES - 1e-9:
        raise ValueError("noise levels must span at least {} decades".format(MIN_DECADES))
    return positive


def fit_exponent(sizes: Sequence[float], errors: Sequence[float]) -> Tuple[float, Tuple[float, float]]:
    """
    Least-squares slope of log error against log D with a ±2·stderr band.

    :Example:

    >>> round(fit_exponent([1e-2, 1e-3, 1e-4, 1e-5], [1e-1, 10 ** -1.5, 1e-2, 10 ** -2.5])[0], 6)
    0.5
    """
    x = np.log(np.asarray(sizes, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    if len(x) < 4:
        raise ValueError("need at least four points for a slope with a band")
    coefficients, cov = np.polyfit(x, y, 1, cov=True)
    slope = float(coefficients[0])
    stderr = math.sqrt(max(float(cov[0, 0]), 0.0))
    return slope, (slope - 2.0 * stderr, slope + 2.0 * stderr)


def _monotone(levels) -> bool:
    positive = [level for level in levels if level[0] > 0]
    for (_, _, e0, band0), (_, _, e1, band1) in zip(positive, positive[1:]):
        if e1 > e0 + band0 + band1 + 1e-14:
            return False
    return True


def stability_sweep(template: QRProblem, solution, sigmas: Sequence[float], seeds: Sequence[int] = (0, 1, 2),
                    carleman_constant: float = 1.0, mu0: float = 1.0, bound: Optional[float] = None,
                    s_limits: Tuple[float, float] = (0.1, 1.0), window: Optional[float] = None) -> StabilityStudy:
    """
    Reconstruct from noisy data at every (σ, seed) and fit the Hölder exponent.

    The Carleman parameter of each run follows the balancing rule s = 2 ln(M/D)/(C+μ₀), clipped to
    ``s_limits``; the σ = 0 floor run uses the upper limit and stays out of the fit.

    :param template: Problem supplying domain, weight, tier and solver settings
    :param solution: Manufactured solution generating the data
    :param sigmas: Strictly decreasing noise levels, optionally ending with 0
    :param seeds: Noise seeds per level
    :param carleman_constant: Empirical Ĉ
    :param mu0: μ₀ of the continuation constants
    :param bound: A-priori bound M, default the data's own M
    :param s_limits: Range of s
    :param window: Evaluation window of the error
    :return: StabilityStudy
    """
    positive = check_noise_levels(sigmas)
    if not seeds:
        raise ValueError("need at least one seed")
    lo, hi = s_limits
    if not 0 < lo <= hi:
        raise ValueError("need 0 < s_min <= s_max")
    domain = template.domain
    tier = template.dataset.tier
    runs = []
    clipped_any = False
    bound_used = bound
    for sigma in sigmas:
        for seed in seeds:
            data = generate_cauchy_data(solution, domain, tier=tier, sigma=sigma, seed=seed)
            D = data_size(data)
            M = bound if bound is not None else data.bounds["M"]
            bound_used = M
            if D > 0:
                choice = select_s_and_theta(M, D, carleman_constant, mu0)
                s = min(max(choice.s, lo), hi)
                clipped = s != choice.s
            else:
                s, clipped = hi, False
            clipped_any = clipped_any or clipped
            result = reconstruct(template.replace(dataset=data, s=s), truth=data.truth, window=window)
            runs.append(StabilityRun(float(sigma), int(seed), D, s, clipped, result.errors["h11"],
                                     result.errors["relative_l2"], result.converged))
            logger.info("sweep sigma=%g seed=%d: D=%.3g s=%.3g error=%.4g", sigma, seed, D, s,
                        result.errors["h11"])

    fitted = [r for r in runs if r.sigma > 0 and r.data_size > 0 and r.error > 0]
    theta_hat, band = fit_exponent([r.data_size for r in fitted], [r.error for r in fitted])
    theta_predicted = mu0 / (carleman_constant + mu0)
    study = StabilityStudy(runs, theta_hat, band, theta_predicted, carleman_constant, mu0,
                           float(bound_used), True)
    study.monotone = _monotone(study.levels())
    study.flags = {
        "monotone": study.monotone,
        "s_clipped": clipped_any,
        "all_converged": all(r.converged for r in runs),
        "levels_fitted": len(positive),
        "floor_included": len(positive) < len(sigmas),
    }
    if not study.monotone:
        logger.warning("errors are not monotone in the noise level beyond the seed spread")
    logger.info("stability: theta_hat=%.4g in (%.4g, %.4g), predicted %.4g", theta_hat, band[0], band[1],
                theta_predicted)
    return study
