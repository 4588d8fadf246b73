import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from doeflow.analysis.model_matrix import Dataset, ModelTerm, build_model_matrix
from doeflow.analysis.regression import f_test, regression
from doeflow.common.checks import AnalysisError
from doeflow.common.util import mix, numpy_generator
from doeflow.design_gen.aliasing import term_column
from doeflow.design_gen.design import Design

logger = logging.getLogger(__name__)

MIN_SIMULATIONS = 100
# Two-sided 95% normal quantile for the binomial confidence half-width.
Z_95 = 1.96


@dataclass(frozen=True)
class PowerEstimate:
    power: float
    half_width_95: float
    n_sims: int
    target: str
    replicates: int = 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            "target": self.target,
            "power": self.power,
            "half_width_95": self.half_width_95,
            "n_sims": self.n_sims,
            "replicates": self.replicates,
        }


def _basis(x: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the column space of `x`."""
    if x.shape[1] == 0:
        return np.zeros((x.shape[0], 0))
    u, s, _ = np.linalg.svd(x, full_matrices=False)
    tolerance = max(x.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    return u[:, : int(np.sum(s > tolerance))]


def _residual_ss(basis: np.ndarray, y: np.ndarray) -> float:
    residual = y - basis @ (basis.T @ y)
    return float(np.dot(residual, residual))


def simulate_power(
    mean: np.ndarray,
    fit_blocks: Sequence[np.ndarray],
    target_index: int,
    noise_sd: float,
    alpha: float,
    n_sims: int,
    seed: int,
) -> Tuple[float, float]:
    """Monte Carlo rejection rate of the sequential F test of one model term.

    # Parameters

    mean : `np.ndarray`
        Noise-free response per run.
    fit_blocks : `Sequence[np.ndarray]`
        Column blocks of the fitted terms, in order; an intercept is added in front.
    target_index : `int`
        The block whose F test is counted.
    noise_sd : `float`
    alpha : `float`
    n_sims : `int`
    seed : `int`
        Simulation `i` draws its noise from a generator seeded with `mix(seed, i)`, so the
        estimate does not depend on how simulations are scheduled.

    # Returns

    `(power, half_width_95)`
    """
    if n_sims < MIN_SIMULATIONS:
        raise AnalysisError(f"Power estimates need at least {MIN_SIMULATIONS} simulations")
    if noise_sd <= 0:
        raise AnalysisError(f"noise_sd must be positive, got {noise_sd}")
    n = mean.shape[0]
    columns = [np.ones((n, 1))] + [np.asarray(block, dtype=float) for block in fit_blocks]
    before = _basis(np.hstack(columns[: target_index + 1]))
    through = _basis(np.hstack(columns[: target_index + 2]))
    full = _basis(np.hstack(columns))
    df_target = through.shape[1] - before.shape[1]
    df_residual = n - full.shape[1]
    if df_target == 0:
        raise AnalysisError("The target term is aliased with the terms fitted before it")
    if df_residual < 1:
        raise AnalysisError(f"The fitted model leaves no residual degrees of freedom ({n} runs)")

    rejections = 0
    for i in range(n_sims):
        rng = numpy_generator(mix(seed, i))
        y = mean + rng.normal(0.0, noise_sd, n)
        rss_before = _residual_ss(before, y)
        rss_through = _residual_ss(through, y)
        rss_full = _residual_ss(full, y)
        deviations = y - y.mean()
        _, p = f_test(
            max(0.0, rss_before - rss_through),
            df_target,
            rss_full,
            df_residual,
            float(np.dot(deviations, deviations)),
        )
        rejections += p < alpha
    power = rejections / n_sims
    return power, Z_95 * math.sqrt(power * (1.0 - power) / n_sims)


def power_estimate(
    design: Design,
    effect: Mapping[str, float],
    noise_sd: float,
    alpha: float = 0.05,
    n_sims: int = 1000,
    seed: int = 0,
    target: Optional[str] = None,
    terms: Optional[Sequence[str]] = None,
    replicates: int = 1,
) -> PowerEstimate:
    """Probability that the ANOVA on `design` detects the `target` term at level `alpha`, when
    the response is `sum(effect[term] * column(term)) + N(0, noise_sd^2)`.

    # Parameters

    design : `Design`
    effect : `Mapping[str, float]`
        Planted coefficient per term of the coded design, such as `{"A": 1.5, "A:B": 0.5}`.
    noise_sd : `float`
    alpha : `float`, optional (default = `0.05`)
    n_sims : `int`, optional (default = `1000`)
    seed : `int`, optional (default = `0`)
    target : `str`, optional (default = `None`)
        The term whose rejections are counted; the first planted term by default.
    terms : `Sequence[str]`, optional (default = `None`)
        Terms of the fitted model after the intercept; the planted terms by default.
    replicates : `int`, optional (default = `1`)
        Each run of the design is repeated this many times.
    """
    if not effect:
        raise AnalysisError("At least one planted effect is needed")
    if replicates < 1:
        raise AnalysisError(f"replicates must be at least 1, got {replicates}")
    target = target if target is not None else next(iter(effect))
    fitted = list(terms) if terms is not None else list(effect)
    if target not in fitted:
        raise AnalysisError(f"Target term {target!r} is not among the fitted terms {fitted}")
    mean = np.zeros(design.n_runs)
    for term, coefficient in effect.items():
        mean = mean + coefficient * term_column(design, term)
    blocks = [np.tile(term_column(design, term), replicates)[:, None] for term in fitted]
    power, half_width = simulate_power(
        np.tile(mean, replicates),
        blocks,
        fitted.index(target),
        noise_sd,
        alpha,
        n_sims,
        seed,
    )
    logger.info(
        "Power to detect %s at alpha %.3g with %d replicate(s): %.3f +- %.3f",
        target,
        alpha,
        replicates,
        power,
        half_width,
    )
    return PowerEstimate(power, half_width, n_sims, target, replicates)


@dataclass(frozen=True)
class PowerFollowup:
    """For a factor the screening did not find significant: how likely the experiment was to
    detect its observed linear effect, and how many replicates would make that likely."""

    factor: str
    observed_effect: float
    noise_sd: float
    estimate: PowerEstimate
    target_power: float
    suggested_replicates: Optional[int]

    @property
    def underpowered(self) -> bool:
        return self.estimate.power < self.target_power

    def to_dict(self) -> Dict[str, Any]:
        return {
            "factor": self.factor,
            "observed_effect": self.observed_effect,
            "noise_sd": self.noise_sd,
            "power": self.estimate.to_dict(),
            "target_power": self.target_power,
            "underpowered": self.underpowered,
            "suggested_replicates": self.suggested_replicates,
        }


def low_power_followup(
    dataset: Dataset,
    factor: str,
    factors: Sequence[str],
    alpha: float = 0.05,
    target_power: float = 0.8,
    max_replicates: int = 16,
    n_sims: int = 1000,
    seed: int = 0,
) -> Optional[PowerFollowup]:
    """Power of the experiment, as run, to detect the observed linear effect of `factor`.

    The effect and the noise level are taken from a main-effects regression over `factors`, and
    the runs are re-simulated with that effect planted. If the power falls short of
    `target_power`, the smallest number of copies of the dataset's runs that reaches it (up to
    `max_replicates`) is suggested. Returns `None` when there is no noise to simulate.
    """
    terms = [ModelTerm.main(name) for name in factors]
    fit = regression(dataset, terms)
    noise_sd = math.sqrt(fit.ss_residual / fit.df_residual)
    if noise_sd <= 0:
        return None
    model = build_model_matrix(dataset, terms)
    blocks = [model.matrix[:, piece] for piece in model.term_slices]
    target_index = list(factors).index(factor)
    observed = fit.coefficient(model.labels[model.term_slices[target_index].start])
    planted = blocks[target_index][:, 0] * observed

    def estimate(copies: int) -> PowerEstimate:
        power, half_width = simulate_power(
            np.tile(planted, copies),
            [np.tile(block, (copies, 1)) for block in blocks],
            target_index,
            noise_sd,
            alpha,
            n_sims,
            seed,
        )
        return PowerEstimate(power, half_width, n_sims, factor, copies)

    current = estimate(1)
    suggested: Optional[int] = None
    if current.power < target_power:
        for copies in range(2, max_replicates + 1):
            if estimate(copies).power >= target_power:
                suggested = copies
                break
        logger.warning(
            "Power to detect %s is %.2f; %s",
            factor,
            current.power,
            f"{suggested} times the runs would reach {target_power}"
            if suggested
            else f"even {max_replicates} times the runs would not reach {target_power}",
        )
    return PowerFollowup(factor, observed, noise_sd, current, target_power, suggested)
