"""
Monte Carlo engine: genealogies and the estimators built on model draws.

Every estimator maps one replicate to a small per-replicate record through a
module-level function (so it pickles into worker processes) and reduces the
records with montecarlo.EstimateWithError.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import partial
from typing import NamedTuple, Sequence

import numpy as np
from opentelemetry import trace

from core.montecarlo import EstimateWithError, run_replicates
from core.partitions import Partition, coagulate, enumerate_partitions
from core.population_models import (
    BottleneckModel,
    ExplicitModel,
    ModelSpec,
    WeightVector,
    awf_view,
    bottleneck_cn_decomposition,
    exact_transition,
    increment,
    model_draw,
    model_weights,
    pair_merge_probability,
    power_sum,
)

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

MAX_TRANSITION_N = 5
MAX_MOMENT_EXPONENT = 8
MAX_GENERATIONS = 1_000_000
HORIZON_CN_REPLICATES = 2_000
MODEL_DRAWS_STREAM = "model-draws"


@dataclass(frozen=True)
class SimulationSpec:
    """A genealogy experiment: model, population size N, sample size n and the horizon."""

    model: ModelSpec
    N: int
    n: int
    replicates: int
    seed: int
    horizon: int | None = None
    t_max: float | None = None

    def __post_init__(self):
        if not 1 <= self.n <= self.N:
            raise ValueError(f"sample size must satisfy 1 <= n <= N, got n={self.n}, N={self.N}")
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if self.horizon is not None and self.horizon < 0:
            raise ValueError(f"horizon must be non-negative, got {self.horizon}")
        if self.t_max is not None and not self.t_max > 0.0:
            raise ValueError(f"t_max must be positive, got {self.t_max}")
        if self.horizon is not None and self.t_max is not None:
            raise ValueError("give either a generation horizon or a rescaled t_max, not both")


@dataclass(frozen=True)
class GenealogyTrajectory:
    """(generation, partition) steps from 0_n; ``absorbed`` once a single block is reached."""

    steps: tuple[tuple[int, Partition], ...]
    absorbed: bool

    @property
    def absorption_time(self) -> int | None:
        return self.steps[-1][0] if self.absorbed else None

    @property
    def final(self) -> Partition:
        return self.steps[-1][1]


def simulate_genealogy(
    spec: SimulationSpec, rng: np.random.Generator, horizon: int | None = None, thin: bool = False
) -> GenealogyTrajectory:
    """
    Pi_t = Coag(Pi_{t-1}, increment_t), one representative child per current block.

    Each generation draws fresh model randomness. ``thin`` keeps only the
    generations where the partition changed.
    """
    limit = horizon if horizon is not None else (spec.horizon if spec.horizon is not None else MAX_GENERATIONS)
    current = Partition.singletons(spec.n)
    steps = [(0, current)]
    generation = 0
    while current.n_blocks > 1 and generation < limit:
        generation += 1
        draw = model_draw(spec.model, spec.N, rng)
        updated = coagulate(current, increment(draw, current.n_blocks, rng))
        if not thin or updated != current:
            steps.append((generation, updated))
        current = updated
    if thin and steps[-1][0] != generation:
        steps.append((generation, current))
    return GenealogyTrajectory(steps=tuple(steps), absorbed=current.n_blocks == 1)


def exact_cn(model: ModelSpec, N: int) -> float | None:
    """c_N when it needs no Monte Carlo, else None."""
    if isinstance(model, ExplicitModel):
        draw = model.weight_vector(N) if model.is_awf else model.offspring_vector(N)
        return pair_merge_probability(draw)
    if isinstance(model, BottleneckModel):
        return bottleneck_cn_decomposition(model, N).c_hat
    return None


def resolve_horizon(spec: SimulationSpec) -> int | None:
    """Generations to simulate; a rescaled t_max becomes ceil(t_max / c_N)."""
    if spec.t_max is None:
        return spec.horizon
    cn = exact_cn(spec.model, spec.N)
    if cn is None:
        cn = estimate_cn(spec.model, spec.N, HORIZON_CN_REPLICATES, spec.seed).formula.value
    if not cn > 0.0:
        raise ValueError("t_max needs c_N > 0 to convert to generations")
    horizon = math.ceil(spec.t_max / cn)
    logger.info("t_max=%g with c_N=%.6g gives a horizon of %d generations", spec.t_max, cn, horizon)
    return horizon


def simulate(spec: SimulationSpec, thin: bool = False) -> list[GenealogyTrajectory]:
    """All replicates of ``spec`` in replicate order."""
    with tracer.start_as_current_span("engine.simulate") as span:
        span.set_attribute("model", spec.model.kind)
        span.set_attribute("N", spec.N)
        span.set_attribute("n", spec.n)
        span.set_attribute("replicates", spec.replicates)
        horizon = resolve_horizon(spec)
        fn = partial(simulate_genealogy, spec, horizon=horizon, thin=thin)
        return run_replicates(fn, spec.replicates, spec.seed, "genealogy")


def absorption_times(spec: SimulationSpec) -> list[int | None]:
    return [trajectory.absorption_time for trajectory in simulate(spec, thin=True)]


class CnEstimate(NamedTuple):
    """
    formula: mean conditional pair-merge probability of the drawn weights or offspring
    empirical: frequency with which two sampled children share a parent
    awf_view: mean of sum (nu_i/sigma)^2, the frequency-vector pair probability (equals formula for AWF models)
    zscore: paired z-score of formula - empirical
    """

    formula: EstimateWithError
    empirical: EstimateWithError
    awf_view: EstimateWithError
    zscore: float


def _cn_sample(model: ModelSpec, N: int, rng: np.random.Generator) -> tuple[float, float, float]:
    draw = model_draw(model, N, rng)
    exact = pair_merge_probability(draw)
    frequency = exact if isinstance(draw, WeightVector) else power_sum(awf_view(draw), 2)
    merged = float(increment(draw, 2, rng).n_blocks == 1)
    return exact, merged, frequency


def estimate_cn(model: ModelSpec, N: int, replicates: int, seed: int) -> CnEstimate:
    with tracer.start_as_current_span("engine.estimate_cn") as span:
        span.set_attribute("model", model.kind)
        span.set_attribute("N", N)
        span.set_attribute("replicates", replicates)
        samples = np.array(run_replicates(partial(_cn_sample, model, N), replicates, seed, MODEL_DRAWS_STREAM))
    formula = EstimateWithError.from_samples(samples[:, 0])
    empirical = EstimateWithError.from_samples(samples[:, 1])
    difference = EstimateWithError.from_samples(samples[:, 0] - samples[:, 1])
    zscore = difference.zscore(0.0)
    logger.debug("c_N at N=%d: formula %.6g, empirical %.6g (z=%.2f)", N, formula.value, empirical.value, zscore)
    return CnEstimate(
        formula=formula,
        empirical=empirical,
        awf_view=EstimateWithError.from_samples(samples[:, 2]),
        zscore=zscore,
    )


def _transition_sample(
    model: ModelSpec, N: int, states: tuple[Partition, ...], raw: bool, rng: np.random.Generator
) -> np.ndarray:
    draw = model_draw(model, N, rng)
    if raw:
        observed = increment(draw, states[0].n, rng)
        return np.array([float(pi == observed) for pi in states])
    return np.array([exact_transition(draw, pi) for pi in states])


def transition_samples(
    model: ModelSpec, N: int, n: int, replicates: int, seed: int, raw: bool = False
) -> tuple[tuple[Partition, ...], np.ndarray]:
    """Per-replicate transition probabilities (or raw indicators) over the partitions of {1..n}."""
    if not 1 <= n <= MAX_TRANSITION_N:
        raise ValueError(f"estimate_transition supports 1 <= n <= {MAX_TRANSITION_N}, got {n}")
    states = tuple(enumerate_partitions(n))
    stream = "transition-raw" if raw else "transition"
    with tracer.start_as_current_span("engine.estimate_transition") as span:
        span.set_attribute("model", model.kind)
        span.set_attribute("N", N)
        span.set_attribute("n", n)
        span.set_attribute("raw", raw)
        fn = partial(_transition_sample, model, N, states, raw)
        return states, np.array(run_replicates(fn, replicates, seed, stream))


def estimate_transition(
    model: ModelSpec, N: int, n: int, replicates: int, seed: int, raw: bool = False
) -> dict[Partition, EstimateWithError]:
    """
    P(increment = pi) for every partition of {1..n}.

    By default each replicate contributes the exact conditional probability
    given its weight draw; ``raw`` counts sampled increments instead.
    """
    states, samples = transition_samples(model, N, n, replicates, seed, raw)
    return {pi: EstimateWithError.from_samples(samples[:, j]) for j, pi in enumerate(states)}


class WeightMoments(NamedTuple):
    first: EstimateWithError
    rest: EstimateWithError
    total: EstimateWithError


def _moment_sample(model: ModelSpec, N: int, exponents: tuple[float, ...], rng: np.random.Generator) -> np.ndarray:
    w = model_weights(model, N, rng)
    row = []
    for b in exponents:
        first = w[0] ** b
        rest = power_sum(w[1:], b) if w.size > 1 else 0.0
        row.extend((first, rest, power_sum(w, b)))
    return np.array(row)


def weight_moment_samples(
    model: ModelSpec, N: int, exponents: Sequence[float], replicates: int, seed: int
) -> np.ndarray:
    """
    Per-replicate (eta_1^b, sum_{i>=2} eta_i^b, sum_i eta_i^b) for each b, flattened.

    Draws come from the same stream as estimate_cn, so sum eta_i^2 matches its
    per-replicate values bit for bit.
    """
    exponents = tuple(float(b) for b in exponents)
    if any(b < 1 for b in exponents):
        raise ValueError(f"moment exponents must be >= 1, got {exponents}")
    fn = partial(_moment_sample, model, N, exponents)
    return np.array(run_replicates(fn, replicates, seed, MODEL_DRAWS_STREAM))


def estimate_weight_moments(
    model: ModelSpec, N: int, b_list: Sequence[int], replicates: int, seed: int
) -> dict[int, WeightMoments]:
    """E[eta_1^b], E[sum_{i>=2} eta_i^b] and E[sum_i eta_i^b] for b in b_list (a subset of 2..8)."""
    b_list = tuple(int(b) for b in b_list)
    if not b_list or any(not 2 <= b <= MAX_MOMENT_EXPONENT for b in b_list):
        raise ValueError(f"b_list must be a non-empty subset of 2..{MAX_MOMENT_EXPONENT}, got {b_list}")
    with tracer.start_as_current_span("engine.estimate_weight_moments") as span:
        span.set_attribute("model", model.kind)
        span.set_attribute("N", N)
        span.set_attribute("replicates", replicates)
        samples = weight_moment_samples(model, N, b_list, replicates, seed)
    table = {}
    for j, b in enumerate(b_list):
        table[b] = WeightMoments(*(EstimateWithError.from_samples(samples[:, 3 * j + k]) for k in range(3)))
    return table
