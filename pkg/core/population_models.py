"""
Population models as one-generation samplers plus exact finite-N transitions.

Two reproduction mechanisms are covered. Asymmetric Wright-Fisher (AWF)
models draw a weight vector eta and let each child pick its parent
independently from it. Asymmetric Cannings (AC) models draw an offspring
vector nu, and children are sampled without replacement among the
sigma = sum(nu) offspring slots.

Model families:
    wright_fisher / explicit   fixed weights or a fixed offspring vector
    eldon_wakeley              one reproducer replaces a fraction Y of the population (AC)
    bottleneck                 with probability sum F / a_N only k survivors reproduce (AWF)
    pd_power                   eta_i proportional to V_i^gamma for PD(alpha, theta) picks (AWF)
    exponential                the exponential selection model, via its PD representation
                               or the direct Poisson point process sampler (AWF)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import ClassVar, Literal, NamedTuple, Union

import numpy as np
from scipy import integrate, optimize, special

from core.coag_measures import BetaMeasure, PointMassMeasure
from core.partitions import Partition, distinct_injection_sum, enumerate_partitions, group_by_parent
from core.pd_analysis import stick_breaking
from core.special_fn import PDParams, em_model_params

logger = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-10
MAX_EXACT_TRANSITION_N = 8
EW_GRID_POINTS = 257
EW_XTOL = 1e-10
EM_TAIL_TOLERANCE = 1e-6
EM_TRUNCATION_FACTOR = 10
SCALING_WARN_RATIO = 0.1


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Parent-choice probabilities eta_1..eta_N, renormalized on construction."""

    eta: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.eta, dtype=float).reshape(-1)
        if w.size == 0:
            raise ValueError("a weight vector needs N >= 1 entries")
        if not np.all(np.isfinite(w)) or np.any(w < 0.0):
            raise ValueError("weights must be finite and non-negative")
        total = math.fsum(w.tolist())
        if not total > 0.0:
            raise ValueError("weights must have a positive sum")
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            logger.debug("renormalizing weights with sum %r", total)
        w = w / total
        w.setflags(write=False)
        object.__setattr__(self, "eta", w)

    @classmethod
    def uniform(cls, N: int) -> WeightVector:
        return cls(np.full(N, 1.0 / N))

    @property
    def N(self) -> int:
        return int(self.eta.size)


@dataclass(frozen=True, eq=False)
class OffspringVector:
    """Offspring numbers nu_1..nu_N with total sigma >= N."""

    nu: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.nu).reshape(-1)
        v = raw.astype(np.int64)
        if raw.size == 0:
            raise ValueError("an offspring vector needs N >= 1 entries")
        if np.any(v != raw) or np.any(v < 0):
            raise ValueError("offspring numbers must be non-negative integers")
        if int(v.sum()) < v.size:
            raise ValueError(f"total offspring {int(v.sum())} is below the population size {v.size}")
        v.setflags(write=False)
        object.__setattr__(self, "nu", v)

    @property
    def N(self) -> int:
        return int(self.nu.size)

    @property
    def sigma(self) -> int:
        return int(self.nu.sum())


class SizeBiasedSequence(NamedTuple):
    s: np.ndarray
    order: np.ndarray


@dataclass(frozen=True)
class ExplicitModel:
    """A fixed weight vector or a fixed offspring vector, zero-padded to N."""

    kind: ClassVar[str] = "explicit"

    weights: tuple[float, ...] | None = None
    offspring: tuple[int, ...] | None = None
    uniform: bool = False

    def __post_init__(self):
        given = sum(x is not None for x in (self.weights, self.offspring)) + int(self.uniform)
        if given != 1:
            raise ValueError("explicit model needs exactly one of weights, offspring or uniform")

    @property
    def is_awf(self) -> bool:
        return self.offspring is None

    def _padded(self, values: tuple, N: int) -> np.ndarray:
        if len(values) > N:
            raise ValueError(f"explicit vector has {len(values)} entries but N={N}")
        return np.concatenate((np.asarray(values, dtype=float), np.zeros(N - len(values))))

    def weight_vector(self, N: int) -> WeightVector:
        if self.uniform:
            return WeightVector.uniform(N)
        return WeightVector(self._padded(self.weights, N))

    def offspring_vector(self, N: int) -> OffspringVector:
        return OffspringVector(self._padded(self.offspring, N).astype(np.int64))


@dataclass(frozen=True)
class EldonWakeleyModel:
    """One reproducer per generation replaces floor(Y N) individuals; Y ~ y^{-2} Lambda(dy) on y > N^{(eps-1)/2}."""

    kind: ClassVar[str] = "eldon_wakeley"
    is_awf: ClassVar[bool] = False

    base: PointMassMeasure | BetaMeasure
    epsilon: float

    def __post_init__(self):
        if not isinstance(self.base, (PointMassMeasure, BetaMeasure)):
            raise ValueError("Eldon-Wakeley base measure must be point masses or a Beta measure")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    def threshold(self, N: int) -> float:
        return N ** ((self.epsilon - 1.0) / 2.0)


@dataclass(frozen=True)
class BottleneckModel:
    """
    With probability sum_{k<=b_N} F(k)/a_N the generation passes through a
    bottleneck of k survivors (drawn with probability proportional to F(k))
    whose frequencies follow ``nu_bar``; otherwise parents are chosen by eta_hat.
    """

    kind: ClassVar[str] = "bottleneck"
    is_awf: ClassVar[bool] = True

    a_exp: float
    b_exp: float
    f_pairs: tuple[tuple[int, float], ...] | None = None
    f_power: tuple[float, float] | None = None
    nu_bar: Literal["uniform", "dirichlet"] = "uniform"
    dirichlet_shape: float = 1.0
    eta_hat: tuple[float, ...] | None = None

    def __post_init__(self):
        if (self.f_pairs is None) == (self.f_power is None):
            raise ValueError("bottleneck model needs F as pairs or as a power law, not both")
        if self.f_pairs is not None:
            for k, w in self.f_pairs:
                if int(k) != k or k < 1 or w < 0.0:
                    raise ValueError(f"F entries need integer k >= 1 and weight >= 0, got ({k}, {w})")
        if self.f_power is not None and not (self.f_power[0] > 1.0 and self.f_power[1] > 0.0):
            raise ValueError("power-law F needs exponent s > 1 (so sum F(k)/k converges) and scale c > 0")
        if not 0.0 < self.a_exp:
            raise ValueError(f"a_exp must be positive, got {self.a_exp}")
        if not 0.0 <= self.b_exp < 1.0:
            raise ValueError(f"b_exp must lie in [0, 1) so that b_N = o(N), got {self.b_exp}")
        if self.nu_bar not in ("uniform", "dirichlet"):
            raise ValueError(f"nu_bar must be 'uniform' or 'dirichlet', got {self.nu_bar!r}")
        if not self.dirichlet_shape > 0.0:
            raise ValueError(f"dirichlet_shape must be positive, got {self.dirichlet_shape}")

    def a_n(self, N: int) -> float:
        return float(N) ** self.a_exp

    def b_n(self, N: int) -> int:
        return max(1, min(N, math.floor(float(N) ** self.b_exp)))

    def f_table(self, N: int) -> dict[int, float]:
        """F(k) for 1 <= k <= b_N."""
        b = self.b_n(N)
        if self.f_pairs is not None:
            table: dict[int, float] = {}
            for k, w in self.f_pairs:
                if k <= b and w > 0.0:
                    table[int(k)] = table.get(int(k), 0.0) + float(w)
            return table
        s, c = self.f_power
        return {k: c * k ** (-s) for k in range(1, b + 1)}

    def bottleneck_probability(self, N: int) -> float:
        p = math.fsum(self.f_table(N).values()) / self.a_n(N)
        if p > 1.0:
            raise ValueError(f"bottleneck probability sum F / a_N = {p:.4g} exceeds 1 at N={N}")
        return p

    def check_scaling(self, N: int) -> list[str]:
        """Warnings for the o(a_N) and o(N) conditions at this N."""
        out = []
        p = self.bottleneck_probability(N)
        if p >= SCALING_WARN_RATIO:
            out.append(f"sum F(k)/a_N = {p:.3g} at N={N} is not small")
        if self.b_n(N) / N >= SCALING_WARN_RATIO:
            out.append(f"b_N/N = {self.b_n(N) / N:.3g} at N={N} is not small")
        return out

    def eta_hat_vector(self, N: int) -> WeightVector:
        if self.eta_hat is None:
            return WeightVector.uniform(N)
        if len(self.eta_hat) > N:
            raise ValueError(f"eta_hat has {len(self.eta_hat)} entries but N={N}")
        return WeightVector(np.concatenate((np.asarray(self.eta_hat, dtype=float), np.zeros(N - len(self.eta_hat)))))


@dataclass(frozen=True)
class PDPowerModel:
    """eta_i = V_i^gamma / sum_{j<=N} V_j^gamma for PD(alpha, theta) picks in size-biased order."""

    kind: ClassVar[str] = "pd_power"
    is_awf: ClassVar[bool] = True

    params: PDParams


@dataclass(frozen=True)
class ExponentialModel:
    """Exponential selection model; sampled through PD(1/beta, 0) with gamma = kappa/beta unless ``direct``."""

    kind: ClassVar[str] = "exponential"
    is_awf: ClassVar[bool] = True

    beta: float
    kappa: float
    M: int | None = None
    direct: bool = False
    params: PDParams = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "params", em_model_params(self.beta, self.kappa))
        if self.M is not None and self.M < 1:
            raise ValueError(f"truncation M must be positive, got {self.M}")

    def truncation(self, N: int) -> int:
        return self.M if self.M is not None else 2 * EM_TRUNCATION_FACTOR * N


ModelSpec = Union[ExplicitModel, EldonWakeleyModel, BottleneckModel, PDPowerModel, ExponentialModel]


def is_awf(spec: ModelSpec) -> bool:
    return spec.is_awf


class _TruncatedBetaInverse:
    """Inverse CDF of the law proportional to y^{a-3} (1-y)^{b-1} on (y0, 1]."""

    def __init__(self, a: float, b: float, y0: float):
        self.a, self.b = a, b
        self.grid = np.geomspace(y0, 1.0, EW_GRID_POINTS)
        masses = [self._integral(lo, hi) for lo, hi in zip(self.grid[:-1], self.grid[1:])]
        self.cumulative = np.concatenate(([0.0], np.cumsum(masses)))

    def _density(self, y: float) -> float:
        return y ** (self.a - 3.0) * (1.0 - y) ** (self.b - 1.0)

    def _integral(self, lo: float, hi: float) -> float:
        if hi >= 1.0:
            # (1-y)^{b-1} as an algebraic endpoint weight
            value, _ = integrate.quad(lambda y: y ** (self.a - 3.0), lo, 1.0, weight="alg", wvar=(0.0, self.b - 1.0))
        else:
            value, _ = integrate.quad(self._density, lo, hi)
        return value

    def __call__(self, u: float) -> float:
        target = u * self.cumulative[-1]
        piece = int(np.clip(np.searchsorted(self.cumulative, target, side="right") - 1, 0, self.grid.size - 2))
        lo, hi = float(self.grid[piece]), float(self.grid[piece + 1])
        remainder = target - self.cumulative[piece]
        if remainder <= 0.0:
            return lo
        if remainder >= self.cumulative[piece + 1] - self.cumulative[piece]:
            return hi
        return optimize.brentq(lambda y: self._integral(lo, y) - remainder, lo, hi, xtol=EW_XTOL)


@lru_cache(maxsize=32)
def _truncated_beta_inverse(a: float, b: float, y0: float) -> _TruncatedBetaInverse:
    return _TruncatedBetaInverse(a, b, y0)


def _sample_ew_y(model: EldonWakeleyModel, N: int, rng: np.random.Generator) -> float:
    y0 = model.threshold(N)
    base = model.base
    if isinstance(base, PointMassMeasure):
        atoms = [(p, w / (p * p)) for p, w in base.atoms if p > y0]
        if not atoms:
            return 0.0
        locations = np.array([p for p, _ in atoms])
        weights = np.array([w for _, w in atoms])
        return float(locations[rng.choice(locations.size, p=weights / weights.sum())])
    return _truncated_beta_inverse(base.a, base.b, y0)(rng.random())


def _eldon_wakeley_offspring(
    model: EldonWakeleyModel, N: int, rng: np.random.Generator, reproducer_first: bool
) -> OffspringVector:
    y = _sample_ew_y(model, N, rng)
    m = math.floor(y * N)
    K = int(rng.integers(N))
    if reproducer_first:
        K = 0
    if m <= 1:
        return OffspringVector(np.ones(N, dtype=np.int64))
    nu = np.zeros(N, dtype=np.int64)
    nu[K] = m
    others = np.delete(np.arange(N), K)
    nu[rng.choice(others, size=N - m, replace=False)] = 1
    return OffspringVector(nu)


def _bottleneck_weights(model: BottleneckModel, N: int, rng: np.random.Generator) -> WeightVector:
    table = model.f_table(N)
    p = model.bottleneck_probability(N)
    if p > 0.0 and rng.random() < p:
        ks = np.array(sorted(table))
        fs = np.array([table[k] for k in ks])
        k = int(ks[rng.choice(ks.size, p=fs / fs.sum())])
        eta = np.zeros(N)
        if model.nu_bar == "uniform":
            eta[:k] = 1.0 / k
        else:
            eta[:k] = rng.gamma(model.dirichlet_shape, size=k)
        return WeightVector(eta)
    return model.eta_hat_vector(N)


def _pd_power_weights(params: PDParams, N: int, rng: np.random.Generator) -> WeightVector:
    path = stick_breaking(params, N, rng)
    return WeightVector(special.softmax(params.gamma * path.log_v))


def sample_weights(spec: ModelSpec, N: int, rng: np.random.Generator) -> WeightVector:
    """One draw of eta^{(N)} for an AWF model."""
    if N < 1:
        raise ValueError(f"population size must be >= 1, got {N}")
    if isinstance(spec, ExplicitModel):
        if not spec.is_awf:
            raise ValueError("explicit offspring model is AC; use sample_offspring")
        return spec.weight_vector(N)
    if isinstance(spec, BottleneckModel):
        return _bottleneck_weights(spec, N, rng)
    if isinstance(spec, PDPowerModel):
        return _pd_power_weights(spec.params, N, rng)
    if isinstance(spec, ExponentialModel):
        if spec.direct:
            generation = em_generation_direct(spec.beta, spec.kappa, np.zeros(N), spec.truncation(N), rng)
            return WeightVector(generation.family_frequencies(spec.kappa))
        return _pd_power_weights(spec.params, N, rng)
    raise ValueError(f"model kind {spec.kind!r} is AC; use sample_offspring")


def sample_offspring(
    spec: ModelSpec, N: int, rng: np.random.Generator, reproducer_first: bool = False
) -> OffspringVector:
    """
    One draw of nu^{(N)} for an AC model.

    Eldon-Wakeley always draws the reproducer index; ``reproducer_first`` then
    moves it to position 0 without changing the rest of the stream.
    """
    if N < 1:
        raise ValueError(f"population size must be >= 1, got {N}")
    if isinstance(spec, EldonWakeleyModel):
        return _eldon_wakeley_offspring(spec, N, rng, reproducer_first)
    if isinstance(spec, ExplicitModel) and not spec.is_awf:
        return spec.offspring_vector(N)
    raise ValueError(f"model kind {spec.kind!r} is AWF; use sample_weights")


def model_draw(spec: ModelSpec, N: int, rng: np.random.Generator) -> WeightVector | OffspringVector:
    return sample_weights(spec, N, rng) if spec.is_awf else sample_offspring(spec, N, rng)


def awf_view(nu: OffspringVector) -> np.ndarray:
    """nu / sigma: the frequencies an AWF model would use for the same generation."""
    return nu.nu / float(nu.sigma)


def model_weights(spec: ModelSpec, N: int, rng: np.random.Generator) -> np.ndarray:
    """Frequency vector of one generation; AC draws are viewed through awf_view with the reproducer first."""
    if spec.is_awf:
        return sample_weights(spec, N, rng).eta
    return awf_view(sample_offspring(spec, N, rng, reproducer_first=True))


def power_sum(weights: np.ndarray, b: int) -> float:
    return math.fsum((np.asarray(weights, dtype=float) ** b).tolist())


def pair_merge_probability(draw: WeightVector | OffspringVector) -> float:
    """Conditional probability that two given children share a parent."""
    if isinstance(draw, WeightVector):
        return power_sum(draw.eta, 2)
    if draw.sigma < 2:
        raise ValueError("a pair of children needs at least two offspring slots")
    nu = draw.nu.astype(float)
    sigma = float(draw.sigma)
    return math.fsum((nu * (nu - 1.0)).tolist()) / (sigma * (sigma - 1.0))


def awf_increment(eta: WeightVector, n: int, rng: np.random.Generator) -> Partition:
    """n children pick parents independently from eta; the grouping is the increment."""
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    cdf = np.cumsum(eta.eta)
    parents = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    return group_by_parent(np.minimum(parents, eta.N - 1))


def ac_increment(nu: OffspringVector, n: int, rng: np.random.Generator) -> Partition:
    """n children drawn without replacement among the sigma offspring slots."""
    if not 1 <= n <= nu.sigma:
        raise ValueError(f"sample size must satisfy 1 <= n <= sigma={nu.sigma}, got {n}")
    slots = rng.choice(nu.sigma, size=n, replace=False)
    return group_by_parent(np.searchsorted(np.cumsum(nu.nu), slots, side="right"))


def increment(draw: WeightVector | OffspringVector, n: int, rng: np.random.Generator) -> Partition:
    if isinstance(draw, WeightVector):
        return awf_increment(draw, n, rng)
    return ac_increment(draw, n, rng)


def _check_exact_size(pi_tilde: Partition) -> None:
    if pi_tilde.n > MAX_EXACT_TRANSITION_N:
        raise ValueError(f"exact transitions support n <= {MAX_EXACT_TRANSITION_N}, got n={pi_tilde.n}")


def exact_transition_awf(eta: WeightVector, pi_tilde: Partition) -> float:
    """Sum over distinct parent injections of prod_k eta_{i_k}^{b_k}."""
    _check_exact_size(pi_tilde)
    w = eta.eta[eta.eta > 0.0]
    sizes = np.asarray(pi_tilde.block_sizes, dtype=float)
    if pi_tilde.n_blocks > w.size:
        return 0.0
    return max(0.0, distinct_injection_sum(w[:, None] ** sizes[None, :]))


def _falling(x: np.ndarray, b: int) -> np.ndarray:
    out = np.ones_like(x, dtype=float)
    for j in range(b):
        out *= x - j
    return out


def exact_transition_ac(nu: OffspringVector, pi_tilde: Partition) -> float:
    """Falling-factorial injection sum (nu_{i_1})_{b_1}...(nu_{i_m})_{b_m} over (sigma)_n."""
    _check_exact_size(pi_tilde)
    if pi_tilde.n > nu.sigma:
        raise ValueError(f"sample size {pi_tilde.n} exceeds total offspring {nu.sigma}")
    v = nu.nu[nu.nu > 0].astype(float)
    if pi_tilde.n_blocks > v.size:
        return 0.0
    factors = np.column_stack([_falling(v, b) for b in pi_tilde.block_sizes])
    denominator = float(_falling(np.array([float(nu.sigma)]), pi_tilde.n)[0])
    return max(0.0, distinct_injection_sum(factors) / denominator)


def exact_transition(draw: WeightVector | OffspringVector, pi_tilde: Partition) -> float:
    if isinstance(draw, WeightVector):
        return exact_transition_awf(draw, pi_tilde)
    return exact_transition_ac(draw, pi_tilde)


def exact_transition_distribution(draw: WeightVector | OffspringVector, n: int) -> dict[Partition, float]:
    """The full law of the increment on the partitions of {1..n}."""
    return {pi: exact_transition(draw, pi) for pi in enumerate_partitions(n)}


def size_biased_reorder(eta: WeightVector, rng: np.random.Generator) -> SizeBiasedSequence:
    """
    Successive sampling of the positive entries proportionally to their weight.

    Realized as an exponential race: index j finishes at Exp(1)/eta_j and the
    finishing order is a size-biased permutation.
    """
    positive = np.flatnonzero(eta.eta > 0.0)
    keys = rng.exponential(size=positive.size) / eta.eta[positive]
    order = positive[np.argsort(keys, kind="stable")]
    s = np.concatenate((eta.eta[order], np.zeros(eta.N - positive.size)))
    return SizeBiasedSequence(s=s, order=order)


@dataclass(frozen=True, eq=False)
class EMGeneration:
    """One generation of the direct exponential-model sampler, children in selection order."""

    child_positions: np.ndarray
    parent_of: np.ndarray
    tail_weight: float

    @property
    def truncation_ok(self) -> bool:
        return self.tail_weight <= EM_TAIL_TOLERANCE

    def family_frequencies(self, kappa: float) -> np.ndarray:
        """e^{kappa z_i} / sum_j e^{kappa z_j}: the parent-choice weights of the next generation."""
        return special.softmax(kappa * self.child_positions)


def em_generation_direct(
    beta: float, kappa: float, parent_positions: np.ndarray, M: int, rng: np.random.Generator
) -> EMGeneration:
    """
    Direct simulation of one exponential-model generation.

    The superposed children form a Poisson process with intensity
    e^{-(s - x_eq)} ds, x_eq = log sum_j e^{kappa X_j}, so its top M atoms are
    x_eq - log T_i with T_i unit-rate arrival times. N of them are selected
    without replacement with weights e^{beta z} and each is attached to parent j
    with probability e^{kappa X_j} / sum. ``tail_weight`` bounds the selection
    mass lost beyond the M-th atom, relative to the mass kept.
    """
    em_model_params(beta, kappa)
    x = np.asarray(parent_positions, dtype=float).reshape(-1)
    N = x.size
    if N < 1:
        raise ValueError("em_generation_direct needs at least one parent")
    if M < EM_TRUNCATION_FACTOR * N:
        raise ValueError(f"truncation M={M} must be at least {EM_TRUNCATION_FACTOR}*N={EM_TRUNCATION_FACTOR * N}")

    x_eq = float(special.logsumexp(kappa * x))
    log_t = np.log(np.cumsum(rng.exponential(size=M)))
    z = x_eq - log_t

    log_keys = np.log(rng.exponential(size=M)) - beta * z
    selected = np.argsort(log_keys, kind="stable")[:N]
    children = z[selected]

    parent_of = rng.choice(N, size=N, p=special.softmax(kappa * x)) + 1

    log_tail = beta * x_eq + (1.0 - beta) * log_t[-1] - math.log(beta - 1.0) - float(special.logsumexp(beta * z))
    tail_weight = math.exp(log_tail)
    if tail_weight > EM_TAIL_TOLERANCE:
        logger.warning("WARNING: exponential-model truncation M=%d leaves tail weight %.3g", M, tail_weight)
    return EMGeneration(child_positions=children, parent_of=parent_of, tail_weight=tail_weight)


class BottleneckCn(NamedTuple):
    c_hat: float
    bottleneck_part: float
    regular_part: float
    probability: float


def _bar_pair_probability(model: BottleneckModel, k: int) -> float:
    if model.nu_bar == "uniform":
        return 1.0 / k
    s = model.dirichlet_shape
    return (s + 1.0) / (k * s + 1.0)


def bottleneck_cn_decomposition(model: BottleneckModel, N: int) -> BottleneckCn:
    """c_N = sum_k F(k) cbar_k / a_N + c_hat (1 - sum F / a_N), with both parts exact."""
    table = model.f_table(N)
    a = model.a_n(N)
    p = model.bottleneck_probability(N)
    bottleneck_part = math.fsum(w * _bar_pair_probability(model, k) for k, w in table.items()) / a
    regular = power_sum(model.eta_hat_vector(N).eta, 2)
    regular_part = regular * (1.0 - p)
    return BottleneckCn(
        c_hat=bottleneck_part + regular_part, bottleneck_part=bottleneck_part, regular_part=regular_part, probability=p
    )


def _bar_transition(model: BottleneckModel, k: int, pi_tilde: Partition) -> float:
    m, n = pi_tilde.n_blocks, pi_tilde.n
    if m > k:
        return 0.0
    log_injections = special.gammaln(k + 1.0) - special.gammaln(k - m + 1.0)
    if model.nu_bar == "uniform":
        return math.exp(log_injections - n * math.log(k))
    s = model.dirichlet_shape
    sizes = np.asarray(pi_tilde.block_sizes, dtype=float)
    log_moment = (
        float(np.sum(special.gammaln(s + sizes))) - m * special.gammaln(s)
        + special.gammaln(k * s) - special.gammaln(k * s + n)
    )
    return math.exp(log_injections + log_moment)


def bottleneck_rate(model: BottleneckModel, N: int, pi_tilde: Partition) -> float:
    """sum_k F(k) P(bottleneck increment = pi_tilde | k survivors): the unnormalized bottleneck limit rate."""
    _check_exact_size(pi_tilde)
    return math.fsum(w * _bar_transition(model, k, pi_tilde) for k, w in model.f_table(N).items())


def exact_bottleneck_transition(model: BottleneckModel, N: int, pi_tilde: Partition) -> float:
    """P(increment = pi_tilde), averaged exactly over the bottleneck indicator, k and the bottleneck weights."""
    _check_exact_size(pi_tilde)
    table = model.f_table(N)
    a = model.a_n(N)
    p = model.bottleneck_probability(N)
    terms = [w / a * _bar_transition(model, k, pi_tilde) for k, w in table.items()]
    terms.append((1.0 - p) * exact_transition_awf(model.eta_hat_vector(N), pi_tilde))
    return math.fsum(terms)
