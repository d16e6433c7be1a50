"""
Coagulation measures and their rates.

Lambda measures (Kingman, point masses, Beta) with merger rates lambda_{n,b},
finite-atomic Xi measures with paint-box rates, generator matrices on the
partitions of {1..n} with their semigroups, and a continuous-time
Lambda-coalescent simulator used as an oracle.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np
from scipy import integrate, special, stats
from scipy.linalg import expm

from core.partitions import (
    MassPartition,
    Partition,
    block_sizes_desc,
    coagulate,
    distinct_injection_sum,
    enumerate_partitions,
)
from core.special_fn import PDParams, beta_fn, log_beta

logger = logging.getLogger(__name__)

MAX_RATE_MATRIX_N = 6
PAINTBOX_MAX_N = 12


def _check_merger(n: int, b: int) -> None:
    if not 2 <= b <= n:
        raise ValueError(f"merger size b must satisfy 2 <= b <= n, got n={n}, b={b}")


@dataclass(frozen=True)
class KingmanMeasure:
    """Lambda = mass * delta_0: only pair mergers."""

    mass: float = 1.0

    def __post_init__(self):
        if not self.mass > 0.0:
            raise ValueError(f"Kingman mass must be positive, got {self.mass}")

    def rate(self, n: int, b: int) -> float:
        _check_merger(n, b)
        return self.mass if b == 2 else 0.0

    def merger_rates(self, m: int) -> np.ndarray:
        rates = np.zeros(max(m - 1, 0))
        if m >= 2:
            rates[0] = math.comb(m, 2) * self.mass
        return rates

    def as_xi(self) -> XiMeasure:
        return XiMeasure(atoms=(), kingman_mass=self.mass)

    def spec(self) -> str:
        return "kingman" if self.mass == 1.0 else f"kingman:{self.mass!r}"


@dataclass(frozen=True)
class PointMassMeasure:
    """Finitely many atoms (p, weight) with p in (0, 1]."""

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("a point-mass measure needs at least one atom")
        cleaned = []
        for p, w in self.atoms:
            if not 0.0 < p <= 1.0:
                raise ValueError(f"point-mass location must lie in (0, 1], got {p}")
            if not w > 0.0:
                raise ValueError(f"point-mass weight must be positive, got {w}")
            cleaned.append((float(p), float(w)))
        object.__setattr__(self, "atoms", tuple(cleaned))

    def rate(self, n: int, b: int) -> float:
        _check_merger(n, b)
        return math.fsum(w * p ** (b - 2) * (1.0 - p) ** (n - b) for p, w in self.atoms)

    def merger_rates(self, m: int) -> np.ndarray:
        b = np.arange(2, m + 1)
        rates = np.zeros(b.shape)
        for p, w in self.atoms:
            rates += w * stats.binom.pmf(b, m, p) / (p * p)
        return rates

    def as_xi(self) -> XiMeasure:
        return XiMeasure(atoms=tuple((w, MassPartition((p,))) for p, w in self.atoms))

    def spec(self) -> str:
        return "point:" + ",".join(f"{p!r}:{w!r}" for p, w in self.atoms)


@dataclass(frozen=True)
class BetaMeasure:
    """total_mass times the Beta(a, b) probability law; Beta(1, 1) is Bolthausen-Sznitman."""

    a: float
    b: float
    total_mass: float = 1.0

    def __post_init__(self):
        if not (self.a > 0.0 and self.b > 0.0):
            raise ValueError(f"Beta parameters must be positive, got a={self.a}, b={self.b}")
        if not self.total_mass > 0.0:
            raise ValueError(f"Beta total mass must be positive, got {self.total_mass}")

    def rate(self, n: int, b: int) -> float:
        _check_merger(n, b)
        return self.total_mass * math.exp(log_beta(self.a + b - 2, self.b + n - b) - log_beta(self.a, self.b))

    def merger_rates(self, m: int) -> np.ndarray:
        b = np.arange(2, m + 1, dtype=float)
        log_comb = special.gammaln(m + 1.0) - special.gammaln(b + 1.0) - special.gammaln(m - b + 1.0)
        log_rate = special.betaln(self.a + b - 2.0, self.b + m - b) - special.betaln(self.a, self.b)
        return self.total_mass * np.exp(log_comb + log_rate)

    def spec(self) -> str:
        tail = "" if self.total_mass == 1.0 else f",{self.total_mass!r}"
        return f"beta:{self.a!r},{self.b!r}{tail}"


LambdaMeasure = Union[KingmanMeasure, PointMassMeasure, BetaMeasure]


@dataclass(frozen=True)
class XiMeasure:
    """Finitely many weighted mass-partition atoms plus an optional Kingman component."""

    atoms: tuple[tuple[float, MassPartition], ...] = ()
    kingman_mass: float = 0.0

    def __post_init__(self):
        for weight, rho in self.atoms:
            if not weight > 0.0:
                raise ValueError(f"Xi atom weight must be positive, got {weight}")
            if not rho.sum_squares > 0.0:
                raise ValueError("Xi atoms need a mass partition with at least one positive entry")
        if self.kingman_mass < 0.0:
            raise ValueError(f"Kingman component must be non-negative, got {self.kingman_mass}")
        if not self.atoms and self.kingman_mass == 0.0:
            raise ValueError("a Xi measure needs atoms or a positive Kingman component")

    def spec(self) -> str:
        items = ["@".join([repr(w), "/".join(repr(x) for x in rho.weights)]) for w, rho in self.atoms]
        if self.kingman_mass:
            items.append(f"kingman@{self.kingman_mass!r}")
        return "xi:" + ";".join(items)


CoagulationMeasure = Union[KingmanMeasure, PointMassMeasure, BetaMeasure, XiMeasure]


def beta_from_pd(params: PDParams) -> BetaMeasure:
    """The Beta(1 - theta/alpha, 1 + theta/alpha) limit of the PD-power model."""
    ratio = params.theta / params.alpha
    if not ratio < 1.0:
        raise ValueError(f"Beta(1-theta/alpha, 1+theta/alpha) needs theta < alpha, got theta={params.theta}")
    return BetaMeasure(1.0 - ratio, 1.0 + ratio)


def symmetric_xi_measure(f_weights: dict[int, float]) -> XiMeasure:
    """
    Xi measure of the symmetric bottleneck limit: k survivors with equal
    frequencies 1/k, weighted by F(k).

    The atom weight F(k)/k cancels the sum-of-squares normalization so the
    rate of pi' is sum_k F(k) * P(paintbox(1/k,...,1/k) = pi').
    """
    atoms = []
    for k, w in sorted(f_weights.items()):
        if w > 0.0:
            atoms.append((w / k, MassPartition((1.0 / k,) * k)))
    return XiMeasure(atoms=tuple(atoms))


def lambda_rate(L: LambdaMeasure, n: int, b: int) -> float:
    """lambda_{n,b} = integral of p^{b-2} (1-p)^{n-b} Lambda(dp)."""
    return L.rate(n, b)


def lambda_rate_quadrature(L: LambdaMeasure, n: int, b: int) -> float:
    """Adaptive-quadrature cross-check of ``lambda_rate`` (QAWS for the Beta singularities)."""
    _check_merger(n, b)
    if not isinstance(L, BetaMeasure):
        return L.rate(n, b)
    value, _ = integrate.quad(
        lambda x: 1.0, 0.0, 1.0, weight="alg", wvar=(L.a + b - 3.0, L.b + n - b - 1.0), epsabs=1e-14, epsrel=1e-13
    )
    return L.total_mass * value / beta_fn(L.a, L.b)


def total_merger_rates(L: LambdaMeasure, m: int) -> np.ndarray:
    """C(m,b) lambda_{m,b} for b = 2..m."""
    return L.merger_rates(m)


def paintbox_partition_prob(rho: MassPartition, pi_prime: Partition) -> float:
    """
    Exact probability that paintbox(rho, n) equals ``pi_prime``.

    Each block is served by a distinct positive atom (probability rho_i^size);
    singleton blocks may instead fall in the dust (probability rho_0).
    """
    if pi_prime.n > PAINTBOX_MAX_N:
        raise ValueError(f"paintbox_partition_prob supports n <= {PAINTBOX_MAX_N}, got {pi_prime.n}")
    sizes = np.asarray(pi_prime.block_sizes, dtype=float)
    w = np.asarray(rho.weights, dtype=float)
    factors = w[:, None] ** sizes[None, :]
    singles = [j for j, s in enumerate(pi_prime.block_sizes) if s == 1]
    return max(0.0, distinct_injection_sum(factors, optional=singles, optional_weight=rho.dust))


def _is_single_pair_merger(pi_prime: Partition) -> bool:
    sizes = block_sizes_desc(pi_prime)
    return sizes[0] == 2 and (len(sizes) == 1 or sizes[1] == 1)


def xi_rate(X: XiMeasure, pi_prime: Partition) -> float:
    """Rate of the coagulation ``pi_prime`` under a finite-atomic Xi measure."""
    if pi_prime.is_singletons:
        raise ValueError("coagulation rates are defined only for pi' != 0_n")
    terms = [w * paintbox_partition_prob(rho, pi_prime) / rho.sum_squares for w, rho in X.atoms]
    if X.kingman_mass and _is_single_pair_merger(pi_prime):
        terms.append(X.kingman_mass)
    return math.fsum(terms)


def coagulation_rate(measure: CoagulationMeasure, pi_prime: Partition) -> float:
    """Rate of ``pi_prime`` (on {1..m}, m = current block count) under either measure family."""
    if isinstance(measure, XiMeasure):
        return xi_rate(measure, pi_prime)
    if pi_prime.is_singletons:
        raise ValueError("coagulation rates are defined only for pi' != 0_n")
    merged = [s for s in pi_prime.block_sizes if s > 1]
    if len(merged) != 1:
        return 0.0
    return lambda_rate(measure, pi_prime.n, merged[0])


def pair_rate(measure: CoagulationMeasure) -> float:
    """Rate at which two given blocks merge; the time-scale normalization."""
    return coagulation_rate(measure, Partition.single_block(2))


@dataclass(frozen=True, eq=False)
class RateMatrix:
    """Generator of a coalescent restricted to the partitions of {1..n}."""

    n: int
    states: tuple[Partition, ...]
    matrix: np.ndarray

    @cached_property
    def index(self) -> dict[Partition, int]:
        return {pi: i for i, pi in enumerate(self.states)}

    def rate(self, source: Partition, target: Partition) -> float:
        return float(self.matrix[self.index[source], self.index[target]])


def build_rate_matrix(measure: CoagulationMeasure, n: int) -> RateMatrix:
    """Full generator on enumerate_partitions(n), n <= 6."""
    if not 1 <= n <= MAX_RATE_MATRIX_N:
        raise ValueError(f"build_rate_matrix supports 1 <= n <= {MAX_RATE_MATRIX_N}, got {n}")
    states = tuple(enumerate_partitions(n))
    index = {pi: i for i, pi in enumerate(states)}
    Q = np.zeros((len(states), len(states)))
    by_shape: dict[tuple[int, tuple[int, ...]], float] = {}
    for i, pi in enumerate(states):
        m = pi.n_blocks
        if m < 2:
            continue
        for pi_prime in enumerate_partitions(m):
            if pi_prime.is_singletons:
                continue
            key = (m, tuple(block_sizes_desc(pi_prime)))
            if key not in by_shape:
                by_shape[key] = coagulation_rate(measure, pi_prime)
            if by_shape[key] > 0.0:
                Q[i, index[coagulate(pi, pi_prime)]] += by_shape[key]
        Q[i, i] = -math.fsum(Q[i])
    return RateMatrix(n=n, states=states, matrix=Q)


def semigroup(Q: RateMatrix, t: float) -> np.ndarray:
    """e^{tQ} (scipy's Pade scaling-and-squaring), clamped to non-negative entries."""
    if not t >= 0.0:
        raise ValueError(f"semigroup time must be non-negative, got {t}")
    return np.clip(expm(Q.matrix * t), 0.0, None)


def discrete_transition(Q: RateMatrix, c: float) -> np.ndarray:
    """Id + cQ, the one-step limit chain when c_N -> c > 0."""
    P = np.eye(len(Q.states)) + c * Q.matrix
    if P.min() < -1e-12:
        raise ValueError(f"Id + cQ is not stochastic for c={c}")
    return np.clip(P, 0.0, None)


def simulate_lambda_coalescent(
    L: LambdaMeasure, n: int, t_max: float, rng: np.random.Generator
) -> list[tuple[float, Partition]]:
    """
    Continuous-time Lambda-coalescent from 0_n, recorded at every jump up to t_max.

    With m blocks the next event comes at total rate sum_b C(m,b) lambda_{m,b};
    its size b is drawn proportionally and the merging blocks uniformly.
    """
    if n < 1:
        raise ValueError("simulate_lambda_coalescent needs n >= 1")
    current = Partition.singletons(n)
    t = 0.0
    path = [(t, current)]
    while current.n_blocks > 1:
        m = current.n_blocks
        rates = total_merger_rates(L, m)
        total = float(rates.sum())
        if not math.isfinite(total):
            raise ValueError(f"non-finite total merger rate with {m} blocks")
        if total <= 0.0:
            break
        t += rng.exponential(1.0 / total)
        if t > t_max:
            break
        size = int(rng.choice(np.arange(2, m + 1), p=rates / total))
        chosen = set(rng.choice(m, size=size, replace=False).tolist())
        pi_prime = Partition.from_labels(-1 if j in chosen else j for j in range(m))
        current = coagulate(current, pi_prime)
        path.append((t, current))
    return path


def parse_measure(spec: str) -> CoagulationMeasure:
    """
    Parse the measure mini-language.

    ``kingman``, ``beta:a,b[,mass]``, ``point:p1:w1[,p2:w2...]`` and
    ``xi:w@r1/r2/...;...`` (a Xi item ``kingman@c`` adds a Kingman component).
    """
    kind, _, body = spec.strip().partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "kingman":
            return KingmanMeasure(float(body) if body.strip() else 1.0)
        if kind == "beta":
            values = [float(x) for x in body.split(",")]
            if len(values) not in (2, 3):
                raise ValueError("expected beta:a,b[,mass]")
            return BetaMeasure(*values)
        if kind == "point":
            atoms = []
            for item in body.split(","):
                p, w = item.split(":")
                atoms.append((float(p), float(w)))
            return PointMassMeasure(tuple(atoms))
        if kind == "xi":
            atoms = []
            kingman = 0.0
            for item in filter(None, (x.strip() for x in body.split(";"))):
                head, _, tail = item.partition("@")
                if head.strip().lower() == "kingman":
                    kingman += float(tail)
                    continue
                rho = MassPartition.from_unsorted([float(x) for x in tail.split("/")])
                atoms.append((float(head), rho))
            return XiMeasure(atoms=tuple(atoms), kingman_mass=kingman)
    except ValueError as e:
        raise ValueError(f"invalid measure spec '{spec}': {e}") from e
    raise ValueError(f"invalid measure spec '{spec}': unknown kind '{kind}'")
