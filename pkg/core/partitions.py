"""
Exchangeable partition machinery.

Partitions of {1..n} with blocks ordered by least element, the coagulation
operator, paint-box sampling, restriction, block statistics, and the exact sum
over distinct atom injections shared by every paint-box style probability.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Any, Iterable, Sequence

import numpy as np

MASS_TOLERANCE = 1e-12
MAX_ENUMERATION_N = 7
MOBIUS_MAX_BLOCKS = 5


def _canonical_labels(values: Iterable[Any]) -> tuple[int, ...]:
    seen: dict[Any, int] = {}
    labels = []
    for value in values:
        if value not in seen:
            seen[value] = len(seen)
        labels.append(seen[value])
    return tuple(labels)


@dataclass(frozen=True)
class Partition:
    """
    A partition of {1..n}.

    Stored as a restricted growth string: ``labels[i]`` is the 0-based index of
    the block holding element ``i + 1``, blocks numbered by their least element.
    The label tuple is the equality witness; ``blocks`` is a derived view.
    """

    labels: tuple[int, ...]

    def __post_init__(self):
        if not self.labels:
            raise ValueError("a partition needs a ground set of size n >= 1")
        top = -1
        for label in self.labels:
            if label < 0 or label > top + 1:
                raise ValueError(f"labels {self.labels} are not ordered by least element")
            top = max(top, label)

    @classmethod
    def from_labels(cls, values: Iterable[Any]) -> Partition:
        """Group positions sharing a value; any hashable values work."""
        return cls(_canonical_labels(values))

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]], n: int | None = None) -> Partition:
        """
        Build a partition from 1-based blocks in any order.

        Args:
            blocks: Non-empty, pairwise disjoint index sets
            n: Ground-set size; defaults to the total number of indices

        Returns:
            The canonical Partition
        """
        block_lists = [sorted(int(i) for i in block) for block in blocks]
        if any(len(block) == 0 for block in block_lists):
            raise ValueError("partition blocks must be non-empty")
        size = n if n is not None else sum(len(block) for block in block_lists)
        owner = [-1] * size
        for j, block in enumerate(block_lists):
            for i in block:
                if not 1 <= i <= size:
                    raise ValueError(f"index {i} outside ground set {{1..{size}}}")
                if owner[i - 1] != -1:
                    raise ValueError(f"index {i} appears in more than one block")
                owner[i - 1] = j
        if -1 in owner:
            missing = [i + 1 for i, o in enumerate(owner) if o == -1]
            raise ValueError(f"blocks do not cover indices {missing}")
        return cls.from_labels(owner)

    @classmethod
    def singletons(cls, n: int) -> Partition:
        return cls(tuple(range(n)))

    @classmethod
    def single_block(cls, n: int) -> Partition:
        return cls((0,) * n)

    @classmethod
    def parse(cls, text: str) -> Partition:
        """Parse the canonical encoding, e.g. ``"1,2,4|3"``."""
        try:
            blocks = [[int(x) for x in part.split(",")] for part in text.strip().split("|")]
        except ValueError as e:
            raise ValueError(f"cannot parse partition '{text}': {e}") from e
        return cls.from_blocks(blocks)

    @property
    def n(self) -> int:
        return len(self.labels)

    @cached_property
    def n_blocks(self) -> int:
        return max(self.labels) + 1

    @cached_property
    def blocks(self) -> tuple[tuple[int, ...], ...]:
        groups: list[list[int]] = [[] for _ in range(self.n_blocks)]
        for i, label in enumerate(self.labels):
            groups[label].append(i + 1)
        return tuple(tuple(group) for group in groups)

    @cached_property
    def block_sizes(self) -> tuple[int, ...]:
        """Block sizes in block order (least element first)."""
        return tuple(len(block) for block in self.blocks)

    @property
    def is_singletons(self) -> bool:
        return self.n_blocks == self.n

    def __str__(self) -> str:
        return "|".join(",".join(str(i) for i in block) for block in self.blocks)


@dataclass(frozen=True)
class MassPartition:
    """
    Non-increasing non-negative weights with sum <= 1; the deficit is dust.

    Inputs within ``MASS_TOLERANCE`` of validity are clamped; zero weights are
    dropped so ``weights`` holds the positive atoms only.
    """

    weights: tuple[float, ...] = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if not np.all(np.isfinite(w)):
            raise ValueError("mass partition weights must be finite")
        if np.any(w < -MASS_TOLERANCE):
            raise ValueError("mass partition weights must be non-negative")
        if np.any(np.diff(w) > MASS_TOLERANCE):
            raise ValueError("mass partition weights must be non-increasing")
        if w.sum() > 1.0 + MASS_TOLERANCE:
            raise ValueError(f"mass partition weights sum to {w.sum()!r} > 1")
        w = np.minimum.accumulate(np.clip(w, 0.0, 1.0)) if w.size else w
        total = w.sum()
        if total > 1.0:
            w = w / total
        object.__setattr__(self, "weights", tuple(float(x) for x in w[w > 0.0]))

    @classmethod
    def from_unsorted(cls, values: Sequence[float]) -> MassPartition:
        """Rank arbitrary non-negative weights in decreasing order."""
        ranked = np.sort(np.asarray(values, dtype=float))[::-1]
        return cls(tuple(ranked))

    @property
    def k(self) -> int:
        return len(self.weights)

    @property
    def dust(self) -> float:
        return max(0.0, 1.0 - math.fsum(self.weights))

    @property
    def sum_squares(self) -> float:
        return math.fsum(w * w for w in self.weights)


def coagulate(pi: Partition, pi_prime: Partition) -> Partition:
    """
    Coag(pi, pi'): the k-th block of the result is the union of the blocks of
    ``pi`` indexed by the k-th block of ``pi_prime``.
    """
    if pi_prime.n < pi.n_blocks:
        raise ValueError(
            f"inadmissible coagulation: pi has {pi.n_blocks} blocks but pi_prime lives on {{1..{pi_prime.n}}}"
        )
    return Partition.from_labels(pi_prime.labels[label] for label in pi.labels)


def paintbox(rho: MassPartition, n: int, rng: np.random.Generator) -> Partition:
    """
    Draw a paint-box partition of {1..n} directed by ``rho``.

    Atom intervals are laid out from 0; the dust interval is [1 - rho_0, 1) and
    every index landing there becomes a singleton.
    """
    if n < 1:
        raise ValueError("paintbox needs n >= 1")
    u = rng.random(n)
    k = rho.k
    slot = np.searchsorted(np.cumsum(rho.weights), u, side="right") if k else np.full(n, 0)
    labels = np.where(slot < k, slot, k + np.arange(n))
    return Partition.from_labels(labels.tolist())


def restrict(pi: Partition, m: int) -> Partition:
    if not 1 <= m <= pi.n:
        raise ValueError(f"cannot restrict a partition of {{1..{pi.n}}} to {{1..{m}}}")
    return Partition.from_labels(pi.labels[:m])


def block_sizes_desc(pi: Partition) -> list[int]:
    return sorted(pi.block_sizes, reverse=True)


def group_by_parent(parent_of: Sequence[Any] | np.ndarray) -> Partition:
    """Children (positions) share a block iff they share a parent value."""
    values = parent_of.tolist() if isinstance(parent_of, np.ndarray) else list(parent_of)
    return Partition.from_labels(values)


@lru_cache(maxsize=None)
def _enumerate(n: int) -> tuple[Partition, ...]:
    found: list[Partition] = []

    def grow(prefix: list[int], top: int) -> None:
        if len(prefix) == n:
            found.append(Partition(tuple(prefix)))
            return
        for label in range(top + 2):
            prefix.append(label)
            grow(prefix, max(top, label))
            prefix.pop()

    grow([0], 0)
    return tuple(found)


def enumerate_partitions(n: int) -> list[Partition]:
    """All partitions of {1..n} (Bell(n) of them), n <= 7."""
    if not 1 <= n <= MAX_ENUMERATION_N:
        raise ValueError(f"enumerate_partitions supports 1 <= n <= {MAX_ENUMERATION_N}, got {n}")
    return list(_enumerate(n))


def _mobius_injection_sum(f: np.ndarray) -> float:
    k, m = f.shape
    if m == 0:
        return 1.0
    if k < m:
        return 0.0
    subset_sum = {}
    for mask in range(1, 1 << m):
        cols = [j for j in range(m) if mask >> j & 1]
        subset_sum[mask] = float(np.prod(f[:, cols], axis=1).sum())
    terms = []
    for sigma in _enumerate(m):
        term = 1.0
        for block in sigma.blocks:
            mask = sum(1 << (j - 1) for j in block)
            size = len(block)
            term *= (-1) ** (size - 1) * math.factorial(size - 1) * subset_sum[mask]
        terms.append(term)
    return math.fsum(terms)


def _bitmask_injection_sum(f: np.ndarray, optional: tuple[int, ...], optional_weight: float) -> float:
    k, m = f.shape
    full = 1 << m
    masks = np.arange(full)
    dp = np.zeros(full)
    dp[0] = 1.0
    for i in range(k):
        row = f[i]
        if not row.any():
            continue
        updated = dp.copy()
        for j in range(m):
            if row[j] == 0.0:
                continue
            bit = 1 << j
            src = masks[(masks & bit) == 0]
            updated[src | bit] += dp[src] * row[j]
        dp = updated
    required = (full - 1) & ~sum(1 << j for j in optional)
    terms = []
    for mask in range(full):
        if mask & required != required:
            continue
        missing = bin(~mask & (full - 1)).count("1")
        terms.append(dp[mask] * optional_weight**missing)
    return math.fsum(terms)


def distinct_injection_sum(
    factors: np.ndarray, optional: Iterable[int] = (), optional_weight: float = 0.0
) -> float:
    """
    Sum over injective block-to-atom assignments of the product of factors.

    Args:
        factors: Array of shape (atoms, blocks); ``factors[i, j]`` is the weight of
            atom ``i`` serving block ``j``
        optional: Block indices that may instead stay unassigned
        optional_weight: Weight paid by each unassigned optional block

    Returns:
        The exact sum (Moebius inversion over block partitions for few blocks,
        a bitmask dynamic program otherwise)
    """
    f = np.asarray(factors, dtype=float)
    if f.ndim != 2:
        raise ValueError("factors must be a 2-d array of shape (atoms, blocks)")
    optional = tuple(optional)
    if f.shape[1] > MOBIUS_MAX_BLOCKS:
        return _bitmask_injection_sum(f, optional, optional_weight)
    dropped_sizes = range(len(optional) + 1) if optional_weight != 0.0 else range(1)
    terms = []
    for r in dropped_sizes:
        for dropped in itertools.combinations(optional, r):
            keep = [j for j in range(f.shape[1]) if j not in dropped]
            terms.append(optional_weight**r * _mobius_injection_sum(f[:, keep]))
    return math.fsum(terms)
