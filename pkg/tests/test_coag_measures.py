"""
Tests for coagulation measures and rates.

Core claims:
    - Beta closed-form rates agree with adaptive quadrature to 1e-10 and satisfy
      the consistency recursion lambda_{n,b} = lambda_{n+1,b} + lambda_{n+1,b+1}
    - paintbox_partition_prob equals a brute-force enumeration of paint-box draws
    - Lambda measures embedded as Xi measures keep their rates
    - Rate matrices have zero row sums; semigroups and discrete chains are stochastic
    - The measure mini-language round-trips through ``spec()``
    - The Lambda-coalescent simulator only ever merges and absorbs under Kingman
"""

import itertools
import math
from collections import defaultdict

import numpy as np
import pytest
from pytest import approx

from core.coag_measures import (
    BetaMeasure,
    KingmanMeasure,
    PointMassMeasure,
    XiMeasure,
    beta_from_pd,
    build_rate_matrix,
    coagulation_rate,
    discrete_transition,
    lambda_rate,
    lambda_rate_quadrature,
    pair_rate,
    paintbox_partition_prob,
    parse_measure,
    semigroup,
    simulate_lambda_coalescent,
    symmetric_xi_measure,
    total_merger_rates,
)
from core.partitions import MassPartition, Partition, enumerate_partitions
from core.special_fn import PDParams

BETA_CASES = [(1.0, 1.0), (0.5, 1.5), (2.0, 2.0)]


def _brute_paintbox(rho, n):
    """Distribution of paintbox(rho, n) by enumerating every atom/dust assignment."""
    k = rho.k
    probs = list(rho.weights) + [rho.dust]
    law = defaultdict(float)
    for choice in itertools.product(range(k + 1), repeat=n):
        p = math.prod(probs[c] for c in choice)
        if p == 0.0:
            continue
        labels = [c if c < k else k + i for i, c in enumerate(choice)]
        law[Partition.from_labels(labels)] += p
    return law


class TestLambdaRates:
    @pytest.mark.parametrize("a,b", BETA_CASES)
    def test_quadrature_agrees(self, a, b):
        L = BetaMeasure(a, b)
        for n in range(2, 21):
            for k in range(2, n + 1):
                assert lambda_rate(L, n, k) == approx(lambda_rate_quadrature(L, n, k), rel=1e-10)

    @pytest.mark.parametrize("a,b", BETA_CASES)
    def test_consistency_recursion(self, a, b):
        L = BetaMeasure(a, b)
        for n in range(2, 20):
            for k in range(2, n + 1):
                assert lambda_rate(L, n, k) == approx(lambda_rate(L, n + 1, k) + lambda_rate(L, n + 1, k + 1), rel=1e-10)

    def test_bolthausen_sznitman(self):
        L = BetaMeasure(1.0, 1.0)
        for n, k in [(4, 2), (5, 3), (6, 6)]:
            expected = math.factorial(k - 2) * math.factorial(n - k) / math.factorial(n - 1)
            assert lambda_rate(L, n, k) == approx(expected, rel=1e-12)

    def test_kingman_and_point_mass(self):
        assert lambda_rate(KingmanMeasure(), 5, 2) == 1.0
        assert lambda_rate(KingmanMeasure(), 5, 3) == 0.0
        L = PointMassMeasure(((0.5, 2.0),))
        assert lambda_rate(L, 4, 3) == approx(2.0 * 0.5 * 0.5)

    def test_total_merger_rates(self):
        L = BetaMeasure(2.0, 2.0)
        expected = [math.comb(6, b) * lambda_rate(L, 6, b) for b in range(2, 7)]
        assert total_merger_rates(L, 6) == approx(expected, rel=1e-10)
        P = PointMassMeasure(((0.3, 1.0), (0.8, 0.5)))
        expected = [math.comb(5, b) * lambda_rate(P, 5, b) for b in range(2, 6)]
        assert total_merger_rates(P, 5) == approx(expected, rel=1e-10)

    def test_invalid_merger(self):
        with pytest.raises(ValueError):
            lambda_rate(BetaMeasure(1.0, 1.0), 3, 4)

    def test_beta_from_pd(self):
        assert beta_from_pd(PDParams(0.8, 0.0, 0.5)) == BetaMeasure(1.0, 1.0)
        assert beta_from_pd(PDParams(0.5, 0.25, 0.5)) == BetaMeasure(0.5, 1.5)


class TestPaintbox:
    def test_against_enumeration_oracle(self, rng):
        for _ in range(50):
            k = int(rng.integers(1, 4))
            raw = rng.random(k + 1)
            weights = raw[:k] / raw.sum()
            rho = MassPartition.from_unsorted(weights)
            for n in range(1, 5):
                law = _brute_paintbox(rho, n)
                for pi in enumerate_partitions(n):
                    assert paintbox_partition_prob(rho, pi) == approx(law.get(pi, 0.0), abs=1e-12)

    def test_sums_to_one(self):
        rho = MassPartition((0.4, 0.3))
        total = math.fsum(paintbox_partition_prob(rho, pi) for pi in enumerate_partitions(5))
        assert total == approx(1.0, abs=1e-12)


class TestXiRates:
    def test_point_mass_embedding(self):
        L = PointMassMeasure(((0.3, 1.0), (0.7, 2.0)))
        X = L.as_xi()
        for pi in enumerate_partitions(4):
            if not pi.is_singletons:
                assert coagulation_rate(X, pi) == approx(coagulation_rate(L, pi), rel=1e-12, abs=1e-15)

    def test_kingman_embedding(self):
        X = KingmanMeasure().as_xi()
        for pi in enumerate_partitions(4):
            if not pi.is_singletons:
                assert coagulation_rate(X, pi) == coagulation_rate(KingmanMeasure(), pi)

    def test_simultaneous_mergers(self):
        X = XiMeasure(atoms=((1.0, MassPartition((0.5, 0.5))),))
        double = Partition.parse("1,2|3,4")
        assert coagulation_rate(X, double) == approx(2 * 0.5**4 / 0.5)
        assert coagulation_rate(BetaMeasure(1.0, 1.0), double) == 0.0

    def test_symmetric_bottleneck_pair_rate(self):
        X = symmetric_xi_measure({2: 1.0})
        assert pair_rate(X) == approx(0.5)

    def test_rejects_identity(self):
        with pytest.raises(ValueError):
            coagulation_rate(KingmanMeasure(), Partition.singletons(3))


class TestRateMatrix:
    @pytest.mark.parametrize("measure", [KingmanMeasure(), BetaMeasure(1.0, 1.0), symmetric_xi_measure({2: 1.0, 3: 0.5})])
    def test_rows_sum_to_zero(self, measure):
        Q = build_rate_matrix(measure, 4)
        assert Q.matrix.sum(axis=1) == approx(np.zeros(len(Q.states)), abs=1e-12)

    def test_kingman_three(self):
        Q = build_rate_matrix(KingmanMeasure(), 3)
        zero = Partition.singletons(3)
        assert Q.rate(zero, zero) == approx(-3.0)
        assert Q.rate(zero, Partition.parse("1,2|3")) == approx(1.0)
        assert Q.rate(zero, Partition.single_block(3)) == 0.0

    def test_semigroup_is_stochastic(self):
        Q = build_rate_matrix(BetaMeasure(2.0, 2.0), 3)
        assert semigroup(Q, 0.0) == approx(np.eye(len(Q.states)))
        P = semigroup(Q, 1.5)
        assert P.sum(axis=1) == approx(np.ones(len(Q.states)), abs=1e-10)

    def test_kingman_absorption_probability(self):
        # two lineages coalesce by time t with probability 1 - e^{-t}
        Q = build_rate_matrix(KingmanMeasure(), 2)
        P = semigroup(Q, 1.0)
        assert P[Q.index[Partition.singletons(2)], Q.index[Partition.single_block(2)]] == approx(1.0 - math.exp(-1.0))

    def test_discrete_transition(self):
        Q = build_rate_matrix(KingmanMeasure(), 3)
        P = discrete_transition(Q, 0.2)
        assert P.sum(axis=1) == approx(np.ones(len(Q.states)))
        with pytest.raises(ValueError):
            discrete_transition(Q, 1.0)

    def test_size_limit(self):
        with pytest.raises(ValueError):
            build_rate_matrix(KingmanMeasure(), 7)


class TestParseMeasure:
    @pytest.mark.parametrize(
        "measure",
        [
            KingmanMeasure(),
            BetaMeasure(2.0, 2.0),
            BetaMeasure(0.5, 1.5, 3.0),
            PointMassMeasure(((0.5, 1.0), (0.25, 2.0))),
            XiMeasure(atoms=((1.0, MassPartition((0.5, 0.25))),), kingman_mass=0.5),
        ],
    )
    def test_spec_round_trip(self, measure):
        assert parse_measure(measure.spec()) == measure

    def test_text_forms(self):
        assert parse_measure("beta:2,2") == BetaMeasure(2.0, 2.0)
        assert parse_measure("point:0.5:1") == PointMassMeasure(((0.5, 1.0),))
        assert parse_measure("xi:1@0.5/0.5").atoms[0][1] == MassPartition((0.5, 0.5))

    @pytest.mark.parametrize("text", ["gamma:1", "beta:1", "point:1.5:1", "beta:-1,2"])
    def test_rejects_bad_specs(self, text):
        with pytest.raises(ValueError):
            parse_measure(text)


class TestLambdaCoalescentSimulator:
    def test_kingman_absorbs_with_pair_mergers(self, rng):
        path = simulate_lambda_coalescent(KingmanMeasure(), 5, math.inf, rng)
        assert path[-1][1].n_blocks == 1
        blocks = [pi.n_blocks for _, pi in path]
        assert blocks == list(range(5, 0, -1))
        times = [t for t, _ in path]
        assert times == sorted(times)

    def test_horizon_stops_early(self, rng):
        path = simulate_lambda_coalescent(BetaMeasure(1.0, 1.0), 6, 1e-9, rng)
        assert path == [(0.0, Partition.singletons(6))]
