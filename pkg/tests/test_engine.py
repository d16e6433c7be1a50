"""
Tests for the Monte Carlo engine.

Core claims:
    - SimulationSpec rejects inconsistent sizes and horizons
    - Genealogies only ever merge blocks and stop at one block
    - Outputs are identical for one worker and for a process pool
    - c_N of fixed vectors is exact; empirical pair merges agree within 4 SE
    - A rescaled t_max becomes ceil(t_max / c_N) generations
    - Transition estimates are probability laws, and the moment estimator
      shares its draws with the c_N estimator
"""

import math

import pytest
from pytest import approx

from core.montecarlo import configure_workers
from core.partitions import Partition
from core.population_models import ExplicitModel, PDPowerModel
from core.engine import (
    SimulationSpec,
    absorption_times,
    estimate_cn,
    estimate_transition,
    estimate_weight_moments,
    exact_cn,
    resolve_horizon,
    simulate,
    simulate_genealogy,
    weight_moment_samples,
)
from core.special_fn import PDParams

WRIGHT_FISHER = ExplicitModel(uniform=True)


def _spec(**kw):
    defaults = dict(model=WRIGHT_FISHER, N=10, n=4, replicates=20, seed=99)
    defaults.update(kw)
    return SimulationSpec(**defaults)


class TestSimulationSpec:
    def test_sample_larger_than_population(self):
        with pytest.raises(ValueError, match="n <= N"):
            _spec(N=3, n=4)

    def test_horizon_and_t_max_are_exclusive(self):
        with pytest.raises(ValueError):
            _spec(horizon=10, t_max=1.0)

    @pytest.mark.parametrize("kw", [{"replicates": 0}, {"horizon": -1}, {"t_max": 0.0}])
    def test_invalid_values(self, kw):
        with pytest.raises(ValueError):
            _spec(**kw)


class TestGenealogies:
    def test_blocks_only_merge_until_absorption(self):
        for trajectory in simulate(_spec()):
            assert trajectory.absorbed
            sizes = [pi.n_blocks for _, pi in trajectory.steps]
            assert sizes == sorted(sizes, reverse=True)
            assert trajectory.final == Partition.single_block(4)
            generations = [g for g, _ in trajectory.steps]
            assert generations == list(range(len(generations)))

    def test_thinned_steps_change_partition(self):
        for trajectory in simulate(_spec(), thin=True):
            partitions = [pi for _, pi in trajectory.steps]
            assert all(a != b for a, b in zip(partitions[:-1], partitions[1:]))
            assert trajectory.absorption_time == trajectory.steps[-1][0]

    def test_zero_horizon(self, rng):
        trajectory = simulate_genealogy(_spec(horizon=0), rng)
        assert trajectory.steps == ((0, Partition.singletons(4)),)
        assert not trajectory.absorbed
        assert trajectory.absorption_time is None

    def test_single_sample_is_absorbed(self, rng):
        assert simulate_genealogy(_spec(n=1), rng).absorbed

    def test_absorption_times(self):
        times = absorption_times(_spec(replicates=12))
        assert len(times) == 12
        assert all(t is not None and t >= 1 for t in times)

    def test_same_seed_same_output(self):
        assert simulate(_spec()) == simulate(_spec())
        assert simulate(_spec()) != simulate(_spec(seed=100))

    def test_worker_count_does_not_change_output(self):
        spec = _spec(replicates=64, n=3)
        serial = simulate(spec)
        configure_workers(2)
        assert simulate(spec) == serial


class TestPairCoalescence:
    def test_exact_cn(self):
        assert exact_cn(ExplicitModel(uniform=True), 4) == approx(0.25)
        assert exact_cn(ExplicitModel(offspring=(2, 1, 0)), 3) == approx(1.0 / 3.0)
        assert exact_cn(PDPowerModel(PDParams(0.5, 0.0, 0.5)), 10) is None

    def test_estimate_for_fixed_offspring(self):
        est = estimate_cn(ExplicitModel(offspring=(2, 1, 0)), 3, 3_000, seed=17)
        assert est.formula.value == approx(1.0 / 3.0)
        assert est.formula.stderr == 0.0
        assert est.awf_view.value == approx(5.0 / 9.0)
        assert abs(est.empirical.zscore(1.0 / 3.0)) < 4.0

    def test_estimate_for_pd_power(self):
        est = estimate_cn(PDPowerModel(PDParams(0.5, 0.0, 0.5)), 30, 2_000, seed=21)
        assert 0.0 < est.formula.value < 1.0
        assert abs(est.zscore) < 4.0
        assert est.awf_view.value == est.formula.value

    def test_t_max_horizon(self):
        assert resolve_horizon(_spec(N=4, n=2, t_max=1.0)) == 4
        assert resolve_horizon(_spec(horizon=7)) == 7
        assert resolve_horizon(_spec()) is None


class TestTransitionsAndMoments:
    def test_exact_mode_for_fixed_weights(self):
        law = estimate_transition(ExplicitModel(weights=(0.5, 0.5)), 2, 2, 10, seed=1)
        assert law[Partition.single_block(2)].value == approx(0.5)
        assert law[Partition.single_block(2)].stderr == 0.0
        assert math.fsum(e.value for e in law.values()) == approx(1.0)

    def test_raw_mode_matches_exact(self):
        model = ExplicitModel(weights=(0.6, 0.3, 0.1))
        exact = estimate_transition(model, 3, 3, 5, seed=2)
        raw = estimate_transition(model, 3, 3, 4_000, seed=2, raw=True)
        for pi, est in raw.items():
            p = exact[pi].value
            se = math.sqrt(max(p * (1.0 - p), 1e-12) / 4_000)
            assert abs(est.value - p) < 4.0 * se + 1e-12

    def test_transition_size_limit(self):
        with pytest.raises(ValueError):
            estimate_transition(WRIGHT_FISHER, 10, 6, 5, seed=1)

    def test_uniform_weight_moments(self):
        table = estimate_weight_moments(WRIGHT_FISHER, 4, [2, 3], 5, seed=3)
        assert table[2].first.value == approx(1.0 / 16.0)
        assert table[2].rest.value == approx(3.0 / 16.0)
        assert table[2].total.value == approx(0.25)
        assert table[3].total.value == approx(4.0 / 64.0)

    @pytest.mark.parametrize("b_list", [[], [1], [9]])
    def test_moment_exponent_range(self, b_list):
        with pytest.raises(ValueError):
            estimate_weight_moments(WRIGHT_FISHER, 4, b_list, 5, seed=3)

    def test_moments_share_cn_draws(self):
        model = PDPowerModel(PDParams(0.5, 0.0, 0.5))
        cn = estimate_cn(model, 20, 50, seed=31)
        squares = weight_moment_samples(model, 20, [2], 50, seed=31)[:, 2]
        assert math.fsum(squares.tolist()) / 50 == approx(cn.formula.value, rel=1e-12)
