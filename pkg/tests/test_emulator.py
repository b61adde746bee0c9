import dataclasses

import numpy as np
import pytest

from elastimdp.emulator import (
    LoadProfile,
    LoadVariation,
    ScheduleConfig,
    SyntheticModelParams,
    emulate_state,
    gen_load,
    gen_synthetic_dataset,
    run_episode,
    trace_from_csv,
    trace_to_csv,
)
from elastimdp.errors import NoDataError
from elastimdp.logs import LogStore, MeasurementRecord
from elastimdp.model import ModelConfig, NO_OP
from elastimdp.policies import Policy, PolicyKind, make_policy
from elastimdp.rewards import ClusteringConfig, UtilityConfig, UtilityKind
from elastimdp.solver import PolicyDecision

LV1 = LoadProfile()
LV2 = LoadProfile(variation=LoadVariation.LV2)
R1 = UtilityConfig(UtilityKind.R1, 60.0)


class TestLoadGeneration:
    def test_lv1_starts_at_minimum(self):
        assert gen_load(LV1, 0) == pytest.approx(1000.0)

    def test_lv2_starts_at_mean(self):
        assert gen_load(LV2, 0) == pytest.approx(23500.0)

    def test_quarter_period_reaches_the_mean(self):
        assert gen_load(LV1, LV1.period_ticks / 4) == pytest.approx(23500.0)

    def test_range_bounds(self):
        for t in range(0, 2 * LV1.period_ticks):
            load = gen_load(LV1, t)
            assert 1000.0 - 1e-9 <= load <= 46000.0 + 1e-9

    def test_lv2_is_lv1_shifted_by_quarter_period(self):
        shift = LV1.period_ticks / 4
        for t in range(0, 400, 7):
            assert gen_load(LV2, t) == pytest.approx(gen_load(LV1, t + shift), abs=1e-6)


class TestSyntheticDataset:
    def test_unsaturated_regime(self):
        params = SyntheticModelParams(noise_stddev_fraction=0.0, samples_per_point=1)
        records = gen_synthetic_dataset(params, [8], [2000.0])
        assert records[0].throughput == 2000.0
        assert records[0].latency_ms == pytest.approx(params.base_latency_ms, rel=0.01)

    def test_saturated_throughput_clamps(self):
        params = SyntheticModelParams(noise_stddev_fraction=0.0, samples_per_point=1)
        records = gen_synthetic_dataset(params, [4], [2 * 4 * params.per_vm_capacity])
        assert records[0].throughput == 4 * params.per_vm_capacity

    def test_latency_strictly_increases_with_load(self):
        params = SyntheticModelParams(noise_stddev_fraction=0.0, samples_per_point=1)
        grid = [1000.0 * i for i in range(1, 47)]
        for vms in (4, 9, 16):
            latencies = [r.latency_ms for r in gen_synthetic_dataset(params, [vms], grid)]
            assert all(b > a for a, b in zip(latencies, latencies[1:]))

    def test_samples_per_point(self):
        params = SyntheticModelParams(samples_per_point=5)
        records = gen_synthetic_dataset(params, [4, 5], [1000.0, 2000.0])
        assert len(records) == 2 * 2 * 5


class TestEmulateState:
    def store(self):
        return LogStore(
            [
                MeasurementRecord(0, 4, 10000.0, 25.0, 9900.0),
                MeasurementRecord(1, 6, 20000.0, 35.0, 19000.0),
            ]
        )

    def test_exact_match_no_noise(self):
        rng = np.random.default_rng(0)
        assert emulate_state(self.store(), 4, 10000.0, 0.0, rng) == (25.0, 9900.0)

    def test_missing_pair_uses_neighbors(self):
        rng = np.random.default_rng(0)
        latency, throughput = emulate_state(self.store(), 5, 14000.0, 0.0, rng)
        assert (latency, throughput) in {(25.0, 9900.0), (35.0, 19000.0)}

    def test_empty_dataset(self):
        with pytest.raises(NoDataError):
            emulate_state(LogStore(), 4, 1000.0, 0.0, np.random.default_rng(0))

    def test_noise_distribution(self):
        rng = np.random.default_rng(1234)
        store = self.store()
        draws = np.array(
            [emulate_state(store, 4, 10000.0, 0.05, rng) for _ in range(10_000)]
        )
        # multiplicative N(1, 0.05): everything inside +-5 sigma for this seed
        assert np.all(draws[:, 0] > 25.0 * 0.75) and np.all(draws[:, 0] < 25.0 * 1.25)
        assert np.mean(draws[:, 0]) == pytest.approx(25.0, rel=0.01)
        assert np.mean(draws[:, 1]) == pytest.approx(9900.0, rel=0.01)


class _NoOpStub(Policy):
    def __init__(self):
        super().__init__(PolicyKind.MDP_MB)

    def decide(self, current):
        return PolicyDecision(action=NO_OP, expected_utility=0.0, target_size=current)


class _BoomStub(Policy):
    def __init__(self):
        super().__init__(PolicyKind.MDP_MB)

    def decide(self, current):
        raise RuntimeError("boom")


def default_store(noise=0.05, seed=9):
    params = SyntheticModelParams(noise_stddev_fraction=noise)
    grid = [1000.0 * i for i in range(1, 47)]
    return LogStore(gen_synthetic_dataset(params, range(4, 17), grid, seed=seed))


class TestRunEpisode:
    def schedule(self, horizon=315):
        return ScheduleConfig(horizon_ticks=horizon, emulation_noise_fraction=0.0)

    def test_decision_count(self):
        schedule = self.schedule(horizon=315)
        assert len(schedule.decision_ticks()) == 31
        trace = run_episode(_NoOpStub(), LV1, default_store(), schedule, R1, rng_seed=1)
        assert sum(1 for r in trace.records if r.decision) == 31

    def test_no_op_policy_keeps_initial_size(self):
        trace = run_episode(_NoOpStub(), LV1, default_store(), self.schedule(), R1, rng_seed=1)
        assert {r.vms for r in trace.records} == {4}
        assert trace.valid

    def test_reactive_policy_adds_under_overload(self):
        # a load far beyond what 4 VMs can absorb: latency > 60 ms at the
        # first decision, so the rule-based policy must add
        profile = LoadProfile(load_min=30000.0, load_max=40000.0)
        limits = ModelConfig(4, 16, add_limit=3, rem_limit=2)
        policy = make_policy(
            PolicyKind.RE, default_store(), limits, R1, ClusteringConfig(seed=1)
        )
        trace = run_episode(policy, profile, default_store(), self.schedule(105), R1, rng_seed=3)
        first = next(r for r in trace.records if r.decision)
        assert first.decision == "add_3"
        later_sizes = {r.vms for r in trace.records[first.tick + 1 :]}
        assert max(later_sizes) > 4

    def test_bit_reproducible_with_same_seed(self):
        schedule = ScheduleConfig(horizon_ticks=105, emulation_noise_fraction=0.05)
        store = default_store()
        limits = ModelConfig(4, 16)
        runs = [
            run_episode(
                make_policy(PolicyKind.MDP_EB, store, limits, R1, ClusteringConfig(seed=1)),
                LV1, store, schedule, R1, rng_seed=42,
            )
            for _ in range(2)
        ]
        # identical except for the wall-clock decision timing column
        strip = lambda r: dataclasses.replace(r, decision_ms=0.0)
        assert [strip(r) for r in runs[0].records] == [strip(r) for r in runs[1].records]

    def test_vms_stay_in_range(self):
        schedule = ScheduleConfig(horizon_ticks=210, emulation_noise_fraction=0.05)
        store = default_store()
        limits = ModelConfig(4, 16, add_limit=3, rem_limit=2)
        for kind in (PolicyKind.RE, PolicyKind.MDP_MB, PolicyKind.MDP3):
            policy = make_policy(kind, store, limits, R1, ClusteringConfig(seed=1))
            trace = run_episode(policy, LV1, store, schedule, R1, rng_seed=7)
            assert trace.valid, trace.error
            assert all(4 <= r.vms <= 16 for r in trace.records)

    def test_policy_failure_flags_partial_trace(self):
        trace = run_episode(_BoomStub(), LV1, default_store(), self.schedule(50), R1, rng_seed=1)
        assert not trace.valid
        assert "boom" in trace.error
        assert 0 < len(trace.records) < 50

    def test_vms_change_takes_effect_next_tick(self):
        profile = LoadProfile(load_min=30000.0, load_max=40000.0)
        limits = ModelConfig(4, 16, add_limit=3, rem_limit=2)
        policy = make_policy(
            PolicyKind.RE, default_store(), limits, R1, ClusteringConfig(seed=1)
        )
        trace = run_episode(policy, profile, default_store(), self.schedule(30), R1, rng_seed=3)
        decision_tick = next(r.tick for r in trace.records if r.decision == "add_3")
        assert trace.records[decision_tick].vms == 4
        assert trace.records[decision_tick + 1].vms == 7


class TestTraceCsv:
    def test_round_trip(self):
        trace = run_episode(
            _NoOpStub(), LV1, default_store(),
            ScheduleConfig(horizon_ticks=25, emulation_noise_fraction=0.0), R1, rng_seed=1,
        )
        text = trace_to_csv(trace)
        parsed = trace_from_csv(text, policy=trace.policy, seed=trace.seed)
        assert parsed.records == trace.records
