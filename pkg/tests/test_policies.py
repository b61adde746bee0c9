import numpy as np
import pytest

from elastimdp.errors import ConfigurationError, NoDataError
from elastimdp.logs import LogStore, MeasurementRecord
from elastimdp.model import Action, ActionKind, ModelConfig, NO_OP
from elastimdp.policies import (
    MDP_KINDS,
    MdpPolicy,
    PolicyKind,
    PostProcessConfig,
    QTable,
    REConfig,
    RLConfig,
    RLPolicy,
    apply_benefit_threshold,
    instantiate_model,
    make_policy,
    mdp_decide,
    permitted_actions,
    re_decide,
    rl_decide,
    rl_update,
    smooth_load,
)
from elastimdp.rewards import ClusteringConfig, UtilityConfig, UtilityKind
from elastimdp.solver import PolicyDecision

ADD = ActionKind.ADD
REM = ActionKind.REM

LIMITS = ModelConfig(min_vms=3, max_vms=10, add_limit=3, rem_limit=2)
R1 = UtilityConfig(UtilityKind.R1, 60.0)
CLUSTERING = ClusteringConfig(k=2, seed=5)


def store_with(per_size, load=10000.0, samples=3):
    """A store whose (latency, throughput) at `load` is fixed per size."""
    records = []
    t = 0
    for vms, (lat, thr) in per_size.items():
        for _ in range(samples):
            records.append(MeasurementRecord(t, vms, load, lat, thr))
            t += 1
    return LogStore(records, bucket_width=1000.0)


class TestReactive:
    def test_upper_violation_adds(self):
        decision = re_decide(REConfig(60.0), 70.0, 5, LIMITS)
        assert decision.action == Action(ADD, 3)
        assert decision.target_size == 8
        assert decision.expected_utility is None

    def test_below_lower_removes(self):
        decision = re_decide(REConfig(60.0), 20.0, 5, LIMITS)
        assert decision.action == Action(REM, 2)

    def test_between_thresholds_no_op(self):
        assert re_decide(REConfig(60.0), 45.0, 5, LIMITS).action == NO_OP

    def test_fixed_step_size(self):
        config = REConfig(60.0, step_size=1)
        assert re_decide(config, 70.0, 5, LIMITS).action == Action(ADD, 1)
        assert re_decide(config, 10.0, 5, LIMITS).action == Action(REM, 1)

    def test_clipped_at_range_bounds(self):
        assert re_decide(REConfig(60.0), 70.0, 9, LIMITS).action == Action(ADD, 1)
        assert re_decide(REConfig(60.0), 70.0, 10, LIMITS).action == NO_OP
        assert re_decide(REConfig(60.0), 10.0, 3, LIMITS).action == NO_OP

    def test_lower_defaults_to_half_upper(self):
        config = REConfig(60.0)
        assert config.lower_latency() == 30.0
        with pytest.raises(ConfigurationError):
            REConfig(60.0, lower_latency_ms=80.0)


class TestQLearning:
    def test_single_update_with_full_learning_rate(self):
        qtable = QTable(alpha=1.0, gamma=0.0)
        rl_update(qtable, 5, Action(ADD, 1), 5.0, 6, LIMITS)
        assert qtable.values[(5, "add_1")] == 5.0

    def test_all_equal_prefers_no_op(self):
        qtable = QTable()
        mb = {size: 7.5 for size in range(3, 11)}
        decision = rl_decide(qtable, 5, mb, LIMITS)
        assert decision.action == NO_OP
        assert decision.expected_utility == 7.5

    def test_warm_start_from_mb_estimates(self):
        qtable = QTable()
        mb = {3: 0.0, 4: 1.0, 5: 2.0, 6: 9.0, 7: 0.0, 8: 0.0}
        decision = rl_decide(qtable, 5, mb, LIMITS)
        assert decision.action == Action(ADD, 1)
        assert qtable.values[(5, "add_1")] == 9.0

    def test_converges_to_stationary_reward(self):
        qtable = QTable(alpha=0.1, gamma=0.0)
        for _ in range(300):
            rl_update(qtable, 5, NO_OP, 3.0, 5, LIMITS)
        assert qtable.values[(5, "no_op")] == pytest.approx(3.0, abs=1e-9)
        assert qtable.visits[(5, "no_op")] == 300

    def test_bootstraps_from_next_state(self):
        qtable = QTable(alpha=1.0, gamma=0.5)
        qtable.values[(6, "no_op")] = 8.0
        rl_update(qtable, 5, Action(ADD, 1), 2.0, 6, LIMITS)
        assert qtable.values[(5, "add_1")] == 2.0 + 0.5 * 8.0


class TestMdpDecide:
    def test_increasing_rewards_take_maximal_step(self):
        # throughput v^2 makes r1 = v: strictly increasing with size
        per_size = {v: (30.0, float(v * v)) for v in LIMITS.sizes}
        store = store_with(per_size)
        decision = mdp_decide(
            PolicyKind.MDP_MB, store, 10000.0, 5, None, LIMITS, R1, CLUSTERING
        )
        assert decision.action == Action(ADD, 3)

    def test_all_below_current_no_op(self):
        per_size = {v: (90.0, 1000.0) for v in LIMITS.sizes}
        per_size[5] = (30.0, 1000.0)  # only the current size is healthy
        store = store_with(per_size)
        decision = mdp_decide(
            PolicyKind.MDP_MB, store, 10000.0, 5, None, LIMITS, R1, CLUSTERING
        )
        assert decision.action == NO_OP

    def test_all_targets_decision_is_bounded(self):
        per_size = {v: (90.0, 1000.0) for v in LIMITS.sizes}
        per_size[10] = (20.0, 50000.0)  # optimum five sizes above current
        store = store_with(per_size)
        decision = mdp_decide(
            PolicyKind.MDP3, store, 10000.0, 5, None, LIMITS, R1, CLUSTERING
        )
        assert decision.action == Action(ADD, 3)
        assert decision.bounded
        assert decision.target_size == 8

    def test_interpolation_noted(self):
        per_size = {v: (30.0, 8000.0) for v in LIMITS.sizes if v != 7}
        store = store_with(per_size)
        decision = mdp_decide(
            PolicyKind.MDP_EB, store, 10000.0, 5, None, LIMITS, R1, CLUSTERING
        )
        assert any("size 7" in note for note in decision.notes)

    def test_non_mdp_kind_rejected(self):
        with pytest.raises(ConfigurationError):
            instantiate_model(
                PolicyKind.RE, store_with({5: (30.0, 100.0)}), 10000.0, 5, None,
                LIMITS, R1, CLUSTERING,
            )

    def test_decisions_respect_limits_for_all_kinds(self):
        rng = np.random.default_rng(31)
        for _ in range(12):
            per_size = {
                v: (float(rng.uniform(10, 100)), float(rng.uniform(100, 40000)))
                for v in LIMITS.sizes
            }
            store = store_with(per_size)
            current = int(rng.integers(LIMITS.min_vms, LIMITS.max_vms + 1))
            for kind in MDP_KINDS:
                decision = mdp_decide(
                    kind, store, 10000.0, current, None, LIMITS, R1, CLUSTERING
                )
                assert abs(decision.action.delta) <= (
                    LIMITS.add_limit if decision.action.kind is ADD else LIMITS.rem_limit
                )
                assert LIMITS.min_vms <= decision.target_size <= LIMITS.max_vms


class TestPostProcessing:
    def decision(self, expected, delta=1):
        return PolicyDecision(
            action=Action(ADD, delta), expected_utility=expected, target_size=5 + delta
        )

    def test_small_gain_vetoed(self):
        post = PostProcessConfig(benefit_threshold_pct=5.0)
        result = apply_benefit_threshold(self.decision(104.0), 100.0, post)
        assert result.action == NO_OP
        assert result.target_size == 5

    def test_sufficient_gain_kept(self):
        post = PostProcessConfig(benefit_threshold_pct=5.0)
        result = apply_benefit_threshold(self.decision(106.0), 100.0, post)
        assert result.action == Action(ADD, 1)

    def test_zero_threshold_disables(self):
        post = PostProcessConfig(benefit_threshold_pct=0.0)
        assert apply_benefit_threshold(self.decision(100.5), 100.0, post) == self.decision(100.5)

    def test_zero_current_utility_passes_any_positive_gain(self):
        post = PostProcessConfig(benefit_threshold_pct=50.0)
        assert apply_benefit_threshold(self.decision(0.01), 0.0, post).action == Action(ADD, 1)
        assert apply_benefit_threshold(self.decision(-0.01), 0.0, post).action == NO_OP

    def test_negative_current_utility(self):
        post = PostProcessConfig(benefit_threshold_pct=5.0)
        # gain over a -1 utility: (0.5 - -1)/1 = 150% >= 5%
        assert apply_benefit_threshold(self.decision(0.5), -1.0, post).action == Action(ADD, 1)

    def test_unquantified_expectation_is_vetoed(self):
        post = PostProcessConfig(benefit_threshold_pct=5.0)
        reactive = PolicyDecision(action=Action(ADD, 2), expected_utility=None, target_size=7)
        assert apply_benefit_threshold(reactive, 100.0, post).action == NO_OP

    def test_no_op_passes_through(self):
        post = PostProcessConfig(benefit_threshold_pct=5.0)
        noop = PolicyDecision(action=NO_OP, expected_utility=1.0, target_size=5)
        assert apply_benefit_threshold(noop, 100.0, post) == noop

    def test_infinite_threshold_vetoes_every_action(self):
        post = PostProcessConfig(benefit_threshold_pct=float("inf"))
        for expected in (1e9, 0.5, -1.0, None):
            decision = PolicyDecision(action=Action(ADD, 1), expected_utility=expected,
                                      target_size=6)
            assert apply_benefit_threshold(decision, 1.0, post).action == NO_OP


class TestSmoothing:
    def test_mean_of_window(self):
        assert smooth_load([10.0, 20.0, 30.0], 3) == 20.0

    def test_window_one_is_latest(self):
        assert smooth_load([10.0, 20.0, 30.0], 1) == 30.0

    def test_short_history(self):
        assert smooth_load([10.0], 5) == 10.0

    def test_empty_history(self):
        with pytest.raises(NoDataError):
            smooth_load([], 3)

    def test_policy_effective_load(self):
        per_size = {v: (30.0, 8000.0) for v in LIMITS.sizes}
        policy = MdpPolicy(PolicyKind.MDP_MB, store_with(per_size), LIMITS, R1,
                           CLUSTERING, smoothing_window=3)
        raw = MdpPolicy(PolicyKind.MDP_MB, store_with(per_size), LIMITS, R1, CLUSTERING)
        for t, load in enumerate([9000.0, 10000.0, 14000.0]):
            record = MeasurementRecord(t, 5, load, 30.0, 8000.0)
            policy.observe(record)
            raw.observe(record)
        assert policy.effective_load() == 11000.0
        assert raw.effective_load() == 14000.0


class TestPolicyObjects:
    def test_factory_kinds(self):
        store = store_with({v: (30.0, 8000.0) for v in LIMITS.sizes})
        for kind in PolicyKind:
            policy = make_policy(kind, store, LIMITS, R1, CLUSTERING)
            assert policy.kind == kind

    def test_rl_policy_updates_after_decisions(self):
        store = store_with({v: (30.0, float(v * v)) for v in LIMITS.sizes})
        policy = RLPolicy(store, LIMITS, R1, CLUSTERING, RLConfig(alpha=0.5, gamma=0.0))
        policy.observe(MeasurementRecord(0, 5, 10000.0, 30.0, 25.0))
        first = policy.decide(5)
        assert first.action.kind is ADD
        assert not policy.qtable.visits
        policy.observe(MeasurementRecord(1, first.target_size, 10000.0, 30.0, 64.0))
        policy.decide(first.target_size)
        assert policy.qtable.visits[(5, first.action.label)] == 1

    def test_permitted_actions_clip_at_bounds(self):
        actions = permitted_actions(9, LIMITS)
        assert Action(ADD, 1) in actions
        assert Action(ADD, 2) not in actions
        assert Action(REM, 2) in actions
