"""Elasticity decision policies and their shared post-processing.

Six policies are provided behind one `observe`/`decide` interface:

* RE       -- reactive rule on two latency thresholds, fixed action size.
* RL_MB    -- tabular Q-learning over (size, action) pairs, entries
              warm-started from mode-behaviour estimates at first visit.
* MDP_MB   -- single-behavior model, mode-behaviour rewards, exact solve.
* MDP_EB   -- single-behavior model, expected-behaviour rewards.
* MDP2     -- multi-behavior model (one state per cluster), exact solve.
* MDP3     -- multi-behavior model with all-target transitions; chosen
              actions are clipped back to the per-step limits.

Post-processing: the incoming load can be smoothed over a sliding window
before model instantiation, and a benefit threshold can veto actions whose
expected relative utility gain is too small.
"""

from __future__ import annotations

import dataclasses
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .errors import ConfigurationError, NoDataError
from .logs import LogStore, MeasurementRecord
from .model import (
    Action,
    ActionKind,
    BehaviorReward,
    ClusterSize,
    MdpModel,
    ModelConfig,
    NO_OP,
    Variant,
    build_model,
)
from .rewards import (
    ClusteringConfig,
    RewardMode,
    UtilityConfig,
    cluster_behavior,
    state_reward,
    utility_eval,
)
from .solver import PolicyDecision, decide as solve_decide, tie_break_key


class PolicyKind(str, Enum):
    RE = "re"
    RL_MB = "rl_mb"
    MDP_MB = "mdp_mb"
    MDP_EB = "mdp_eb"
    MDP2 = "mdp2"
    MDP3 = "mdp3"


MDP_KINDS = (PolicyKind.MDP_MB, PolicyKind.MDP_EB, PolicyKind.MDP2, PolicyKind.MDP3)


@dataclass(frozen=True)
class REConfig:
    """Reactive-rule thresholds and action size.

    `step_size=None` uses the per-direction limit (add_limit VMs per
    increase, rem_limit per decrease), the convention of rule-based cloud
    managers that always act at a pre-specified size.
    """

    upper_latency_ms: float = 60.0
    lower_latency_ms: float | None = None  # defaults to upper / 2
    step_size: int | None = None

    def __post_init__(self) -> None:
        lower = self.lower_latency()
        if not 0 < lower < self.upper_latency_ms:
            raise ConfigurationError(
                f"need 0 < lower ({lower}) < upper ({self.upper_latency_ms})"
            )
        if self.step_size is not None and self.step_size < 1:
            raise ConfigurationError("step_size must be >= 1")

    def lower_latency(self) -> float:
        if self.lower_latency_ms is not None:
            return self.lower_latency_ms
        return self.upper_latency_ms / 2


@dataclass(frozen=True)
class RLConfig:
    alpha: float = 0.1
    gamma: float = 0.5

    def __post_init__(self) -> None:
        if not 0 < self.alpha <= 1:
            raise ConfigurationError("alpha must be in (0, 1]")
        if not 0 <= self.gamma < 1:
            raise ConfigurationError("gamma must be in [0, 1)")


@dataclass
class QTable:
    """Tabular action values per (cluster size, action label)."""

    alpha: float = 0.1
    gamma: float = 0.5
    values: dict[tuple[int, str], float] = field(default_factory=dict)
    visits: dict[tuple[int, str], int] = field(default_factory=dict)

    def get(self, size: int, action: Action) -> float:
        return self.values.get((size, action.label), 0.0)


@dataclass(frozen=True)
class PostProcessConfig:
    """Benefit threshold (percent, 0 disables) and smoothing window
    (ticks, 1 disables)."""

    benefit_threshold_pct: float = 0.0
    smoothing_window: int = 1

    def __post_init__(self) -> None:
        if self.benefit_threshold_pct < 0:
            raise ConfigurationError("benefit threshold must be >= 0")
        if self.smoothing_window < 1:
            raise ConfigurationError("smoothing window must be >= 1")


def permitted_actions(current: ClusterSize, limits: ModelConfig) -> list[Action]:
    """no_op plus every sized add/rem allowed by the limits and the range."""
    actions = [NO_OP]
    for delta in range(1, min(limits.add_limit, limits.max_vms - current) + 1):
        actions.append(Action(ActionKind.ADD, delta))
    for delta in range(1, min(limits.rem_limit, current - limits.min_vms) + 1):
        actions.append(Action(ActionKind.REM, delta))
    return actions


def re_decide(
    config: REConfig,
    current_latency: float,
    current: ClusterSize,
    limits: ModelConfig,
) -> PolicyDecision:
    """Reactive rule: add on an upper-threshold violation, remove below
    the lower threshold, otherwise do nothing.  The action is clipped to
    the [min_vms, max_vms] range; a reactive policy carries no utility
    expectation, so `expected_utility` is None."""
    if current_latency > config.upper_latency_ms:
        step = config.step_size if config.step_size is not None else limits.add_limit
        delta = min(step, limits.max_vms - current)
        action = Action(ActionKind.ADD, delta) if delta > 0 else NO_OP
    elif current_latency < config.lower_latency():
        step = config.step_size if config.step_size is not None else limits.rem_limit
        delta = min(step, current - limits.min_vms)
        action = Action(ActionKind.REM, delta) if delta > 0 else NO_OP
    else:
        action = NO_OP
    return PolicyDecision(
        action=action,
        expected_utility=None,
        target_size=current + action.signed_delta,
    )


def rl_decide(
    qtable: QTable,
    current: ClusterSize,
    mb_rewards: Mapping[int, float],
    limits: ModelConfig,
) -> PolicyDecision:
    """Greedy action over the Q-table, warm-starting unseen entries from
    the mode-behaviour reward estimate of each action's target size."""
    actions = permitted_actions(current, limits)
    for action in actions:
        key = (current, action.label)
        if key not in qtable.values:
            qtable.values[key] = mb_rewards[current + action.signed_delta]
    best_q = max(qtable.get(current, a) for a in actions)
    tied = [a for a in actions if best_q - qtable.get(current, a) <= 1e-12 * max(1.0, abs(best_q))]
    action = min(tied, key=tie_break_key)
    return PolicyDecision(
        action=action,
        expected_utility=qtable.get(current, action),
        target_size=current + action.signed_delta,
    )


def rl_update(
    qtable: QTable,
    prev_size: ClusterSize,
    action: Action,
    realized_reward: float,
    new_size: ClusterSize,
    limits: ModelConfig,
) -> None:
    """One Q-learning step:
    Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))."""
    future = max(
        qtable.get(new_size, a) for a in permitted_actions(new_size, limits)
    )
    key = (prev_size, action.label)
    q = qtable.values.get(key, 0.0)
    qtable.values[key] = q + qtable.alpha * (
        realized_reward + qtable.gamma * future - q
    )
    qtable.visits[key] = qtable.visits.get(key, 0) + 1


def _weighted_center(breakdown: Sequence[BehaviorReward]) -> tuple[float, float]:
    lat = sum(b.weight * b.center[0] for b in breakdown)
    thr = sum(b.weight * b.center[1] for b in breakdown)
    return (lat, thr)


def _reward_inputs(
    kind: PolicyKind,
    store: LogStore,
    load_effective: float,
    model_config: ModelConfig,
    utility: UtilityConfig,
    clustering: ClusteringConfig,
) -> tuple[dict[int, object], tuple[str, ...]]:
    mode = RewardMode.EB if kind is PolicyKind.MDP_EB else RewardMode.MB
    rewards: dict[int, object] = {}
    notes: list[str] = []
    for size in model_config.sizes:
        selection = store.select_logs(size, load_effective)
        clusters = cluster_behavior(selection.records, clustering)
        sr = state_reward(clusters, mode, utility, size)
        if selection.interpolated:
            notes.append(
                f"size {size}: no logs at bucket, used {len(selection.records)}"
                f" record(s) from vms={selection.vms_used}"
                f" bucket={selection.bucket_center:.0f}"
            )
        if kind in (PolicyKind.MDP2, PolicyKind.MDP3):
            rewards[size] = sr.per_cluster
        else:
            center = (
                sr.per_cluster[sr.mode_index].center
                if mode is RewardMode.MB
                else _weighted_center(sr.per_cluster)
            )
            rewards[size] = BehaviorReward(sr.reward, 1.0, center)
    return rewards, tuple(notes)


def instantiate_model(
    kind: PolicyKind,
    store: LogStore,
    load_effective: float,
    current: ClusterSize,
    current_measurement: MeasurementRecord | None,
    model_config: ModelConfig,
    utility: UtilityConfig,
    clustering: ClusteringConfig,
) -> tuple[MdpModel, tuple[str, ...]]:
    """Build the model variant an MDP policy solves at one decision step."""
    if kind not in MDP_KINDS:
        raise ConfigurationError(f"{kind.value} is not an MDP policy")
    if kind is PolicyKind.MDP2:
        config = dataclasses.replace(model_config, variant=Variant.M2, k=clustering.k)
    elif kind is PolicyKind.MDP3:
        config = dataclasses.replace(model_config, variant=Variant.M3, k=clustering.k)
    else:
        config = dataclasses.replace(model_config, variant=Variant.M1, k=1)
    rewards, notes = _reward_inputs(
        kind, store, load_effective, config, utility, clustering
    )
    observation = (
        (current_measurement.latency_ms, current_measurement.throughput)
        if current_measurement is not None
        else None
    )
    return build_model(config, rewards, current, observation), notes


def mdp_decide(
    kind: PolicyKind,
    store: LogStore,
    load_effective: float,
    current: ClusterSize,
    current_measurement: MeasurementRecord | None,
    model_config: ModelConfig,
    utility: UtilityConfig,
    clustering: ClusteringConfig,
) -> PolicyDecision:
    """One full elasticity step of an MDP policy: instantiate the model
    from the logs at the effective load, solve it, return the (possibly
    bounded) first action."""
    model, notes = instantiate_model(
        kind, store, load_effective, current, current_measurement,
        model_config, utility, clustering,
    )
    decision = solve_decide(model)
    if notes:
        decision = dataclasses.replace(decision, notes=decision.notes + notes)
    return decision


def smooth_load(history: Sequence[float], window: int) -> float:
    """Mean of the last `window` load values (all of them when shorter);
    window 1 is the latest raw value."""
    if window < 1:
        raise ConfigurationError("window must be >= 1")
    if not history:
        raise NoDataError("no load history to smooth")
    tail = list(history)[-window:]
    return sum(tail) / len(tail)


def apply_benefit_threshold(
    decision: PolicyDecision,
    current_utility: float,
    config: PostProcessConfig,
) -> PolicyDecision:
    """Veto actions whose expected relative utility gain is below the
    threshold.

    The gain is (expected - current) / |current|; with a current utility
    of exactly 0 the comparison degenerates to requiring any positive
    expected gain.  Decisions without a utility expectation (reactive
    rules) cannot demonstrate a gain and are vetoed by any active
    threshold.
    """
    if config.benefit_threshold_pct == 0 or decision.is_no_op:
        return decision
    current_size = decision.target_size - decision.action.signed_delta
    veto = dataclasses.replace(
        decision,
        action=NO_OP,
        target_size=current_size,
        bounded=False,
        notes=decision.notes
        + (f"benefit below {config.benefit_threshold_pct:g}% threshold",),
    )
    expected = decision.expected_utility
    if expected is None:
        return veto
    if current_utility == 0:
        return decision if expected > 0 else veto
    gain = (expected - current_utility) / abs(current_utility)
    return decision if gain >= config.benefit_threshold_pct / 100.0 else veto


class Policy:
    """Stateful per-run decision policy: feed every tick measurement to
    `observe`, ask for an action with `decide`.

    Instances own mutable state (histories, Q-tables) and serve one
    episode at a time; run separate instances for concurrent episodes.
    """

    def __init__(self, kind: PolicyKind, smoothing_window: int = 1):
        self.kind = kind
        self.smoothing_window = smoothing_window
        self._loads: deque[float] = deque(maxlen=max(smoothing_window, 1))
        self._latest: MeasurementRecord | None = None

    def observe(self, record: MeasurementRecord) -> None:
        self._loads.append(record.load)
        self._latest = record

    def effective_load(self) -> float:
        return smooth_load(self._loads, self.smoothing_window)

    def decide(self, current: ClusterSize) -> PolicyDecision:
        raise NotImplementedError


class ReactivePolicy(Policy):
    def __init__(self, config: REConfig, limits: ModelConfig):
        super().__init__(PolicyKind.RE)
        self.config = config
        self.limits = limits

    def decide(self, current: ClusterSize) -> PolicyDecision:
        if self._latest is None:
            raise NoDataError("no measurement observed yet")
        return re_decide(self.config, self._latest.latency_ms, current, self.limits)


class RLPolicy(Policy):
    """Q-learning with mode-behaviour warm starts (the indirect solver)."""

    def __init__(
        self,
        store: LogStore,
        limits: ModelConfig,
        utility: UtilityConfig,
        clustering: ClusteringConfig,
        rl: RLConfig = RLConfig(),
        smoothing_window: int = 1,
    ):
        super().__init__(PolicyKind.RL_MB, smoothing_window)
        self.store = store
        self.limits = limits
        self.utility = utility
        self.clustering = clustering
        self.qtable = QTable(alpha=rl.alpha, gamma=rl.gamma)
        self._pending: tuple[ClusterSize, Action] | None = None

    def _mb_reward(self, size: int, load: float) -> float:
        selection = self.store.select_logs(size, load)
        clusters = cluster_behavior(selection.records, self.clustering)
        return state_reward(clusters, RewardMode.MB, self.utility, size).reward

    def decide(self, current: ClusterSize) -> PolicyDecision:
        if self._latest is None:
            raise NoDataError("no measurement observed yet")
        if self._pending is not None:
            prev_size, action = self._pending
            realized = utility_eval(
                self.utility, self._latest.latency_ms, self._latest.throughput, current
            )
            rl_update(self.qtable, prev_size, action, realized, current, self.limits)
        load = self.effective_load()
        targets = {current + a.signed_delta for a in permitted_actions(current, self.limits)}
        mb_rewards = {size: self._mb_reward(size, load) for size in targets}
        decision = rl_decide(self.qtable, current, mb_rewards, self.limits)
        self._pending = (current, decision.action)
        return decision


class MdpPolicy(Policy):
    """Direct solving of a freshly instantiated model at each step."""

    def __init__(
        self,
        kind: PolicyKind,
        store: LogStore,
        limits: ModelConfig,
        utility: UtilityConfig,
        clustering: ClusteringConfig,
        smoothing_window: int = 1,
    ):
        if kind not in MDP_KINDS:
            raise ConfigurationError(f"{kind.value} is not an MDP policy")
        super().__init__(kind, smoothing_window)
        self.store = store
        self.limits = limits
        self.utility = utility
        self.clustering = clustering

    def decide(self, current: ClusterSize) -> PolicyDecision:
        return mdp_decide(
            self.kind,
            self.store,
            self.effective_load(),
            current,
            self._latest,
            self.limits,
            self.utility,
            self.clustering,
        )


def make_policy(
    kind: PolicyKind,
    store: LogStore,
    limits: ModelConfig,
    utility: UtilityConfig,
    clustering: ClusteringConfig,
    re_config: REConfig | None = None,
    rl_config: RLConfig = RLConfig(),
    smoothing_window: int = 1,
) -> Policy:
    if kind is PolicyKind.RE:
        re_config = re_config or REConfig(upper_latency_ms=utility.latency_threshold_ms)
        return ReactivePolicy(re_config, limits)
    if kind is PolicyKind.RL_MB:
        return RLPolicy(store, limits, utility, clustering, rl_config, smoothing_window)
    return MdpPolicy(kind, store, limits, utility, clustering, smoothing_window)
