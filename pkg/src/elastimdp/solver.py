"""Exact solving of elasticity decision models.

The decision episode semantics: starting from the initial state, a
strategy repeatedly picks one enabled sized action.  Once the first add
(resp. rem) is taken, only further adds (removals) or no_op remain
enabled, so every path walks monotonically through cluster sizes and the
reachable graph is acyclic.  Choosing no_op ends the episode, and the
*only* reward collected is the current state's reward at that moment;
action rewards are zero throughout.  The value of a state is therefore

    V(s) = max( r(s),  max over sized actions a of  E[ V(s') | s, a ] )

computed exactly by dynamic programming along the two monotone branches.
Reachability probabilities for Pmax/Pmin queries follow the same scheme
with the value replaced by the probability of having visited a state
satisfying the query predicate.

`brute_force_oracle` re-derives the same quantities by expanding the full
decision tree top-down without memoization; it exists so tests can check
the dynamic program against an independently structured computation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

from .errors import SolverError
from .model import (
    Action,
    ActionKind,
    ClusterSize,
    MdpModel,
    MdpState,
    NO_OP,
    StateKey,
)

# Two candidate actions whose values differ by less than this (relative to
# the best value) count as tied and fall through to the tie-break order.
TIE_TOL = 1e-9

_ORACLE_STATE_LIMIT = 100


def tie_break_key(action: Action) -> tuple[int, int, int]:
    """Total order over equally-valued actions: no_op first, then the
    LARGEST size change, then rem before add.

    Staying put is free, so no_op wins any tie it is part of.  Among tied
    moves, the largest step is preferred because the value of a tied
    smaller step comes from continuing along the same path; taking the
    whole step now moves directly toward the profitable state instead of
    spreading the move over several decision rounds.  Removals win the
    final tie since fewer VMs cost less.
    """
    return (
        0 if action.kind is ActionKind.NO_OP else 1,
        -abs(action.delta),
        0 if action.kind is ActionKind.REM else 1,
    )


def _pick(candidates: list[tuple[float, Action]]) -> tuple[float, Action]:
    best = max(v for v, _ in candidates)
    tol = TIE_TOL * max(1.0, abs(best))
    tied = [a for v, a in candidates if best - v <= tol]
    return best, min(tied, key=tie_break_key)


@dataclass(frozen=True)
class StateValue:
    value: float
    action: Action


@dataclass(frozen=True)
class ValueMap:
    """Per-state maximum expected terminal reward and an optimal first
    action achieving it (ties resolved by `tie_break_key`)."""

    values: Mapping[StateKey, StateValue]

    def value(self, key: StateKey) -> float:
        return self.values[key].value

    def action(self, key: StateKey) -> Action:
        return self.values[key].action


@dataclass(frozen=True)
class PolicyDecision:
    """The action a policy settled on for the current step."""

    action: Action
    expected_utility: float | None
    target_size: ClusterSize
    bounded: bool = False
    notes: tuple[str, ...] = ()

    @property
    def is_no_op(self) -> bool:
        return self.action.kind is ActionKind.NO_OP


def _directional_values(model: MdpModel, kind: ActionKind) -> dict[StateKey, float]:
    """Values of the `kind`-locked branch, filled in target-first order."""
    descending = kind is ActionKind.ADD
    values: dict[StateKey, float] = {}
    keys = sorted(model.states, reverse=descending)
    for key in keys:
        best = model.state_rewards[key]
        for action in model.actions_from(key, lock=kind):
            if action.kind is ActionKind.NO_OP:
                continue
            expected = 0.0
            for target, p in model.outcome_distribution(key, action):
                if target not in values:
                    raise SolverError(
                        f"{action.label} from {model.states[key].label} reaches"
                        f" {model.states[target].label} against the size order;"
                        " the reachable graph is not acyclic"
                    )
                expected += p * values[target]
            best = max(best, expected)
        values[key] = best
    return values


def max_expected_reward(model: MdpModel) -> ValueMap:
    """Maximum expected terminal reward of every state, with an optimal
    first action, as if the decision episode started fresh there."""
    v_add = _directional_values(model, ActionKind.ADD)
    v_rem = _directional_values(model, ActionKind.REM)
    out: dict[StateKey, StateValue] = {}
    for key in model.states:
        candidates = [(model.state_rewards[key], NO_OP)]
        for action in model.actions_from(key):
            if action.kind is ActionKind.NO_OP:
                continue
            branch = v_add if action.kind is ActionKind.ADD else v_rem
            expected = sum(
                p * branch[target]
                for target, p in model.outcome_distribution(key, action)
            )
            candidates.append((expected, action))
        value, action = _pick(candidates)
        out[key] = StateValue(value, action)
    return ValueMap(out)


def clip_action(action: Action, config) -> tuple[Action, bool]:
    """Clip an all-targets action to the per-step add/remove limits."""
    limit = config.add_limit if action.kind is ActionKind.ADD else config.rem_limit
    if action.kind is ActionKind.NO_OP or action.delta <= limit:
        return action, False
    return Action(action.kind, limit), True


def decide(model: MdpModel) -> PolicyDecision:
    """First action of an optimal strategy from the initial state.

    On all-targets models the optimal action may point beyond the per-step
    limits; it is then clipped to the limit and flagged `bounded`.  The
    reported expected utility is the model optimum that motivated the
    action, not the value of the clipped step.
    """
    values = max_expected_reward(model)
    sv = values.values[model.initial.key]
    action, bounded = clip_action(sv.action, model.config)
    target = model.config.clamp(model.initial.vms_num + action.signed_delta)
    return PolicyDecision(
        action=action,
        expected_utility=sv.value,
        target_size=target,
        bounded=bounded,
    )


@dataclass(frozen=True)
class ReachabilityQuery:
    """An eventually-reach question over the model's strategies."""

    mode: str  # "max" or "min"
    predicate: Callable[[MdpState], bool]
    text: str = ""

    def __post_init__(self) -> None:
        if self.mode not in ("max", "min"):
            raise ValueError(f"mode must be 'max' or 'min', got {self.mode!r}")


def _directional_reach(
    model: MdpModel,
    kind: ActionKind,
    sat: Mapping[StateKey, bool],
    best_of: Callable,
) -> dict[StateKey, float]:
    descending = kind is ActionKind.ADD
    probs: dict[StateKey, float] = {}
    for key in sorted(model.states, reverse=descending):
        if sat[key]:
            probs[key] = 1.0
            continue
        candidates = [0.0]  # no_op terminates without reaching the target set
        for action in model.actions_from(key, lock=kind):
            if action.kind is ActionKind.NO_OP:
                continue
            candidates.append(
                sum(p * probs[t] for t, p in model.outcome_distribution(key, action))
            )
        probs[key] = best_of(candidates)
    return probs


def reachability_probability(model: MdpModel, query: ReachabilityQuery) -> float:
    """Maximum (or minimum) probability over strategies of eventually
    visiting a state satisfying the query predicate."""
    best_of = max if query.mode == "max" else min
    sat = {key: bool(query.predicate(state)) for key, state in model.states.items()}
    p_add = _directional_reach(model, ActionKind.ADD, sat, best_of)
    p_rem = _directional_reach(model, ActionKind.REM, sat, best_of)
    key = model.initial.key
    if sat[key]:
        return 1.0
    candidates = [0.0]
    for action in model.actions_from(key):
        if action.kind is ActionKind.NO_OP:
            continue
        branch = p_add if action.kind is ActionKind.ADD else p_rem
        candidates.append(
            sum(p * branch[t] for t, p in model.outcome_distribution(key, action))
        )
    return best_of(candidates)


def _check_oracle_scale(model: MdpModel) -> None:
    if len(model.states) > _ORACLE_STATE_LIMIT:
        raise SolverError(
            f"oracle is test-scale only ({len(model.states)} states >"
            f" {_ORACLE_STATE_LIMIT})"
        )


def _tree_value(model: MdpModel, key: StateKey, lock: ActionKind | None) -> float:
    value = model.state_rewards[key]
    for action in model.actions_from(key, lock=lock):
        if action.kind is ActionKind.NO_OP:
            continue
        expected = sum(
            p * _tree_value(model, target, action.kind)
            for target, p in model.outcome_distribution(key, action)
        )
        value = max(value, expected)
    return value


def brute_force_oracle(model: MdpModel) -> ValueMap:
    """Independent re-computation of `max_expected_reward`.

    Expands every strategy's decision tree top-down without memoization,
    so shared subproblems are deliberately re-evaluated; usable only on
    test-scale models (<= 100 states).
    """
    _check_oracle_scale(model)
    out: dict[StateKey, StateValue] = {}
    for key in model.states:
        candidates = [(model.state_rewards[key], NO_OP)]
        for action in model.actions_from(key):
            if action.kind is ActionKind.NO_OP:
                continue
            expected = sum(
                p * _tree_value(model, target, action.kind)
                for target, p in model.outcome_distribution(key, action)
            )
            candidates.append((expected, action))
        value, action = _pick(candidates)
        out[key] = StateValue(value, action)
    return ValueMap(out)


def _tree_reach(
    model: MdpModel,
    key: StateKey,
    lock: ActionKind | None,
    sat: Mapping[StateKey, bool],
    best_of: Callable,
) -> float:
    if sat[key]:
        return 1.0
    candidates = [0.0]
    for action in model.actions_from(key, lock=lock):
        if action.kind is ActionKind.NO_OP:
            continue
        candidates.append(
            sum(
                p * _tree_reach(model, target, action.kind, sat, best_of)
                for target, p in model.outcome_distribution(key, action)
            )
        )
    return best_of(candidates)


def brute_force_reachability(model: MdpModel, query: ReachabilityQuery) -> float:
    """Path-enumeration counterpart of `reachability_probability`."""
    _check_oracle_scale(model)
    best_of = max if query.mode == "max" else min
    sat = {key: bool(query.predicate(state)) for key, state in model.states.items()}
    return _tree_reach(model, model.initial.key, None, sat, best_of)
