"""Decision-model construction for horizontal VM elasticity.

A model is a small Markov decision process whose states describe cluster
sizes (optionally split into behavior clusters), whose actions add or
remove VMs or do nothing, and whose state rewards come from a utility
function evaluated on logged behavior.  Three variants are supported:

* M1 -- one state per cluster size, actions bounded by the per-step
  add/remove limits.
* M2 -- several states per size, one per behavior cluster, weighted by
  cluster population; action outcomes distribute over the target size's
  behavior states.
* M3 -- transitions reach *every* larger (smaller) size regardless of the
  per-step limits; the chosen action is clipped to the limits when it is
  enacted.  With k=1 this is the classic "all targets" model; with k>1 it
  combines the multi-behavior structure with all-target transitions.

Transition probabilities are stored per sized action (``add_2``, ``rem_1``,
``no_op``) and are scaled by the equal share each sized action receives
within its action type, so that the total mass of one action *type* from a
state sums to 1.  The per-entry probability is therefore
``type_share * target_behavior_weight``, which is exactly the edge label a
reader expects next to each arrow in a drawing of the model.  Solvers that
treat a sized action as a single nondeterministic choice must renormalize
its row by the row mass (see :mod:`elastimdp.solver`).

Models are immutable after construction and safe to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .errors import ConfigurationError, InstantiationError

# Number of active VMs; states are labeled s<vms_num>.
ClusterSize = int

# (vms_num, behavior_index) uniquely identifies a state within a model.
StateKey = tuple[int, int]

_MASS_TOL = 1e-9


class Variant(str, Enum):
    M1 = "M1"
    M2 = "M2"
    M3 = "M3"


class ActionKind(str, Enum):
    ADD = "add"
    REM = "rem"
    NO_OP = "no_op"


@dataclass(frozen=True)
class Action:
    """A sized elasticity action: add/remove `delta` VMs, or no_op."""

    kind: ActionKind
    delta: int = 0

    def __post_init__(self) -> None:
        if self.kind is ActionKind.NO_OP:
            if self.delta != 0:
                raise ValueError("no_op carries no size delta")
        elif self.delta < 1:
            raise ValueError(f"{self.kind.value} requires delta >= 1")

    @property
    def label(self) -> str:
        if self.kind is ActionKind.NO_OP:
            return "no_op"
        return f"{self.kind.value}_{self.delta}"

    @property
    def signed_delta(self) -> int:
        if self.kind is ActionKind.ADD:
            return self.delta
        if self.kind is ActionKind.REM:
            return -self.delta
        return 0

    @staticmethod
    def from_label(label: str) -> "Action":
        if label == "no_op":
            return NO_OP
        kind, _, num = label.partition("_")
        try:
            return Action(ActionKind(kind), int(num))
        except ValueError as exc:
            raise ValueError(f"not an action label: {label!r}") from exc

    def sort_key(self) -> tuple[int, int]:
        order = {ActionKind.ADD: 0, ActionKind.REM: 1, ActionKind.NO_OP: 2}
        return (order[self.kind], self.delta)


NO_OP = Action(ActionKind.NO_OP, 0)


@dataclass(frozen=True)
class ModelConfig:
    """Size range, per-step limits, and structural variant of a model."""

    min_vms: int
    max_vms: int
    add_limit: int = 3
    rem_limit: int = 2
    variant: Variant = Variant.M1
    k: int = 1

    def __post_init__(self) -> None:
        if not 1 <= self.min_vms <= self.max_vms:
            raise ConfigurationError(
                f"need 1 <= min_vms <= max_vms, got [{self.min_vms}, {self.max_vms}]"
            )
        if self.add_limit < 1 or self.rem_limit < 1:
            raise ConfigurationError("add_limit and rem_limit must be >= 1")
        if self.k < 1:
            raise ConfigurationError("k must be >= 1")

    @property
    def sizes(self) -> range:
        return range(self.min_vms, self.max_vms + 1)

    def clamp(self, vms: int) -> int:
        return max(self.min_vms, min(self.max_vms, vms))


@dataclass(frozen=True)
class MdpState:
    """One model state: a cluster size in a particular expected behavior.

    `weight` is the probability of encountering this behavior at this size
    (1.0 when the size has a single state).  `center` carries the behavior
    cluster's (latency_ms, throughput) point when known, used by metric
    predicates in reachability queries.  `phase_label` and
    `previous_action` mirror the bookkeeping a model checker would carry as
    explicit state variables; here they are metadata, and the solver
    enforces their semantics (direction lock, termination at no_op)
    directly on paths.
    """

    vms_num: int
    behavior_index: int = 0
    weight: float = 1.0
    center: tuple[float, float] | None = None
    phase_label: str = "decision"
    previous_action: str = "none"

    @property
    def key(self) -> StateKey:
        return (self.vms_num, self.behavior_index)

    @property
    def label(self) -> str:
        if self.behavior_index == 0 and self.weight == 1.0:
            return f"s{self.vms_num}"
        suffix = (
            chr(ord("a") + self.behavior_index)
            if self.behavior_index < 26
            else f"b{self.behavior_index}"
        )
        return f"s{self.vms_num}{suffix}"


@dataclass(frozen=True)
class BehaviorReward:
    """Reward assignment for one behavior cluster of one size."""

    reward: float
    weight: float = 1.0
    center: tuple[float, float] | None = None


# One transition row: ((target key, probability), ...).
TransitionRow = tuple[tuple[StateKey, float], ...]

PHASES = ("decision", "control", "accepted")
PREVIOUS_ACTIONS = ("none", "add", "rem", "no_op")


@dataclass(frozen=True)
class MdpModel:
    """An instantiated decision model.  Do not mutate the mappings."""

    config: ModelConfig
    states: Mapping[StateKey, MdpState]
    initial: MdpState
    transitions: Mapping[tuple[StateKey, Action], TransitionRow]
    state_rewards: Mapping[StateKey, float]
    action_rewards: Mapping[tuple[StateKey, Action, StateKey], float] = field(
        default_factory=dict
    )

    def ordered_states(self) -> list[MdpState]:
        return [self.states[k] for k in sorted(self.states)]

    def actions_from(self, key: StateKey, lock: ActionKind | None = None) -> list[Action]:
        """Sized actions enabled at `key`, honoring a direction lock.

        `lock=ADD` (resp. REM) restricts to additions (removals) plus
        no_op, the restriction that applies once a path has committed to a
        direction.
        """
        out = []
        for (skey, action) in self.transitions:
            if skey != key:
                continue
            if lock is not None and action.kind not in (lock, ActionKind.NO_OP):
                continue
            out.append(action)
        out.sort(key=Action.sort_key)
        return out

    def row(self, key: StateKey, action: Action) -> TransitionRow:
        return self.transitions[(key, action)]

    def outcome_distribution(self, key: StateKey, action: Action) -> list[tuple[StateKey, float]]:
        """Normalized outcome distribution of choosing one sized action."""
        row = self.transitions[(key, action)]
        mass = sum(p for _, p in row)
        return [(t, p / mass) for t, p in row]

    def type_distribution(self, key: StateKey, kind: ActionKind) -> dict[StateKey, float]:
        """Aggregate distribution of an action type, e.g. P(s4, add, .)."""
        dist: dict[StateKey, float] = {}
        for (skey, action), row in self.transitions.items():
            if skey != key or action.kind is not kind:
                continue
            for target, p in row:
                dist[target] = dist.get(target, 0.0) + p
        return dist

    def dump(self) -> str:
        """Deterministic text serialization (round-trips via `loads`)."""
        cfg = self.config
        lines = [
            "mdpdump 1",
            f"config min_vms={cfg.min_vms} max_vms={cfg.max_vms}"
            f" add_limit={cfg.add_limit} rem_limit={cfg.rem_limit}"
            f" variant={cfg.variant.value} k={cfg.k}",
            f"initial {self.initial.label}",
        ]
        labels = {key: state.label for key, state in self.states.items()}
        for state in self.ordered_states():
            center = (
                f"{state.center[0]!r},{state.center[1]!r}" if state.center else "-"
            )
            lines.append(
                f"state {state.label} vms={state.vms_num}"
                f" behavior={state.behavior_index} weight={state.weight!r}"
                f" reward={self.state_rewards[state.key]!r}"
                f" phase={state.phase_label} prev={state.previous_action}"
                f" center={center}"
            )
        for key in sorted(self.states):
            for action in self.actions_from(key):
                for target, p in self.transitions[(key, action)]:
                    lines.append(
                        f"trans {labels[key]} {action.label} {labels[target]} {p!r}"
                    )
        return "\n".join(lines) + "\n"

    @staticmethod
    def loads(text: str) -> "MdpModel":
        return _parse_dump(text)


def _normalize_rewards(
    config: ModelConfig,
    rewards: Mapping[int, object],
) -> dict[int, list[BehaviorReward]]:
    """Coerce the per-size reward input into per-size behavior lists."""
    out: dict[int, list[BehaviorReward]] = {}
    for size in config.sizes:
        if size not in rewards:
            raise InstantiationError(f"no reward entry for size {size}")
        entry = rewards[size]
        if isinstance(entry, BehaviorReward):
            behaviors = [entry]
        elif isinstance(entry, (int, float)):
            behaviors = [BehaviorReward(float(entry))]
        else:
            behaviors = list(entry)  # type: ignore[arg-type]
            if not behaviors:
                raise InstantiationError(f"empty reward list for size {size}")
            if not all(isinstance(b, BehaviorReward) for b in behaviors):
                raise InstantiationError(f"bad reward entry for size {size}")
        if config.variant is Variant.M1 and len(behaviors) > 1:
            raise InstantiationError(
                f"variant M1 admits one behavior per size, got {len(behaviors)}"
                f" for size {size}"
            )
        if len(behaviors) > max(config.k, 1):
            raise InstantiationError(
                f"{len(behaviors)} behaviors for size {size} exceed k={config.k}"
            )
        mass = sum(b.weight for b in behaviors)
        if not math.isclose(mass, 1.0, rel_tol=0.0, abs_tol=_MASS_TOL):
            raise InstantiationError(
                f"behavior weights at size {size} sum to {mass}, expected 1"
            )
        out[size] = behaviors
    return out


def _match_behavior(
    behaviors: Sequence[BehaviorReward],
    observation: tuple[float, float] | None,
) -> int:
    """Pick the behavior index the current observation is closest to.

    Distance is Euclidean after min-max normalizing each dimension over
    this size's cluster centers; falls back to the heaviest cluster when no
    observation or no centers are available.
    """
    if len(behaviors) == 1:
        return 0
    heaviest = max(range(len(behaviors)), key=lambda i: (behaviors[i].weight, -i))
    if observation is None:
        return heaviest
    centers = [b.center for b in behaviors]
    if any(c is None for c in centers):
        return heaviest
    lo = [min(c[d] for c in centers) for d in (0, 1)]  # type: ignore[index]
    hi = [max(c[d] for c in centers) for d in (0, 1)]  # type: ignore[index]

    def norm(point: tuple[float, float]) -> tuple[float, float]:
        return tuple(
            (point[d] - lo[d]) / (hi[d] - lo[d]) if hi[d] > lo[d] else 0.0
            for d in (0, 1)
        )  # type: ignore[return-value]

    obs = norm(observation)
    best, best_d2 = 0, math.inf
    for i, center in enumerate(centers):
        c = norm(center)  # type: ignore[arg-type]
        d2 = (c[0] - obs[0]) ** 2 + (c[1] - obs[1]) ** 2
        if d2 < best_d2 - 1e-12:
            best, best_d2 = i, d2
    return best


def build_model(
    config: ModelConfig,
    rewards: Mapping[int, object],
    current: ClusterSize,
    current_behavior: tuple[float, float] | None = None,
) -> MdpModel:
    """Instantiate a decision model for the current cluster size.

    `rewards` maps each size in the configured range to its reward: a bare
    float (single behavior), a BehaviorReward, or a sequence of
    BehaviorReward whose weights sum to 1.  `current_behavior` is the
    latest (latency_ms, throughput) observation, used to select the
    initial state among the current size's behavior clusters.
    """
    if not config.min_vms <= current <= config.max_vms:
        raise ConfigurationError(
            f"current size {current} outside [{config.min_vms}, {config.max_vms}]"
        )
    per_size = _normalize_rewards(config, rewards)

    states: dict[StateKey, MdpState] = {}
    state_rewards: dict[StateKey, float] = {}
    for size in config.sizes:
        for idx, behavior in enumerate(per_size[size]):
            state = MdpState(
                vms_num=size,
                behavior_index=idx,
                weight=behavior.weight,
                center=behavior.center,
            )
            states[state.key] = state
            state_rewards[state.key] = behavior.reward

    transitions: dict[tuple[StateKey, Action], TransitionRow] = {}
    action_rewards: dict[tuple[StateKey, Action, StateKey], float] = {}
    for size in config.sizes:
        if config.variant is Variant.M3:
            add_deltas = range(1, config.max_vms - size + 1)
            rem_deltas = range(1, size - config.min_vms + 1)
        else:
            add_deltas = range(1, min(config.add_limit, config.max_vms - size) + 1)
            rem_deltas = range(1, min(config.rem_limit, size - config.min_vms) + 1)
        for idx in range(len(per_size[size])):
            key = (size, idx)
            for kind, deltas in ((ActionKind.ADD, add_deltas), (ActionKind.REM, rem_deltas)):
                deltas = list(deltas)
                if not deltas:
                    continue
                share = 1.0 / len(deltas)
                for delta in deltas:
                    target_size = size + delta if kind is ActionKind.ADD else size - delta
                    action = Action(kind, delta)
                    row = tuple(
                        ((target_size, t_idx), share * b.weight)
                        for t_idx, b in enumerate(per_size[target_size])
                    )
                    transitions[(key, action)] = row
                    for target, _ in row:
                        action_rewards[(key, action, target)] = 0.0
            transitions[(key, NO_OP)] = ((key, 1.0),)
            action_rewards[(key, NO_OP, key)] = 0.0

    initial_idx = _match_behavior(per_size[current], current_behavior)
    return MdpModel(
        config=config,
        states=states,
        initial=states[(current, initial_idx)],
        transitions=transitions,
        state_rewards=state_rewards,
        action_rewards=action_rewards,
    )


@dataclass(frozen=True)
class ValidationReport:
    """Invariant violations found in a model; empty means valid."""

    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_model(model: MdpModel) -> ValidationReport:
    """Check every structural invariant; never raises."""
    bad: list[str] = []
    cfg = model.config
    labels = {key: state.label for key, state in model.states.items()}

    if model.initial.key not in model.states:
        bad.append(f"initial state {model.initial.label} not among model states")

    for key, state in model.states.items():
        if not cfg.min_vms <= state.vms_num <= cfg.max_vms:
            bad.append(f"state {state.label} size outside [{cfg.min_vms}, {cfg.max_vms}]")
        if state.phase_label not in PHASES:
            bad.append(f"state {state.label} has unknown phase {state.phase_label!r}")
        if state.previous_action not in PREVIOUS_ACTIONS:
            bad.append(
                f"state {state.label} has unknown previous_action"
                f" {state.previous_action!r}"
            )
        noop_row = model.transitions.get((key, NO_OP))
        if noop_row != ((key, 1.0),):
            bad.append(f"state {state.label} lacks a probability-1 no_op self-loop")

    # Per-size behavior weights form a distribution.
    by_size: dict[int, float] = {}
    for state in model.states.values():
        by_size[state.vms_num] = by_size.get(state.vms_num, 0.0) + state.weight
    for size, mass in sorted(by_size.items()):
        if abs(mass - 1.0) > _MASS_TOL:
            bad.append(f"behavior weights at size {size} sum to {mass:.10g} != 1")

    # Action-type mass, target direction, and monotonicity metadata.
    type_mass: dict[tuple[StateKey, ActionKind], float] = {}
    for (key, action), row in model.transitions.items():
        if key not in model.states:
            bad.append(f"transition out of unknown state key {key}")
            continue
        state = model.states[key]
        for target, p in row:
            if target not in model.states:
                bad.append(f"{labels[key]} {action.label} targets unknown key {target}")
                continue
            if p < 0:
                bad.append(f"negative probability at ({labels[key]}, {action.label})")
            tsize = model.states[target].vms_num
            if action.kind is ActionKind.ADD and tsize <= state.vms_num:
                bad.append(
                    f"add transition {labels[key]} -> {labels[target]} does not grow the cluster"
                )
            if action.kind is ActionKind.REM and tsize >= state.vms_num:
                bad.append(
                    f"rem transition {labels[key]} -> {labels[target]} does not shrink the cluster"
                )
            if (
                action.kind is not ActionKind.NO_OP
                and cfg.variant is not Variant.M3
                and tsize != state.vms_num + action.signed_delta
            ):
                bad.append(
                    f"{action.label} from {labels[key]} targets size {tsize},"
                    f" expected {state.vms_num + action.signed_delta}"
                )
        for target, _ in row:
            if target not in model.states:
                continue
            if (
                PHASES.index(model.states[target].phase_label)
                < PHASES.index(state.phase_label)
                and target != key
            ):
                bad.append(
                    f"phase order: {labels[key]} ({state.phase_label}) ->"
                    f" {labels[target]} ({model.states[target].phase_label})"
                )
        kind_key = (key, action.kind)
        type_mass[kind_key] = type_mass.get(kind_key, 0.0) + sum(p for _, p in row)
        if state.previous_action == "add" and action.kind is ActionKind.REM:
            bad.append(
                f"monotonicity: rem enabled at {labels[key]} after a previous add"
            )
        if state.previous_action == "rem" and action.kind is ActionKind.ADD:
            bad.append(
                f"monotonicity: add enabled at {labels[key]} after a previous rem"
            )
        if state.phase_label == "accepted" and action.kind is not ActionKind.NO_OP:
            bad.append(
                f"end component: {action.label} enabled at accepted state {labels[key]}"
            )

    for (key, kind), mass in sorted(type_mass.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        if abs(mass - 1.0) > _MASS_TOL:
            bad.append(
                f"probability mass {mass:.10g} != 1 at ({labels[key]}, {kind.value})"
            )

    for (key, action, target), r in model.action_rewards.items():
        if r != 0.0:
            bad.append(
                f"action reward {r} != 0 on {labels.get(key, key)}"
                f" {action.label} -> {labels.get(target, target)}"
            )

    return ValidationReport(tuple(bad))


def _parse_dump(text: str) -> MdpModel:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split() != ["mdpdump", "1"]:
        raise InstantiationError("not a model dump (missing 'mdpdump 1' header)")

    def fields(line: str, prefix: str) -> dict[str, str]:
        parts = line[len(prefix):].split()
        return dict(part.split("=", 1) for part in parts)

    cfg_fields = fields(lines[1], "config ")
    config = ModelConfig(
        min_vms=int(cfg_fields["min_vms"]),
        max_vms=int(cfg_fields["max_vms"]),
        add_limit=int(cfg_fields["add_limit"]),
        rem_limit=int(cfg_fields["rem_limit"]),
        variant=Variant(cfg_fields["variant"]),
        k=int(cfg_fields["k"]),
    )
    initial_label = lines[2].split()[1]

    states: dict[StateKey, MdpState] = {}
    rewards: dict[StateKey, float] = {}
    by_label: dict[str, StateKey] = {}
    transitions: dict[tuple[StateKey, Action], list[tuple[StateKey, float]]] = {}
    action_rewards: dict[tuple[StateKey, Action, StateKey], float] = {}
    for line in lines[3:]:
        if line.startswith("state "):
            label = line.split()[1]
            attrs = dict(part.split("=", 1) for part in line.split()[2:])
            center = None
            if attrs["center"] != "-":
                lat, thr = attrs["center"].split(",")
                center = (float(lat), float(thr))
            state = MdpState(
                vms_num=int(attrs["vms"]),
                behavior_index=int(attrs["behavior"]),
                weight=float(attrs["weight"]),
                center=center,
                phase_label=attrs["phase"],
                previous_action=attrs["prev"],
            )
            states[state.key] = state
            rewards[state.key] = float(attrs["reward"])
            by_label[label] = state.key
        elif line.startswith("trans "):
            _, src, action_label, dst, prob = line.split()
            action = Action.from_label(action_label)
            entry = (by_label[dst], float(prob))
            transitions.setdefault((by_label[src], action), []).append(entry)
            action_rewards[(by_label[src], action, by_label[dst])] = 0.0
        else:
            raise InstantiationError(f"unrecognized dump line: {line!r}")

    if initial_label not in by_label:
        raise InstantiationError(f"initial state {initial_label} not defined")
    return MdpModel(
        config=config,
        states=states,
        initial=states[by_label[initial_label]],
        transitions={k: tuple(v) for k, v in transitions.items()},
        state_rewards=rewards,
        action_rewards=action_rewards,
    )
