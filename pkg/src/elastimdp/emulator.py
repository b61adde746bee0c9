"""Workload generation and desk-scale system emulation.

The incoming load follows a sinusoid between a minimum and maximum rate;
LV1 starts the wave at the minimum, LV2 a quarter period later at the
mean.  The "system" is a log replay: for the current (vms, load) pair the
emulator picks one matching measurement (nearest-neighbor fallback for
missing pairs) and perturbs it with multiplicative Gaussian noise.  A
synthetic dataset generator provides a low-variance stand-in for real
cluster logs using a saturating utilization/latency curve.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, NoDataError
from .logs import LogStore, MeasurementRecord
from .policies import Policy, PostProcessConfig, apply_benefit_threshold
from .rewards import UtilityConfig, utility_eval

_LATENCY_CURVE_EPS = 1e-3


class LoadVariation(str, Enum):
    LV1 = "LV1"  # starts at the minimum load
    LV2 = "LV2"  # starts at the mean load (quarter-period shift)


@dataclass(frozen=True)
class LoadProfile:
    load_min: float = 1000.0
    load_max: float = 46000.0
    period_ticks: int = 315
    variation: LoadVariation = LoadVariation.LV1

    def __post_init__(self) -> None:
        if self.load_min >= self.load_max:
            raise ConfigurationError("load_min must be below load_max")
        if self.period_ticks < 2:
            raise ConfigurationError("period must be at least 2 ticks")


def gen_load(profile: LoadProfile, tick: int) -> float:
    """Sinusoidal load at `tick`: mid + A*sin(2*pi*t/period + phase)."""
    mid = (profile.load_min + profile.load_max) / 2
    amplitude = (profile.load_max - profile.load_min) / 2
    phase = -math.pi / 2 if profile.variation is LoadVariation.LV1 else 0.0
    return mid + amplitude * math.sin(2 * math.pi * tick / profile.period_ticks + phase)


@dataclass(frozen=True)
class SyntheticModelParams:
    """Shape of the synthetic cluster behavior.

    Latency follows base * (1 + u^p / max(eps, 1 - min(u, 0.999))) with
    utilization u = load / (vms * capacity): flat near idle, a sharp knee
    approaching saturation, and still strictly increasing past it.
    """

    per_vm_capacity: float = 4500.0
    base_latency_ms: float = 25.0
    saturation_exponent: float = 2.5
    noise_stddev_fraction: float = 0.05
    samples_per_point: int = 12

    def __post_init__(self) -> None:
        if self.per_vm_capacity <= 0:
            raise ConfigurationError("per_vm_capacity must be positive")
        if self.base_latency_ms <= 0:
            raise ConfigurationError("base_latency_ms must be positive")
        if self.noise_stddev_fraction < 0:
            raise ConfigurationError("noise fraction must be >= 0")
        if self.samples_per_point < 1:
            raise ConfigurationError("samples_per_point must be >= 1")

    def latency(self, vms: int, load: float) -> float:
        u = load / (vms * self.per_vm_capacity)
        knee = max(_LATENCY_CURVE_EPS, 1.0 - min(u, 0.999))
        return self.base_latency_ms * (1.0 + u**self.saturation_exponent / knee)

    def throughput(self, vms: int, load: float) -> float:
        return min(load, vms * self.per_vm_capacity)


def gen_synthetic_dataset(
    params: SyntheticModelParams,
    sizes: Sequence[int],
    load_grid: Sequence[float],
    seed: int = 0,
) -> list[MeasurementRecord]:
    """Noisy samples of the synthetic behavior over a (vms, load) grid."""
    rng = np.random.default_rng(seed)
    records = []
    tick = 0
    for vms in sizes:
        for load in load_grid:
            lat = params.latency(vms, load)
            thr = params.throughput(vms, load)
            for _ in range(params.samples_per_point):
                noisy_lat = max(0.0, float(lat * rng.normal(1.0, params.noise_stddev_fraction)))
                noisy_thr = max(0.0, float(thr * rng.normal(1.0, params.noise_stddev_fraction)))
                records.append(
                    MeasurementRecord(tick, vms, float(load), noisy_lat, noisy_thr)
                )
                tick += 1
    return records


def emulate_state(
    store: LogStore,
    vms: int,
    load: float,
    noise_fraction: float,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Realized (latency_ms, throughput) of running `vms` VMs at `load`.

    Picks one logged record for the nearest (vms, load bucket) pair and
    perturbs both metrics multiplicatively with Normal(1, noise_fraction)
    draws, clamped at zero.  Performs the same RNG call sequence on every
    invocation (one integer draw, two normals), so episodes sharing a run
    seed face the same stochastic environment tick for tick.
    """
    if len(store) == 0:
        raise NoDataError("emulation dataset is empty")
    selection = store.select_logs(vms, load)
    record = selection.records[int(rng.integers(len(selection.records)))]
    lat_noise, thr_noise = rng.normal(1.0, noise_fraction, size=2)
    return (
        max(0.0, float(record.latency_ms * lat_noise)),
        max(0.0, float(record.throughput * thr_noise)),
    )


@dataclass(frozen=True)
class ScheduleConfig:
    """Timing of an experiment: measurement ticks, decision cadence."""

    tick_seconds: float = 30.0
    decision_every_ticks: int = 10
    horizon_ticks: int = 630
    initial_vms: int = 4
    emulation_noise_fraction: float = 0.05

    def __post_init__(self) -> None:
        if self.tick_seconds <= 0:
            raise ConfigurationError("tick_seconds must be positive")
        if self.decision_every_ticks < 1:
            raise ConfigurationError("decision interval must be >= 1 tick")
        if self.horizon_ticks < 1:
            raise ConfigurationError("horizon must be >= 1 tick")
        if self.initial_vms < 1:
            raise ConfigurationError("initial_vms must be >= 1")
        if self.emulation_noise_fraction < 0:
            raise ConfigurationError("noise fraction must be >= 0")

    def decision_ticks(self) -> list[int]:
        return [
            t
            for t in range(self.horizon_ticks)
            if t > 0 and t % self.decision_every_ticks == 0
        ]


@dataclass(frozen=True)
class TickRecord:
    """One emulated time unit of an episode."""

    tick: int
    load: float
    vms: int
    latency_ms: float
    throughput: float
    utility: float
    violation: bool
    decision: str  # action label at decision ticks, "" otherwise
    decision_ms: float  # wall-clock cost of reaching the decision


@dataclass
class ExperimentTrace:
    """Per-tick record of one policy episode."""

    policy: str
    seed: int
    records: list[TickRecord] = field(default_factory=list)
    valid: bool = True
    error: str | None = None

    def loads(self) -> list[float]:
        return [r.load for r in self.records]

    def utilities(self) -> list[float]:
        return [r.utility for r in self.records]

    def decisions(self) -> list[str]:
        return [r.decision for r in self.records if r.decision]


TRACE_HEADER = (
    "tick,load,vms,latency_ms,throughput,utility,violation,decision,decision_ms"
)


def trace_to_csv(trace: ExperimentTrace) -> str:
    lines = [TRACE_HEADER]
    for r in trace.records:
        lines.append(
            f"{r.tick},{r.load!r},{r.vms},{r.latency_ms!r},{r.throughput!r},"
            f"{r.utility!r},{int(r.violation)},{r.decision},{r.decision_ms!r}"
        )
    return "\n".join(lines) + "\n"


def trace_from_csv(text: str, policy: str = "", seed: int = 0) -> ExperimentTrace:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != TRACE_HEADER:
        raise ConfigurationError(f"expected trace header {TRACE_HEADER!r}")
    records = []
    for line in lines[1:]:
        parts = line.split(",")
        records.append(
            TickRecord(
                tick=int(parts[0]),
                load=float(parts[1]),
                vms=int(parts[2]),
                latency_ms=float(parts[3]),
                throughput=float(parts[4]),
                utility=float(parts[5]),
                violation=bool(int(parts[6])),
                decision=parts[7],
                decision_ms=float(parts[8]),
            )
        )
    return ExperimentTrace(policy=policy, seed=seed, records=records)


def run_episode(
    policy: Policy,
    profile: LoadProfile,
    store: LogStore,
    schedule: ScheduleConfig,
    utility: UtilityConfig,
    post: PostProcessConfig = PostProcessConfig(),
    rng_seed: int | np.random.SeedSequence = 0,
) -> ExperimentTrace:
    """Run one policy against the emulated system.

    Each tick generates the load, emulates the realized system state at
    the current size, and records the realized utility and any threshold
    violation.  At every decision tick the policy is invoked, the benefit
    threshold applied, and the chosen size change takes effect at the next
    tick.  Policy or emulation failures abort the run and return the
    partial trace flagged invalid.
    """
    rng = np.random.default_rng(rng_seed)
    seed_repr = rng_seed if isinstance(rng_seed, int) else 0
    trace = ExperimentTrace(policy=policy.kind.value, seed=seed_repr)
    limits = getattr(policy, "limits", None)
    vms = schedule.initial_vms
    pending: int | None = None
    try:
        for tick in range(schedule.horizon_ticks):
            if pending is not None:
                vms = pending
                pending = None
            load = gen_load(profile, tick)
            latency, throughput = emulate_state(
                store, vms, load, schedule.emulation_noise_fraction, rng
            )
            realized = utility_eval(utility, latency, throughput, vms)
            violation = latency > utility.latency_threshold_ms
            policy.observe(MeasurementRecord(tick, vms, load, latency, throughput))

            decision_label, decision_ms = "", 0.0
            if tick > 0 and tick % schedule.decision_every_ticks == 0:
                started = time.perf_counter()
                decision = policy.decide(vms)
                decision_ms = (time.perf_counter() - started) * 1000.0
                decision = apply_benefit_threshold(decision, realized, post)
                decision_label = decision.action.label
                target = decision.target_size
                if limits is not None:
                    target = limits.clamp(target)
                if target != vms:
                    pending = target
            trace.records.append(
                TickRecord(
                    tick=tick,
                    load=load,
                    vms=vms,
                    latency_ms=latency,
                    throughput=throughput,
                    utility=realized,
                    violation=violation,
                    decision=decision_label,
                    decision_ms=decision_ms,
                )
            )
    except Exception as exc:  # noqa: BLE001 - partial trace must survive
        trace.valid = False
        trace.error = f"{type(exc).__name__}: {exc}"
    return trace
