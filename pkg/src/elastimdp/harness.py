"""Experiment configuration, orchestration, and metrics.

An experiment runs a list of policies for several emulated episodes each.
Fairness across policies comes from seeding: the load wave is
deterministic and the emulation noise stream for run index i derives from
(base_seed, i) only, never from the policy, so every policy in run i faces
the identical environment.  Configuration lives in a flat INI file with
units spelled out in the key names; every key can be overridden on the
command line.
"""

from __future__ import annotations

import configparser
import io
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .emulator import (
    ExperimentTrace,
    LoadProfile,
    LoadVariation,
    ScheduleConfig,
    SyntheticModelParams,
    gen_synthetic_dataset,
    run_episode,
    trace_to_csv,
)
from .errors import ConfigurationError
from .logs import LogStore, MeasurementRecord, read_records_csv
from .model import MdpModel, ModelConfig
from .policies import (
    PolicyKind,
    PostProcessConfig,
    REConfig,
    RLConfig,
    make_policy,
)
from .queries import parse_query
from .rewards import ClusteringConfig, UtilityConfig, UtilityKind
from .solver import reachability_probability


@dataclass(frozen=True)
class DatasetSpec:
    """Where the measurement logs come from: a CSV file or the synthetic
    generator."""

    path: str | None = None
    synthetic: SyntheticModelParams | None = None
    seed: int = 99

    def __post_init__(self) -> None:
        if (self.path is None) == (self.synthetic is None):
            raise ConfigurationError("dataset needs exactly one of path/synthetic")


@dataclass(frozen=True)
class ExperimentConfig:
    policies: tuple[PolicyKind, ...] = (
        PolicyKind.RE,
        PolicyKind.RL_MB,
        PolicyKind.MDP_MB,
        PolicyKind.MDP_EB,
        PolicyKind.MDP2,
        PolicyKind.MDP3,
    )
    runs: int = 10
    base_seed: int = 20240
    model: ModelConfig = ModelConfig(min_vms=4, max_vms=16, add_limit=3, rem_limit=2)
    utility: UtilityConfig = UtilityConfig()
    clustering: ClusteringConfig = ClusteringConfig()
    load: LoadProfile = LoadProfile()
    post: PostProcessConfig = PostProcessConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    re_config: REConfig = REConfig()
    rl_config: RLConfig = RLConfig()
    dataset: DatasetSpec = DatasetSpec(synthetic=SyntheticModelParams())

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ConfigurationError("runs must be >= 1")
        if not self.policies:
            raise ConfigurationError("at least one policy is required")
        if not self.model.min_vms <= self.schedule.initial_vms <= self.model.max_vms:
            raise ConfigurationError(
                f"initial_vms {self.schedule.initial_vms} outside the model range"
            )


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


def load_dataset(config: ExperimentConfig) -> list[MeasurementRecord]:
    spec = config.dataset
    if spec.path is not None:
        return read_records_csv(spec.path)
    assert spec.synthetic is not None
    loads = synthetic_load_grid(config)
    return gen_synthetic_dataset(
        spec.synthetic, list(config.model.sizes), loads, seed=spec.seed
    )


def synthetic_load_grid(config: ExperimentConfig) -> list[float]:
    step = config.clustering.load_bucket_width
    grid = []
    load = config.load.load_min
    while load <= config.load.load_max + 1e-9:
        grid.append(float(load))
        load += step
    return grid


def build_store(config: ExperimentConfig, records: Sequence[MeasurementRecord]) -> LogStore:
    return LogStore(records, bucket_width=config.clustering.load_bucket_width)


@dataclass(frozen=True)
class TraceMetrics:
    """Per-trace scoring: mean realized utility, cumulative threshold
    violations, and decision-time statistics."""

    mean_utility: float
    violations: int
    mean_decision_ms: float
    max_decision_ms: float
    ticks: int
    valid: bool = True


def compute_metrics(trace: ExperimentTrace) -> TraceMetrics:
    if not trace.records:
        return TraceMetrics(0.0, 0, 0.0, 0.0, 0, trace.valid)
    utilities = [r.utility for r in trace.records]
    decision_times = [r.decision_ms for r in trace.records if r.decision]
    return TraceMetrics(
        mean_utility=statistics.fmean(utilities),
        violations=sum(r.violation for r in trace.records),
        mean_decision_ms=statistics.fmean(decision_times) if decision_times else 0.0,
        max_decision_ms=max(decision_times, default=0.0),
        ticks=len(trace.records),
        valid=trace.valid,
    )


@dataclass(frozen=True)
class PolicySummary:
    policy: PolicyKind
    per_run: tuple[TraceMetrics, ...]

    @property
    def mean_utility(self) -> float:
        return statistics.fmean(m.mean_utility for m in self.per_run)

    @property
    def mean_violations(self) -> float:
        return statistics.fmean(m.violations for m in self.per_run)

    @property
    def total_violations(self) -> int:
        return sum(m.violations for m in self.per_run)

    @property
    def mean_decision_ms(self) -> float:
        return statistics.fmean(m.mean_decision_ms for m in self.per_run)

    @property
    def max_decision_ms(self) -> float:
        return max(m.max_decision_ms for m in self.per_run)


@dataclass
class ComparisonResult:
    config: ExperimentConfig
    summaries: dict[PolicyKind, PolicySummary]
    traces: dict[tuple[PolicyKind, int], ExperimentTrace]

    @property
    def all_valid(self) -> bool:
        return all(t.valid for t in self.traces.values())


def run_seed(base_seed: int, run_index: int) -> np.random.SeedSequence:
    """Emulation seed for one run: a function of the run index only, so
    every policy replays the identical noise stream."""
    return np.random.SeedSequence(entropy=base_seed, spawn_key=(run_index,))


def run_comparison(
    config: ExperimentConfig,
    records: Sequence[MeasurementRecord] | None = None,
) -> ComparisonResult:
    """Run every configured policy for every run index and aggregate.

    Cells execute sequentially in (policy, run) order; each cell gets a
    fresh policy instance, so cells are independent and the aggregation
    does not depend on execution order.
    """
    if records is None:
        records = load_dataset(config)
    store = build_store(config, records)
    traces: dict[tuple[PolicyKind, int], ExperimentTrace] = {}
    summaries: dict[PolicyKind, PolicySummary] = {}
    for kind in config.policies:
        per_run = []
        for run in range(config.runs):
            policy = make_policy(
                kind,
                store,
                config.model,
                config.utility,
                config.clustering,
                re_config=config.re_config,
                rl_config=config.rl_config,
                smoothing_window=config.post.smoothing_window,
            )
            trace = run_episode(
                policy,
                config.load,
                store,
                config.schedule,
                config.utility,
                post=config.post,
                rng_seed=run_seed(config.base_seed, run),
            )
            trace.seed = run
            traces[(kind, run)] = trace
            per_run.append(compute_metrics(trace))
        summaries[kind] = PolicySummary(kind, tuple(per_run))
    return ComparisonResult(config=config, summaries=summaries, traces=traces)


def evaluate_query(model: MdpModel, query_text: str) -> float:
    """Parse a Pmax/Pmin reachability query and evaluate it on a model."""
    return reachability_probability(model, parse_query(query_text))


# --- configuration file handling -------------------------------------------

_DEFAULT_INI = """\
[experiment]
policies = re, rl_mb, mdp_mb, mdp_eb, mdp2, mdp3
runs = 10
base_seed = 20240

[model]
min_vms = 4
max_vms = 16
add_limit = 3
rem_limit = 2

[utility]
kind = r1
latency_threshold_ms = 60

[clustering]
k = 4
dims = 2
load_bucket_width_reqs = 1000
max_iterations = 50
seed = 7

[load]
load_min_reqs = 1000
load_max_reqs = 46000
period_ticks = 315
variation = LV1

[postprocess]
benefit_threshold_pct = 0
smoothing_window_ticks = 1

[schedule]
tick_seconds = 30
decision_every_ticks = 10
horizon_ticks = 630
initial_vms = 4
emulation_noise_fraction = 0.05

[dataset]
source = synthetic
per_vm_capacity_reqs = 4500
base_latency_ms = 25
saturation_exponent = 2.5
noise_stddev_fraction = 0.05
samples_per_point = 12
seed = 99

[re]
upper_latency_ms = 60

[rl]
alpha = 0.1
gamma = 0.5
"""


def default_config_ini() -> str:
    return _DEFAULT_INI


def parse_config(
    text: str, overrides: Mapping[str, str] | None = None
) -> ExperimentConfig:
    """Parse the sectioned key-value experiment configuration.

    `overrides` maps "section.key" to replacement values (CLI flags).
    Unknown sections or keys are rejected so typos fail loudly.
    """
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"bad config syntax: {exc}") from exc
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if not key:
            raise ConfigurationError(f"override {dotted!r} is not section.key=value")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value)

    known = {
        "experiment": {"policies", "runs", "base_seed"},
        "model": {"min_vms", "max_vms", "add_limit", "rem_limit"},
        "utility": {"kind", "latency_threshold_ms"},
        "clustering": {"k", "dims", "load_bucket_width_reqs", "max_iterations", "seed"},
        "load": {"load_min_reqs", "load_max_reqs", "period_ticks", "variation"},
        "postprocess": {"benefit_threshold_pct", "smoothing_window_ticks"},
        "schedule": {
            "tick_seconds",
            "decision_every_ticks",
            "horizon_ticks",
            "initial_vms",
            "emulation_noise_fraction",
        },
        "dataset": {
            "source",
            "path",
            "per_vm_capacity_reqs",
            "base_latency_ms",
            "saturation_exponent",
            "noise_stddev_fraction",
            "samples_per_point",
            "seed",
        },
        "re": {"upper_latency_ms", "lower_latency_ms", "step_size"},
        "rl": {"alpha", "gamma"},
    }
    for section in parser.sections():
        if section not in known:
            raise ConfigurationError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in known[section]:
                raise ConfigurationError(f"unknown config key {section}.{key}")

    def get(section: str, key: str, default: str) -> str:
        return parser.get(section, key, fallback=default).strip()

    try:
        policies = tuple(
            PolicyKind(name.strip())
            for name in get("experiment", "policies", "re, rl_mb, mdp_mb, mdp_eb, mdp2, mdp3").split(",")
            if name.strip()
        )
    except ValueError as exc:
        raise ConfigurationError(f"unknown policy name: {exc}") from exc

    try:
        model = ModelConfig(
            min_vms=int(get("model", "min_vms", "4")),
            max_vms=int(get("model", "max_vms", "16")),
            add_limit=int(get("model", "add_limit", "3")),
            rem_limit=int(get("model", "rem_limit", "2")),
        )
        utility = UtilityConfig(
            kind=UtilityKind(get("utility", "kind", "r1")),
            latency_threshold_ms=float(get("utility", "latency_threshold_ms", "60")),
        )
        clustering = ClusteringConfig(
            k=int(get("clustering", "k", "4")),
            dims=int(get("clustering", "dims", "2")),
            load_bucket_width=float(get("clustering", "load_bucket_width_reqs", "1000")),
            max_iterations=int(get("clustering", "max_iterations", "50")),
            seed=int(get("clustering", "seed", "7")),
        )
        load = LoadProfile(
            load_min=float(get("load", "load_min_reqs", "1000")),
            load_max=float(get("load", "load_max_reqs", "46000")),
            period_ticks=int(get("load", "period_ticks", "315")),
            variation=LoadVariation(get("load", "variation", "LV1")),
        )
        post = PostProcessConfig(
            benefit_threshold_pct=float(get("postprocess", "benefit_threshold_pct", "0")),
            smoothing_window=int(get("postprocess", "smoothing_window_ticks", "1")),
        )
        schedule = ScheduleConfig(
            tick_seconds=float(get("schedule", "tick_seconds", "30")),
            decision_every_ticks=int(get("schedule", "decision_every_ticks", "10")),
            horizon_ticks=int(get("schedule", "horizon_ticks", "630")),
            initial_vms=int(get("schedule", "initial_vms", "4")),
            emulation_noise_fraction=float(
                get("schedule", "emulation_noise_fraction", "0.05")
            ),
        )
        step_size = get("re", "step_size", "")
        re_config = REConfig(
            upper_latency_ms=float(get("re", "upper_latency_ms",
                                       get("utility", "latency_threshold_ms", "60"))),
            lower_latency_ms=(
                float(get("re", "lower_latency_ms", "")) if get("re", "lower_latency_ms", "") else None
            ),
            step_size=int(step_size) if step_size else None,
        )
        rl_config = RLConfig(
            alpha=float(get("rl", "alpha", "0.1")),
            gamma=float(get("rl", "gamma", "0.5")),
        )
        source = get("dataset", "source", "synthetic")
        if source == "synthetic":
            dataset = DatasetSpec(
                synthetic=SyntheticModelParams(
                    per_vm_capacity=float(get("dataset", "per_vm_capacity_reqs", "4500")),
                    base_latency_ms=float(get("dataset", "base_latency_ms", "25")),
                    saturation_exponent=float(get("dataset", "saturation_exponent", "2.5")),
                    noise_stddev_fraction=float(
                        get("dataset", "noise_stddev_fraction", "0.05")
                    ),
                    samples_per_point=int(get("dataset", "samples_per_point", "12")),
                ),
                seed=int(get("dataset", "seed", "99")),
            )
        elif source == "csv":
            path = get("dataset", "path", "")
            if not path:
                raise ConfigurationError("dataset.source=csv requires dataset.path")
            dataset = DatasetSpec(path=path, seed=int(get("dataset", "seed", "99")))
        else:
            raise ConfigurationError(
                f"dataset.source must be 'synthetic' or 'csv', got {source!r}"
            )
        return ExperimentConfig(
            policies=policies,
            runs=int(get("experiment", "runs", "10")),
            base_seed=int(get("experiment", "base_seed", "20240")),
            model=model,
            utility=utility,
            clustering=clustering,
            load=load,
            post=post,
            schedule=schedule,
            re_config=re_config,
            rl_config=rl_config,
            dataset=dataset,
        )
    except ValueError as exc:
        raise ConfigurationError(f"bad config value: {exc}") from exc


def read_config(path: str, overrides: Mapping[str, str] | None = None) -> ExperimentConfig:
    config = parse_config(Path(path).read_text(encoding="utf-8"), overrides)
    if config.dataset.path is not None and not Path(config.dataset.path).exists():
        raise ConfigurationError(f"dataset file not found: {config.dataset.path}")
    return config


# --- output files ------------------------------------------------------------

SUMMARY_HEADER = (
    "policy,runs,mean_utility,mean_violations,total_violations,"
    "mean_decision_ms,max_decision_ms"
)
RUNS_HEADER = "policy,run,ticks,mean_utility,violations,mean_decision_ms,max_decision_ms,valid"


def summary_csv(result: ComparisonResult) -> str:
    lines = [SUMMARY_HEADER]
    for kind, s in result.summaries.items():
        lines.append(
            f"{kind.value},{len(s.per_run)},{s.mean_utility!r},{s.mean_violations!r},"
            f"{s.total_violations},{s.mean_decision_ms!r},{s.max_decision_ms!r}"
        )
    return "\n".join(lines) + "\n"


def runs_csv(result: ComparisonResult) -> str:
    lines = [RUNS_HEADER]
    for kind, s in result.summaries.items():
        for run, m in enumerate(s.per_run):
            lines.append(
                f"{kind.value},{run},{m.ticks},{m.mean_utility!r},{m.violations},"
                f"{m.mean_decision_ms!r},{m.max_decision_ms!r},{int(m.valid)}"
            )
    return "\n".join(lines) + "\n"


def text_report(result: ComparisonResult) -> str:
    config = result.config
    out = io.StringIO()
    out.write("policy comparison report\n")
    out.write("========================\n")
    out.write(
        f"runs={config.runs} horizon={config.schedule.horizon_ticks} ticks"
        f" ({config.schedule.tick_seconds:g}s each),"
        f" decisions every {config.schedule.decision_every_ticks} ticks\n"
    )
    out.write(
        f"vms range [{config.model.min_vms}, {config.model.max_vms}],"
        f" limits +{config.model.add_limit}/-{config.model.rem_limit},"
        f" utility {config.utility.kind.value}"
        f" (threshold {config.utility.latency_threshold_ms:g} ms)\n"
    )
    out.write(
        f"load {config.load.variation.value}"
        f" [{config.load.load_min:g}, {config.load.load_max:g}] req/s,"
        f" period {config.load.period_ticks} ticks\n\n"
    )
    out.write(
        f"{'policy':<8} {'mean utility':>14} {'mean violations':>16}"
        f" {'mean dec ms':>12} {'max dec ms':>11}\n"
    )
    for kind, s in result.summaries.items():
        out.write(
            f"{kind.value:<8} {s.mean_utility:>14.2f} {s.mean_violations:>16.1f}"
            f" {s.mean_decision_ms:>12.2f} {s.max_decision_ms:>11.2f}\n"
        )
    invalid = [key for key, trace in result.traces.items() if not trace.valid]
    if invalid:
        out.write("\ninvalid traces:\n")
        for kind, run in invalid:
            out.write(f"  {kind.value} run {run}: {result.traces[(kind, run)].error}\n")
    return out.getvalue()


def write_outputs(result: ComparisonResult, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(summary_csv(result), encoding="utf-8")
    (out / "runs.csv").write_text(runs_csv(result), encoding="utf-8")
    (out / "report.txt").write_text(text_report(result), encoding="utf-8")
    for (kind, run), trace in result.traces.items():
        (out / f"trace_{kind.value}_{run}.csv").write_text(
            trace_to_csv(trace), encoding="utf-8"
        )
    return out
