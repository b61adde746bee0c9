"""Command-line surface.

Subcommands:

* ``run``         -- policy-comparison experiment from a config file
* ``gen-dataset`` -- write a synthetic measurement CSV
* ``query``       -- evaluate a Pmax/Pmin reachability query
* ``validate``    -- check a config file or a model dump
* ``replay``      -- re-score a trace CSV under a different utility

Exit status is 0 on success and nonzero on any configuration, parse, or
run error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness
from .emulator import SyntheticModelParams, gen_synthetic_dataset, trace_from_csv, trace_to_csv
from .errors import ElastimdpError
from .logs import write_records_csv
from .model import MdpModel, validate_model
from .policies import PolicyKind, instantiate_model, MDP_KINDS
from .rewards import UtilityConfig, UtilityKind, utility_eval

import dataclasses


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="override the base seed")
    parser.add_argument("--out-dir", default=None, help="directory for output files")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elastimdp",
        description="MDP-based elasticity decisions and policy comparison",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a policy-comparison experiment")
    run.add_argument("--config", help="experiment config file (defaults built in)")
    run.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override a config key",
    )
    _common(run)

    gen = sub.add_parser("gen-dataset", help="write a synthetic measurement CSV")
    gen.add_argument("--out", required=True, help="output CSV path")
    gen.add_argument("--min-vms", type=int, default=4)
    gen.add_argument("--max-vms", type=int, default=16)
    gen.add_argument("--load-min", type=float, default=1000.0)
    gen.add_argument("--load-max", type=float, default=46000.0)
    gen.add_argument("--load-step", type=float, default=1000.0)
    gen.add_argument("--capacity", type=float, default=4500.0, help="req/s per VM")
    gen.add_argument("--base-latency", type=float, default=25.0, help="ms")
    gen.add_argument("--exponent", type=float, default=2.5)
    gen.add_argument("--noise", type=float, default=0.05)
    gen.add_argument("--samples", type=int, default=12, help="samples per grid point")
    _common(gen)

    query = sub.add_parser("query", help="evaluate a reachability query")
    query.add_argument("query", help='e.g. "Pmax=? [ F latency<30 & vms_num=7 ]"')
    query.add_argument("--model-dump", help="text dump of an instantiated model")
    query.add_argument("--config", help="config to instantiate a model from")
    query.add_argument(
        "--policy",
        default="mdp2",
        choices=[k.value for k in MDP_KINDS],
        help="model variant for live instantiation",
    )
    query.add_argument("--load", type=float, default=None, help="incoming load (req/s)")
    query.add_argument("--vms", type=int, default=None, help="current cluster size")
    query.add_argument(
        "--dump-model", help="also write the instantiated model's text dump here"
    )
    _common(query)

    validate = sub.add_parser("validate", help="check a config or a model dump")
    validate.add_argument("--config", help="experiment config file")
    validate.add_argument("--model-dump", help="model dump file")
    _common(validate)

    replay = sub.add_parser("replay", help="re-score a trace under another utility")
    replay.add_argument("--trace", required=True, help="trace CSV to re-score")
    replay.add_argument("--utility", required=True, choices=["r1", "r2"])
    replay.add_argument("--latency-threshold-ms", type=float, default=60.0)
    replay.add_argument("--out", help="where to write the re-scored trace CSV")
    _common(replay)

    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    overrides = {}
    for item in args.overrides:
        dotted, sep, value = item.partition("=")
        if not sep:
            raise ElastimdpError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        overrides[dotted.strip()] = value.strip()
    if args.seed is not None:
        overrides["experiment.base_seed"] = str(args.seed)
    if args.config:
        config = harness.read_config(args.config, overrides)
    else:
        config = harness.parse_config(harness.default_config_ini(), overrides)
    result = harness.run_comparison(config)
    out_dir = harness.write_outputs(result, args.out_dir or "results")
    report = harness.text_report(result)
    sys.stdout.write(report)
    sys.stdout.write(f"\noutputs written to {out_dir}\n")
    if not result.all_valid:
        sys.stderr.write("error: one or more runs aborted; see report\n")
        return 1
    return 0


def _cmd_gen_dataset(args: argparse.Namespace) -> int:
    params = SyntheticModelParams(
        per_vm_capacity=args.capacity,
        base_latency_ms=args.base_latency,
        saturation_exponent=args.exponent,
        noise_stddev_fraction=args.noise,
        samples_per_point=args.samples,
    )
    loads = []
    load = args.load_min
    while load <= args.load_max + 1e-9:
        loads.append(load)
        load += args.load_step
    records = gen_synthetic_dataset(
        params,
        range(args.min_vms, args.max_vms + 1),
        loads,
        seed=args.seed if args.seed is not None else 99,
    )
    write_records_csv(args.out, records)
    sys.stdout.write(f"wrote {len(records)} records to {args.out}\n")
    return 0


def _cmd_query(args: argparse.Namespace) -> int:
    if bool(args.model_dump) == bool(args.config):
        raise ElastimdpError("query needs exactly one of --model-dump or --config")
    if args.model_dump:
        model = MdpModel.loads(Path(args.model_dump).read_text(encoding="utf-8"))
    else:
        config = harness.read_config(args.config)
        records = harness.load_dataset(config)
        store = harness.build_store(config, records)
        load = args.load if args.load is not None else harness.synthetic_load_grid(config)[0]
        vms = args.vms if args.vms is not None else config.schedule.initial_vms
        model, _ = instantiate_model(
            PolicyKind(args.policy),
            store,
            load,
            vms,
            None,
            config.model,
            config.utility,
            config.clustering,
        )
    if args.dump_model:
        Path(args.dump_model).write_text(model.dump(), encoding="utf-8")
    probability = harness.evaluate_query(model, args.query)
    sys.stdout.write(f"{probability!r}\n")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    if not args.config and not args.model_dump:
        raise ElastimdpError("validate needs --config and/or --model-dump")
    status = 0
    if args.config:
        harness.read_config(args.config)
        sys.stdout.write(f"config ok: {args.config}\n")
    if args.model_dump:
        model = MdpModel.loads(Path(args.model_dump).read_text(encoding="utf-8"))
        report = validate_model(model)
        if report.ok:
            sys.stdout.write(f"model ok: {args.model_dump}\n")
        else:
            for violation in report.violations:
                sys.stdout.write(f"violation: {violation}\n")
            status = 1
    return status


def _cmd_replay(args: argparse.Namespace) -> int:
    utility = UtilityConfig(
        kind=UtilityKind(args.utility),
        latency_threshold_ms=args.latency_threshold_ms,
    )
    trace = trace_from_csv(Path(args.trace).read_text(encoding="utf-8"))
    rescored = [
        dataclasses.replace(
            record,
            utility=utility_eval(utility, record.latency_ms, record.throughput, record.vms),
            violation=record.latency_ms > utility.latency_threshold_ms,
        )
        for record in trace.records
    ]
    trace.records = rescored
    metrics = harness.compute_metrics(trace)
    if args.out:
        Path(args.out).write_text(trace_to_csv(trace), encoding="utf-8")
        sys.stdout.write(f"re-scored trace written to {args.out}\n")
    sys.stdout.write(
        f"mean_utility={metrics.mean_utility!r} violations={metrics.violations}\n"
    )
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "gen-dataset": _cmd_gen_dataset,
    "query": _cmd_query,
    "validate": _cmd_validate,
    "replay": _cmd_replay,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ElastimdpError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
