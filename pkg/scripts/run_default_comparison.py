#!/usr/bin/env python3
"""Run the default desk-scale policy comparison and write all outputs.

All six policies, 10 runs over a shared synthetic dataset, LV1 load, r1
utility, 4..16 VMs with +3/-2 step limits.  Equivalent to `elastimdp run`
with no config file.
"""

import argparse

from elastimdp.harness import (
    default_config_ini,
    parse_config,
    run_comparison,
    text_report,
    write_outputs,
)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--runs", type=int, default=10)
    parser.add_argument("--seed", type=int, default=20240)
    parser.add_argument("--utility", choices=["r1", "r2"], default="r1")
    parser.add_argument("--variation", choices=["LV1", "LV2"], default="LV1")
    parser.add_argument("--out-dir", default="results/default")
    args = parser.parse_args()

    config = parse_config(
        default_config_ini(),
        {
            "experiment.runs": str(args.runs),
            "experiment.base_seed": str(args.seed),
            "utility.kind": args.utility,
            "load.variation": args.variation,
        },
    )
    result = run_comparison(config)
    print(text_report(result))
    out = write_outputs(result, args.out_dir)
    print(f"outputs written to {out}")


if __name__ == "__main__":
    main()
