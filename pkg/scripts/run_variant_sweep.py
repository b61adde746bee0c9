#!/usr/bin/env python3
"""Sweep the experiment variants studied in the policy comparison:

* default step limits (+3/-2) vs relaxed limits (+6/-4)
* no post-processing vs a 5% benefit threshold
* both load variations (LV1 starts at the minimum, LV2 at the mean)

Prints one summary table per configuration; writes outputs per variant.
"""

import argparse

from elastimdp.harness import (
    default_config_ini,
    parse_config,
    run_comparison,
    text_report,
    write_outputs,
)

VARIANTS = {
    "baseline": {},
    "relaxed_limits": {"model.add_limit": "6", "model.rem_limit": "4"},
    "benefit_5pct": {"postprocess.benefit_threshold_pct": "5"},
}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--runs", type=int, default=10)
    parser.add_argument("--seed", type=int, default=20240)
    parser.add_argument("--utility", choices=["r1", "r2"], default="r1")
    parser.add_argument("--out-dir", default="results/variants")
    args = parser.parse_args()

    for variation in ("LV1", "LV2"):
        for name, extra in VARIANTS.items():
            overrides = {
                "experiment.runs": str(args.runs),
                "experiment.base_seed": str(args.seed),
                "utility.kind": args.utility,
                "load.variation": variation,
            }
            overrides.update(extra)
            config = parse_config(default_config_ini(), overrides)
            result = run_comparison(config)
            tag = f"{variation.lower()}_{name}_{args.utility}"
            print(f"=== {tag} ===")
            print(text_report(result))
            write_outputs(result, f"{args.out_dir}/{tag}")


if __name__ == "__main__":
    main()
