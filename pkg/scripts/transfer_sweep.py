#!/usr/bin/env python3
"""No-transfer baseline vs. transfer at several Stage-1 epoch budgets, over several seeds.

Prints the ACC gap (transfer minus baseline) per test set and seed, then the
mean and standard deviation across seeds. Each seed gets its own run
directory under ``<out>/<run_name>-seed<k>``.

    python scripts/transfer_sweep.py --config configs/desk.json --seeds 1 2 3 --grid 1 5
    python scripts/transfer_sweep.py --config configs/paper.json --seeds 2019 --grid 1   # hours
"""
import argparse
import json
import logging

import numpy as np

from tlconvnet import pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True)
    ap.add_argument("--seeds", type=int, nargs="+", default=[7])
    ap.add_argument("--grid", type=int, nargs="+", help="Stage-1 epoch budgets (default from config)")
    ap.add_argument("--out", help="output root (default from config)")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    gaps = {}  # (condition, role) -> [gap per seed]
    for seed in args.seeds:
        cfg = pipeline.RunConfig.load(args.config, {"seed": seed, "out": args.out})
        cfg = pipeline.with_overrides(cfg, run_name=f"{cfg.run_name}-seed{seed}")
        pipeline.cmd_preprocess(cfg)
        rows = pipeline.cmd_sweep(cfg, args.grid)
        baseline = rows[0]
        for row in rows[1:]:
            for role, report in row.reports.items():
                gap = report.acc_pct - baseline.reports[role].acc_pct
                gaps.setdefault((row.condition, role), []).append(gap)
                print(f"seed {seed:<6} {row.condition:<14} {role:<10} ACC {report.acc_pct:6.2f}  gap {gap:+6.2f}")

    print()
    print(f"{'condition':<14}{'set':<11}{'mean gap':>9}{'std':>7}{'seeds':>6}")
    summary = {}
    for (condition, role), values in sorted(gaps.items()):
        v = np.array(values)
        print(f"{condition:<14}{role:<11}{v.mean():>+9.2f}{v.std():>7.2f}{len(v):>6}")
        summary[f"{condition}/{role}"] = {"mean": float(v.mean()), "std": float(v.std()), "gaps": values}
    if args.out:
        with open(f"{args.out}/sweep_summary.json", "w") as f:
            json.dump(summary, f, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
