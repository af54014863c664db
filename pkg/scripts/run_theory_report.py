#!/usr/bin/env python3
"""Run every theory check at full strength and write the JSON report."""

import argparse

from ctrlplan.bench import theory_report


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/theory_report.json")
    ap.add_argument("--rho", type=float, nargs="+", default=[0.05, 0.2, 0.5])
    ap.add_argument("--trials", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    report = theory_report(
        rho_sweep=tuple(args.rho), trials=args.trials, seed=args.seed, out_path=args.out
    )
    for check in report["checks"]:
        extra = f" rho={check['rho']}" if "rho" in check else ""
        print(f"{check['check']}{extra}: {'PASS' if check['passed'] else 'FAIL'}")
    print(f"overall: {'PASS' if report['passed'] else 'FAIL'} -> {args.out}")
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    raise SystemExit(main())
