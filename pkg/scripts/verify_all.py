#!/usr/bin/env python3
"""Run the theory verification suite and print one line per check.

Exit code is nonzero if any asserted check fails. Reported-only checks
(those with no closed-form guarantee, e.g. the cascade residual under
rewiring) are printed with their measured value but never fail the run.
"""

import argparse
import sys
from pathlib import Path

from runwaylab.verify import VerifyConfig, run_suite, write_report


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--seeds", type=int, default=None,
                    help="seeds per randomized check (default: suite's own)")
    ap.add_argument("--out", type=Path, default=None,
                    help="also write verify_report.json here")
    args = ap.parse_args()

    kwargs = {"seed": args.seed}
    if args.seeds is not None:
        kwargs["n_seeds"] = args.seeds
    report = run_suite(VerifyConfig(**kwargs))

    for chk in report["checks"]:
        if chk["asserted"]:
            mark = "ok  " if chk["passed"] else "FAIL"
        else:
            mark = "info"
        bound = ("" if chk["bound"] is None
                 else f"  (bound {chk['bound']:.3e})")
        print(f"{mark}  {chk['name']:40s} measured "
              f"{chk['measured']:.6e}{bound}")

    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        write_report(report, args.out / "verify_report.json")
        print(f"report written to {args.out / 'verify_report.json'}")

    if not report["all_passed"]:
        print("verification FAILED", file=sys.stderr)
        return 1
    print("all asserted checks passed")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
