#!/usr/bin/env python3
"""Needle-retrieval sweep over context lengths and depths.

With --checkpoint, evaluates a trained model. With --oracle, runs the
context-reading stub instead — useful for checking the protocol and the
CSV plumbing without training anything (accuracy is 1.0 by design).
"""

import argparse
from pathlib import Path

from runwaylab.harness import (cmd_passkey, filler_seed,
                               make_synthetic_corpus, oracle_generate_fn,
                               passkey_accuracy, run_passkey_trials,
                               _write_passkey_csv, _write_json)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--checkpoint", type=Path, default=None)
    ap.add_argument("--oracle", action="store_true",
                    help="use the context-reading stub instead of a model")
    ap.add_argument("--out", type=Path, default=Path("runs/passkey"))
    ap.add_argument("--seq-lens", default="64,128,256",
                    help="comma-separated context lengths")
    ap.add_argument("--depths", default="0,0.25,0.5,0.75,1",
                    help="comma-separated depth fractions in [0,1]")
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    seq_lens = [int(x) for x in args.seq_lens.split(",")]
    depths = [float(x) for x in args.depths.split(",")]
    if (args.checkpoint is None) == (not args.oracle):
        ap.error("pass exactly one of --checkpoint or --oracle")

    if args.oracle:
        args.out.mkdir(parents=True, exist_ok=True)
        filler = make_synthetic_corpus(max(seq_lens),
                                       seed=filler_seed(args.seed))
        results = run_passkey_trials(oracle_generate_fn(), seq_lens, depths,
                                     args.trials, args.seed, filler)
        _write_passkey_csv(args.out / "passkey.csv", results)
        summary = passkey_accuracy(results)
        _write_json(args.out / "passkey_summary.json", summary)
    else:
        summary = cmd_passkey(args.checkpoint, args.out, seq_lens, depths,
                              args.trials, seed=args.seed)

    for cell in summary["cells"]:
        print(f"seq_len {cell['seq_len']:4d}  depth {cell['depth']:.2f}  "
              f"accuracy {cell['accuracy']:.3f}  ({cell['trials']} trials)")
    print(f"wrote {args.out}/passkey.csv")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
