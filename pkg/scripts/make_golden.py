#!/usr/bin/env python3
"""Regenerate the golden sample inputs for the plot component.

Runs a tiny rewired model end to end (train, extrapolate, passkey grid,
rewiring analysis) and copies the exported files into the golden
directory. Everything is seeded, so reruns are byte-identical; the
frozen copies let the plot component build and test without this
package installed.
"""

import argparse
import json
import shutil
import tempfile
from pathlib import Path

from runwaylab.harness import (cmd_analyze_rewiring, cmd_extrapolate,
                               cmd_passkey, cmd_train, make_synthetic_corpus)

GOLDEN_FILES = ("loss.csv", "extrapolate.csv", "passkey.csv",
                "passkey_summary.json", "rewiring_stats.json")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path,
                    default=Path(__file__).resolve().parent.parent
                    / "frontend" / "golden")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        run = Path(tmp) / "run"
        corpus = Path(tmp) / "corpus.txt"
        corpus.write_bytes(bytes(
            make_synthetic_corpus(20_000, seed=args.seed)
            .astype("uint8").tolist()))
        cfg = Path(tmp) / "cfg.json"
        cfg.write_text(json.dumps(
            {"model": {"d": 1, "max_seq_len": 128},
             "train": {"steps": 40, "seq_len": 32, "batch_size": 2,
                       "eval_windows": 4}}))

        summary = cmd_train(corpus, run, config_path=cfg, seed=args.seed,
                            attention="rewired_dot")
        cmd_extrapolate(summary["checkpoint"], corpus, run,
                        eval_lens=[16, 32, 64, 128], n_windows=4)
        cmd_passkey(summary["checkpoint"], run, [64, 96],
                    [0.0, 0.5, 1.0], trials=3, seed=args.seed)
        cmd_analyze_rewiring(summary["checkpoint"], corpus, run,
                             n_batches=4, seq_len=32)

        args.out.mkdir(parents=True, exist_ok=True)
        for name in GOLDEN_FILES:
            shutil.copyfile(run / name, args.out / name)
            print(f"wrote {args.out / name}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
