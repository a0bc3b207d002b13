#!/usr/bin/env python3
"""Train a small byte-level model on a synthetic corpus and probe length
extrapolation. A few minutes at the defaults; handy as a smoke run:

    python scripts/train_toy.py --out runs/toy --attention rewired-dot
"""

import argparse
import json
import tempfile
from pathlib import Path

from runwaylab.harness import (cmd_extrapolate, cmd_train,
                               make_synthetic_corpus)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("runs/toy"))
    ap.add_argument("--attention", default="standard",
                    choices=["standard", "rewired-dot", "rewired-bilinear"])
    ap.add_argument("--d", type=int, default=1, help="width/depth knob")
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--seq-len", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--corpus-bytes", type=int, default=200_000)
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    corpus = args.out / "corpus.txt"
    corpus.write_bytes(bytes(
        make_synthetic_corpus(args.corpus_bytes, seed=args.seed)
        .astype("uint8").tolist()))

    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as f:
        json.dump({"model": {"d": args.d, "max_seq_len": 4 * args.seq_len},
                   "train": {"steps": args.steps, "seq_len": args.seq_len,
                             "batch_size": 4}}, f)
        cfg_path = f.name

    summary = cmd_train(corpus, args.out, config_path=cfg_path,
                        seed=args.seed,
                        attention=args.attention.replace("-", "_"),
                        record_attention=args.attention != "standard")
    print(f"final train loss {summary['final_train_loss']:.4f}, "
          f"val loss {summary['val_loss']:.4f}")

    lens = [args.seq_len // 2, args.seq_len, 2 * args.seq_len,
            4 * args.seq_len]
    out = cmd_extrapolate(summary["checkpoint"], corpus, args.out,
                          eval_lens=lens, train_len=args.seq_len)
    for rec in out["records"]:
        tag = " (train length)" if rec["eval_len"] == args.seq_len else ""
        print(f"  eval_len {rec['eval_len']:4d}  loss {rec['loss']:.4f}  "
              f"ppl {rec['ppl']:.2f}{tag}")
    print(f"wrote {args.out}/loss.csv and {args.out}/extrapolate.csv")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
