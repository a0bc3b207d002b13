"""Command-line entry points wrapping the experiment harness.

Subcommands: train, passkey, extrapolate, analyze-rewiring, verify.
Shared flags: --config (JSON with "model"/"train" sections), --seed,
--out, --attention (hyphenated kinds map onto the internal names), and
--record-attention. List-valued flags take comma-separated values.
"""

from __future__ import annotations

import argparse
import sys

from .harness import (cmd_analyze_rewiring, cmd_extrapolate, cmd_passkey,
                      cmd_train, cmd_verify)

_ATTENTION_CHOICES = ("standard", "rewired-dot", "rewired-bilinear")


def _attention_kind(flag: str | None) -> str | None:
    return None if flag is None else flag.replace("-", "_")


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="runwaylab",
        description="toy byte-level LMs with runway-gated attention")
    sub = top.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config path")
    common.add_argument("--seed", type=int, help="RNG seed (u64)")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--attention", choices=_ATTENTION_CHOICES,
                        help="attention kind override")
    common.add_argument("--record-attention", action="store_true",
                        help="also export rewiring statistics")

    p = sub.add_parser("train", parents=[common],
                       help="train a byte LM on a text file")
    p.add_argument("--data", required=True, help="UTF-8 text corpus")
    p.add_argument("--steps", type=int, help="override train.steps")
    p.add_argument("--resume", help="checkpoint to continue from")

    p = sub.add_parser("passkey", parents=[common],
                       help="needle retrieval accuracy grid")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seq-lens", type=_int_list, default=[128, 256])
    p.add_argument("--depths", type=_float_list,
                   default=[0.0, 0.25, 0.5, 0.75, 1.0])
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--filler", help="filler text path (defaults synthetic)")

    p = sub.add_parser("extrapolate", parents=[common],
                       help="loss/perplexity across context lengths")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--eval-lens", type=_int_list, default=[32, 64, 128, 256])
    p.add_argument("--train-len", type=int)
    p.add_argument("--windows", type=int, default=8)

    p = sub.add_parser("analyze-rewiring", parents=[common],
                       help="down-scale factor statistics")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--n-batches", type=int, default=4)
    p.add_argument("--seq-len", type=int, default=64)

    p = sub.add_parser("verify", parents=[common],
                       help="run the lemma/theorem verification suite")
    p.add_argument("--seeds", type=int, help="number of suite repetitions")
    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    kind = _attention_kind(args.attention)

    if args.command == "train":
        summary = cmd_train(args.data, args.out, config_path=args.config,
                            seed=args.seed, attention=kind,
                            steps=args.steps,
                            record_attention=args.record_attention,
                            resume=args.resume)
        print(f"trained {summary['steps']} steps; "
              f"val loss {summary['val_loss']:.4f} nats")
        return 0

    if args.command == "passkey":
        summary = cmd_passkey(args.checkpoint, args.out,
                              seq_lens=args.seq_lens, depths=args.depths,
                              trials=args.trials, filler_path=args.filler,
                              seed=args.seed or 0)
        for cell in summary["cells"]:
            print(f"seq_len={cell['seq_len']} depth={cell['depth']:.2f} "
                  f"accuracy={cell['accuracy']:.2f}")
        return 0

    if args.command == "extrapolate":
        summary = cmd_extrapolate(args.checkpoint, args.data, args.out,
                                  eval_lens=args.eval_lens,
                                  n_windows=args.windows,
                                  train_len=args.train_len)
        for rec in summary["records"]:
            print(f"eval_len={rec['eval_len']} loss={rec['loss']:.4f} "
                  f"ppl={rec['ppl']:.2f}")
        return 0

    if args.command == "analyze-rewiring":
        stats = cmd_analyze_rewiring(args.checkpoint, args.data, args.out,
                                     n_batches=args.n_batches,
                                     seq_len=args.seq_len)
        print(f"analyzed {stats['n_windows']} windows at n={stats['n']}")
        return 0

    if args.command == "verify":
        report = cmd_verify(args.out, seed=args.seed or 0,
                            n_seeds=args.seeds)
        for c in report["checks"]:
            mark = "PASS" if c["passed"] else "FAIL"
            tag = "" if c["asserted"] else " (reported)"
            print(f"[{mark}] {c['name']}{tag}: measured={c['measured']:.3e}")
        return 0 if report["all_passed"] else 1

    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
