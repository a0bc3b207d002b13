"""Experiment driver: byte-level corpora, toy LM training, passkey
retrieval, length extrapolation, and rewiring-pattern analysis.

Everything here is deterministic given (config, seed, data): batches and
passkeys come from the keyed RNG streams, greedy decoding breaks argmax
ties toward the lower byte, and CSV/JSON exports round-trip through
full-precision float formatting. ``RWAY_THREADS`` caps the thread pool
used for independent passkey trials; the output order never depends on
scheduling because results are slotted by trial index.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .model import InputError, ModelConfig, forward
from .rewiring import eligible_mask
from .rng import Rng
from .train import TrainConfig, evaluate, init_train_state, run_training
from .verify import VerifyConfig, load_report_schema, run_suite, write_report

NEEDLE_TEMPLATE = "The passkey is {digits}."
PROMPT = "The passkey is "
PROMPT_LEN = len(PROMPT)                      # 15 bytes
NEEDLE_LEN = len(NEEDLE_TEMPLATE.format(digits="00000"))  # 21 bytes
PASSKEY_DIGITS = 5

MODEL_DEFAULTS = dict(d=2, vocab_size=256, max_seq_len=512,
                      attention_kind="standard")
TRAIN_DEFAULTS = dict(steps=200, batch_size=4, seq_len=64, lr=1e-3)


# ------------------------------------------------------------ corpus plumbing

def encode_bytes(text: str) -> np.ndarray:
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.int64)


def decode_bytes(ids) -> str:
    arr = np.asarray(ids, dtype=np.int64)
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise InputError("byte ids must lie in [0, 255]")
    return bytes(arr.astype(np.uint8).tolist()).decode("latin-1")


def load_corpus(path) -> np.ndarray:
    data = np.frombuffer(Path(path).read_bytes(), dtype=np.uint8)
    if data.size < 2:
        raise InputError(f"corpus {path} has {data.size} bytes")
    return data.astype(np.int64)


_WORDS = ("runway attention token gate value layer signal path norm query "
          "key residual stream mix score edge graph causal probe state "
          "bound lemma check factor weight").split()

_SHAPES = (
    "the {} holds the {}.", "a {} meets the {} again.",
    "every {} follows its {}.", "no {} forgets the {}.",
    "{} and {} align.",
)


def make_synthetic_corpus(n_bytes: int, seed: int = 0) -> np.ndarray:
    """Deterministic low-entropy English-like byte stream for smoke runs."""
    rng = Rng(seed, "corpus")
    chunks = []
    total = 0
    while total < n_bytes:
        shape = _SHAPES[int(rng.integers(0, len(_SHAPES)))]
        a = _WORDS[int(rng.integers(0, len(_WORDS)))]
        b = _WORDS[int(rng.integers(0, len(_WORDS)))]
        s = shape.format(a, b) + " "
        chunks.append(s)
        total += len(s)
    return encode_bytes("".join(chunks))[:n_bytes]


def train_val_split(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic 90/10 split; the tail is held out for evaluation."""
    cut = int(len(data) * 0.9)
    if cut < 2 or len(data) - cut < 2:
        raise InputError(f"corpus of {len(data)} bytes is too small to split")
    return data[:cut], data[cut:]


# ------------------------------------------------------------------- passkey

@dataclass(frozen=True)
class PasskeyTrial:
    seq_len: int
    depth_fraction: float
    passkey: str
    needle_span: tuple[int, int]
    digit_span: tuple[int, int]
    predicted: str
    exact_match: bool


def needle_start(seq_len: int, depth: float) -> int:
    """Leftmost needle byte: round(depth * usable span before the prompt)."""
    usable = seq_len - NEEDLE_LEN - PROMPT_LEN
    if usable < 0:
        raise InputError(
            f"seq_len {seq_len} cannot hold needle ({NEEDLE_LEN}) "
            f"+ prompt ({PROMPT_LEN})")
    if not 0.0 <= depth <= 1.0:
        raise InputError(f"depth fraction {depth} outside [0, 1]")
    return int(round(depth * usable))


def build_passkey_sequence(seq_len: int, depth: float, passkey: str,
                           filler: np.ndarray
                           ) -> tuple[np.ndarray, tuple[int, int],
                                      tuple[int, int]]:
    """Filler with the needle planted at depth and the prompt at the end."""
    if len(passkey) != PASSKEY_DIGITS or not passkey.isdigit():
        raise InputError(f"passkey must be {PASSKEY_DIGITS} digits, "
                         f"got {passkey!r}")
    if len(filler) < seq_len:
        raise InputError(
            f"filler has {len(filler)} bytes, need {seq_len}")
    start = needle_start(seq_len, depth)
    ids = filler[:seq_len].copy()
    needle = encode_bytes(NEEDLE_TEMPLATE.format(digits=passkey))
    ids[start:start + NEEDLE_LEN] = needle
    ids[seq_len - PROMPT_LEN:] = encode_bytes(PROMPT)
    digit_lo = start + PROMPT_LEN
    return ids, (start, start + NEEDLE_LEN), (digit_lo,
                                              digit_lo + PASSKEY_DIGITS)


def greedy_generate(params, cfg: ModelConfig, ids: np.ndarray,
                    n_new: int) -> np.ndarray:
    """Greedy decoding, recomputing the full prefix per emitted token."""
    out = list(np.asarray(ids, dtype=np.int64))
    fresh = []
    for _ in range(n_new):
        logits, _ = forward(np.asarray(out, dtype=np.int64), params, cfg)
        nxt = int(np.argmax(logits.data[-1]))
        out.append(nxt)
        fresh.append(nxt)
    return np.asarray(fresh, dtype=np.int64)


def model_generate_fn(params, cfg: ModelConfig):
    def gen(ids: np.ndarray, n_new: int) -> np.ndarray:
        return greedy_generate(params, cfg, ids, n_new)
    return gen


def oracle_generate_fn():
    """Stub that reads the planted digits straight out of the context."""
    pattern = PROMPT.encode()

    def gen(ids: np.ndarray, n_new: int) -> np.ndarray:
        blob = bytes(np.asarray(ids, dtype=np.int64).astype(np.uint8)
                     .tolist())
        at = 0
        while True:
            hit = blob.find(pattern, at)
            if hit < 0:
                break
            lo = hit + len(pattern)
            cand = blob[lo:lo + PASSKEY_DIGITS]
            if len(cand) == PASSKEY_DIGITS and cand.isdigit():
                return encode_bytes(cand.decode())[:n_new]
            at = hit + 1
        return np.zeros(n_new, dtype=np.int64)
    return gen


def random_digit_generate_fn(seed: int):
    """Stub emitting uniform random digit bytes; stateful across calls."""
    rng = Rng(seed, "random-stub")
    counter = [0]

    def gen(ids: np.ndarray, n_new: int) -> np.ndarray:
        counter[0] += 1
        draw = rng.split(str(counter[0])).integers(0, 10, (n_new,))
        return draw + ord("0")
    return gen


def _thread_count() -> int:
    raw = os.environ.get("RWAY_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InputError(f"RWAY_THREADS={raw!r} is not an integer")


def run_passkey_trials(generate_fn, seq_lens, depths, trials: int,
                       seed: int, filler: np.ndarray) -> list[PasskeyTrial]:
    """Grid of retrieval trials; deterministic given (seed, filler)."""
    jobs = []
    for seq_len in seq_lens:
        for depth in depths:
            for t in range(trials):
                digits = "".join(str(int(x)) for x in Rng(
                    seed, f"passkey/{seq_len}/{depth:.6f}/{t}"
                ).integers(0, 10, (PASSKEY_DIGITS,)))
                jobs.append((seq_len, depth, t, digits))

    def run_one(job) -> PasskeyTrial:
        seq_len, depth, _t, digits = job
        ids, span, dspan = build_passkey_sequence(seq_len, depth, digits,
                                                  filler)
        got = generate_fn(ids, PASSKEY_DIGITS)
        predicted = decode_bytes(got)
        return PasskeyTrial(seq_len=seq_len, depth_fraction=depth,
                            passkey=digits, needle_span=span,
                            digit_span=dspan, predicted=predicted,
                            exact_match=predicted == digits)

    workers = _thread_count()
    if workers == 1:
        return [run_one(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_one, jobs))


def passkey_accuracy(trials: list[PasskeyTrial]) -> dict:
    """Per-(seq_len, depth) exact-match rates."""
    cells: dict[tuple[int, float], list[bool]] = {}
    for tr in trials:
        cells.setdefault((tr.seq_len, tr.depth_fraction), []).append(
            tr.exact_match)
    return {
        "cells": [
            {"seq_len": k[0], "depth": k[1],
             "accuracy": float(np.mean(v)), "trials": len(v)}
            for k, v in sorted(cells.items())
        ]
    }


# ------------------------------------------------------------ rewiring stats

def rewiring_stats(params, cfg: ModelConfig, data: np.ndarray,
                   n_batches: int, seq_len: int) -> dict:
    """Average down-scale factors over layers and windows.

    Per-source and per-destination summaries pool only the eligible
    entries (two-or-more-step causal edges excluding the first token);
    positions with no eligible slots come back as null.
    """
    if cfg.attention_kind == "standard":
        raise InputError("rewiring analysis needs a rewired model")
    span = seq_len
    avail = len(data) // span
    if avail < 1:
        raise InputError(f"data has {len(data)} tokens, need {span}")
    n_batches = min(n_batches, avail)

    n = seq_len
    total = np.zeros((n, n))
    count = 0
    for w in range(n_batches):
        window = data[w * span:(w + 1) * span]
        _, recs = forward(window, params, cfg, record=True)
        for rec in recs:
            total += rec.rewiring.beta
            count += 1
    mean_beta = total / count

    elig = eligible_mask(n)
    stats = {"per_source_mean": [], "per_source_std": [],
             "per_destination_mean": [], "per_destination_std": []}
    for axis, (mkey, skey) in ((0, ("per_source_mean", "per_source_std")),
                               (1, ("per_destination_mean",
                                    "per_destination_std"))):
        for pos in range(n):
            sel = elig[:, pos] if axis == 0 else elig[pos, :]
            vals = (mean_beta[:, pos][sel] if axis == 0
                    else mean_beta[pos, :][sel])
            if vals.size == 0:
                stats[mkey].append(None)
                stats[skey].append(None)
            else:
                stats[mkey].append(float(vals.mean()))
                stats[skey].append(float(vals.std()))
    return {
        "n": n,
        "n_layers": cfg.n_layers,
        "n_windows": n_batches,
        "attention_kind": cfg.attention_kind,
        "mean_beta_matrix": [[float(x) for x in row] for row in mean_beta],
        **stats,
    }


# ------------------------------------------------------------ export helpers

def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path) -> dict:
    if path is None:
        return {}
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise InputError(f"config {path} must hold a JSON object")
    return doc


def _model_config(doc: dict, seed, attention) -> ModelConfig:
    merged = {**MODEL_DEFAULTS, **doc.get("model", {})}
    if seed is not None:
        merged["seed"] = seed
    if attention is not None:
        merged["attention_kind"] = attention
    return ModelConfig(**merged)


def _train_config(doc: dict, **overrides) -> TrainConfig:
    merged = {**TRAIN_DEFAULTS, **doc.get("train", {})}
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**merged)


# ---------------------------------------------------------------- commands

def cmd_train(data_path, out_dir, config_path=None, seed=None,
              attention=None, steps=None, record_attention=False,
              resume=None) -> dict:
    """Train a byte LM; writes loss.csv, checkpoints, final_eval.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = load_config(config_path)
    data = load_corpus(data_path)
    train_ids, val_ids = train_val_split(data)

    if resume is not None:
        cfg, _params, state = load_checkpoint(resume)
        if state is None:
            raise InputError(f"checkpoint {resume} carries no train state")
        tcfg = state.tcfg
    else:
        cfg = _model_config(doc, seed, attention)
        tcfg = _train_config(doc, steps=steps)
        state = init_train_state(cfg, tcfg)

    quarter = max(1, tcfg.steps // 4)
    rows = []

    def on_step(st, loss, lr):
        rows.append((st.step, _fmt(loss), _fmt(lr),
                     st.step * tcfg.batch_size * tcfg.seq_len))
        if st.step % quarter == 0 and st.step < tcfg.steps:
            save_checkpoint(out / f"checkpoint_{st.step}.rway", cfg,
                            st.params, train_state=st)

    run_training(state, train_ids, on_step=on_step)
    save_checkpoint(out / "checkpoint.rway", cfg, state.params,
                    train_state=state)
    _write_csv(out / "loss.csv", ("step", "loss", "lr", "tokens"), rows)

    val_loss, per_window = evaluate(state.params, cfg, val_ids,
                                    tcfg.seq_len, tcfg.eval_windows)
    _write_json(out / "final_eval.json", {
        "eval_len": tcfg.seq_len, "loss": val_loss,
        "ppl": math.exp(val_loss), "n_windows": len(per_window),
        "attention_kind": cfg.attention_kind,
    })
    if record_attention:
        if cfg.attention_kind != "standard":
            _write_json(out / "rewiring_stats.json",
                        rewiring_stats(state.params, cfg, val_ids,
                                       tcfg.eval_windows, tcfg.seq_len))
    return {"final_train_loss": state.loss_history[-1],
            "val_loss": val_loss, "steps": state.step,
            "checkpoint": str(out / "checkpoint.rway")}


def cmd_passkey(checkpoint_path, out_dir, seq_lens, depths, trials: int,
                filler_path=None, seed: int = 0) -> dict:
    """Needle retrieval grid for a trained checkpoint; writes passkey.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg, params, _state = load_checkpoint(checkpoint_path)
    filler = (load_corpus(filler_path) if filler_path is not None
              else make_synthetic_corpus(max(seq_lens),
                                         seed=filler_seed(seed)))
    gen = model_generate_fn(params, cfg)
    results = run_passkey_trials(gen, seq_lens, depths, trials, seed, filler)
    _write_passkey_csv(out / "passkey.csv", results)
    summary = passkey_accuracy(results)
    _write_json(out / "passkey_summary.json", summary)
    return summary


def filler_seed(seed: int) -> int:
    """Filler stream seed; offset so it never collides with trial streams."""
    return seed + 101


def _write_passkey_csv(path, results: list[PasskeyTrial]) -> None:
    rows = []
    by_cell: dict[tuple[int, float], int] = {}
    for tr in results:
        key = (tr.seq_len, tr.depth_fraction)
        t = by_cell.get(key, 0)
        by_cell[key] = t + 1
        rows.append((tr.seq_len, _fmt(tr.depth_fraction), t, tr.passkey,
                     tr.predicted, int(tr.exact_match)))
    _write_csv(path, ("seq_len", "depth", "trial", "passkey", "predicted",
                      "exact"), rows)


def cmd_extrapolate(checkpoint_path, data_path, out_dir, eval_lens,
                    n_windows: int = 8, train_len=None) -> dict:
    """Loss/perplexity at several context lengths; writes extrapolate.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg, params, _state = load_checkpoint(checkpoint_path)
    _train_ids, val_ids = train_val_split(load_corpus(data_path))
    rows = []
    records = []
    for eval_len in eval_lens:
        loss, _per_window = evaluate(params, cfg, val_ids, int(eval_len),
                                     n_windows)
        ppl = math.exp(loss)
        rows.append((int(eval_len), _fmt(loss), _fmt(ppl)))
        records.append({"eval_len": int(eval_len), "loss": loss,
                        "ppl": ppl})
    _write_csv(out / "extrapolate.csv", ("eval_len", "loss", "ppl"), rows)
    return {"train_len": train_len, "records": records}


def cmd_analyze_rewiring(checkpoint_path, data_path, out_dir,
                         n_batches: int = 4, seq_len: int = 64) -> dict:
    """Down-scale factor statistics; writes rewiring_stats.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg, params, _state = load_checkpoint(checkpoint_path)
    _train_ids, val_ids = train_val_split(load_corpus(data_path))
    stats = rewiring_stats(params, cfg, val_ids, n_batches, seq_len)
    _write_json(out / "rewiring_stats.json", stats)
    return stats


def cmd_verify(out_dir, seed: int = 0, n_seeds: int | None = None) -> dict:
    """Run the verification suite; writes verify_report.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kwargs = {"seed": seed}
    if n_seeds is not None:
        kwargs["n_seeds"] = n_seeds
    report = run_suite(VerifyConfig(**kwargs))
    write_report(report, out / "verify_report.json")
    try:
        import jsonschema
    except ImportError:
        pass
    else:
        jsonschema.validate(report, load_report_schema())
    return report
