"""Machine-checkable verification suite over freshly seeded toy models.

Every structural claim the package relies on — runway counting, the
direct/runway decomposition, attention's common-mode blindspot, the
cascade pass-through identity, the multi-hop sensitivity bound, and the
positivity of supported attention weights — is exercised here against
random instances and summarized as one record per check:

    {name, inputs_hash, measured, bound, passed, asserted, detail}

``asserted`` separates hard claims (a failure is a bug) from reported
diagnostics (the rewired cascade residual, which is not an identity).
The report dict serializes to JSON and validates against the schema
shipped in ``schemas/verify_report.schema.json``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from . import tensor as T
from .model import ATTENTION_KINDS, ModelConfig, forward, init_params
from .perturbation import blindspot_check, cascade_check, split_perturbation
from .rewiring import RewiringMode, eligible_mask
from .rng import Rng
from .runways import closed_form_count, enumerate_runway
from .sensitivity import direct_runway_split, sensitivity_sweep

REPORT_VERSION = 1


@dataclass(frozen=True)
class VerifyConfig:
    """Knobs for one suite run; defaults finish in a few seconds."""
    seed: int = 0
    n_seeds: int = 5
    n_tokens: int = 6
    d: int = 1
    vocab_size: int = 17
    runway_n: int = 8
    spans: tuple[int, ...] = (1, 2)
    kinds: tuple[str, ...] = ATTENTION_KINDS
    n_weight_trials: int = 60

    def to_dict(self) -> dict:
        out = asdict(self)
        out["spans"] = list(self.spans)
        out["kinds"] = list(self.kinds)
        return out


def _hash_inputs(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _record(name, inputs, measured, bound, passed, asserted, **detail):
    return {
        "name": name,
        "inputs_hash": _hash_inputs(inputs),
        "measured": float(measured),
        "bound": None if bound is None else float(bound),
        "passed": bool(passed),
        "asserted": bool(asserted),
        "detail": {k: (float(v) if isinstance(v, (int, float, np.floating))
                       else v) for k, v in detail.items()},
    }


def _toy_config(vc: VerifyConfig, kind: str, seed: int,
                n_layers: int | None = None) -> ModelConfig:
    return ModelConfig(d=vc.d, vocab_size=vc.vocab_size, max_seq_len=64,
                       attention_kind=kind, seed=seed,
                       n_layers_override=n_layers)


def _random_mixing(rng: Rng, n: int) -> np.ndarray:
    raw = np.exp(rng.normal((n, n))) * np.tril(np.ones((n, n)))
    return raw / raw.sum(axis=1, keepdims=True)


def _lemma_instance(rng: Rng, n: int, dm: int, dk: int, scale: float):
    params = {"w_q": rng.normal((dm, dk)) * 0.3,
              "w_k": rng.normal((dm, dk)) * 0.3,
              "w_v": rng.normal((dm, dk)) * 0.3}
    h = rng.normal((n, dm))
    dec = split_perturbation(rng.normal((n, dm)) * scale)
    return params, h, dec


def check_runway_counts(vc: VerifyConfig) -> dict:
    worst = 0
    pairs = 0
    for n in range(1, vc.runway_n + 1):
        for s in range(n):
            for d in range(s, n):
                got = enumerate_runway(s, d, n).count
                worst = max(worst, abs(got - closed_form_count(s, d)))
                pairs += 1
    return _record("runway_count_closed_form", {"n_max": vc.runway_n},
                   worst, 0.0, worst <= 0, True, pairs=pairs)


def check_split_recombination(vc: VerifyConfig) -> dict:
    worst = 0.0
    for i in range(vc.n_seeds):
        rng = Rng(vc.seed, f"verify/split/{i}")
        mats = [_random_mixing(rng, vc.n_tokens) for _ in range(3)]
        for r in (1, 2, 3):
            full = np.eye(vc.n_tokens)
            for t in range(r):
                full = (np.eye(vc.n_tokens) + mats[t]) @ full
            for d in range(vc.n_tokens):
                for s in range(vc.n_tokens):
                    self_t, gates = direct_runway_split(mats, s, d, r)
                    worst = max(worst,
                                abs(self_t + gates.sum() - full[d, s]))
    return _record("split_recombination",
                   {"seed": vc.seed, "n_seeds": vc.n_seeds,
                    "n": vc.n_tokens},
                   worst, 1e-10, worst <= 1e-10, True)


def check_translation_invariance(vc: VerifyConfig) -> dict:
    worst = 0.0
    for i in range(vc.n_seeds):
        rng = Rng(vc.seed, f"verify/shift/{i}")
        params, h, _ = _lemma_instance(rng, vc.n_tokens, 8, 6, 0.0)
        dc = rng.normal((8,))
        gap, _ = blindspot_check(h, dc, np.zeros_like(h),
                                 rng.normal((8,)), params)
        worst = max(worst, gap)
    return _record("blindspot_translation_invariance",
                   {"seed": vc.seed, "n_seeds": vc.n_seeds},
                   worst, 1e-10, worst <= 1e-10, True)


def check_blindspot_bound(vc: VerifyConfig) -> dict:
    worst_excess = -np.inf
    for i in range(vc.n_seeds):
        rng = Rng(vc.seed, f"verify/blindspot/{i}")
        params, h, dec = _lemma_instance(rng, vc.n_tokens, 8, 6, 0.05)
        gap, bound = blindspot_check(h, dec.delta_c, dec.delta_r,
                                     rng.normal((8,)), params)
        worst_excess = max(worst_excess, gap - bound)
    return _record("blindspot_gap_bound",
                   {"seed": vc.seed, "n_seeds": vc.n_seeds},
                   worst_excess, 0.0, worst_excess <= 0.0, True)


def check_cascade(vc: VerifyConfig, kind: str) -> dict:
    worst = 0.0
    for i in range(vc.n_seeds):
        rng = Rng(vc.seed, f"verify/cascade/{kind}/{i}")
        params, h, dec = _lemma_instance(rng, vc.n_tokens, 8, 6, 0.05)
        if kind == "standard":
            mode = None
        elif kind == "rewired_dot":
            mode = RewiringMode("dot")
        else:
            b = np.eye(6) + 0.02 * rng.normal((6, 6))
            mode = RewiringMode("bilinear", bilinear=T.tensor(b))
        worst = max(worst, cascade_check(h, dec.delta_c, dec.delta_r,
                                         params, mode=mode))
    asserted = kind == "standard"
    return _record(f"cascade_{kind}",
                   {"seed": vc.seed, "n_seeds": vc.n_seeds, "kind": kind},
                   worst, 1e-9 if asserted else None,
                   worst <= 1e-9 if asserted else True, asserted)


def check_sensitivity(vc: VerifyConfig, kind: str) -> dict:
    n_layers = max(vc.spans)
    worst_excess = -np.inf
    worst_recombine = 0.0
    total = 0
    for i in range(vc.n_seeds):
        cfg = _toy_config(vc, kind, seed=vc.seed * 1000 + i,
                          n_layers=n_layers)
        params = init_params(cfg)
        toks = Rng(vc.seed, f"verify/sens/{kind}/{i}").integers(
            0, vc.vocab_size, (vc.n_tokens,))
        reports, mats = sensitivity_sweep(toks, params, cfg, 0, vc.spans)
        total += len(reports)
        for rep in reports:
            worst_excess = max(worst_excess, rep.measured_norm - rep.bound)
        full = np.eye(vc.n_tokens)
        for r, mat in enumerate(mats, start=1):
            full = (np.eye(vc.n_tokens) + mat) @ full
            for d in range(vc.n_tokens):
                for s in range(vc.n_tokens):
                    self_t, gates = direct_runway_split(mats, s, d, r)
                    worst_recombine = max(
                        worst_recombine,
                        abs(self_t + gates.sum() - full[d, s]))
    ok = worst_excess <= 0.0 and worst_recombine <= 1e-10
    return _record(f"sensitivity_bound_{kind}",
                   {"seed": vc.seed, "n_seeds": vc.n_seeds, "kind": kind,
                    "spans": list(vc.spans)},
                   worst_excess, 0.0, ok, True,
                   reports=total, recombination_err=worst_recombine)


def min_supported_weight(recs) -> float:
    """Smallest attention weight on the causal support across layers."""
    lo = np.inf
    for rec in recs:
        w = rec.weights
        n = w.shape[-1]
        support = np.tril(np.ones((n, n), dtype=bool))
        lo = min(lo, float(w[:, support].min()))
    return lo


def check_weight_positivity(vc: VerifyConfig) -> dict:
    lo = np.inf
    for i in range(vc.n_weight_trials):
        kind = vc.kinds[i % len(vc.kinds)]
        cfg = _toy_config(vc, kind, seed=vc.seed * 7919 + i)
        params = init_params(cfg)
        rng = Rng(vc.seed, f"verify/weights/{i}")
        toks = rng.integers(0, vc.vocab_size, (int(rng.integers(4, 10)),))
        _, recs = forward(toks, params, cfg, record=True)
        lo = min(lo, min_supported_weight(recs))
    return _record("supported_weights_positive",
                   {"seed": vc.seed, "trials": vc.n_weight_trials},
                   lo, 0.0, lo > 0.0, True, relation="greater")


def check_rewiring_keep_exact(vc: VerifyConfig) -> dict:
    """Keep-mask entries of the down-scale factors are exactly one."""
    worst = 0.0
    for i in range(vc.n_seeds):
        for kind in vc.kinds:
            if kind == "standard":
                continue
            cfg = _toy_config(vc, kind, seed=vc.seed * 37 + i)
            params = init_params(cfg)
            toks = Rng(vc.seed, f"verify/keep/{kind}/{i}").integers(
                0, vc.vocab_size, (9,))
            _, recs = forward(toks, params, cfg, record=True)
            for rec in recs:
                beta = rec.rewiring.beta
                n = beta.shape[-1]
                keep = np.tril(np.ones((n, n), dtype=bool)) & ~eligible_mask(n)
                worst = max(worst, float(np.abs(beta[keep] - 1.0).max()))
    return _record("rewiring_keep_mask_exact",
                   {"seed": vc.seed, "n_seeds": vc.n_seeds},
                   worst, 0.0, worst <= 0.0, True)


def run_suite(vc: VerifyConfig | None = None) -> dict:
    vc = vc or VerifyConfig()
    checks = [
        check_runway_counts(vc),
        check_split_recombination(vc),
        check_translation_invariance(vc),
        check_blindspot_bound(vc),
        check_cascade(vc, "standard"),
        check_cascade(vc, "rewired_dot"),
        check_cascade(vc, "rewired_bilinear"),
        check_weight_positivity(vc),
        check_rewiring_keep_exact(vc),
    ]
    for kind in vc.kinds:
        checks.append(check_sensitivity(vc, kind))
    return {
        "version": REPORT_VERSION,
        "config": vc.to_dict(),
        "checks": checks,
        "all_passed": all(c["passed"] for c in checks if c["asserted"]),
    }


def load_report_schema() -> dict:
    ref = resources.files("runwaylab").joinpath(
        "schemas/verify_report.schema.json")
    return json.loads(ref.read_text())


def write_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
