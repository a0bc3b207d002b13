"""Pre-LN decoder-only transformer with optional runway rewiring.

The width knob ``d`` follows the square-ish scaling used throughout the
experiments: ``d_model = 64 d``, ``n_heads = d`` (so every head is 64
wide), ``n_layers = d`` unless explicitly overridden. The per-head width
is what the bilinear rewiring's parameter count is pinned to: each layer
adds exactly ``64^2`` weights in bilinear mode and none in dot mode.

Blocks are standard Pre-LN: ``u = h + attn(ln1(h))``, ``h' = u +
mlp(ln2(u))``; the verification suite treats ``u -> h'`` as the node
update function and ``h -> attn message`` as the message function when it
bounds Jacobians.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import tensor as T
from .attention import AttentionConfig, AttentionRecord, causal_attention
from .rewiring import RewiringMode, rewired_attention
from .rng import Rng
from .tensor import Tensor

ATTENTION_KINDS = ("standard", "rewired_dot", "rewired_bilinear")
HEAD_DIM = 64
INIT_STD = 0.02


class InputError(ValueError):
    """Tokens out of range or malformed shapes fed to the model."""


@dataclass(frozen=True)
class ModelConfig:
    d: int
    vocab_size: int = 256
    max_seq_len: int = 512
    attention_kind: str = "standard"
    mlp_ratio: int = 4
    rope_theta: float = 10000.0
    use_rope: bool = True
    tie_lm_head: bool = True
    # depth normally tracks d; the verification suite uses thin-but-deep
    # toys (e.g. d=1 with three layers) to probe multi-layer bounds
    n_layers_override: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if self.attention_kind not in ATTENTION_KINDS:
            raise ValueError(f"attention_kind must be one of {ATTENTION_KINDS}")
        if self.n_layers_override is not None and self.n_layers_override < 1:
            raise ValueError("n_layers_override must be >= 1")

    @property
    def d_model(self) -> int:
        return HEAD_DIM * self.d

    @property
    def n_heads(self) -> int:
        return self.d

    @property
    def head_dim(self) -> int:
        return HEAD_DIM

    @property
    def n_layers(self) -> int:
        return self.d if self.n_layers_override is None else self.n_layers_override

    @property
    def d_mlp(self) -> int:
        return self.mlp_ratio * self.d_model

    def attention_config(self) -> AttentionConfig:
        return AttentionConfig(n_heads=self.n_heads, d_model=self.d_model,
                               rope_theta=self.rope_theta,
                               use_rope=self.use_rope)

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(doc: dict) -> "ModelConfig":
        return ModelConfig(**{k: doc[k] for k in doc
                              if k in ModelConfig.__dataclass_fields__})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every stored tensor by name, in checkpoint order."""
    D, V, M = cfg.d_model, cfg.vocab_size, cfg.d_mlp
    shapes: dict[str, tuple[int, ...]] = {"embed": (V, D)}
    for i in range(cfg.n_layers):
        p = f"layers.{i}."
        shapes[p + "ln1.g"] = (D,)
        shapes[p + "ln1.b"] = (D,)
        for w in ("wq", "wk", "wv", "wo"):
            shapes[p + w] = (D, D)
        if cfg.attention_kind == "rewired_bilinear":
            shapes[p + "bilinear"] = (cfg.head_dim, cfg.head_dim)
        shapes[p + "ln2.g"] = (D,)
        shapes[p + "ln2.b"] = (D,)
        shapes[p + "mlp.w1"] = (D, M)
        shapes[p + "mlp.w2"] = (M, D)
    shapes["ln_f.g"] = (D,)
    shapes["ln_f.b"] = (D,)
    if not cfg.tie_lm_head:
        shapes["lm_head"] = (D, V)
    return shapes


def count_params(cfg: ModelConfig) -> int:
    """Exact stored-parameter count (closed form, checked against the
    shape table in tests)."""
    D, V, M = cfg.d_model, cfg.vocab_size, cfg.d_mlp
    per_layer = 4 * D + 4 * D * D + 2 * D * M
    if cfg.attention_kind == "rewired_bilinear":
        per_layer += cfg.head_dim * cfg.head_dim
    total = V * D + cfg.n_layers * per_layer + 2 * D
    if not cfg.tie_lm_head:
        total += D * V
    return total


def init_params(cfg: ModelConfig) -> dict[str, Tensor]:
    """GPT-style init: N(0, 0.02) projections, unit LN scales, zero LN
    biases; bilinear forms start at identity + small noise so rewired-
    bilinear training begins indistinguishable from dot mode."""
    rng = Rng(cfg.seed, "init")
    params: dict[str, Tensor] = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "g":
            data = np.ones(shape)
        elif leaf == "b":
            data = np.zeros(shape)
        elif leaf == "bilinear":
            data = np.eye(shape[0]) + rng.split(name).normal(shape, INIT_STD)
        else:
            data = rng.split(name).normal(shape, INIT_STD)
        params[name] = Tensor(data, requires_grad=True)
    return params


def _rewiring_mode(cfg: ModelConfig, params, layer: int) -> RewiringMode:
    if cfg.attention_kind == "rewired_dot":
        return RewiringMode("dot")
    return RewiringMode("bilinear", params[f"layers.{layer}.bilinear"])


def block(h: Tensor, layer: int, params: dict[str, Tensor], cfg: ModelConfig,
          record: bool = False, detach_attention: bool = False
          ) -> tuple[Tensor, AttentionRecord | None]:
    p = f"layers.{layer}."
    acfg = cfg.attention_config()
    x = T.layer_norm(h, params[p + "ln1.g"], params[p + "ln1.b"])
    if cfg.attention_kind == "standard":
        msg, rec = causal_attention(
            x, params[p + "wq"], params[p + "wk"], params[p + "wv"],
            params[p + "wo"], acfg, record=record,
            detach_weights=detach_attention)
    else:
        msg, rec = rewired_attention(
            x, params[p + "wq"], params[p + "wk"], params[p + "wv"],
            params[p + "wo"], acfg, _rewiring_mode(cfg, params, layer),
            record=record, detach_weights=detach_attention)
    u = h + msg
    y = T.layer_norm(u, params[p + "ln2.g"], params[p + "ln2.b"])
    out = u + T.gelu(y @ params[p + "mlp.w1"]) @ params[p + "mlp.w2"]
    return out, rec


def forward_hidden(h0: Tensor, params: dict[str, Tensor], cfg: ModelConfig,
                   record: bool = False, detach_attention: bool = False
                   ) -> tuple[list[Tensor], list[AttentionRecord] | None]:
    """Run all blocks from a given layer-0 state; returns [h0, h1, ... hL]."""
    hs = [h0]
    recs = [] if record else None
    for i in range(cfg.n_layers):
        h, rec = block(hs[-1], i, params, cfg, record=record,
                       detach_attention=detach_attention)
        hs.append(h)
        if record:
            recs.append(rec)
    return hs, recs


def embed_tokens(tokens, params: dict[str, Tensor],
                 cfg: ModelConfig) -> Tensor:
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.ndim != 1 or ids.size < 1:
        raise InputError(f"expected a 1-d token sequence, got shape {ids.shape}")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise InputError(
            f"token id out of range [0, {cfg.vocab_size}): {ids.min()}..{ids.max()}")
    return T.gather_rows(params["embed"], ids)


def forward(tokens, params: dict[str, Tensor], cfg: ModelConfig,
            record: bool = False, detach_attention: bool = False
            ) -> tuple[Tensor, list[AttentionRecord] | None]:
    """Next-token logits, shape (n, vocab). Length is not capped here:
    evaluation beyond max_seq_len is how length extrapolation is probed;
    the training loop enforces its own limit."""
    h0 = embed_tokens(tokens, params, cfg)
    hs, recs = forward_hidden(h0, params, cfg, record=record,
                              detach_attention=detach_attention)
    y = T.layer_norm(hs[-1], params["ln_f.g"], params["ln_f.b"])
    head = (T.transpose(params["embed"], (1, 0)) if cfg.tie_lm_head
            else params["lm_head"])
    return y @ head, recs


def sequence_loss(window, params: dict[str, Tensor], cfg: ModelConfig) -> Tensor:
    """Mean next-token cross entropy over one window of n+1 token ids."""
    w = np.asarray(window, dtype=np.int64)
    if w.size < 2:
        raise InputError("need at least 2 tokens to form a prediction")
    logits, _ = forward(w[:-1], params, cfg)
    return T.cross_entropy(logits, w[1:])
