"""Multi-head causal self-attention over a single sequence.

The layer is the message-passing view of attention: token ``i`` aggregates
value messages from every token ``j <= i`` with weights given by a
row-stochastic matrix ``A``. Keeping ``A`` and the per-head value vectors
around per layer is what lets the rewiring and the verification suite
operate on the aggregation structure directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass(frozen=True)
class AttentionConfig:
    n_heads: int
    d_model: int
    rope_theta: float = 10000.0
    use_rope: bool = True

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise T.ShapeError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.use_rope and self.head_dim % 2 != 0:
            raise T.ShapeError("rope needs an even head_dim")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


@dataclass
class AttentionRecord:
    """Per-layer aggregation state exposed for analysis and verification.

    logits:  (n_heads, n, n) scaled q.k scores; only the causal support
             is meaningful (the rest is never exponentiated).
    weights: (n_heads, n, n) the mixing matrix actually used — softmax
             rows for the standard layer, renormalized rewired rows
             otherwise. Exact zeros above the diagonal.
    scores:  (n_heads, n, n) pre-rewiring row-stochastic softmax weights
             (equal to ``weights`` for the standard layer).
    values:  (n_heads, n, head_dim) per-head value vectors.
    rewiring: gate state (see rewiring module) for rewired layers.
    """
    logits: np.ndarray
    weights: np.ndarray
    scores: np.ndarray
    values: np.ndarray
    rewiring: "object | None" = None


def split_heads(x: Tensor, n_heads: int) -> Tensor:
    """(n, d_model) -> (n_heads, n, head_dim)."""
    n, d = x.shape
    return T.transpose(T.reshape(x, (n, n_heads, d // n_heads)), (1, 0, 2))


def merge_heads(x: Tensor) -> Tensor:
    """(n_heads, n, head_dim) -> (n, d_model)."""
    h, n, dk = x.shape
    return T.reshape(T.transpose(x, (1, 0, 2)), (n, h * dk))


def causal_mask(n: int) -> np.ndarray:
    return np.tril(np.ones((n, n), dtype=bool))


def apply_rope(q: Tensor, k: Tensor, positions,
               theta: float = 10000.0) -> tuple[Tensor, Tensor]:
    """Rotate query/key rows by their positions (see tensor.rope)."""
    return T.rope(q, positions, theta=theta), T.rope(k, positions, theta=theta)


def texp(x: Tensor) -> Tensor:
    ex = np.exp(x.data)

    def vjp(g):
        return (g * ex,)
    return Tensor(ex, _parents=(x,), _vjp=vjp)


def masked_softmax_rows(logits: Tensor, mask: np.ndarray) -> Tensor:
    """Row-stochastic weights with exact zeros off-mask.

    Built from explicit exp/normalize (rather than tensor.softmax_rows) so
    the rewired variant can share the exact arithmetic: both divide the
    same exponentiated numerators by a row sum, which is what makes
    untouched rows bit-identical across the two layers.
    """
    z = logits.data
    m = np.where(mask, z, -np.inf).max(axis=-1, keepdims=True)
    shifted = logits - T.tensor(m)
    # off-mask slots are driven to exp(-1e9): an exact 0.0 with zero grad
    clamped = T.where(mask, shifted, T.tensor(np.full(z.shape, -1e9)))
    e = texp(clamped)
    return e / T.rowsum_stable(e)


def scaled_scores(q: Tensor, k: Tensor) -> Tensor:
    dk = q.shape[-1]
    return q @ T.transpose(k, (0, 2, 1)) * (1.0 / np.sqrt(dk))


def project_qkv(x: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor,
                cfg: AttentionConfig) -> tuple[Tensor, Tensor, Tensor]:
    n = x.shape[0]
    q = split_heads(x @ w_q, cfg.n_heads)
    k = split_heads(x @ w_k, cfg.n_heads)
    v = split_heads(x @ w_v, cfg.n_heads)
    if cfg.use_rope:
        q, k = apply_rope(q, k, np.arange(n), theta=cfg.rope_theta)
    return q, k, v


def causal_attention(x: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor,
                     w_o: Tensor, cfg: AttentionConfig,
                     record: bool = False, detach_weights: bool = False
                     ) -> tuple[Tensor, AttentionRecord | None]:
    """Standard multi-head causal attention on one sequence (n, d_model).

    ``detach_weights`` severs the gradient path through the mixing matrix
    (values and projections still carry gradient) — the verification
    suite's proofs treat the weights as constants.
    """
    n = x.shape[0]
    q, k, v = project_qkv(x, w_q, w_k, w_v, cfg)
    logits = scaled_scores(q, k)
    a = masked_softmax_rows(logits, np.broadcast_to(causal_mask(n),
                                                    (cfg.n_heads, n, n)))
    mix = a.detach() if detach_weights else a
    out = merge_heads(mix @ v) @ w_o
    rec = None
    if record:
        rec = AttentionRecord(logits=logits.data.copy(),
                              weights=a.data.copy(), scores=a.data.copy(),
                              values=v.data.copy())
    return out, rec
