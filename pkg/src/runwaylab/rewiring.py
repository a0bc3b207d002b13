"""Runway-aware soft rewiring of the causal attention pattern.

In the complete causal DAG every edge ``m -> d`` with ``m < d - 1`` is
also the endpoint of many indirect routes ("runways"): the number of
distinct multi-edge paths from ``m`` to ``d`` is ``2^(d-m-1) - 1``. The
rewiring lets the model choose, per destination, how much of each such
edge to keep, on the bet that information carried by long-runway edges is
often already represented along the intermediate hops.

Mechanics, per layer:

* a runway coefficient ``r[d, m] = sigmoid(score(v[d-1], v[m]) /
  sqrt(head_dim))`` is computed from the **last head's value vectors** —
  that head's capacity is re-purposed to steer the pattern. ``score`` is
  a plain dot product ("dot") or a learned bilinear form ``v[d-1]^T B
  v[m]`` ("bilinear").
* eligible edges are ``m <= d - 2`` except ``m == 0``; the self edge, the
  previous-token edge, and the first-token edge are never touched.
* eligible weights are damped by ``beta = 1 - r`` and rows renormalized:
  ``e_tilde = e * beta``, ``e_hat = e_tilde / rowsum``.

One coefficient matrix is shared by all heads. Rows with no eligible edge
(the first three positions) are passed through untouched — not merely
renormalized back, but left bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .attention import (AttentionConfig, AttentionRecord, causal_mask,
                        masked_softmax_rows, merge_heads, project_qkv,
                        scaled_scores)
from .tensor import Tensor


def keep_mask(n: int) -> np.ndarray:
    """(n, n) bool: edges the rewiring must never touch (and the future)."""
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    return (j == i) | (j == i - 1) | (j == 0)


def eligible_mask(n: int) -> np.ndarray:
    """(n, n) bool: edges the coefficients may damp — strictly-past,
    non-adjacent, non-first."""
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    return (j <= i - 2) & (j != 0)


@dataclass(frozen=True)
class RewiringMode:
    """How pairwise compatibility scores are formed.

    kind "dot" uses the raw dot product and adds no parameters; "bilinear"
    inserts a learned head_dim x head_dim form (one per layer).
    """
    kind: str
    bilinear: Tensor | None = None

    def __post_init__(self):
        if self.kind not in ("dot", "bilinear"):
            raise ValueError(f"unknown rewiring kind: {self.kind!r}")
        if (self.bilinear is not None) != (self.kind == "bilinear"):
            raise ValueError("bilinear form present iff kind == 'bilinear'")


@dataclass
class RewiringRecord:
    """Rewiring state for one layer.

    r:       (n, n) runway coefficients (only eligible slots are read).
    beta:    (n, n) down-scale factors: 1 - r on eligible edges, exactly
             1.0 everywhere else.
    e_tilde: (n_heads, n, n) damped weights before renormalization.
    e_hat:   (n_heads, n, n) renormalized mixing weights.
    """
    r: np.ndarray
    beta: np.ndarray
    e_tilde: np.ndarray
    e_hat: np.ndarray


def runway_coefficients(v_last: Tensor, mode: RewiringMode) -> Tensor:
    """Coefficient matrix r, shape (n, n): r[d, m] from v[d-1] and v[m].

    Row 0 has no previous token; it reads v[0] instead, which is harmless
    because no edge in rows 0..2 is eligible. Entries outside the eligible
    set are computed but must be ignored downstream.
    """
    n, dk = v_last.shape
    prev = np.maximum(np.arange(n) - 1, 0)
    v_prev = T.gather_rows(v_last, prev)
    if mode.kind == "dot":
        scores = v_prev @ T.transpose(v_last, (1, 0))
    else:
        scores = (v_prev @ mode.bilinear) @ T.transpose(v_last, (1, 0))
    return T.sigmoid(scores * (1.0 / np.sqrt(dk)))


def down_scale_factors(r: Tensor) -> Tensor:
    """beta = 1 - r on eligible edges, exact 1.0 on everything else."""
    n = r.shape[-1]
    return T.where(eligible_mask(n), 1.0 - r, T.ones((n, n)))


def rewire(e: Tensor, r: Tensor, record: bool = False
           ) -> tuple[Tensor, RewiringRecord | None]:
    """Damp eligible edges of row-stochastic weights ``e`` (heads, n, n).

    Rows with at least one eligible edge are scaled by beta and
    renormalized; rows with none (the first three) are returned
    bit-identical — multiplying by the exact 1.0s and renormalizing would
    reintroduce rounding on rows the operation is defined not to touch.
    """
    n = e.shape[-1]
    beta = down_scale_factors(r)
    e_tilde = e * beta
    rowsum = T.rowsum_stable(e_tilde)
    if not np.all(rowsum.data > 0.0):
        # unreachable for stochastic e: the self edge keeps beta == 1
        raise T.NumericError("rewire: a row lost all of its mass")
    touched = eligible_mask(n).any(axis=-1)[None, :, None]
    e_hat = T.where(touched, e_tilde / rowsum, e)
    rec = None
    if record:
        rec = RewiringRecord(r=r.data.copy(), beta=beta.data.copy(),
                             e_tilde=e_tilde.data.copy(),
                             e_hat=e_hat.data.copy())
    return e_hat, rec


def rewired_attention(x: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor,
                      w_o: Tensor, cfg: AttentionConfig, mode: RewiringMode,
                      record: bool = False, detach_weights: bool = False
                      ) -> tuple[Tensor, AttentionRecord | None]:
    """Causal attention mixed with rewired weights.

    The last head's values serve double duty: they enter the usual
    per-head aggregation *and* produce the runway coefficients, so the
    loss gradient reaches W_V through both routes.
    """
    n = x.shape[0]
    q, k, v = project_qkv(x, w_q, w_k, w_v, cfg)
    logits = scaled_scores(q, k)
    a = masked_softmax_rows(logits, np.broadcast_to(causal_mask(n),
                                                    (cfg.n_heads, n, n)))
    r = runway_coefficients(v[cfg.n_heads - 1], mode)
    e_hat, rrec = rewire(a, r, record=record)
    mix = e_hat.detach() if detach_weights else e_hat
    out = merge_heads(mix @ v) @ w_o
    rec = None
    if record:
        rec = AttentionRecord(logits=logits.data.copy(),
                              weights=e_hat.data.copy(), scores=a.data.copy(),
                              values=v.data.copy(), rewiring=rrec)
    return out, rec
