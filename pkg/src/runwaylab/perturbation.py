"""Common-mode perturbation lemmas for a single attention layer.

Setting: one head, no rotary offsets, raw weight matrices. A row of
hidden states h is perturbed into h + delta_c + delta_r where delta_c is
one vector added to *every* token (common mode) and delta_r carries the
per-token deviations. Two facts are checked mechanically:

* blindspot: with the query held fixed, the attention row cannot see
  delta_c at all, and its response to delta_r is bounded by
  sigma0 * P * ||delta_r||_F with P = ||h_d W_Q|| ||W_K||_2 / sqrt(d_k).
* cascade: the aggregated value message absorbs the common mode as an
  additive delta_c @ W_V shift, because the mixing row sums to one.

Weight matrices travel in a plain dict: ``{"w_q": ..., "w_k": ...,
"w_v": ...}`` (numpy arrays, model-dim rows). Checks are forward-only,
so everything here stays in numpy; the rewired variant of the cascade
wraps the production gate ops to keep the arithmetic identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .model import InputError
from .rewiring import RewiringMode, rewire, runway_coefficients

# spectral bound on the softmax Jacobian diag(a) - a a^T
SOFTMAX_LIPSCHITZ = 0.5


@dataclass(frozen=True)
class PerturbationDecomposition:
    """delta split into a shared row vector and mean-free deviations."""
    delta_c: np.ndarray   # (d_model,)
    delta_r: np.ndarray   # (n, d_model)

    def reconstruct(self) -> np.ndarray:
        return self.delta_c[None, :] + self.delta_r


def split_perturbation(delta) -> PerturbationDecomposition:
    """Split an (n, d_model) perturbation into common mode + residual.

    delta_c is the per-column mean over tokens; delta_r is what is left,
    mean-free across the row by construction. delta_r stores exactly
    delta - delta_c, so re-adding delta_c recovers delta up to the one
    rounding of that final addition.
    """
    arr = np.asarray(delta, dtype=np.float64)
    if arr.ndim != 2:
        raise InputError(f"expected (n, d_model) perturbation, got {arr.shape}")
    delta_c = arr.mean(axis=0)
    return PerturbationDecomposition(delta_c=delta_c, delta_r=arr - delta_c)


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _as_array(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, T.Tensor) else x,
                      dtype=np.float64)


def blindspot_check(h_tilde, delta_c, delta_r, h_d, params
                    ) -> tuple[float, float]:
    """Measure how much the attention row moves under the perturbation.

    The query vector ``h_d`` stays fixed; the keys are h_tilde versus
    h_tilde + delta_c + delta_r. Returns (weight_gap, bound) where
    weight_gap is the 2-norm of the difference between the two softmax
    rows and bound = sigma0 * P * ||delta_r||_F. The common-mode part
    shifts every logit by the same constant, so with delta_r = 0 the gap
    collapses to rounding noise.
    """
    keys = _as_array(h_tilde)
    dc = _as_array(delta_c)
    dr = _as_array(delta_r)
    q_in = _as_array(h_d)
    w_q = _as_array(params["w_q"])
    w_k = _as_array(params["w_k"])
    if keys.ndim != 2 or dr.shape != keys.shape:
        raise InputError(
            f"keys {keys.shape} and residual {dr.shape} must both be (n, d)")
    d_k = w_k.shape[1]
    scale = 1.0 / np.sqrt(d_k)

    q = q_in @ w_q
    row_clean = _softmax((keys @ w_k) @ q * scale)
    pert = keys + dc[None, :] + dr
    row_pert = _softmax((pert @ w_k) @ q * scale)

    weight_gap = float(np.linalg.norm(row_pert - row_clean))
    p_factor = (np.linalg.norm(q) * np.linalg.svd(w_k, compute_uv=False)[0]
                * scale)
    bound = float(SOFTMAX_LIPSCHITZ * p_factor * np.linalg.norm(dr))
    return weight_gap, bound


def _messages(queries: np.ndarray, keys: np.ndarray, params,
              mode: RewiringMode | None) -> np.ndarray:
    """Causal value aggregation with queries and keys decoupled."""
    w_q = _as_array(params["w_q"])
    w_k = _as_array(params["w_k"])
    w_v = _as_array(params["w_v"])
    n = queries.shape[0]
    scale = 1.0 / np.sqrt(w_k.shape[1])
    logits = (queries @ w_q) @ (keys @ w_k).T * scale
    masked = np.where(np.tril(np.ones((n, n), dtype=bool)), logits, -np.inf)
    a = _softmax(masked)
    v = keys @ w_v
    if mode is None:
        return a @ v
    r = runway_coefficients(T.tensor(v), mode)
    e_hat, _ = rewire(T.tensor(a[None]), r)
    return e_hat.data[0] @ v


def cascade_check(h_tilde, delta_c, delta_r, params,
                  mode: RewiringMode | None = None) -> float:
    """Residual of the common-mode pass-through identity.

    Queries come from the unperturbed row; keys and values are perturbed.
    For the plain softmax layer the mixing rows are invariant to delta_c
    and sum to one, so the aggregated message shifts by exactly
    delta_c @ W_V:

        m(h + dc + dr) - dc @ W_V - m(h + dr) == 0

    Returned is the worst destination-row 2-norm of that difference.
    With a rewired ``mode`` the gate coefficients are recomputed from the
    shifted values, so the identity is only approximate — callers report
    that number instead of asserting on it.
    """
    base = _as_array(h_tilde)
    dc = _as_array(delta_c)
    dr = _as_array(delta_r)
    w_v = _as_array(params["w_v"])
    if base.ndim != 2 or dr.shape != base.shape:
        raise InputError(
            f"states {base.shape} and residual {dr.shape} must both be (n, d)")

    m_pert = _messages(base, base + dc[None, :] + dr, params, mode)
    m_resid = _messages(base, base + dr, params, mode)
    diff = m_pert - dc @ w_v - m_resid
    return float(np.sqrt((diff * diff).sum(axis=-1)).max())
