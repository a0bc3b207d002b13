"""Multi-hop sensitivity bound and its direct/indirect decomposition.

For a single-head model run in detached-attention mode (the mixing
matrices treated as constants), the Jacobian of token d's hidden state r
layers above layer L with respect to token s's state at layer L obeys

    || d h_d^(L+r) / d h_s^(L) ||_2  <=  C^r * (prod_t (I + A^(t)))_{ds}

with later layers multiplying on the left and C any constant dominating,
at every layer in the window, both the token-update Jacobian norm
||J_phi|| and the product ||J_phi||*||J_psi||. Here psi is the value
path of one token (LN -> W_V -> W_O) and phi the residual MLP update
(u -> u + MLP(LN(u))); LayerNorm is absorbed into both. C is estimated
from the realized activations: per-token tape Jacobians of phi and psi,
exact spectral norms via SVD, maxima over tokens and layers. The SVD is
deliberate — an iterative norm estimate can undershoot, which would make
the certified bound spuriously tight.

The (I + A) product entry also splits into the contribution that stays
on token d through the last hop versus the contributions entering
through each neighbour w, mirroring how a destination aggregates its
direct edge against runway traffic; ``direct_runway_split`` returns the
two pieces so their recombination can be checked against the full
product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .attention import causal_attention
from .model import InputError, ModelConfig, _rewiring_mode, embed_tokens
from .rewiring import rewired_attention
from .tensor import Tensor


@dataclass(frozen=True)
class SensitivityReport:
    s: int
    d: int
    L: int
    r: int
    measured_norm: float
    bound_matrix_entry: float
    C: float
    bound: float
    satisfied: bool
    # same Jacobian with gradient flowing through the mixing weights;
    # informational only, the bound makes no claim about it
    full_norm: float | None = None


def _spectral(mat: np.ndarray) -> float:
    return float(np.linalg.svd(mat, compute_uv=False)[0])


def _attend(x: Tensor, layer: int, params, cfg: ModelConfig,
            detach: bool):
    p = f"layers.{layer}."
    acfg = cfg.attention_config()
    if cfg.attention_kind == "standard":
        return causal_attention(
            x, params[p + "wq"], params[p + "wk"], params[p + "wv"],
            params[p + "wo"], acfg, record=True, detach_weights=detach)
    return rewired_attention(
        x, params[p + "wq"], params[p + "wk"], params[p + "wv"],
        params[p + "wo"], acfg, _rewiring_mode(cfg, params, layer),
        record=True, detach_weights=detach)


def _block_with_record(h: Tensor, layer: int, params, cfg: ModelConfig,
                       detach: bool):
    """One block, returning (h_next, u, mixing matrix) at realized h."""
    p = f"layers.{layer}."
    x = T.layer_norm(h, params[p + "ln1.g"], params[p + "ln1.b"])
    msg, rec = _attend(x, layer, params, cfg, detach)
    u = h + msg
    y = T.layer_norm(u, params[p + "ln2.g"], params[p + "ln2.b"])
    out = u + T.gelu(y @ params[p + "mlp.w1"]) @ params[p + "mlp.w2"]
    return out, u, rec.weights[0]


def _phi(u_row: Tensor, layer: int, params) -> Tensor:
    p = f"layers.{layer}."
    y = T.layer_norm(u_row, params[p + "ln2.g"], params[p + "ln2.b"])
    return u_row + T.gelu(y @ params[p + "mlp.w1"]) @ params[p + "mlp.w2"]


def _psi(h_row: Tensor, layer: int, params) -> Tensor:
    p = f"layers.{layer}."
    x = T.layer_norm(h_row, params[p + "ln1.g"], params[p + "ln1.b"])
    return x @ params[p + "wv"] @ params[p + "wo"]


def _max_token_norm(fn, rows: np.ndarray) -> float:
    worst = 0.0
    for i in range(rows.shape[0]):
        jac = T.tape_jacobian(fn, T.tensor(rows[i:i + 1]))[0]
        worst = max(worst, _spectral(jac))
    return worst


def _token_jacobian(h_layer: np.ndarray, s: int, d: int, layers, params,
                    cfg: ModelConfig, detach: bool) -> np.ndarray:
    """Jacobian of token d after running ``layers`` w.r.t. token s's input."""
    n = h_layer.shape[0]

    def f(x_row: Tensor) -> Tensor:
        parts = []
        if s > 0:
            parts.append(T.tensor(h_layer[:s]))
        parts.append(x_row)
        if s + 1 < n:
            parts.append(T.tensor(h_layer[s + 1:]))
        h = T.concat(parts, axis=0) if len(parts) > 1 else parts[0]
        for t in layers:
            h, _, _ = _block_with_record(h, t, params, cfg, detach)
        return T.index(h, d)

    return T.tape_jacobian(f, T.tensor(h_layer[s:s + 1]))[0]


def sensitivity_bound_check(tokens, params, cfg: ModelConfig, s: int,
                            d: int, L: int, r: int) -> SensitivityReport:
    """Measure the cross-token Jacobian and certify it against the bound.

    Runs the model on ``tokens``, extracts the realized hidden states and
    mixing matrices for layers L..L+r-1, estimates C there, and compares
    the measured (detached-attention) Jacobian operator norm against
    C^r * (prod (I + A^(t)))_{ds}. Single-head models only: the bound is
    stated for one mixing matrix per layer.
    """
    if r < 0:
        raise InputError(f"negative layer span r={r}")
    if cfg.n_heads != 1:
        raise InputError("sensitivity bound needs a single-head model")
    if L < 0 or L + r > cfg.n_layers:
        raise InputError(
            f"window [{L}, {L}+{r}] outside {cfg.n_layers} layers")
    ids = np.asarray(tokens, dtype=np.int64)
    n = ids.shape[0]
    if not (0 <= s < n and 0 <= d < n):
        raise InputError(f"tokens positions s={s}, d={d} outside n={n}")

    if r == 0:
        m = 1.0 if s == d else 0.0
        return SensitivityReport(s=s, d=d, L=L, r=0, measured_norm=m,
                                 bound_matrix_entry=m, C=1.0, bound=m,
                                 satisfied=True, full_norm=m)

    # realized states up to layer L+r, recording u and A per layer
    h = embed_tokens(ids, params, cfg)
    for t in range(L):
        h, _, _ = _block_with_record(h, t, params, cfg, detach=True)
    h_L = h.data.copy()

    c_val = 0.0
    prod = np.eye(n)
    for t in range(L, L + r):
        h_in = h
        h, u, a_mat = _block_with_record(h_in, t, params, cfg, detach=True)
        max_phi = _max_token_norm(lambda row, t=t: _phi(row, t, params),
                                  u.data)
        max_psi = _max_token_norm(lambda row, t=t: _psi(row, t, params),
                                  h_in.data)
        c_val = max(c_val, max_phi * max(1.0, max_psi))
        prod = (np.eye(n) + a_mat) @ prod

    measured = _spectral(
        _token_jacobian(h_L, s, d, range(L, L + r), params, cfg, True))
    full = _spectral(
        _token_jacobian(h_L, s, d, range(L, L + r), params, cfg, False))
    entry = float(prod[d, s])
    bound = c_val ** r * entry
    return SensitivityReport(
        s=s, d=d, L=L, r=r, measured_norm=measured,
        bound_matrix_entry=entry, C=c_val, bound=bound,
        satisfied=measured <= bound * (1.0 + 1e-9), full_norm=full)


def sensitivity_sweep(tokens, params, cfg: ModelConfig, L: int,
                      r_values) -> tuple[list[SensitivityReport],
                                         list[np.ndarray]]:
    """Reports for every (s, d) pair and every span in ``r_values``.

    Chains per-layer tape Jacobians instead of re-running the tape per
    pair: the detached-mode Jacobian of a window is the product of its
    layers' full-state Jacobians, and each (s, d) entry is a block of
    that product. One tape pass per layer therefore covers all n^2 pairs
    and every requested span. Results match ``sensitivity_bound_check``
    to rounding; ``full_norm`` is left unset here. Also returns the
    realized mixing matrices for the window, so callers can cross-check
    the direct/runway decomposition on the same data.
    """
    spans = sorted(set(int(r) for r in r_values))
    if not spans or spans[0] < 1:
        raise InputError(f"spans must be positive, got {r_values}")
    if cfg.n_heads != 1:
        raise InputError("sensitivity bound needs a single-head model")
    r_max = spans[-1]
    if L < 0 or L + r_max > cfg.n_layers:
        raise InputError(
            f"window [{L}, {L}+{r_max}] outside {cfg.n_layers} layers")
    ids = np.asarray(tokens, dtype=np.int64)
    n = ids.shape[0]
    dm = cfg.d_model

    h = embed_tokens(ids, params, cfg)
    for t in range(L):
        h, _, _ = _block_with_record(h, t, params, cfg, detach=True)

    reports: list[SensitivityReport] = []
    a_mats: list[np.ndarray] = []
    win_jac = np.eye(n * dm)
    prod = np.eye(n)
    c_val = 0.0
    for t in range(L, L + r_max):
        h_in = h
        h, u, a_mat = _block_with_record(h_in, t, params, cfg, detach=True)
        a_mats.append(a_mat.copy())

        def block_fn(x: Tensor, t=t) -> Tensor:
            out, _, _ = _block_with_record(x, t, params, cfg, detach=True)
            return out

        layer_jac = T.tape_jacobian(block_fn, T.tensor(h_in.data))[0]
        win_jac = layer_jac @ win_jac
        max_phi = _max_token_norm(lambda row, t=t: _phi(row, t, params),
                                  u.data)
        max_psi = _max_token_norm(lambda row, t=t: _psi(row, t, params),
                                  h_in.data)
        c_val = max(c_val, max_phi * max(1.0, max_psi))
        prod = (np.eye(n) + a_mat) @ prod

        r = t - L + 1
        if r not in spans:
            continue
        for d in range(n):
            for s in range(n):
                measured = _spectral(
                    win_jac[d * dm:(d + 1) * dm, s * dm:(s + 1) * dm])
                entry = float(prod[d, s])
                bound = c_val ** r * entry
                reports.append(SensitivityReport(
                    s=s, d=d, L=L, r=r, measured_norm=measured,
                    bound_matrix_entry=entry, C=c_val, bound=bound,
                    satisfied=measured <= bound * (1.0 + 1e-9)))
    return reports, a_mats


def direct_runway_split(A_layers, s: int, d: int, r: int
                        ) -> tuple[float, np.ndarray]:
    """Split the r-hop bound entry into self-carry and per-neighbour terms.

    With P = prod over the first r-1 mixing matrices of (I + A) (later
    layers left), the full entry satisfies

        (prod_{t<r} (I + A^(t)))_{ds} = P_{ds} + sum_w A^(r-1)_{dw} P_{ws}

    and the function returns (P_{ds}, the vector of addends over w).
    For r = 1 this degenerates to the identity row: delta_{ds} + A_{ds}.
    """
    mats = [np.asarray(a.data if isinstance(a, Tensor) else a,
                       dtype=np.float64) for a in A_layers]
    if r < 1:
        raise InputError(f"need at least one hop, got r={r}")
    if len(mats) < r:
        raise InputError(f"{len(mats)} mixing matrices for r={r} hops")
    n = mats[0].shape[0]
    if not (0 <= s < n and 0 <= d < n):
        raise InputError(f"positions s={s}, d={d} outside n={n}")

    prod = np.eye(n)
    for t in range(r - 1):
        prod = (np.eye(n) + mats[t]) @ prod
    self_term = float(prod[d, s])
    gate_terms = mats[r - 1][d, :] * prod[:, s]
    return self_term, gate_terms
