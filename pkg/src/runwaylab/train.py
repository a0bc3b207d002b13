"""Adam training loop over byte windows, plus the shared evaluator.

Everything is deterministic from (config seed, step): batch windows are
drawn from a stream keyed by the step number, not from a mutating
generator, so resuming from a checkpoint replays the exact remaining
run. Parameters are replaced (tensors are immutable), never mutated.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .model import ModelConfig, init_params, sequence_loss
from .rng import Rng
from .tensor import Tensor


class TrainingError(RuntimeError):
    """Non-finite loss or malformed training inputs."""


@dataclass(frozen=True)
class TrainConfig:
    steps: int
    batch_size: int = 4
    seq_len: int = 64
    lr: float = 1e-3
    warmup_frac: float = 0.01
    min_lr_frac: float = 0.1
    clip_norm: float = 1.0
    weight_decay: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    eval_windows: int = 8

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(doc: dict) -> "TrainConfig":
        return TrainConfig(**{k: doc[k] for k in doc
                              if k in TrainConfig.__dataclass_fields__})


@dataclass
class TrainState:
    cfg: ModelConfig
    tcfg: TrainConfig
    params: dict[str, Tensor]
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    step: int = 0
    loss_history: list = field(default_factory=list)


def init_train_state(cfg: ModelConfig, tcfg: TrainConfig) -> TrainState:
    params = init_params(cfg)
    zeros = {k: np.zeros(p.shape) for k, p in params.items()}
    return TrainState(cfg=cfg, tcfg=tcfg, params=params,
                      adam_m=zeros,
                      adam_v={k: z.copy() for k, z in zeros.items()})


def lr_at(step: int, tcfg: TrainConfig) -> float:
    """Linear warmup over the first warmup_frac of steps, then cosine
    decay to min_lr_frac of the peak."""
    warm = max(1, round(tcfg.warmup_frac * tcfg.steps))
    if step < warm:
        return tcfg.lr * (step + 1) / warm
    lo = tcfg.lr * tcfg.min_lr_frac
    if tcfg.steps <= warm:
        return lo
    t = (step - warm) / (tcfg.steps - warm)
    return lo + 0.5 * (tcfg.lr - lo) * (1.0 + math.cos(math.pi * t))


def sample_batch(data: np.ndarray, cfg: ModelConfig, tcfg: TrainConfig,
                 step: int) -> np.ndarray:
    """(batch, seq_len+1) windows keyed by step for exact resume."""
    span = tcfg.seq_len + 1
    if len(data) < span:
        raise TrainingError(
            f"corpus has {len(data)} tokens, need at least {span}")
    starts = Rng(cfg.seed, f"batch/{step}").integers(
        0, len(data) - span + 1, (tcfg.batch_size,))
    return np.stack([data[s:s + span] for s in starts])


def _global_grad_norm(params: dict[str, Tensor]) -> float:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    return math.sqrt(total)


def train_step(state: TrainState, batch: np.ndarray, lr: float) -> float:
    """One Adam update on the mean next-token loss over the batch rows.

    Returns the (pre-update) batch loss. Mutates ``state``: parameters are
    swapped for updated tensors, moments updated in place.
    """
    tcfg = state.tcfg
    if batch.ndim != 2:
        raise TrainingError(f"batch must be 2-d, got {batch.shape}")
    if batch.shape[1] - 1 > state.cfg.max_seq_len:
        raise TrainingError(
            f"window {batch.shape[1] - 1} exceeds max_seq_len "
            f"{state.cfg.max_seq_len}")

    for p in state.params.values():
        p.grad = None
    per_row = [sequence_loss(row, state.params, state.cfg) for row in batch]
    loss = T.tsum(T.concat([T.reshape(l, (1,)) for l in per_row])) \
        * (1.0 / len(per_row))
    value = loss.item()
    if not np.isfinite(value):
        raise TrainingError(
            f"non-finite loss {value} at step {state.step} "
            f"(lr={lr}, batch shape={batch.shape})")
    T.backward(loss)

    scale = 1.0
    if tcfg.clip_norm > 0:
        gnorm = _global_grad_norm(state.params)
        if gnorm > tcfg.clip_norm:
            scale = tcfg.clip_norm / gnorm

    t = state.step + 1
    b1, b2 = tcfg.adam_beta1, tcfg.adam_beta2
    for name, p in state.params.items():
        g = (p.grad if p.grad is not None else np.zeros(p.shape)) * scale
        m = state.adam_m[name]
        v = state.adam_v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        mh = m / (1 - b1 ** t)
        vh = v / (1 - b2 ** t)
        new = p.data - lr * mh / (np.sqrt(vh) + tcfg.adam_eps)
        if tcfg.weight_decay > 0:
            new = new - lr * tcfg.weight_decay * p.data
        state.params[name] = Tensor(new, requires_grad=True)

    state.step = t
    state.loss_history.append(value)
    return value


def run_training(state: TrainState, data: np.ndarray, on_step=None
                 ) -> TrainState:
    """Drive train_step from state.step to tcfg.steps.

    ``on_step(state, loss, lr)`` fires after every update (logging,
    checkpointing); training state itself stays file-free.
    """
    while state.step < state.tcfg.steps:
        lr = lr_at(state.step, state.tcfg)
        batch = sample_batch(data, state.cfg, state.tcfg, state.step)
        loss = train_step(state, batch, lr)
        if on_step is not None:
            on_step(state, loss, lr)
    return state


def evaluate(params: dict[str, Tensor], cfg: ModelConfig, data: np.ndarray,
             eval_len: int, n_windows: int) -> tuple[float, list[float]]:
    """Mean next-token loss over consecutive non-overlapping windows.

    The same routine backs the trainer's final validation number and the
    length-extrapolation sweep, so 'same data, same length' comparisons
    are identities rather than near-misses.
    """
    span = eval_len + 1
    avail = len(data) // span
    if avail < 1:
        raise TrainingError(
            f"eval corpus has {len(data)} tokens, need {span}")
    n_windows = min(n_windows, avail)
    losses = []
    for w in range(n_windows):
        window = data[w * span:(w + 1) * span]
        losses.append(sequence_loss(window, params, cfg).item())
    return float(np.mean(losses)), losses
