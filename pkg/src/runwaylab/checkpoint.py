"""Checkpoint serialization.

Layout (all integers little-endian):

    magic   4 bytes  b"RWAY"
    version u32      currently 1
    body:
        config_len u32, config JSON (utf-8)
        n_tensors  u32
        per tensor:
            name_len u32, name bytes (utf-8)
            rank u32, dims rank x u64
            payload: prod(dims) float64, row-major
    crc32   u32      over the whole body

The config document mirrors ModelConfig field names at the top level;
optimizer state, when present, rides along under "train_state" with its
moment tensors stored as "adam.m.<param>" / "adam.v.<param>".
"""

from __future__ import annotations

import json
import struct
import zlib
from typing import Optional

import numpy as np

from .model import ModelConfig, param_shapes
from .tensor import Tensor
from .train import TrainConfig, TrainState

MAGIC = b"RWAY"
VERSION = 1


class CheckpointError(IOError):
    """Malformed, truncated, corrupt, or mismatched checkpoint file."""


def _pack_tensor(name: str, arr: np.ndarray) -> bytes:
    nb = name.encode("utf-8")
    parts = [struct.pack("<I", len(nb)), nb,
             struct.pack("<I", arr.ndim),
             struct.pack(f"<{arr.ndim}Q", *arr.shape)]
    parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(path, cfg: ModelConfig, params: dict[str, Tensor],
                    train_state: Optional[TrainState] = None) -> None:
    doc = cfg.to_dict()
    tensors: list[tuple[str, np.ndarray]] = [(k, p.data) for k, p in
                                             params.items()]
    if train_state is not None:
        doc["train_state"] = {
            "step": train_state.step,
            "train_config": train_state.tcfg.to_dict(),
        }
        # the loss history is stored as a tensor: fixed 8 bytes per entry,
        # so checkpoints of equal-length runs stay byte-count comparable
        tensors.append(("train.loss_history",
                        np.asarray(train_state.loss_history, dtype=np.float64)))
        for k in params:
            tensors.append((f"adam.m.{k}", train_state.adam_m[k]))
            tensors.append((f"adam.v.{k}", train_state.adam_v[k]))

    cfg_bytes = json.dumps(doc, sort_keys=True).encode("utf-8")
    # pad the config so that checkpoints differing only in the attention
    # kind string stay byte-count identical (dot mode adds no parameters,
    # and its checkpoints should not differ in size either)
    widest = len(json.dumps({**doc, "attention_kind": "rewired_bilinear"},
                            sort_keys=True).encode("utf-8"))
    cfg_bytes += b" " * (widest - len(cfg_bytes))
    cfg_bytes += b" " * (-len(cfg_bytes) % 64)
    body = [struct.pack("<I", len(cfg_bytes)), cfg_bytes,
            struct.pack("<I", len(tensors))]
    body += [_pack_tensor(k, a) for k, a in tensors]
    blob = b"".join(body)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(blob)
        fh.write(struct.pack("<I", zlib.crc32(blob)))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.buf):
            raise CheckpointError("truncated checkpoint")
        out = self.buf[self.off:self.off + n]
        self.off += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path, attention_kind: Optional[str] = None
                    ) -> tuple[ModelConfig, dict[str, Tensor],
                               Optional[TrainState]]:
    """Read a checkpoint; optionally reinterpret the attention kind.

    Reinterpretation validates against the *requested* kind's parameter
    table, so a standard checkpoint loads as rewired_dot (identical
    tensor set) but not as rewired_bilinear (missing forms).
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12:
        raise CheckpointError("truncated checkpoint")
    if raw[:4] != MAGIC:
        raise CheckpointError(f"bad magic {raw[:4]!r}")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}")
    body, (crc,) = raw[8:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checksum mismatch")

    rd = _Reader(body)
    doc = json.loads(rd.take(rd.u32()).decode("utf-8"))
    train_doc = doc.pop("train_state", None)
    cfg = ModelConfig.from_dict(doc)
    if attention_kind is not None and attention_kind != cfg.attention_kind:
        cfg = ModelConfig.from_dict({**doc, "attention_kind": attention_kind})

    tensors: dict[str, np.ndarray] = {}
    for _ in range(rd.u32()):
        name = rd.take(rd.u32()).decode("utf-8")
        rank = rd.u32()
        dims = struct.unpack(f"<{rank}Q", rd.take(8 * rank))
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        arr = np.frombuffer(rd.take(8 * n), dtype="<f8").reshape(dims)
        tensors[name] = arr.copy()
    if rd.off != len(body):
        raise CheckpointError("trailing bytes after last tensor")

    expected = param_shapes(cfg)
    params: dict[str, Tensor] = {}
    for name, shape in expected.items():
        if name not in tensors:
            raise CheckpointError(f"missing tensor {name!r}")
        if tensors[name].shape != shape:
            raise CheckpointError(
                f"tensor {name!r} has shape {tensors[name].shape}, "
                f"config implies {shape}")
        params[name] = Tensor(tensors[name], requires_grad=True)

    state = None
    if train_doc is not None:
        tcfg = TrainConfig.from_dict(train_doc["train_config"])
        adam_m, adam_v = {}, {}
        for name in expected:
            for prefix, dst in (("adam.m.", adam_m), ("adam.v.", adam_v)):
                key = prefix + name
                if key not in tensors:
                    raise CheckpointError(f"missing optimizer tensor {key!r}")
                if tensors[key].shape != expected[name]:
                    raise CheckpointError(f"optimizer tensor {key!r} shape "
                                          f"{tensors[key].shape} != {expected[name]}")
                dst[name] = tensors[key]
        if "train.loss_history" not in tensors:
            raise CheckpointError("missing tensor 'train.loss_history'")
        state = TrainState(cfg=cfg, tcfg=tcfg, params=params,
                           adam_m=adam_m, adam_v=adam_v,
                           step=int(train_doc["step"]),
                           loss_history=[float(x) for x in
                                         tensors["train.loss_history"]])
    return cfg, params, state
