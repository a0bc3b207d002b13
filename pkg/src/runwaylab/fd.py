"""Finite-difference oracles.

These are the independent referees for the gradient tape: central
differences know nothing about the tape's vector-Jacobian products, so
agreement between the two is evidence that both are right.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import NumericError, Tensor

GRAD_STEP = 1e-5
JAC_STEP = 1e-6


def fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray,
                step: float = GRAD_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar function at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty(x.size)
    flat = x.reshape(-1)
    for k in range(x.size):
        orig = flat[k]
        pert = flat.copy()
        pert[k] = orig + step
        hi = float(f(pert.reshape(x.shape)))
        pert[k] = orig - step
        lo = float(f(pert.reshape(x.shape)))
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericError(f"fd_gradient: non-finite value at flat index {k}")
        g[k] = (hi - lo) / (2.0 * step)
    return g.reshape(x.shape)


def fd_jacobian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                step: float = JAC_STEP) -> np.ndarray:
    """Central-difference Jacobian, shape (out_size, in_size)."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(-1)
    cols = []
    for k in range(x.size):
        pert = flat.copy()
        pert[k] = flat[k] + step
        hi = np.asarray(f(pert.reshape(x.shape)), dtype=np.float64).reshape(-1)
        pert[k] = flat[k] - step
        lo = np.asarray(f(pert.reshape(x.shape)), dtype=np.float64).reshape(-1)
        col = (hi - lo) / (2.0 * step)
        if not np.all(np.isfinite(col)):
            raise NumericError(f"fd_jacobian: non-finite column at flat index {k}")
        cols.append(col)
    return np.stack(cols, axis=1)


def grads_close(tape: np.ndarray, fd: np.ndarray,
                rtol: float = 1e-4, atol: float = 1e-8) -> bool:
    """Elementwise |tape - fd| <= rtol*max(|tape|,|fd|) or <= atol."""
    tape = np.asarray(tape)
    fd = np.asarray(fd)
    diff = np.abs(tape - fd)
    scale = np.maximum(np.abs(tape), np.abs(fd))
    return bool(np.all((diff <= rtol * scale) | (diff <= atol)))


def max_rel_err(tape: np.ndarray, fd: np.ndarray, atol: float = 1e-8) -> float:
    """Worst relative disagreement, ignoring entries below ``atol``."""
    tape = np.asarray(tape)
    fd = np.asarray(fd)
    diff = np.abs(tape - fd)
    scale = np.maximum(np.maximum(np.abs(tape), np.abs(fd)), atol)
    return float((diff / scale).max()) if diff.size else 0.0
