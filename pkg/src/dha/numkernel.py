"""Dense float64 kernels: SPD solves, activations, masking noise, seeded RNG.

Random streams are Philox4x64-10 (counter based) keyed by ``(seed, stream)``,
so a named purpose (init, corruption, splitting, ...) always draws from its
own reproducible sequence regardless of what other purposes consumed.
"""
from __future__ import annotations

from enum import IntEnum

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotPositiveDefinite, RateOutOfRange

ACTIVATIONS = ("sigmoid", "relu", "tanh", "identity")


class Stream(IntEnum):
    INIT = 0
    PRETRAIN = 1
    JOINT = 2
    FACTORS = 3
    SPLIT = 4
    SYNTH = 5
    GRADCHECK = 6


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, int(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def rng_state(rng: np.random.Generator) -> np.ndarray:
    """Pack a Philox generator state into uint64 words (counter, key, buffer, flags)."""
    st = rng.bit_generator.state
    s = st["state"]
    return np.concatenate([
        np.asarray(s["counter"], dtype=np.uint64),
        np.asarray(s["key"], dtype=np.uint64),
        np.asarray(st["buffer"], dtype=np.uint64),
        np.array([st["buffer_pos"], st["has_uint32"], st["uinteger"]], dtype=np.uint64),
    ])


def rng_from_state(words: np.ndarray) -> np.random.Generator:
    w = np.asarray(words, dtype=np.uint64)
    bg = np.random.Philox()
    bg.state = {
        "bit_generator": "Philox",
        "state": {"counter": w[0:4].copy(), "key": w[4:6].copy()},
        "buffer": w[6:10].copy(),
        "buffer_pos": int(w[10]),
        "has_uint32": int(w[11]),
        "uinteger": int(w[12]),
    }
    return np.random.Generator(bg)


def solve_spd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a x = b`` for symmetric positive-definite ``a`` by Cholesky."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"rhs has {b.shape[0]} rows, matrix has {a.shape[0]}")
    if a.size and np.max(np.abs(a - a.T)) > 1e-10 * max(1.0, np.max(np.abs(a))):
        raise NotPositiveDefinite("matrix is not symmetric")
    try:
        factor = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def apply_activation(kind: str, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if kind == "sigmoid":
        # split by sign so large |x| never overflows exp
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "identity":
        return x.copy()
    raise ValueError(f"unknown activation {kind!r}")


def activation_grad(kind: str, y: np.ndarray) -> np.ndarray:
    """Derivative of the activation expressed through its output ``y``."""
    if kind == "sigmoid":
        return y * (1.0 - y)
    if kind == "relu":
        return (y > 0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - y * y
    if kind == "identity":
        return np.ones_like(y)
    raise ValueError(f"unknown activation {kind!r}")


def mask_corrupt(x: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Zero each coordinate independently with probability ``rate`` (no rescaling)."""
    if not 0.0 <= rate <= 1.0:
        raise RateOutOfRange(f"corruption rate {rate} outside [0, 1]")
    x = np.asarray(x, dtype=np.float64)
    keep = rng.random(x.shape) >= rate
    return np.where(keep, x, 0.0)


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))
