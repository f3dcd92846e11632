"""Dense numeric kernels: matrix products, activations, seeded random draws.

Matrices are plain 2-D float64 C-order numpy arrays. Randomness always goes
through :class:`Rng`, which wraps a PCG64 stream so that a given seed yields
the same draw sequence on every platform.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError, ShapeError


def as_matrix(data) -> np.ndarray:
    """Coerce ``data`` to a 2-D float64 array, rejecting other ranks."""
    m = np.asarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got {m.ndim} dimension(s)")
    return np.ascontiguousarray(m)


def matmul(a, b) -> np.ndarray:
    """Matrix product with explicit dimension and overflow checks."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            "cannot multiply {}x{} by {}x{}: inner dimensions differ".format(
                a.shape[0], a.shape[1], b.shape[0], b.shape[1]
            )
        )
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    if not np.all(np.isfinite(out)):
        raise DomainError("matrix product produced non-finite values")
    return out


def sigmoid(x):
    """Logistic function 1 / (1 + exp(-x)), stable for large |x|.

    Accepts scalars or arrays; returns a float for scalar input.
    """
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    a = np.atleast_1d(arr)
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ex = np.exp(a[~pos])
    out[~pos] = ex / (1.0 + ex)
    if scalar:
        return float(out[0])
    return out.reshape(arr.shape)


def tanh(x):
    """Hyperbolic tangent; scalar in, float out."""
    arr = np.asarray(x, dtype=np.float64)
    out = np.tanh(arr)
    if arr.ndim == 0:
        return float(out)
    return out


class Rng:
    """Deterministic random source (PCG64).

    Two instances built from the same seed produce bitwise identical draw
    sequences, independent of platform or process history.
    """

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise DomainError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self._gen = np.random.Generator(np.random.PCG64(seed))

    def uniform(self, rows: int, cols: int, scale: float) -> np.ndarray:
        """i.i.d. uniform draws on [-scale, +scale) as a rows x cols matrix."""
        if rows < 0 or cols < 0:
            raise ShapeError(f"matrix dimensions must be non-negative, got {rows}x{cols}")
        if not scale > 0:
            raise DomainError(f"scale must be positive, got {scale}")
        return self._gen.uniform(-scale, scale, size=(rows, cols))


def seeded_uniform(rng: Rng, rows: int, cols: int, scale: float) -> np.ndarray:
    """Draw a rows x cols matrix of uniforms on [-scale, +scale) from ``rng``."""
    return rng.uniform(rows, cols, scale)
