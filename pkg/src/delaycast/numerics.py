"""Shared numeric core: seeded RNG, matrix helpers, losses, Adam, gradient checking.

Matrices throughout the package are plain 2-D float64 numpy arrays in C
(row-major) order. The helpers here add the shape and finiteness contracts the
rest of the code relies on; hot paths call numpy directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class Rng:
    """Deterministic splitmix64 generator.

    The stream is a pure function of the 64-bit seed: no platform, numpy or
    hash-randomization dependence. ``spawn(key)`` derives an independent
    substream without consuming draws from the parent, so substream layouts
    are stable regardless of call order.

    State advance: ``state += 0x9E3779B97F4A7C15`` (mod 2^64), output =
    murmur-style finalizer of the new state (shift-xor-multiply twice).
    """

    __slots__ = ("seed", "_state")

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self._state = self.seed

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return _mix64(self._state)

    def spawn(self, key: int) -> "Rng":
        """Substream keyed by a small integer; independent of draw position."""
        return Rng(_mix64((self.seed ^ (((key & _MASK64) + 1) * _GAMMA)) & _MASK64))

    def uniform(self) -> float:
        # 53-bit mantissa in [0, 1)
        return (self.next_u64() >> 11) * 2.0**-53

    def uniforms(self, n: int) -> np.ndarray:
        return np.array([self.uniform() for _ in range(n)], dtype=np.float64)

    def uniform_array(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        n = int(np.prod(shape))
        u = self.uniforms(n).reshape(shape)
        return low + (high - low) * u

    def integer(self, low: int, high: int) -> int:
        """One draw from [low, high). Range must be far below 2^53."""
        if high <= low:
            raise ValueError(f"empty integer range [{low}, {high})")
        return low + int(self.uniform() * (high - low))

    def integers(self, low: int, high: int, n: int) -> np.ndarray:
        return np.array([self.integer(low, high) for _ in range(n)], dtype=np.int64)

    def exponential(self, mean: float) -> float:
        return -mean * math.log1p(-self.uniform())


# --- matrix helpers ---------------------------------------------------------


def matrix(data, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Validate/coerce to a finite 2-D float64 array (row-major)."""
    a = np.ascontiguousarray(data, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={a.ndim}")
    if rows is not None and a.shape != (rows, cols):
        raise ValueError(f"expected shape {(rows, cols)}, got {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("matrix entries must be finite")
    return a


def _check_finite(a: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(a).all():
        raise ValueError(f"{op} produced non-finite entries")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return _check_finite(a @ b, "matmul")


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return _check_finite(a + b, "add")


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    return _check_finite(a * b, "hadamard")


def transpose(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a.T)


def slice_block(a: np.ndarray, rows, cols) -> np.ndarray:
    """Submatrix by row/col index arrays or slices; copies."""
    out = a[rows][:, cols]
    if out.ndim != 2:
        raise ValueError(f"slice_block must keep 2 dims, got shape {out.shape}")
    return np.ascontiguousarray(out)


# --- losses -----------------------------------------------------------------


def mae(y_pred: np.ndarray, y_true: np.ndarray) -> float:
    if y_pred.shape != y_true.shape:
        raise ValueError(f"mae shape mismatch: {y_pred.shape} vs {y_true.shape}")
    if y_pred.size == 0:
        raise ValueError("mae of empty arrays")
    return float(np.mean(np.abs(y_pred - y_true)))


def mse(y_pred: np.ndarray, y_true: np.ndarray) -> float:
    if y_pred.shape != y_true.shape:
        raise ValueError(f"mse shape mismatch: {y_pred.shape} vs {y_true.shape}")
    if y_pred.size == 0:
        raise ValueError("mse of empty arrays")
    d = y_pred - y_true
    return float(np.mean(d * d))


# --- Adam -------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment accumulators, keyed like the parameter dict."""

    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_init(params: dict, alpha: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    state = AdamState(alpha=alpha, beta1=beta1, beta2=beta2, eps=eps)
    for name, p in params.items():
        state.m[name] = np.zeros_like(p)
        state.v[name] = np.zeros_like(p)
    return state


def adam_step(params: dict, grads: dict, state: AdamState):
    """One bias-corrected Adam update, in place. Returns (params, state)."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"adam_step shape mismatch for {name}: {p.shape} vs {g.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.alpha * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def clip_global_norm(grads: dict, max_norm: float) -> tuple[dict, float]:
    """Scale all gradients by a shared factor so the global L2 norm <= max_norm.

    Returns (grads, pre_clip_norm). No-op when the norm is already within
    bounds. Mutates in place.
    """
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = math.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return grads, norm


# --- gradient checking ------------------------------------------------------


def grad_check(f, params: dict, analytic: dict, step: float = 1e-5) -> float:
    """Central-difference check of analytic gradients.

    ``f(params)`` must evaluate the scalar objective from the (possibly
    perturbed) parameter arrays. Returns the worst relative error
    |a - n| / max(|a|, |n|, 1e-8) over every coordinate.
    """
    worst = 0.0
    for name, p in params.items():
        a = analytic[name]
        if a.shape != p.shape:
            raise ValueError(f"grad_check shape mismatch for {name}: {p.shape} vs {a.shape}")
        flat = p.ravel()
        aflat = a.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = float(f(params))
            flat[i] = orig - step
            fm = float(f(params))
            flat[i] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise ValueError(f"objective non-finite while perturbing {name}[{i}]")
            num = (fp - fm) / (2.0 * step)
            rel = abs(aflat[i] - num) / max(abs(aflat[i]), abs(num), 1e-8)
            worst = max(worst, rel)
    return worst
