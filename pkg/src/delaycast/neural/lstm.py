"""LSTM cell with analytic backward, plus sequence and bidirectional layers.

Gate equations, elementwise over the batch:

    i = sigmoid(x W_xi + h_prev W_hi + b_i)
    f = sigmoid(x W_xf + h_prev W_hf + b_f)
    o = sigmoid(x W_xo + h_prev W_ho + b_o)
    g = tanh   (x W_xg + h_prev W_hg + b_g)
    c = f * c_prev + i * g
    h = o * tanh(c)

The forget-gate bias starts at 1.0 so early training does not erase state.
"""

from __future__ import annotations

import numpy as np

from ..numerics import Rng
from .layers import glorot

PARAM_NAMES = ("w_xi", "w_hi", "b_i", "w_xf", "w_hf", "b_f",
               "w_xo", "w_ho", "b_o", "w_xg", "w_hg", "b_g")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_params(input_size: int, units: int, rng: Rng) -> dict:
    """Fresh gate weights: glorot for W, zero biases except b_f = 1."""
    params = {}
    for gate in "ifog":
        params[f"w_x{gate}"] = glorot(rng, (input_size, units), input_size, units)
        params[f"w_h{gate}"] = glorot(rng, (units, units), units, units)
        params[f"b_{gate}"] = np.ones(units) if gate == "f" else np.zeros(units)
    return {name: params[name] for name in PARAM_NAMES}


def lstm_cell_forward(x, h_prev, c_prev, params):
    """One step. Returns (h, c, cache); cache feeds lstm_cell_backward."""
    units = params["w_hi"].shape[0]
    if x.ndim != 2 or x.shape[1] != params["w_xi"].shape[0]:
        raise ValueError(
            f"cell expects x of shape (n, {params['w_xi'].shape[0]}), got {x.shape}")
    if h_prev.shape != (x.shape[0], units) or c_prev.shape != h_prev.shape:
        raise ValueError(
            f"state shapes {h_prev.shape}/{c_prev.shape} do not match (n, {units})")
    i = _sigmoid(x @ params["w_xi"] + h_prev @ params["w_hi"] + params["b_i"])
    f = _sigmoid(x @ params["w_xf"] + h_prev @ params["w_hf"] + params["b_f"])
    o = _sigmoid(x @ params["w_xo"] + h_prev @ params["w_ho"] + params["b_o"])
    g = np.tanh(x @ params["w_xg"] + h_prev @ params["w_hg"] + params["b_g"])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = (params, x, h_prev, c_prev, i, f, o, g, tanh_c)
    return h, c, cache


def lstm_cell_backward(cache, grad_h, grad_c):
    """Gradients of a scalar loss through one step.

    Returns (grads, grad_x, grad_h_prev, grad_c_prev) where grads carries all
    twelve parameter names.
    """
    params, x, h_prev, c_prev, i, f, o, g, tanh_c = cache
    if grad_h.shape != i.shape or grad_c.shape != i.shape:
        raise ValueError("upstream gradient shapes do not match the cached step")
    dc = grad_c + grad_h * o * (1.0 - tanh_c * tanh_c)
    pre = {
        "o": grad_h * tanh_c * o * (1.0 - o),
        "i": dc * g * i * (1.0 - i),
        "f": dc * c_prev * f * (1.0 - f),
        "g": dc * i * (1.0 - g * g),
    }
    grads = {}
    grad_x = np.zeros_like(x)
    grad_h_prev = np.zeros_like(h_prev)
    for gate in "ifog":
        dz = pre[gate]
        grads[f"w_x{gate}"] = x.T @ dz
        grads[f"w_h{gate}"] = h_prev.T @ dz
        grads[f"b_{gate}"] = dz.sum(axis=0)
        grad_x += dz @ params[f"w_x{gate}"].T
        grad_h_prev += dz @ params[f"w_h{gate}"].T
    grad_c_prev = dc * f
    grads = {name: grads[name] for name in PARAM_NAMES}
    return grads, grad_x, grad_h_prev, grad_c_prev


class LstmLayer:
    """Unrolls the cell over (n, T, input); zero initial state.

    return_sequences=True emits (n, T, units), otherwise the final hidden
    state (n, units).
    """

    def __init__(self, input_size: int, units: int, return_sequences: bool,
                 rng: Rng):
        self.units = units
        self.return_sequences = return_sequences
        self.params = lstm_params(input_size, units, rng)

    def forward(self, x: np.ndarray):
        if x.ndim != 3:
            raise ValueError(f"recurrent layer expects (n, T, c), got {x.shape}")
        n, steps, _ = x.shape
        h = np.zeros((n, self.units))
        c = np.zeros((n, self.units))
        caches = []
        outputs = np.empty((n, steps, self.units))
        for t in range(steps):
            h, c, cache = lstm_cell_forward(x[:, t, :], h, c, self.params)
            caches.append(cache)
            outputs[:, t, :] = h
        y = outputs if self.return_sequences else outputs[:, -1, :]
        return y, (x.shape, caches)

    def backward(self, cache, grad_y: np.ndarray):
        x_shape, caches = cache
        n, steps, _ = x_shape
        grads = {name: np.zeros_like(p) for name, p in self.params.items()}
        grad_x = np.empty(x_shape)
        grad_h = np.zeros((n, self.units))
        grad_c = np.zeros((n, self.units))
        for t in reversed(range(steps)):
            if self.return_sequences:
                grad_h = grad_h + grad_y[:, t, :]
            elif t == steps - 1:
                grad_h = grad_h + grad_y
            step_grads, gx, grad_h, grad_c = lstm_cell_backward(
                caches[t], grad_h, grad_c)
            grad_x[:, t, :] = gx
            for name, g in step_grads.items():
                grads[name] += g
        return grad_x, grads


class Bidirectional:
    """Two independent LSTMs, one over reversed time; outputs concatenate.

    Per-step output is [forward_t, backward_t] (width 2*units) where
    backward_t has consumed x_t..x_T. With return_sequences=False the layer
    emits the final step of that per-step concatenation.
    """

    def __init__(self, input_size: int, units: int, return_sequences: bool,
                 rng: Rng):
        self.units = units
        self.return_sequences = return_sequences
        self.fwd = LstmLayer(input_size, units, True, rng)
        self.bwd = LstmLayer(input_size, units, True, rng)

    @property
    def params(self) -> dict:
        merged = {f"fwd.{k}": v for k, v in self.fwd.params.items()}
        merged.update({f"bwd.{k}": v for k, v in self.bwd.params.items()})
        return merged

    def forward(self, x: np.ndarray):
        y_f, cache_f = self.fwd.forward(x)
        y_b_rev, cache_b = self.bwd.forward(np.ascontiguousarray(x[:, ::-1, :]))
        y = np.concatenate([y_f, y_b_rev[:, ::-1, :]], axis=2)
        if not self.return_sequences:
            y = y[:, -1, :]
        return y, (cache_f, cache_b, x.shape)

    def backward(self, cache, grad_y: np.ndarray):
        cache_f, cache_b, x_shape = cache
        if not self.return_sequences:
            full = np.zeros((x_shape[0], x_shape[1], 2 * self.units))
            full[:, -1, :] = grad_y
            grad_y = full
        grad_f = np.ascontiguousarray(grad_y[:, :, :self.units])
        grad_b = np.ascontiguousarray(grad_y[:, ::-1, self.units:])
        gx_f, grads_f = self.fwd.backward(cache_f, grad_f)
        gx_b, grads_b = self.bwd.backward(cache_b, grad_b)
        grad_x = gx_f + gx_b[:, ::-1, :]
        grads = {f"fwd.{k}": v for k, v in grads_f.items()}
        grads.update({f"bwd.{k}": v for k, v in grads_b.items()})
        return grad_x, grads
