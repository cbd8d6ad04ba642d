"""Model assembly: layer stacks, the two-path hybrid, and window plumbing.

A model object owns named layers, exposes a flat `params` dict
("layer.param" keys, live arrays), a pure `forward`, and a
`forward_cached`/`backward` pair for training. `spec` is a plain dict that
`build_from_spec` can turn back into an identically shaped (freshly seeded)
model, which is how checkpoints and model files rehydrate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import Rng, matrix
from .layers import Conv1d, Dense, Flatten, MaxPool1d
from .lstm import Bidirectional, LstmLayer


class _Assembly:
    """Shared plumbing for named-layer models."""

    def __init__(self, kind: str, spec: dict, recurrent: bool,
                 takes_sequences: bool):
        self.kind = kind
        self.spec = spec
        self.recurrent = recurrent
        self.takes_sequences = takes_sequences

    def _named_layers(self):
        raise NotImplementedError

    @property
    def params(self) -> dict:
        merged = {}
        for name, layer in self._named_layers():
            for key, value in layer.params.items():
                merged[f"{name}.{key}"] = value
        return merged

    def forward(self, x) -> np.ndarray:
        y, _ = self.forward_cached(x)
        return y

    def load_params(self, tensors: dict) -> None:
        params = self.params
        if set(tensors) != set(params):
            missing = sorted(set(params) - set(tensors))
            extra = sorted(set(tensors) - set(params))
            raise ValueError(f"parameter names do not match model: "
                             f"missing={missing}, unexpected={extra}")
        for name, value in tensors.items():
            if params[name].shape != value.shape:
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{params[name].shape} vs {value.shape}")
            params[name][...] = value

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        want = 3 if self.takes_sequences else 2
        if x.ndim != want:
            raise ValueError(
                f"{self.kind} model expects {want}-D input, got shape {x.shape}")
        return x


class Sequential(_Assembly):
    def __init__(self, kind: str, layers: list, spec: dict, recurrent: bool,
                 takes_sequences: bool):
        super().__init__(kind, spec, recurrent, takes_sequences)
        self.layers = layers  # list of (name, layer), applied in order

    def _named_layers(self):
        return self.layers

    def forward_cached(self, x):
        x = self._check_input(x)
        caches = []
        for _, layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, caches, grad_y):
        grads = {}
        for (name, layer), cache in zip(reversed(self.layers), reversed(caches)):
            grad_y, layer_grads = layer.backward(cache, grad_y)
            for key, value in layer_grads.items():
                grads[f"{name}.{key}"] = value
        return grads, grad_y


class HybridNet(_Assembly):
    """Convolutional and recurrent paths over the same window, concatenated.

    CNN path: conv -> pool -> flatten -> dense. Recurrent path:
    bidirectional then unidirectional LSTM -> dense. Head: dense on the
    128-wide concatenation. Both paths see the same input, so input
    gradients add.
    """

    def __init__(self, spec: dict, cnn_layers: list, lstm_layers: list,
                 head: Dense):
        super().__init__("hybrid", spec, recurrent=True, takes_sequences=True)
        self.cnn_layers = cnn_layers
        self.lstm_layers = lstm_layers
        self.head = head

    def _named_layers(self):
        return [*self.cnn_layers, *self.lstm_layers, ("out", self.head)]

    def _run_path(self, layers, x):
        caches = []
        for _, layer in layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def forward_cached(self, x):
        x = self._check_input(x)
        y_cnn, caches_cnn = self._run_path(self.cnn_layers, x)
        y_lstm, caches_lstm = self._run_path(self.lstm_layers, x)
        joined = np.concatenate([y_cnn, y_lstm], axis=1)
        y, cache_head = self.head.forward(joined)
        return y, (caches_cnn, caches_lstm, cache_head, y_cnn.shape[1])

    def backward(self, caches, grad_y):
        caches_cnn, caches_lstm, cache_head, cnn_width = caches
        grad_joined, head_grads = self.head.backward(cache_head, grad_y)
        grads = {f"out.{k}": v for k, v in head_grads.items()}

        def back_path(layers, path_caches, grad):
            for (name, layer), cache in zip(reversed(layers), reversed(path_caches)):
                grad, layer_grads = layer.backward(cache, grad)
                for key, value in layer_grads.items():
                    grads[f"{name}.{key}"] = value
            return grad

        gx_cnn = back_path(self.cnn_layers, caches_cnn, grad_joined[:, :cnn_width])
        gx_lstm = back_path(self.lstm_layers, caches_lstm, grad_joined[:, cnn_width:])
        return grads, gx_cnn + gx_lstm


# --- builders ----------------------------------------------------------------


def _check_output(output: int) -> None:
    if output not in (1, 5):
        raise ValueError(f"output width must be 1 or 5, got {output}")


def mlp_build(input_size: int = 11, hidden=(64, 32), output: int = 5,
              seed: int = 0) -> Sequential:
    _check_output(output)
    rng = Rng(seed)
    layers = []
    width = input_size
    for idx, units in enumerate(hidden, start=1):
        layers.append((f"dense{idx}", Dense(width, units, "relu", rng)))
        width = units
    layers.append(("out", Dense(width, output, "identity", rng)))
    spec = {"kind": "mlp", "input": input_size, "hidden": list(hidden),
            "output": output, "seed": seed}
    return Sequential("mlp", layers, spec, recurrent=False, takes_sequences=False)


def lstm_model_build(input_size: int = 11, units: int = 11, dense: int = 64,
                     output: int = 5, seed: int = 0) -> Sequential:
    """Stacked recurrent net: per-step first layer, final-state second."""
    _check_output(output)
    rng = Rng(seed)
    layers = [
        ("lstm1", LstmLayer(input_size, units, True, rng)),
        ("lstm2", LstmLayer(units, units, False, rng)),
        ("dense", Dense(units, dense, "relu", rng)),
        ("out", Dense(dense, output, "identity", rng)),
    ]
    spec = {"kind": "lstm", "input": input_size, "units": units,
            "dense": dense, "output": output, "seed": seed}
    return Sequential("lstm", layers, spec, recurrent=True, takes_sequences=True)


def bilstm_model_build(input_size: int = 11, units: int = 11, dense: int = 64,
                       output: int = 5, seed: int = 0) -> Sequential:
    """As lstm_model_build with each recurrent layer run in both directions."""
    _check_output(output)
    rng = Rng(seed)
    layers = [
        ("bi1", Bidirectional(input_size, units, True, rng)),
        ("bi2", Bidirectional(2 * units, units, False, rng)),
        ("dense", Dense(2 * units, dense, "relu", rng)),
        ("out", Dense(dense, output, "identity", rng)),
    ]
    spec = {"kind": "bilstm", "input": input_size, "units": units,
            "dense": dense, "output": output, "seed": seed}
    return Sequential("bilstm", layers, spec, recurrent=True, takes_sequences=True)


def hybrid_model_build(input_size: int = 11, output: int = 5, window: int = 4,
                       units: int = 11, filters: int = 64, kernel: int = 3,
                       dense: int = 64, seed: int = 0) -> HybridNet:
    """Two-path net; the flatten width pins the model to one window length."""
    _check_output(output)
    conv_len = window - kernel + 1
    pooled = conv_len // MaxPool1d.width
    if conv_len < 1 or pooled < 1:
        raise ValueError(
            f"window {window} too short: kernel {kernel} and pool "
            f"{MaxPool1d.width} need window >= {kernel + MaxPool1d.width - 1}")
    rng = Rng(seed)
    cnn_layers = [
        ("conv", Conv1d(input_size, filters, kernel, "relu", rng)),
        ("pool", MaxPool1d()),
        ("flat", Flatten()),
        ("cnn_dense", Dense(pooled * filters, dense, "relu", rng)),
    ]
    lstm_layers = [
        ("bi", Bidirectional(input_size, units, True, rng)),
        ("lstm2", LstmLayer(2 * units, units, False, rng)),
        ("lstm_dense", Dense(units, dense, "relu", rng)),
    ]
    head = Dense(2 * dense, output, "identity", rng)
    spec = {"kind": "hybrid", "input": input_size, "output": output,
            "window": window, "units": units, "filters": filters,
            "kernel": kernel, "dense": dense, "seed": seed}
    return HybridNet(spec, cnn_layers, lstm_layers, head)


_BUILDERS = {
    "mlp": lambda s: mlp_build(s["input"], tuple(s["hidden"]), s["output"], s["seed"]),
    "lstm": lambda s: lstm_model_build(s["input"], s["units"], s["dense"],
                                       s["output"], s["seed"]),
    "bilstm": lambda s: bilstm_model_build(s["input"], s["units"], s["dense"],
                                           s["output"], s["seed"]),
    "hybrid": lambda s: hybrid_model_build(s["input"], s["output"], s["window"],
                                           s["units"], s["filters"], s["kernel"],
                                           s["dense"], s["seed"]),
}


def build_from_spec(spec: dict):
    kind = spec.get("kind")
    if kind not in _BUILDERS:
        raise ValueError(f"unknown model kind {kind!r}")
    return _BUILDERS[kind](spec)


# --- windowing ---------------------------------------------------------------


@dataclass(frozen=True)
class SequenceBatch:
    """Uniform-length windows with one target row each, order preserved."""

    x: np.ndarray  # (m, T, d)
    y: np.ndarray  # (m, k)

    def __post_init__(self):
        if self.x.ndim != 3:
            raise ValueError(f"sequences must be 3-D, got shape {self.x.shape}")
        matrix(self.y, rows=self.x.shape[0], cols=self.y.shape[1])

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def window(self) -> int:
        return self.x.shape[1]


def make_sequences(x, y, window: int = 1) -> SequenceBatch:
    """Sliding windows of `window` consecutive rows; target = final row's y.

    n rows yield n - window + 1 sequences. Build per split so no window
    straddles a train/test boundary.
    """
    x = matrix(x)
    y = matrix(y)
    if y.shape[0] != x.shape[0]:
        raise ValueError(f"X has {x.shape[0]} rows but Y has {y.shape[0]}")
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if x.shape[0] < window:
        raise ValueError(f"{x.shape[0]} rows cannot fill a window of {window}")
    count = x.shape[0] - window + 1
    seqs = np.stack([x[i:i + window] for i in range(count)])
    return SequenceBatch(x=seqs, y=y[window - 1:].copy())
