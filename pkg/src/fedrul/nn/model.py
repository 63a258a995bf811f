"""The fixed RUL network: noise -> LSTM stack -> dropout -> dense stack -> linear unit.

Parameters live in an insertion-ordered ``dict`` of name -> float64 array
(:data:`ModelParams`). Regularizer settings are stored as 1-element arrays
alongside the weights so a parameter file fully describes the model; they
are excluded from gradient updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from .layers import (
    GATES,
    LSTMLayerParams,
    dense_backward,
    dense_forward,
    dropout_mask,
    gaussian_noise,
    lstm_backward,
    lstm_forward,
)

ModelParams = Dict[str, np.ndarray]

CONFIG_SUFFIXES = ("sigma", "rate", "recurrent_dropout")


def is_trainable(name: str) -> bool:
    return not name.endswith(CONFIG_SUFFIXES)


@dataclass
class ModelConfig:
    units: int = 64
    lstm_layers: int = 4
    dense_layers: int = 4


@dataclass
class Architecture:
    n_features: int
    units: int
    lstm_layers: int
    dense_layers: int


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(
    n_features: int,
    seed: int,
    model: Optional[ModelConfig] = None,
    noise_sigma: float = 0.01,
    dropout: float = 0.1,
    recurrent_dropout: float = 0.2,
) -> ModelParams:
    """Fresh parameters with Glorot-uniform weights and forget-gate bias 1."""
    model = model or ModelConfig()
    rng = np.random.default_rng(seed)
    u = model.units
    p: ModelParams = {"noise.sigma": np.array([noise_sigma], dtype=np.float64)}
    width = n_features
    for k in range(model.lstm_layers):
        for g in GATES:
            p[f"lstm{k}.W_{g}"] = _glorot(rng, width, u)
        for g in GATES:
            p[f"lstm{k}.U_{g}"] = _glorot(rng, u, u)
        for g in GATES:
            p[f"lstm{k}.b_{g}"] = np.full(u, 1.0 if g == "f" else 0.0)
        p[f"lstm{k}.recurrent_dropout"] = np.array([recurrent_dropout], dtype=np.float64)
        width = u
    p["dropout.rate"] = np.array([dropout], dtype=np.float64)
    for k in range(model.dense_layers):
        p[f"dense{k}.W"] = _glorot(rng, width, u)
        p[f"dense{k}.b"] = np.zeros(u)
        width = u
    p["out.W"] = _glorot(rng, width, 1)
    p["out.b"] = np.zeros(1)
    return p


def architecture(params: ModelParams) -> Architecture:
    """Recover the layer layout from parameter names and shapes."""
    n_lstm = sum(1 for n in params if n.startswith("lstm") and n.endswith(".W_f"))
    n_dense = sum(1 for n in params if n.startswith("dense") and n.endswith(".W"))
    if n_lstm == 0:
        raise ValueError("parameters contain no LSTM layer")
    w0 = params["lstm0.W_f"]
    return Architecture(w0.shape[0], w0.shape[1], n_lstm, n_dense)


def lstm_layer(params: ModelParams, k: int) -> LSTMLayerParams:
    return LSTMLayerParams(
        W={g: params[f"lstm{k}.W_{g}"] for g in GATES},
        U={g: params[f"lstm{k}.U_{g}"] for g in GATES},
        b={g: params[f"lstm{k}.b_{g}"] for g in GATES},
        recurrent_dropout=float(params[f"lstm{k}.recurrent_dropout"][0]),
    )


def model_forward(
    inputs: np.ndarray,
    params: ModelParams,
    mode: str = "eval",
    rng: Optional[np.random.Generator] = None,
    keep_cache: bool = False,
):
    """Predict RUL for a batch of windows.

    Args:
        inputs: [batch, time, features].
        mode: ``"train"`` applies input noise, recurrent dropout and dropout
            drawn from ``rng``; ``"eval"`` is deterministic.
        keep_cache: also return the cache needed by :func:`model_backward`.

    Returns:
        predictions [batch], or (predictions, cache) when ``keep_cache``.
    """
    arch = architecture(params)
    if inputs.ndim != 3 or inputs.shape[2] != arch.n_features:
        raise ValueError(
            f"inputs shape {inputs.shape} does not match {arch.n_features} features"
        )
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    train = mode == "train"
    if train and rng is None:
        raise ValueError("train mode needs an explicit rng")
    B = inputs.shape[0]

    x = inputs
    sigma = float(params["noise.sigma"][0])
    if train and sigma > 0:
        x = gaussian_noise(rng, x, sigma)

    lstm_caches = []
    for k in range(arch.lstm_layers):
        layer = lstm_layer(params, k)
        W, U, b = layer.stacked()
        mask = None
        if train and layer.recurrent_dropout > 0:
            mask = dropout_mask(rng, (B, arch.units), layer.recurrent_dropout)
        x, cache = lstm_forward(x, W, U, b, mask)
        lstm_caches.append(cache)
    h = x[:, -1]

    rate = float(params["dropout.rate"][0])
    drop = None
    if train and rate > 0:
        drop = dropout_mask(rng, h.shape, rate)
        h = h * drop

    dense_caches = []
    for k in range(arch.dense_layers):
        h, cache = dense_forward(h, params[f"dense{k}.W"], params[f"dense{k}.b"], relu=True)
        dense_caches.append(cache)
    out, out_cache = dense_forward(h, params["out.W"], params["out.b"], relu=False)
    pred = out[:, 0]
    if not keep_cache:
        return pred
    return pred, (arch, inputs.shape, lstm_caches, drop, dense_caches, out_cache)


def model_backward(dpred: np.ndarray, cache) -> ModelParams:
    """Gradients of a scalar loss w.r.t. every trainable parameter, given dloss/dpred."""
    arch, in_shape, lstm_caches, drop, dense_caches, out_cache = cache
    grads: ModelParams = {}
    dh, grads["out.W"], grads["out.b"] = dense_backward(dpred[:, None], out_cache)
    for k in reversed(range(arch.dense_layers)):
        dh, grads[f"dense{k}.W"], grads[f"dense{k}.b"] = dense_backward(dh, dense_caches[k])
    if drop is not None:
        dh = dh * drop
    B, T, _ = in_shape
    u = arch.units
    dH = np.zeros((B, T, u))
    dH[:, -1] = dh
    for k in reversed(range(arch.lstm_layers)):
        dH, dW, dU, db = lstm_backward(dH, lstm_caches[k])
        for j, g in enumerate(GATES):
            sl = slice(j * u, (j + 1) * u)
            grads[f"lstm{k}.W_{g}"] = dW[:, sl]
            grads[f"lstm{k}.U_{g}"] = dU[:, sl]
            grads[f"lstm{k}.b_{g}"] = db[sl]
    return grads


def copy_params(params: ModelParams) -> ModelParams:
    return {name: t.copy() for name, t in params.items()}


def params_equal(a: ModelParams, b: ModelParams) -> bool:
    return list(a) == list(b) and all(np.array_equal(a[n], b[n]) for n in a)


def trainable_names(params: ModelParams) -> List[str]:
    return [n for n in params if is_trainable(n)]
