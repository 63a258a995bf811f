"""Layer kernels with explicit forward and backward passes.

Tensors are float64 numpy arrays. LSTM gate order everywhere is
forget, input, output, candidate (f, i, o, g).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

GATES = ("f", "i", "o", "g")


def sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class LSTMState:
    hidden: np.ndarray
    cell: np.ndarray

    @classmethod
    def zeros(cls, batch: int, units: int) -> "LSTMState":
        return cls(np.zeros((batch, units)), np.zeros((batch, units)))


@dataclass
class LSTMLayerParams:
    W: Dict[str, np.ndarray]
    U: Dict[str, np.ndarray]
    b: Dict[str, np.ndarray]
    recurrent_dropout: float = 0.0

    @property
    def units(self) -> int:
        return self.U["f"].shape[0]

    @property
    def input_size(self) -> int:
        return self.W["f"].shape[0]

    def stacked(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Gate matrices concatenated along the output axis: W [in,4u], U [u,4u], b [4u]."""
        return (
            np.concatenate([self.W[g] for g in GATES], axis=1),
            np.concatenate([self.U[g] for g in GATES], axis=1),
            np.concatenate([self.b[g] for g in GATES]),
        )


def lstm_cell_forward(
    x_t: np.ndarray, state: LSTMState, params: LSTMLayerParams
) -> Tuple[np.ndarray, LSTMState]:
    """One LSTM step. Returns (output, new state); output is the new hidden state."""
    if x_t.ndim != 2 or x_t.shape[1] != params.input_size:
        raise ValueError(f"x_t shape {x_t.shape} does not match input size {params.input_size}")
    if state.hidden.shape != (x_t.shape[0], params.units) or state.cell.shape != state.hidden.shape:
        raise ValueError("state shape does not match batch/units")
    pre = {g: x_t @ params.W[g] + state.hidden @ params.U[g] + params.b[g] for g in GATES}
    f = sigmoid(pre["f"])
    i = sigmoid(pre["i"])
    o = sigmoid(pre["o"])
    g = np.tanh(pre["g"])
    cell = f * state.cell + i * g
    hidden = o * np.tanh(cell)
    return hidden, LSTMState(hidden, cell)


def lstm_forward(
    X: np.ndarray,
    W: np.ndarray,
    U: np.ndarray,
    b: np.ndarray,
    mask: Optional[np.ndarray] = None,
):
    """Run a stacked-gate LSTM over a whole sequence from a zero state.

    Args:
        X: [batch, time, in].
        W, U, b: stacked gate weights from :meth:`LSTMLayerParams.stacked`.
        mask: optional [batch, units] multiplier on the previous hidden state
            (recurrent dropout, already scaled), fixed across time.

    Returns:
        (hidden states [batch, time, units], cache for :func:`lstm_backward`)
    """
    B, T, _ = X.shape
    u = U.shape[0]
    xproj = (X.reshape(B * T, -1) @ W).reshape(B, T, 4 * u) + b
    S = np.zeros((B, u))
    L = np.zeros((B, u))
    H = np.empty((B, T, u))
    steps = []
    for t in range(T):
        s_in = S * mask if mask is not None else S
        z = xproj[:, t] + s_in @ U
        f = sigmoid(z[:, :u])
        i = sigmoid(z[:, u : 2 * u])
        o = sigmoid(z[:, 2 * u : 3 * u])
        g = np.tanh(z[:, 3 * u :])
        L_prev = L
        L = f * L_prev + i * g
        tl = np.tanh(L)
        S = o * tl
        H[:, t] = S
        steps.append((s_in, L_prev, f, i, o, g, tl))
    return H, (X, W, U, mask, steps)


def lstm_backward(dH: np.ndarray, cache):
    """Backpropagation through time.

    Args:
        dH: gradient w.r.t. every hidden output, [batch, time, units].

    Returns:
        (dX, dW, dU, db) matching the stacked layout.
    """
    X, W, U, mask, steps = cache
    B, T, _ = X.shape
    u = U.shape[0]
    dZ = np.empty((B, T, 4 * u))
    dU = np.zeros_like(U)
    dS_next = np.zeros((B, u))
    dL_next = np.zeros((B, u))
    for t in reversed(range(T)):
        s_in, L_prev, f, i, o, g, tl = steps[t]
        dS = dH[:, t] + dS_next
        dL = dS * o * (1.0 - tl * tl) + dL_next
        dz = dZ[:, t]
        dz[:, :u] = dL * L_prev * f * (1.0 - f)
        dz[:, u : 2 * u] = dL * g * i * (1.0 - i)
        dz[:, 2 * u : 3 * u] = dS * tl * o * (1.0 - o)
        dz[:, 3 * u :] = dL * i * (1.0 - g * g)
        dL_next = dL * f
        if t > 0:
            dU += s_in.T @ dz
            ds_in = dz @ U.T
            dS_next = ds_in * mask if mask is not None else ds_in
    flatZ = dZ.reshape(B * T, 4 * u)
    dW = X.reshape(B * T, -1).T @ flatZ
    db = flatZ.sum(axis=0)
    dX = (flatZ @ W.T).reshape(X.shape)
    return dX, dW, dU, db


def dense_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray, relu: bool):
    z = x @ W + b
    out = np.maximum(z, 0.0) if relu else z
    return out, (x, W, z, relu)


def dense_backward(dout: np.ndarray, cache):
    x, W, z, relu = cache
    dz = dout * (z > 0) if relu else dout
    return dz @ W.T, x.T @ dz, dz.sum(axis=0)


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability ``rate``, else 1/(1-rate)."""
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


def gaussian_noise(rng: np.random.Generator, x: np.ndarray, sigma: float) -> np.ndarray:
    return x + rng.normal(0.0, sigma, size=x.shape)
