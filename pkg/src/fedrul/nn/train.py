"""Loss, optimizer and the mini-batch training loop."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..features import SequenceBatch
from .model import ModelParams, copy_params, model_backward, model_forward, trainable_names


class NumericAbort(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int = -1, batch: int = -1):
        self.epoch = epoch
        self.batch = batch
        super().__init__(message)


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    epochs: int = 1
    seed: int = 0
    gaussian_noise_sigma: float = 0.01
    dropout: float = 0.1
    recurrent_dropout: float = 0.2

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        for name in ("gaussian_noise_sigma", "dropout", "recurrent_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def rmse_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """RMSE and its gradient w.r.t. ``pred`` (zero gradient at zero loss)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    n = pred.size
    if n == 0:
        raise ValueError("empty vectors")
    err = pred - target
    loss = math.sqrt(float(err @ err) / n)
    if loss == 0.0:
        return 0.0, np.zeros_like(pred)
    return loss, err / (n * loss)


class Adam:
    """Adaptive moment estimation with bias correction, updating params in place."""

    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: ModelParams, grads: ModelParams) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train_epochs(
    data: SequenceBatch,
    params: ModelParams,
    cfg: TrainConfig,
    optimizer: Optional[Adam] = None,
    rng: Optional[np.random.Generator] = None,
    max_steps: Optional[int] = None,
) -> Tuple[ModelParams, List[float]]:
    """Mini-batch RMSE training for ``cfg.epochs`` epochs.

    ``optimizer`` and ``rng`` carry state across calls (a federated client
    reuses them every round); fresh ones are created from ``cfg`` when
    omitted. ``max_steps`` caps the number of gradient steps per call.

    Returns:
        (updated copy of params, per-epoch RMSE over the samples seen)

    Raises:
        NumericAbort: a batch produced a non-finite loss.
    """
    if len(data) == 0:
        raise ValueError("no training samples")
    params = copy_params(params)
    if optimizer is None:
        optimizer = Adam(cfg.learning_rate)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    names = trainable_names(params)
    n = len(data)
    history = []
    steps = 0
    for epoch in range(cfg.epochs):
        if max_steps is not None and steps >= max_steps:
            break
        order = rng.permutation(n)
        sq_sum = 0.0
        seen = 0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            if max_steps is not None and steps >= max_steps:
                break
            idx = order[start : start + cfg.batch_size]
            pred, cache = model_forward(data.inputs[idx], params, "train", rng, keep_cache=True)
            loss, dpred = rmse_loss(pred, data.targets[idx])
            if not math.isfinite(loss):
                raise NumericAbort(f"non-finite loss at epoch {epoch}, batch {b}", epoch, b)
            grads = model_backward(dpred, cache)
            optimizer.step(params, {k: grads[k] for k in names})
            sq_sum += loss * loss * len(idx)
            seen += len(idx)
            steps += 1
        if seen:
            history.append(math.sqrt(sq_sum / seen))
    return params, history


def predict(params: ModelParams, inputs: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    """Eval-mode predictions in chunks."""
    if len(inputs) == 0:
        return np.zeros(0)
    return np.concatenate(
        [model_forward(inputs[i : i + batch_size], params, "eval") for i in range(0, len(inputs), batch_size)]
    )
