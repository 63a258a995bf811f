"""In-process federated training: clients, FedAvg, broadcast and the round loop.

Clients and coordinator only exchange serialized weight streams. Round
metrics are measured by the simulation harness, which can see every
party, and are not part of the protocol.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .features import SequenceBatch
from .nn.model import ModelParams, copy_params
from .nn.train import Adam, NumericAbort, TrainConfig, predict, rmse_loss, train_epochs
from .weights import deserialize_params, serialize_params

logger = logging.getLogger(__name__)

AuditHook = Callable[[int, str, str, bytes], None]


class FederationAbort(RuntimeError):
    def __init__(self, message: str, agent: str, round_index: int):
        self.agent = agent
        self.round_index = round_index
        super().__init__(message)


def check_compatible(a: ModelParams, b: ModelParams) -> None:
    if list(a) != list(b):
        raise ValueError("parameter names or order differ")
    for name in a:
        if a[name].shape != b[name].shape:
            raise ValueError(f"{name}: shape {a[name].shape} vs {b[name].shape}")


def fed_avg(models: Sequence[ModelParams], weights: Sequence[float]) -> ModelParams:
    """Weighted elementwise average of parameter sets.

    Each output tensor is sum_k (w_k / sum w) * tensor_k.
    """
    if not models:
        raise ValueError("no models to average")
    if len(models) != len(weights):
        raise ValueError("one weight per model required")
    if any(not (w > 0) for w in weights):
        raise ValueError("weights must be positive")
    for m in models[1:]:
        check_compatible(models[0], m)
    total = float(sum(weights))
    out: ModelParams = {}
    for name in models[0]:
        acc = np.zeros_like(models[0][name])
        for m, w in zip(models, weights):
            acc += (w / total) * m[name]
        out[name] = acc
    return out


@dataclass
class ClientNode:
    """One data silo. Holds its own data, optimizer state and RNG stream."""

    agent: str
    train_data: SequenceBatch
    validation_data: SequenceBatch
    model: ModelParams
    seed: int
    test_data: Optional[SequenceBatch] = None
    optimizer: Optional[Adam] = None
    rng: Optional[np.random.Generator] = None
    local_model: Optional[ModelParams] = None

    @property
    def sample_count(self) -> int:
        return len(self.train_data)

    def receive(self, blob: bytes) -> None:
        incoming = deserialize_params(blob)
        check_compatible(self.model, incoming)
        self.model = incoming

    def train_local(
        self, cfg: TrainConfig, epochs: int, max_steps: Optional[int] = None
    ) -> Tuple[bytes, List[float]]:
        if self.optimizer is None:
            self.optimizer = Adam(cfg.learning_rate)
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)
        local_cfg = TrainConfig(**{**cfg.__dict__, "epochs": epochs})
        self.model, history = train_epochs(
            self.train_data, self.model, local_cfg, self.optimizer, self.rng, max_steps
        )
        self.local_model = copy_params(self.model)
        return serialize_params(self.model), history


def broadcast(global_params: ModelParams, clients: Sequence[ClientNode]) -> None:
    """Give every client its own copy of the global model."""
    for c in clients:
        check_compatible(c.model, global_params)
    for c in clients:
        c.model = copy_params(global_params)


@dataclass
class RoundConfig:
    rounds: int = 10
    local_epochs: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)
    early_stop_epsilon: float = 0.01
    early_stop_window: int = 5
    early_stop: bool = True
    max_local_steps: Optional[int] = None

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be >= 1")


@dataclass
class RoundReport:
    round_index: int
    train_rmse: Dict[str, float]
    validation_rmse: Dict[str, float]
    global_validation_rmse: float
    wall_time: float = 0.0


def evaluate_rmse(params: ModelParams, data: SequenceBatch) -> float:
    if len(data) == 0:
        return float("nan")
    return rmse_loss(predict(params, data.inputs), data.targets)[0]


def weighted_validation(values: Dict[str, float], counts: Dict[str, int]) -> float:
    pairs = [(values[a], counts[a]) for a in values if math.isfinite(values[a])]
    if not pairs:
        return float("nan")
    return sum(v * n for v, n in pairs) / sum(n for _, n in pairs)


def should_stop(history: List[float], epsilon: float, window: int) -> bool:
    """True when the best score of the last ``window`` rounds beats the earlier best by < epsilon."""
    if len(history) <= window or not all(math.isfinite(h) for h in history):
        return False
    before = min(history[:-window])
    recent = min(history[-window:])
    return before - recent < epsilon


def run_federation(
    clients: Sequence[ClientNode],
    cfg: RoundConfig,
    initial: Optional[ModelParams] = None,
    audit: Optional[AuditHook] = None,
) -> Tuple[ModelParams, List[RoundReport]]:
    """FedAvg rounds until ``cfg.rounds`` or early stop.

    Each round the coordinator sends the global weights to every client,
    each client trains ``cfg.local_epochs`` on its own data and returns its
    weights, and the coordinator averages them weighted by training sample
    count. ``audit`` sees every exchanged payload as
    ``(round, direction, agent, bytes)``.

    Raises:
        FederationAbort: a client hit a non-finite loss.
    """
    if not clients:
        raise ValueError("need at least one client")
    global_params = copy_params(initial if initial is not None else clients[0].model)
    counts = {c.agent: c.sample_count for c in clients}
    reports: List[RoundReport] = []
    history: List[float] = []
    for r in range(cfg.rounds):
        t0 = time.perf_counter()
        blob = serialize_params(global_params)
        uploads = []
        train_rmse = {}
        for c in clients:
            if audit:
                audit(r, "to_client", c.agent, blob)
            c.receive(blob)
            try:
                up, hist = c.train_local(cfg.train, cfg.local_epochs, cfg.max_local_steps)
            except NumericAbort as exc:
                raise FederationAbort(f"client {c.agent}, round {r}: {exc}", c.agent, r) from exc
            if audit:
                audit(r, "to_server", c.agent, up)
            uploads.append(deserialize_params(up))
            train_rmse[c.agent] = hist[-1] if hist else float("nan")
        global_params = fed_avg(uploads, [counts[c.agent] for c in clients])
        broadcast(global_params, clients)
        val = {c.agent: evaluate_rmse(global_params, c.validation_data) for c in clients}
        gval = weighted_validation(val, counts)
        reports.append(RoundReport(r, train_rmse, val, gval, time.perf_counter() - t0))
        logger.info("round %d: global validation RMSE %.4f", r, gval)
        history.append(gval)
        if cfg.early_stop and should_stop(history, cfg.early_stop_epsilon, cfg.early_stop_window):
            logger.info("early stop after round %d", r)
            break
    return global_params, reports
