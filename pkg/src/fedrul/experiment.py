"""End-to-end training runs shared by the CLI and the acceptance tests."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .federated import ClientNode, RoundConfig, RoundReport, evaluate_rmse, run_federation
from .ingest import TimeSeriesTable
from .nn.model import ModelConfig, ModelParams, init_model
from .nn.train import predict
from .pipeline import PipelineConfig, PreparedAgent, derive_seed, prepare_agent
from .stats import compute_metrics

logger = logging.getLogger(__name__)


@dataclass
class TrainingResult:
    global_params: ModelParams
    reports: List[RoundReport]
    prepared: Dict[str, PreparedAgent]
    clients: List[ClientNode]
    summary: List[Dict[str, float]]


def _metrics(params: ModelParams, inputs: np.ndarray, targets: np.ndarray):
    if len(targets) == 0:
        return float("nan"), float("nan")
    m = compute_metrics(predict(params, inputs), targets)
    return m.rmse, m.mae


def build_clients(
    prepared: Dict[str, PreparedAgent], initial: ModelParams, seed: int
) -> List[ClientNode]:
    return [
        ClientNode(
            agent=a,
            train_data=p.train,
            validation_data=p.validation,
            test_data=p.test,
            model={k: v.copy() for k, v in initial.items()},
            seed=derive_seed(seed, a, "train"),
        )
        for a, p in prepared.items()
    ]


def summarize(
    clients: List[ClientNode], global_params: ModelParams, reports: List[RoundReport]
) -> List[Dict[str, float]]:
    """Per-agent rows from each client's last local model, plus an Aggregated row.

    Aggregated validation RMSE is the sample-weighted global score of the
    last round; its test and training scores pool every client's windows.
    """
    rows = []
    for c in clients:
        local = c.local_model if c.local_model is not None else c.model
        val_rmse, _ = _metrics(local, c.validation_data.inputs, c.validation_data.targets)
        test_rmse, test_mae = _metrics(local, c.test_data.inputs, c.test_data.targets)
        train_rmse, _ = _metrics(local, c.train_data.inputs, c.train_data.targets)
        rows.append({
            "agent": c.agent, "validation_rmse": val_rmse, "test_rmse": test_rmse,
            "test_mae": test_mae, "train_rmse": train_rmse, "n_train": len(c.train_data),
            "n_test": len(c.test_data),
        })
    test_x = np.concatenate([c.test_data.inputs for c in clients])
    test_y = np.concatenate([c.test_data.targets for c in clients])
    train_x = np.concatenate([c.train_data.inputs for c in clients])
    train_y = np.concatenate([c.train_data.targets for c in clients])
    test_rmse, test_mae = _metrics(global_params, test_x, test_y)
    train_rmse, _ = _metrics(global_params, train_x, train_y)
    rows.append({
        "agent": "Aggregated",
        "validation_rmse": reports[-1].global_validation_rmse if reports else float("nan"),
        "test_rmse": test_rmse, "test_mae": test_mae, "train_rmse": train_rmse,
        "n_train": len(train_y), "n_test": len(test_y),
    })
    return rows


def run_training(
    tables: Dict[str, Tuple[TimeSeriesTable, Optional[TimeSeriesTable]]],
    pipeline: PipelineConfig,
    model: ModelConfig,
    rounds: RoundConfig,
    audit=None,
) -> TrainingResult:
    """Prepare every agent, federate, and summarize.

    A single entry in ``tables`` is plain local training: FedAvg over one
    client is the identity.
    """
    prepared = {}
    for agent, (train, test) in tables.items():
        logger.info("preparing %s", agent)
        prepared[agent] = prepare_agent(train, test, pipeline)
    widths = {p.train.inputs.shape[2] for p in prepared.values()}
    if len(widths) != 1:
        raise ValueError(f"agents disagree on feature count: {sorted(widths)}")
    tc = rounds.train
    initial = init_model(
        widths.pop(), tc.seed + pipeline.seed, model,
        tc.gaussian_noise_sigma, tc.dropout, tc.recurrent_dropout,
    )
    clients = build_clients(prepared, initial, pipeline.seed + tc.seed)
    global_params, reports = run_federation(clients, rounds, initial, audit)
    return TrainingResult(global_params, reports, prepared, clients, summarize(clients, global_params, reports))


def mean_baseline_rmse(prepared: Dict[str, PreparedAgent]) -> float:
    """Test RMSE of predicting the pooled mean training target for every test unit."""
    mean = float(np.concatenate([p.train.targets for p in prepared.values()]).mean())
    y = np.concatenate([p.test.targets for p in prepared.values()])
    return compute_metrics(np.full_like(y, mean), y).rmse


def validation_rmse(params: ModelParams, prepared: PreparedAgent) -> float:
    return evaluate_rmse(params, prepared.validation)
