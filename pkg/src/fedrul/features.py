"""Engineered features and sliding-window sequence construction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .ingest import TimeSeriesTable
from .preprocess import SENSOR_INDICES


@dataclass
class FeatureConfig:
    cumsum_signals: List[int] = field(default_factory=list)
    derivative_signals: List[int] = field(default_factory=lambda: list(SENSOR_INDICES))
    dt: int = 1
    sequence_length: int = 8

    def __post_init__(self):
        if self.dt < 1:
            raise ValueError("dt must be >= 1")
        if self.sequence_length < 1:
            raise ValueError("sequence_length must be >= 1")


@dataclass
class SequenceBatch:
    """Model-ready windows.

    inputs: [batch, sequence_length, features]; targets: [batch] RUL in
    cycles; provenance: (agent, unit, end cycle) per window.
    """

    inputs: np.ndarray
    targets: np.ndarray
    provenance: List[Tuple[str, int, int]]

    def __len__(self) -> int:
        return len(self.targets)

    def subset(self, idx: np.ndarray) -> "SequenceBatch":
        return SequenceBatch(
            self.inputs[idx], self.targets[idx], [self.provenance[i] for i in idx]
        )


def cumulative_sum(signal: Sequence[float]) -> np.ndarray:
    return np.cumsum(np.asarray(signal, dtype=np.float64))


def rate_of_change(signal: Sequence[float], dt: int = 1) -> np.ndarray:
    """Signed change over ``dt`` steps divided by ``dt``; the first ``dt`` samples are 0."""
    if dt < 1:
        raise ValueError("dt must be >= 1")
    x = np.asarray(signal, dtype=np.float64)
    dx = np.zeros_like(x)
    if x.size > dt:
        dx[dt:] = (x[dt:] - x[:-dt]) / dt
    return dx


def add_engineered_features(table: TimeSeriesTable, cfg: FeatureConfig) -> TimeSeriesTable:
    """Append cumulative-sum and rate-of-change columns, computed per unit."""
    slices = list(table.unit_slices().values())
    new_cols = []
    names = list(table.feature_names)
    for j in cfg.cumsum_signals:
        col = np.empty(len(table))
        for rows in slices:
            col[rows] = cumulative_sum(table.values[rows, j])
        new_cols.append(col)
        names.append(f"cs_{table.feature_names[j]}")
    for j in cfg.derivative_signals:
        col = np.empty(len(table))
        for rows in slices:
            col[rows] = rate_of_change(table.values[rows, j], cfg.dt)
        new_cols.append(col)
        names.append(f"d{cfg.dt}_{table.feature_names[j]}")
    if not new_cols:
        return table.with_values(table.values.copy())
    return table.with_values(np.column_stack([table.values] + new_cols), names)


def build_windows(
    table: TimeSeriesTable, sequence_length: int, last_only: bool = False
) -> SequenceBatch:
    """One window per row (or per unit's last row when ``last_only``).

    Windows end at their target row and never cross unit boundaries; early
    windows are left-padded by repeating the unit's first row.
    """
    if not table.labeled:
        raise ValueError("windows need RUL labels")
    L = sequence_length
    n_feat = table.values.shape[1]
    inputs, targets, prov = [], [], []
    for u, rows in table.unit_slices().items():
        x = table.values[rows]
        padded = np.concatenate([np.repeat(x[:1], L - 1, axis=0), x], axis=0)
        win = np.lib.stride_tricks.sliding_window_view(padded, (L, n_feat))[:, 0]
        ends = [len(rows) - 1] if last_only else range(len(rows))
        win = win[list(ends)]
        inputs.append(win)
        targets.append(table.rul[rows][list(ends)].astype(np.float64))
        prov.extend((table.agent, int(u), int(table.cycle[rows[e]])) for e in ends)
    if not inputs:
        return SequenceBatch(np.zeros((0, L, n_feat)), np.zeros(0), [])
    return SequenceBatch(
        np.ascontiguousarray(np.concatenate(inputs)), np.concatenate(targets), prov
    )
