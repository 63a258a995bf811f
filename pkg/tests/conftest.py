from typing import Dict, Optional

import numpy as np
import pytest

from fedrul.ingest import BASE_FEATURES, TimeSeriesTable
from fedrul.synthetic import write_dataset


def make_table(
    lengths: Dict[int, int],
    seed: int = 0,
    labeled: bool = True,
    values: Optional[np.ndarray] = None,
    agent: str = "FD001",
) -> TimeSeriesTable:
    """Random table with the given rows per unit; RUL = max_cycle - cycle."""
    unit = np.concatenate([np.full(n, u) for u, n in lengths.items()]).astype(np.int64)
    cycle = np.concatenate([np.arange(1, n + 1) for n in lengths.values()]).astype(np.int64)
    if values is None:
        values = np.random.default_rng(seed).normal(size=(len(unit), len(BASE_FEATURES)))
    rul = None
    if labeled:
        rul = np.concatenate([np.arange(n - 1, -1, -1) for n in lengths.values()]).astype(np.int64)
    return TimeSeriesTable(agent, unit, cycle, values, rul)


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    """Small four-agent dataset in the NASA file layout."""
    return write_dataset(tmp_path_factory.mktemp("cmapss"), units=6, seed=3)
