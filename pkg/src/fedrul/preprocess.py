"""Median filtering, kernel selection, tail pruning, z-scoring and correlation matrices."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .ingest import BASE_FEATURES, TimeSeriesTable

SENSOR_INDICES = list(range(3, 24))

# below this std a feature is treated as constant
STD_EPS = 1e-12


@dataclass
class FilterPlan:
    """Kernel size per signal (column index). Kernel 1 means no filtering."""

    kernels: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        for j, k in self.kernels.items():
            if k < 1 or k % 2 == 0:
                raise ValueError(f"signal {j}: kernel {k} is not an odd positive integer")

    def to_dict(self) -> Dict[str, int]:
        return {str(j): int(k) for j, k in sorted(self.kernels.items())}

    @classmethod
    def from_dict(cls, d: Dict[str, int]) -> "FilterPlan":
        return cls({int(j): int(k) for j, k in d.items()})


@dataclass
class ScalerParams:
    features: List[str]
    indices: List[int]
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {
            "features": list(self.features),
            "indices": list(self.indices),
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(
            list(d["features"]),
            [int(i) for i in d["indices"]],
            np.asarray(d["mean"], dtype=np.float64),
            np.asarray(d["std"], dtype=np.float64),
        )


@dataclass
class PruneConfig:
    prune_chance: float = 0.3
    p: float = 0.4
    pplus: float = 0.1
    heavy_fraction: float = 0.75
    seed: int = 0

    def __post_init__(self):
        for name in ("prune_chance", "p", "pplus", "heavy_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.pplus > self.prune_chance:
            raise ValueError("pplus must not exceed prune_chance")


@dataclass
class CorrelationMatrix:
    labels: List[str]
    values: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([""] + self.labels)
        for name, row in zip(self.labels, self.values):
            w.writerow([name] + [f"{v:.6f}" for v in row])
        return buf.getvalue()

    def get(self, a: str, b: str) -> float:
        return float(self.values[self.labels.index(a), self.labels.index(b)])


# ---------------------------------------------------------------- filtering


def median_filter(signal: Sequence[float], kernel: int) -> np.ndarray:
    """Centered running median with nearest-edge padding.

    The output has the input's length and every value is drawn from the
    input. ``kernel`` must be odd and positive; 1 returns a copy.
    """
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"kernel must be odd and positive, got {kernel}")
    x = np.asarray(signal, dtype=np.float64)
    if kernel == 1 or x.size == 0:
        return x.copy()
    half = kernel // 2
    padded = np.pad(x, half, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, kernel)
    return np.median(windows, axis=1)


def _negligible(centered_norm: float, x: np.ndarray) -> bool:
    # rounding in the mean leaves tiny residuals on constant columns
    return centered_norm <= STD_EPS * max(1.0, float(np.abs(x).max())) * math.sqrt(x.size)


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson coefficient; 0 when either side is constant."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 3:
        return 0.0
    da = a - a.mean()
    db = b - b.mean()
    na = math.sqrt(float(da @ da))
    nb = math.sqrt(float(db @ db))
    if _negligible(na, a) or _negligible(nb, b):
        return 0.0
    r = float(da @ db) / (na * nb)
    return max(-1.0, min(1.0, r))


def candidate_kernels(n_samples: int) -> List[int]:
    """Odd kernels 3, 5, ... up to floor(n_samples / 10)."""
    return list(range(3, n_samples // 10 + 1, 2))


def round_to_odd(x: float) -> int:
    """Nearest odd integer, halfway cases rounded up."""
    return 2 * math.floor((x - 1.0) / 2.0 + 0.5) + 1


def unit_weight(corr: float, n_samples: int) -> float:
    """Weight of one unit's best kernel in the geometric average."""
    return abs(corr) * n_samples


def best_unit_kernel(signal: np.ndarray, rul: np.ndarray):
    """Best kernel for one unit and its |corr|; None when no candidate exists."""
    cands = candidate_kernels(len(signal))
    if not cands:
        return None
    best_k, best_c = cands[0], -1.0
    for k in cands:
        c = abs(pearson(median_filter(signal, k), rul))
        # strict improvement keeps the smallest kernel on ties
        if c > best_c + 1e-12:
            best_k, best_c = k, c
    return best_k, best_c


def combine_kernels(choices: Iterable[tuple]) -> int:
    """Weighted geometric mean of (kernel, |corr|, n_samples) triples, rounded to odd."""
    num = 0.0
    den = 0.0
    for k, c, n in choices:
        w = unit_weight(c, n)
        if w > 0:
            num += w * math.log(k)
            den += w
    if den == 0.0:
        return 1
    k = round_to_odd(math.exp(num / den))
    return k if k >= 3 else 1


def select_kernels(table: TimeSeriesTable, signals: Optional[Sequence[int]] = None) -> FilterPlan:
    """Choose a median-filter kernel per signal from per-unit RUL correlation.

    For every unit the candidate kernel giving the highest |Pearson| between
    the filtered signal and RUL wins; the per-unit winners are merged by a
    geometric mean weighted by |corr| times the unit's sample count.
    """
    if not table.labeled:
        raise ValueError("kernel selection needs a labeled table")
    if signals is None:
        signals = SENSOR_INDICES
    n_cols = table.values.shape[1]
    for j in signals:
        if not 0 <= j < n_cols:
            raise IndexError(f"signal index {j} out of range [0, {n_cols})")
    slices = list(table.unit_slices().values())
    kernels = {}
    for j in signals:
        choices = []
        for rows in slices:
            best = best_unit_kernel(table.values[rows, j], table.rul[rows].astype(np.float64))
            if best is not None:
                choices.append((best[0], best[1], len(rows)))
        kernels[int(j)] = combine_kernels(choices)
    return FilterPlan(kernels)


def apply_filter_plan(table: TimeSeriesTable, plan: FilterPlan) -> TimeSeriesTable:
    """Filter each planned signal unit by unit."""
    values = table.values.copy()
    slices = list(table.unit_slices().values())
    for j, k in plan.kernels.items():
        if k == 1:
            continue
        for rows in slices:
            values[rows, j] = median_filter(table.values[rows, j], k)
    return table.with_values(values)


# ---------------------------------------------------------------- pruning


def rows_after_prune(rows: int, draw: float, cfg: PruneConfig) -> int:
    """Number of leading rows a unit keeps for a given uniform draw."""
    if draw <= cfg.pplus:
        return rows - int(rows * cfg.heavy_fraction)
    if draw <= cfg.prune_chance:
        return rows - int(rows * cfg.p)
    return rows


def prune_units(table: TimeSeriesTable, cfg: PruneConfig) -> TimeSeriesTable:
    """Randomly cut the tail of some training units.

    One uniform draw per unit, in file order, from a generator seeded with
    ``cfg.seed``. Surviving rows keep their RUL labels.
    """
    rng = np.random.default_rng(cfg.seed)
    keep = []
    for rows in table.unit_slices().values():
        n = rows_after_prune(len(rows), float(rng.random()), cfg)
        keep.append(rows[:n])
    return table.take(np.concatenate(keep) if keep else np.zeros(0, dtype=np.int64))


# ---------------------------------------------------------------- scaling


def fit_scaler(table: TimeSeriesTable, features: Optional[Sequence[int]] = None) -> ScalerParams:
    """Population mean and std per feature over all rows."""
    if len(table) == 0:
        raise ValueError("cannot fit a scaler on an empty table")
    if features is None:
        features = range(table.values.shape[1])
    idx = [int(i) for i in features]
    cols = table.values[:, idx]
    return ScalerParams(
        features=[table.feature_names[i] for i in idx],
        indices=idx,
        mean=cols.mean(axis=0),
        std=cols.std(axis=0),
    )


def apply_scaler(table: TimeSeriesTable, params: ScalerParams) -> TimeSeriesTable:
    """z = (x - mean) / std on the fitted features; constant features map to 0."""
    for i, name in zip(params.indices, params.features):
        if i >= len(table.feature_names) or table.feature_names[i] != name:
            raise ValueError(f"feature {name!r} not found at column {i}")
    values = table.values.copy()
    cols = values[:, params.indices]
    safe = np.where(params.std < STD_EPS, 1.0, params.std)
    z = (cols - params.mean) / safe
    z[:, params.std < STD_EPS] = 0.0
    values[:, params.indices] = z
    return table.with_values(values)


# ---------------------------------------------------------------- correlation


def correlation_matrix(table: TimeSeriesTable) -> CorrelationMatrix:
    """Pearson matrix over OS1-OS3, SM1-SM21 and RUL.

    Pairs involving a zero-variance column are 0, including its diagonal.
    """
    if not table.labeled:
        raise ValueError("correlation matrix needs a labeled table")
    if len(table) < 2:
        raise ValueError("need at least 2 rows")
    idx = [table.feature_names.index(n) for n in BASE_FEATURES]
    data = np.column_stack([table.values[:, idx], table.rul.astype(np.float64)])
    centered = data - data.mean(axis=0)
    norms = np.sqrt((centered**2).sum(axis=0))
    scale = np.maximum(np.abs(data).max(axis=0), 1.0) * math.sqrt(len(data))
    constant = norms <= STD_EPS * scale
    unit = centered / np.where(constant, 1.0, norms)
    unit[:, constant] = 0.0
    corr = np.clip(unit.T @ unit, -1.0, 1.0)
    corr = (corr + corr.T) / 2.0
    return CorrelationMatrix(labels=list(BASE_FEATURES) + ["RUL"], values=corr)


def top_rul_correlates(cm: CorrelationMatrix, k: int = 5, prefix: str = "SM") -> List[str]:
    """Labels with the largest |corr| against RUL."""
    rul = cm.values[cm.labels.index("RUL")]
    order = sorted(
        (i for i, name in enumerate(cm.labels) if name.startswith(prefix)),
        key=lambda i: -abs(rul[i]),
    )
    return [cm.labels[i] for i in order[:k]]
