"""Per-agent data preparation: split, filter, prune, engineer, scale, window."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .features import FeatureConfig, SequenceBatch, add_engineered_features, build_windows
from .ingest import AGENTS, TimeSeriesTable
from .preprocess import (
    FilterPlan,
    PruneConfig,
    ScalerParams,
    apply_filter_plan,
    apply_scaler,
    fit_scaler,
    prune_units,
    select_kernels,
)

_PURPOSES = {"split": 0, "prune": 1, "train": 2, "init": 3}


def derive_seed(base: int, agent: str, purpose: str) -> int:
    """Stable 32-bit seed for (base seed, agent, purpose)."""
    agent_idx = AGENTS.index(agent) if agent in AGENTS else 1000 + sum(map(ord, agent))
    seq = np.random.SeedSequence([int(base), agent_idx, _PURPOSES[purpose]])
    return int(seq.generate_state(1)[0])


@dataclass
class PipelineConfig:
    features: FeatureConfig = field(default_factory=FeatureConfig)
    prune: PruneConfig = field(default_factory=PruneConfig)
    filter_mode: str = "auto"  # auto | explicit | off
    filter_plan: Optional[FilterPlan] = None
    validation_fraction: float = 0.2
    rul_cap: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.filter_mode not in ("auto", "explicit", "off"):
            raise ValueError(f"unknown filter mode {self.filter_mode!r}")
        if self.filter_mode == "explicit" and self.filter_plan is None:
            raise ValueError("explicit filter mode needs a filter plan")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")


@dataclass
class PreparedAgent:
    agent: str
    train: SequenceBatch
    validation: SequenceBatch
    test: SequenceBatch
    filter_plan: FilterPlan
    scaler: ScalerParams
    train_units: List[int]
    validation_units: List[int]
    feature_names: List[str]

    def state_dict(self) -> dict:
        return {
            "filter_plan": self.filter_plan.to_dict(),
            "scaler": self.scaler.to_dict(),
            "train_units": self.train_units,
            "validation_units": self.validation_units,
            "feature_names": self.feature_names,
        }


def split_units(table: TimeSeriesTable, fraction: float, seed: int) -> Tuple[List[int], List[int]]:
    """Hold out whole units for validation; returns (train units, validation units) in file order."""
    units = table.unit_ids()
    n_val = int(round(len(units) * fraction))
    if fraction > 0 and len(units) >= 2:
        n_val = min(max(n_val, 1), len(units) - 1)
    else:
        n_val = 0
    rng = np.random.default_rng(seed)
    chosen = set(rng.choice(units, size=n_val, replace=False).tolist()) if n_val else set()
    return [u for u in units if u not in chosen], [u for u in units if u in chosen]


def _cap(table: TimeSeriesTable, cap: Optional[int]) -> TimeSeriesTable:
    if cap is None:
        return table
    return replace(table, rul=np.minimum(table.rul, cap))


def transform(
    table: TimeSeriesTable, plan: FilterPlan, features: FeatureConfig, scaler: ScalerParams
) -> TimeSeriesTable:
    """Apply fitted preprocessing to a table (filter, engineer, scale)."""
    out = apply_filter_plan(table, plan)
    out = add_engineered_features(out, features)
    return apply_scaler(out, scaler)


def prepare_agent(
    train_table: TimeSeriesTable, test_table: Optional[TimeSeriesTable], cfg: PipelineConfig
) -> PreparedAgent:
    """Fit preprocessing on one agent's training units and window every split.

    Kernel selection runs on the unpruned training units; the scaler is
    fitted after pruning and feature engineering, on training units only.
    """
    agent = train_table.agent
    tr_units, val_units = split_units(
        train_table, cfg.validation_fraction, derive_seed(cfg.seed, agent, "split")
    )
    train_part = train_table.select_units(tr_units)
    val_part = train_table.select_units(val_units)

    if cfg.filter_mode == "auto":
        plan = select_kernels(train_part)
    elif cfg.filter_mode == "explicit":
        plan = cfg.filter_plan
    else:
        plan = FilterPlan({})

    filtered = apply_filter_plan(train_part, plan)
    prune_cfg = replace(cfg.prune, seed=derive_seed(cfg.prune.seed + cfg.seed, agent, "prune"))
    pruned = prune_units(filtered, prune_cfg)
    engineered = add_engineered_features(pruned, cfg.features)
    scaler = fit_scaler(engineered)
    train_scaled = apply_scaler(engineered, scaler)

    L = cfg.features.sequence_length
    train_b = build_windows(_cap(train_scaled, cfg.rul_cap), L)
    if val_units:
        val_b = build_windows(_cap(transform(val_part, plan, cfg.features, scaler), cfg.rul_cap), L)
    else:
        val_b = SequenceBatch(np.zeros((0, L, len(scaler.features))), np.zeros(0), [])
    if test_table is not None:
        test_b = build_windows(transform(test_table, plan, cfg.features, scaler), L, last_only=True)
    else:
        test_b = SequenceBatch(np.zeros((0, L, len(scaler.features))), np.zeros(0), [])
    return PreparedAgent(
        agent=agent,
        train=train_b,
        validation=val_b,
        test=test_b,
        filter_plan=plan,
        scaler=scaler,
        train_units=tr_units,
        validation_units=val_units,
        feature_names=list(engineered.feature_names),
    )


def prepare_test(
    test_table: TimeSeriesTable, state: dict, features: FeatureConfig
) -> SequenceBatch:
    """Window a test table with preprocessing state saved by :meth:`PreparedAgent.state_dict`."""
    plan = FilterPlan.from_dict(state["filter_plan"])
    scaler = ScalerParams.from_dict(state["scaler"])
    return build_windows(
        transform(test_table, plan, features, scaler), features.sequence_length, last_only=True
    )
