"""Synthetic run-to-failure data in the C-MAPSS file layout.

Used by the test suite and for smoke runs when the NASA files are not at
hand. Each unit degrades along a health curve, exponential in cycles to failure, that drives a
subset of sensors; others are constant or pure noise. Six-condition agents
jump between discrete operating regimes every cycle, which shifts sensor
levels and makes the task harder, as in FD002/FD004.
"""

from __future__ import annotations

import argparse
from pathlib import Path
from typing import Dict, Iterable, Optional, Union

import numpy as np

from .ingest import AGENTS, EXPECTED_UNITS

REGIMES = np.array(
    [
        [0.0, 0.0, 100.0],
        [10.0, 0.25, 100.0],
        [20.0, 0.70, 100.0],
        [25.0, 0.62, 60.0],
        [35.0, 0.84, 100.0],
        [42.0, 0.84, 100.0],
    ]
)
CONDITIONS = {"FD001": 1, "FD002": 6, "FD003": 1, "FD004": 6}

# per-sensor baseline, degradation sensitivity, noise std
_BASE = np.array([518.67, 642.0, 1589.0, 1400.0, 14.62, 21.61, 554.0, 2388.0, 9050.0, 1.3,
                  47.4, 521.7, 2388.0, 8138.0, 8.42, 0.03, 392.0, 2388.0, 100.0, 38.9, 23.3])
_SENS = np.array([0.0, 0.6, 8.0, 12.0, 0.0, 0.0, -3.0, 0.08, 8.0, 0.0,
                  0.9, -3.0, 0.08, 7.0, 0.05, 0.0, 4.0, 0.0, 0.0, -0.5, -0.3])
_NOISE = np.array([0.0, 0.5, 6.0, 9.0, 0.0, 0.001, 0.9, 0.07, 22.0, 0.0,
                   0.27, 0.74, 0.07, 19.0, 0.04, 0.0, 1.5, 0.0, 0.0, 0.18, 0.11])
# sensor offset per unit of regime index (six-condition agents only)
_REGIME_SHIFT = np.array([-20.0, -30.0, -60.0, -70.0, -1.5, -3.0, -80.0, -30.0, -200.0, -0.05,
                          -5.0, -70.0, -30.0, -150.0, 0.2, 0.0, -20.0, -30.0, -3.0, -5.0, -3.0])


def _unit_rows(rng: np.random.Generator, unit: int, life: int, n_rows: int, conditions: int):
    tau = rng.uniform(40.0, 80.0)
    wear0 = rng.uniform(0.0, 0.1)
    t = np.arange(1, n_rows + 1)
    health = wear0 + np.exp(-(life - t) / tau)
    if conditions == 1:
        regime = np.zeros(n_rows, dtype=int)
        os = np.column_stack([
            rng.normal(0.0, 0.002, n_rows),
            rng.normal(0.0, 0.0003, n_rows),
            np.full(n_rows, 100.0),
        ])
    else:
        regime = rng.integers(0, conditions, n_rows)
        os = REGIMES[regime] + np.column_stack([
            rng.normal(0.0, 0.002, n_rows), rng.normal(0.0, 0.0003, n_rows), np.zeros(n_rows)
        ])
    sm = (
        _BASE
        + np.outer(health, _SENS)
        + np.outer(regime, _REGIME_SHIFT)
        + rng.normal(size=(n_rows, 21)) * _NOISE
    )
    rows = np.column_stack([np.full(n_rows, unit), t, os, sm])
    return rows


def _format(rows: np.ndarray) -> str:
    lines = []
    for r in rows:
        lines.append(f"{int(r[0])} {int(r[1])} " + " ".join(f"{v:.4f}" for v in r[2:]))
    return "\n".join(lines) + "\n"


def generate_agent(
    agent: str, n_train: int, n_test: int, seed: int = 0
) -> Dict[str, str]:
    """Return file contents {"train", "test", "rul"} for one agent."""
    rng = np.random.default_rng([seed, AGENTS.index(agent) if agent in AGENTS else 99])
    conditions = CONDITIONS.get(agent, 1)
    train = []
    for u in range(1, n_train + 1):
        life = int(rng.integers(128, 363))
        train.append(_unit_rows(rng, u, life, life, conditions))
    test, ruls = [], []
    for u in range(1, n_test + 1):
        life = int(rng.integers(128, 363))
        rul = int(rng.integers(7, min(146, life - 30)))
        cut = life - rul
        test.append(_unit_rows(rng, u, life, cut, conditions))
        ruls.append(life - cut)
    return {
        "train": _format(np.concatenate(train)),
        "test": _format(np.concatenate(test)),
        "rul": "\n".join(str(r) for r in ruls) + "\n",
    }


def write_dataset(
    out_dir: Union[str, Path],
    agents: Iterable[str] = AGENTS,
    scale: float = 1.0,
    seed: int = 0,
    units: Optional[int] = None,
) -> Path:
    """Write train_/test_/RUL_<agent>.txt files.

    Unit counts follow the real dataset times ``scale`` unless ``units``
    fixes them.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for agent in agents:
        n_tr, n_te = EXPECTED_UNITS.get(agent, (100, 100))
        if units is not None:
            n_tr = n_te = units
        else:
            n_tr, n_te = max(2, round(n_tr * scale)), max(1, round(n_te * scale))
        files = generate_agent(agent, n_tr, n_te, seed)
        (out / f"train_{agent}.txt").write_text(files["train"])
        (out / f"test_{agent}.txt").write_text(files["test"])
        (out / f"RUL_{agent}.txt").write_text(files["rul"])
    return out


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description="Write a synthetic C-MAPSS-format dataset.")
    ap.add_argument("out_dir")
    ap.add_argument("--scale", type=float, default=1.0)
    ap.add_argument("--units", type=int, default=None)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--agents", nargs="+", default=list(AGENTS))
    args = ap.parse_args(argv)
    write_dataset(args.out_dir, args.agents, args.scale, args.seed, args.units)


if __name__ == "__main__":
    main()
