"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``. Criteria 6 to 9 read the
NASA C-MAPSS text files from ``$CMAPSS_DIR`` (default ``data/CMAPSSData``
beside this repository) and fail when the files are missing.
"""

import contextlib
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from fedrul.cli import main
from fedrul.config import ExperimentConfig
from fedrul.experiment import mean_baseline_rmse, run_training
from fedrul.federated import fed_avg
from fedrul.ingest import find_agent_files, load_agent
from fedrul.nn import ModelConfig, init_model
from fedrul.preprocess import correlation_matrix, median_filter, top_rul_correlates
from fedrul.stats import compute_metrics, confidence_interval, t_cdf, t_test_one_sample, NullHypothesis

from oracles import GRADCHECK_CONFIGS, median_oracle, model_gradient_errors, t_cdf_quad

UNIT_COUNTS = {"FD001": (100, 100), "FD002": (260, 259), "FD003": (100, 100), "FD004": (248, 249)}
DEFAULT_DATA = Path(__file__).resolve().parents[1] / "data" / "CMAPSSData"


@contextlib.contextmanager
def criterion(number, title):
    try:
        yield
    except BaseException:
        print(f"\nCRITERION {number} FAIL: {title}")
        raise
    print(f"\nCRITERION {number} PASS: {title}")


def cmapss_dir() -> Path:
    path = Path(os.environ.get("CMAPSS_DIR", DEFAULT_DATA))
    try:
        for agent in UNIT_COUNTS:
            find_agent_files(path, agent)
    except FileNotFoundError as exc:
        pytest.fail(f"C-MAPSS data not available ({exc}); set CMAPSS_DIR to the extracted files")
    return path


def reduced_config(data_dir, agents, rounds=10) -> ExperimentConfig:
    return ExperimentConfig.from_text(
        f"data_dir = {data_dir}\nagents = {', '.join(agents)}\n"
        f"sequence_length = 4\nrounds = {rounds}\nlocal_epochs = 1\nrul_cap = 125\n"
    )


def train(cfg: ExperimentConfig, agents):
    tables = {a: load_agent(cfg.data_dir, a) for a in agents}
    return run_training(tables, cfg.pipeline(), cfg.model, cfg.round_config())


# ---------------------------------------------------------------- 1


def test_criterion_01_median_filter_oracle():
    with criterion(1, "median filter equals window-sort oracle on 1000 cases in < 5 s"):
        rng = np.random.default_rng(2024)
        start = time.perf_counter()
        for _ in range(1000):
            n = int(rng.integers(1, 120))
            k = int(rng.choice([1, 3, 5, 7, 9, 11, 15, 21]))
            x = rng.integers(-50, 50, n) if rng.random() < 0.5 else rng.normal(size=n)
            assert median_filter(x, k).tolist() == median_oracle(x, k)
        elapsed = time.perf_counter() - start
        assert elapsed < 5.0, f"{elapsed:.2f} s"


# ---------------------------------------------------------------- 2


def test_criterion_02_gradient_checks():
    with criterion(2, "analytic vs finite-difference gradients < 1e-4 on >= 5 configs in < 30 s"):
        assert len(GRADCHECK_CONFIGS) >= 5
        start = time.perf_counter()
        worst = 0.0
        for cfg in GRADCHECK_CONFIGS:
            worst = max(worst, max(model_gradient_errors(cfg).values()))
        elapsed = time.perf_counter() - start
        assert worst < 1e-4, worst
        assert elapsed < 30.0, f"{elapsed:.2f} s"


# ---------------------------------------------------------------- 3


def test_criterion_03_metric_identities():
    with criterion(3, "metric unit cases within 1e-12 and rmse^2 = mse on 100 vectors"):
        m = compute_metrics([1, 2, 3], [1, 2, 3])
        assert abs(m.mse) <= 1e-12 and abs(m.mae) <= 1e-12 and abs(m.r_squared - 1.0) <= 1e-12
        m = compute_metrics([2, 2, 2], [1, 2, 3])
        assert abs(m.mse - 2 / 3) <= 1e-12 and abs(m.mae - 2 / 3) <= 1e-12 and abs(m.r_squared) <= 1e-12
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(1, 200))
            m = compute_metrics(rng.normal(0, 30, n), rng.normal(0, 30, n))
            assert abs(m.rmse**2 - m.mse) <= 1e-12 * max(1.0, m.mse)


# ---------------------------------------------------------------- 4


def test_criterion_04_fedavg_algebra():
    with criterion(4, "FedAvg identity, scale and permutation invariance, hand case, all within 1e-12"):
        out = fed_avg([{"w": np.array([0.0])}, {"w": np.array([4.0])}], [1, 3])
        assert abs(out["w"][0] - 3.0) <= 1e-12
        cfg = ModelConfig(units=5, lstm_layers=2, dense_layers=2)
        models = [init_model(4, s, cfg) for s in range(4)]
        weights = [3.0, 11.0, 0.5, 40.0]
        base = fed_avg(models, weights)
        same = fed_avg([models[0]] * 3, [1.0, 7.0, 2.5])
        scaled = fed_avg(models, [1e3 * w for w in weights])
        perm = [2, 0, 3, 1]
        permuted = fed_avg([models[i] for i in perm], [weights[i] for i in perm])
        for name in base:
            assert np.max(np.abs(same[name] - models[0][name])) <= 1e-12
            assert np.max(np.abs(scaled[name] - base[name])) <= 1e-12
            assert np.max(np.abs(permuted[name] - base[name])) <= 1e-12


# ---------------------------------------------------------------- 5


def test_criterion_05_statistics_oracle():
    with criterion(5, "t CDF vs quadrature within 1e-8; t = -5.577 and CI [7.03, 16.97] examples"):
        for df in (1, 2, 5, 30):
            for t in np.linspace(-6, 6, 20):
                assert abs(t_cdf(t, df) - t_cdf_quad(t, df)) < 1e-8, (df, t)
        r = t_test_one_sample([10, 12, 14], 18.44, NullHypothesis.AT_MOST, 0.05)
        assert abs(r.t - (-5.577)) < 1e-3
        ci = confidence_interval([10, 12, 14], 0.95)
        assert abs(ci.lower - 7.03) < 1e-2 and abs(ci.upper - 16.97) < 1e-2


# ---------------------------------------------------------------- 6


def test_criterion_06_data_fidelity():
    with criterion(6, "real C-MAPSS unit counts and unit-1 anchors"):
        data = cmapss_dir()
        for agent, (n_train, n_test) in UNIT_COUNTS.items():
            train, test = load_agent(data, agent)
            assert (len(train.unit_ids()), len(test.unit_ids())) == (n_train, n_test), agent
        train, test = load_agent(data, "FD001")
        unit1 = train.cycle[train.unit == 1]
        assert unit1.max() == 192
        rows = test.unit == 1
        last = np.argmax(test.cycle[rows])
        assert test.cycle[rows][last] == 31 and test.rul[rows][last] == 112


# ---------------------------------------------------------------- 7


def test_criterion_07_desk_scale_learning():
    with criterion(7, "FD001+FD003 federated run beats mean baseline by >= 25%; aggregated within per-client range"):
        data = cmapss_dir()
        cfg = reduced_config(data, ["FD001", "FD003"])
        start = time.perf_counter()
        res = train(cfg, cfg.agents)
        elapsed = time.perf_counter() - start
        assert len(res.reports) <= 10
        rows = {r["agent"]: r for r in res.summary}
        agg = rows.pop("Aggregated")["test_rmse"]
        baseline = mean_baseline_rmse(res.prepared)
        per_client = [r["test_rmse"] for r in rows.values()]
        print(f"\n  aggregated {agg:.3f}, clients {per_client}, baseline {baseline:.3f}, {elapsed:.0f} s")
        assert agg <= 0.75 * baseline
        assert 0.9 * min(per_client) <= agg <= 1.1 * max(per_client)
        assert elapsed < 15 * 60


# ---------------------------------------------------------------- 8


def test_criterion_08_condition_ordering():
    with criterion(8, "FD002/FD004 test RMSE exceeds FD001/FD003 under equal configs"):
        data = cmapss_dir()
        rmse = {}
        for agent in UNIT_COUNTS:
            cfg = reduced_config(data, [agent], rounds=5)
            rmse[agent] = train(cfg, [agent]).summary[0]["test_rmse"]
        print(f"\n  test RMSE {rmse}")
        assert rmse["FD002"] / rmse["FD001"] > 1.0
        assert rmse["FD004"] / rmse["FD003"] > 1.0


# ---------------------------------------------------------------- 9


def test_criterion_09_correlation_anchors():
    with criterion(9, "FD001 top-5 |corr(sensor, RUL)| includes >= 3 of SM7, SM12, SM20, SM21"):
        train, _ = load_agent(cmapss_dir(), "FD001")
        top = top_rul_correlates(correlation_matrix(train), k=5)
        print(f"\n  top-5 {top}")
        assert len(set(top) & {"SM7", "SM12", "SM20", "SM21"}) >= 3


# ---------------------------------------------------------------- 10


def test_criterion_10_determinism(synth_dir, tmp_path):
    with criterion(10, "two identical federated runs give byte-identical weights and reports"):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            f"data_dir = {synth_dir}\nagents = FD001, FD002, FD003, FD004\nseed = 5\n"
            "units = 6\nlstm_layers = 2\ndense_layers = 1\nsequence_length = 4\nrounds = 3\n"
        )
        for run in ("a", "b"):
            assert main(["train", "--config", str(cfg), "--out", str(tmp_path / run), "--format", "csv"]) == 0
        # wall times and the config snapshot (which records its own output dir) are excluded
        names = sorted(
            p.name for p in (tmp_path / "a").iterdir() if p.name != "timing.csv" and p.suffix != ".config"
        )
        assert "model.frul" in names and "rounds.csv" in names and "summary.csv" in names
        for name in names:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
        assert not math.isnan(float((tmp_path / "a" / "rounds.csv").read_text().splitlines()[-1].split(",")[-1]))
