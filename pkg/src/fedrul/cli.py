"""Command-line driver: ingest, heatmap, train, evaluate, grid-search, compare.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric abort.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .config import ConfigError, ExperimentConfig, load_config, parse_key_values
from .experiment import run_training
from .federated import FederationAbort
from .heatmap import render_svg
from .ingest import (
    EXPECTED_UNITS,
    ParseError,
    label_test_rul,
    label_train_rul,
    parse_data_file,
    parse_rul_file,
    table_to_csv,
)
from .nn.train import NumericAbort, predict
from .pipeline import prepare_agent, prepare_test
from .preprocess import correlation_matrix
from .stats import (
    compare_models,
    comparison_table,
    compute_metrics,
    confidence_interval,
    interval_table,
    performance_table,
    render_table,
)
from .weights import WeightFormatError, deserialize_params, serialize_params

logger = logging.getLogger("fedrul")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

GRID_AXES: Dict[str, List[float]] = {
    "sequence_length": [1, 2, 4, 8],
    "batch_size": [1, 8, 32],
    "dropout": [0.1, 0.2, 0.3],
    "recurrent_dropout": [0.1, 0.2],
    "learning_rate": [0.0001, 0.001, 0.002],
    "gaussian_noise": [0.01, 0.1],
}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- helpers


def _load_tables(cfg: ExperimentConfig, agent: str, with_test: bool = True):
    paths = cfg.agent_paths(agent)
    train = label_train_rul(parse_data_file(paths["train"].read_bytes(), agent=agent))
    test = None
    if with_test:
        raw = parse_data_file(paths["test"].read_bytes(), agent=agent)
        test = label_test_rul(raw, parse_rul_file(paths["rul"].read_bytes()))
    return train, test


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _snapshot(cfg: ExperimentConfig, command: str) -> None:
    _write(Path(cfg.out) / f"{command}.config", cfg.to_text())


def _fmt(v: float) -> str:
    return repr(float(v))


def rounds_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["round", "agent", "train_rmse", "validation_rmse", "global_validation_rmse"])
    for r in reports:
        for agent in r.train_rmse:
            w.writerow([r.round_index, agent, _fmt(r.train_rmse[agent]),
                        _fmt(r.validation_rmse[agent]), _fmt(r.global_validation_rmse)])
    return buf.getvalue()


# ---------------------------------------------------------------- commands


def cmd_ingest(cfg: ExperimentConfig, args) -> int:
    out = Path(cfg.out)
    agents = args.agents or cfg.agents
    rows = []
    for agent in agents:
        train, test = _load_tables(cfg, agent)
        _write(out / f"{agent}_train.csv", table_to_csv(train))
        _write(out / f"{agent}_test.csv", table_to_csv(test))
        n_tr, n_te = len(train.unit_ids()), len(test.unit_ids())
        exp = EXPECTED_UNITS[agent]
        rows.append([agent, str(n_tr), str(n_te), "yes" if (n_tr, n_te) == exp else "no"])
        print(f"{agent}: train {n_tr} units, test {n_te} units")
    print(render_table(["Agent", "Train Size", "Test Size", "Expected Counts"], rows, args.format), end="")
    _snapshot(cfg, "ingest")
    return EXIT_OK


def cmd_heatmap(cfg: ExperimentConfig, args) -> int:
    if args.agent not in EXPECTED_UNITS:
        raise UsageError(f"unknown agent {args.agent!r}")
    train, _ = _load_tables(cfg, args.agent, with_test=False)
    cm = correlation_matrix(train)
    out = Path(cfg.out)
    _write(out / f"heatmap_{args.agent}.csv", cm.to_csv())
    _write(out / f"heatmap_{args.agent}.svg", render_svg(cm, title=f"{args.agent} train"))
    print(f"wrote {out / f'heatmap_{args.agent}.csv'} and .svg")
    _snapshot(cfg, "heatmap")
    return EXIT_OK


def train_and_write(cfg: ExperimentConfig, agents: Sequence[str], fmt: str, rounds: Optional[int] = None):
    tables = {a: _load_tables(cfg, a) for a in agents}
    result = run_training(tables, cfg.pipeline(), cfg.model, cfg.round_config(rounds))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "model.frul").write_bytes(serialize_params(result.global_params))
    for c in result.clients:
        if c.local_model is not None:
            (out / f"local_{c.agent}.frul").write_bytes(serialize_params(c.local_model))
    _write(out / "rounds.csv", rounds_csv(result.reports))
    _write(out / "timing.csv", "round,wall_time_s\n" + "".join(
        f"{r.round_index},{r.wall_time:.3f}\n" for r in result.reports))
    state = {a: p.state_dict() for a, p in result.prepared.items()}
    _write(out / "preprocess.json", json.dumps(state, indent=1, sort_keys=True) + "\n")
    table = performance_table(result.summary, fmt)
    _write(out / ("summary.csv" if fmt == "csv" else "summary.txt"), table)
    extra = render_table(
        ["Agent", "Train RMSE", "Train Windows", "Test Units"],
        [[r["agent"], _fmt(r["train_rmse"]), str(r["n_train"]), str(r["n_test"])] for r in result.summary],
        "csv",
    )
    _write(out / "train_fit.csv", extra)
    return result, table


def cmd_train(cfg: ExperimentConfig, args) -> int:
    if args.mode == "local":
        if not args.agent:
            raise UsageError("--agent is required with --mode local")
        agents = [args.agent]
    else:
        agents = cfg.agents
    _snapshot(cfg, "train")
    _, table = train_and_write(cfg, agents, args.format)
    print(table, end="")
    return EXIT_OK


def _model_config(cfg_path: Optional[str], model_path: Path) -> ExperimentConfig:
    if cfg_path:
        return load_config(cfg_path)
    snap = model_path.parent / "train.config"
    if not snap.exists():
        raise UsageError(f"no --config given and no snapshot at {snap}")
    return load_config(str(snap))


def cmd_evaluate(cfg: ExperimentConfig, args) -> int:
    model_path = Path(args.model)
    if not model_path.exists():
        raise FileNotFoundError(str(model_path))
    params = deserialize_params(model_path.read_bytes())
    if args.split == "test":
        train, test = _load_tables(cfg, args.agent)
        state_path = model_path.parent / "preprocess.json"
        state = json.loads(state_path.read_text()).get(args.agent) if state_path.exists() else None
        if state is not None:
            batch = prepare_test(test, state, cfg.features)
        else:
            batch = prepare_agent(train, test, cfg.pipeline()).test
    else:
        train, test = _load_tables(cfg, args.agent)
        prepared = prepare_agent(train, test, cfg.pipeline())
        batch = prepared.train if args.split == "train" else prepared.validation
    if len(batch) == 0:
        raise DataError(f"{args.agent} has no {args.split} windows")
    m = compute_metrics(predict(params, batch.inputs), batch.targets)
    # csv keeps full precision so results can be compared exactly
    num = _fmt if args.format == "csv" else (lambda v: f"{v:.6f}")
    r2 = "undefined" if m.r_squared is None else num(m.r_squared)
    text = render_table(
        ["Agent", "Split", "N", "RMSE", "MAE", "R2"],
        [[args.agent, args.split, str(m.n), num(m.rmse), num(m.mae), r2]],
        args.format,
    )
    _write(Path(cfg.out) / f"evaluate_{args.agent}_{args.split}.{'csv' if args.format == 'csv' else 'txt'}", text)
    print(text, end="")
    _snapshot(cfg, "evaluate")
    return EXIT_OK


def _axis_value(axis: str, token: str):
    conv = int if axis in ("sequence_length", "batch_size") else float
    try:
        v = conv(token)
    except ValueError:
        raise UsageError(f"grid axis {axis}: {token!r} is not a number") from None
    if v not in GRID_AXES[axis]:
        raise UsageError(f"grid axis {axis}: {v} is not one of {GRID_AXES[axis]}")
    return v


def parse_grid(text: str) -> Dict[str, list]:
    grid = {}
    for key, value in parse_key_values(text).items():
        if key not in GRID_AXES:
            raise UsageError(f"unknown grid axis {key!r}")
        grid[key] = [_axis_value(key, t.strip()) for t in value.split(",") if t.strip()]
        if not grid[key]:
            raise UsageError(f"grid axis {key} is empty")
    return grid


def enumerate_grid(grid: Dict[str, list], base: ExperimentConfig) -> List[Dict[str, float]]:
    """Cartesian product over the tuning axes; missing axes take the base config value."""
    defaults = {
        "sequence_length": base.features.sequence_length,
        "batch_size": base.train.batch_size,
        "dropout": base.train.dropout,
        "recurrent_dropout": base.train.recurrent_dropout,
        "learning_rate": base.train.learning_rate,
        "gaussian_noise": base.train.gaussian_noise_sigma,
    }
    axes = [grid.get(a, [defaults[a]]) for a in GRID_AXES]
    return [dict(zip(GRID_AXES, combo)) for combo in itertools.product(*axes)]


def apply_point(base: ExperimentConfig, point: Dict[str, float], out: str) -> ExperimentConfig:
    return replace(
        base,
        out=out,
        features=replace(base.features, sequence_length=int(point["sequence_length"])),
        train=replace(
            base.train,
            batch_size=int(point["batch_size"]),
            dropout=point["dropout"],
            recurrent_dropout=point["recurrent_dropout"],
            learning_rate=point["learning_rate"],
            gaussian_noise_sigma=point["gaussian_noise"],
        ),
    )


def cmd_grid_search(cfg: ExperimentConfig, args) -> int:
    if args.full:
        grid = {k: list(v) for k, v in GRID_AXES.items()}
    elif args.grid:
        grid = parse_grid(Path(args.grid).read_text())
    else:
        raise UsageError("give --grid FILE or --full")
    points = enumerate_grid(grid, cfg)
    print(f"{len(points)} configurations")
    _snapshot(cfg, "grid-search")
    results = []
    for i, point in enumerate(points):
        run_cfg = apply_point(cfg, point, str(Path(cfg.out) / f"grid_{i:03d}"))
        _snapshot(run_cfg, "train")
        res, _ = train_and_write(run_cfg, cfg.agents, "csv", rounds=cfg.grid_rounds)
        val = res.summary[-1]["validation_rmse"]
        results.append((val, i, point))
        logger.info("grid point %d: validation RMSE %.4f", i, val)
    results.sort(key=lambda r: (r[0], r[1]))
    headers = ["rank", "index"] + list(GRID_AXES) + ["validation_rmse"]
    rows = [[str(k + 1), str(i)] + [repr(p[a]) for a in GRID_AXES] + [_fmt(v)]
            for k, (v, i, p) in enumerate(results)]
    _write(Path(cfg.out) / "grid_results.csv", render_table(headers, rows, "csv"))
    best = results[0][2]
    best_rows = [
        ["LSTM Layers", str(cfg.model.lstm_layers)],
        ["Dense Layers", str(cfg.model.dense_layers)],
        ["Units Per Layer", str(cfg.model.units)],
        ["Sequence Length", str(best["sequence_length"])],
        ["Batch Size", str(best["batch_size"])],
        ["Layer Dropout", repr(best["dropout"])],
        ["Recurrent Dropout", repr(best["recurrent_dropout"])],
        ["Learning Rate", repr(best["learning_rate"])],
        ["Gaussian Noise", repr(best["gaussian_noise"])],
    ]
    best_text = render_table(["Hyper-parameter Name", "Best Value"], best_rows, args.format)
    _write(Path(cfg.out) / ("best_config.csv" if args.format == "csv" else "best_config.txt"), best_text)
    print(best_text, end="")
    return EXIT_OK


def _read_errors(path: Path) -> Dict[str, List[float]]:
    groups: Dict[str, List[float]] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"group", "error"} <= set(reader.fieldnames):
            raise DataError(f"{path}: expected columns group,error")
        for row in reader:
            try:
                groups.setdefault(row["group"], []).append(float(row["error"]))
            except ValueError:
                raise DataError(f"{path}: bad error value {row['error']!r}") from None
    return groups


def _read_baselines(path: Path):
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"study", "mu0"} <= set(reader.fieldnames):
            raise DataError(f"{path}: expected columns study,mu0")
        try:
            return [(row["study"], float(row["mu0"])) for row in reader]
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from None


def cmd_compare(cfg: ExperimentConfig, args) -> int:
    if args.alpha is None:
        raise UsageError("an explicit --alpha is required")
    if not 0.0 < args.alpha < 1.0:
        raise UsageError("--alpha must be in (0, 1)")
    errors = _read_errors(Path(args.errors))
    baselines = _read_baselines(Path(args.baselines))
    try:
        results = compare_models(errors, baselines, args.alpha)
        intervals = []
        for group, values in errors.items():
            ci = confidence_interval(values, args.level)
            ci.group = group
            intervals.append(ci)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    report = comparison_table(results, args.format)
    cis = interval_table(intervals, args.format)
    ext = "csv" if args.format == "csv" else "txt"
    out = Path(cfg.out)
    _write(out / f"comparison.{ext}", report)
    _write(out / f"intervals.{ext}", cis)
    print(report, end="")
    print(cis, end="")
    _snapshot(cfg, "compare")
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="key = value config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--format", choices=("csv", "text"), default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    ap = _Parser(prog="fedrul", description=__doc__, parents=[common],
                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="parse, label and export agent data")
    p.add_argument("--agents", nargs="+")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("heatmap", parents=[common], help="correlation matrix csv + svg")
    p.add_argument("--agent", required=True)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("train", parents=[common], help="local or federated training")
    p.add_argument("--mode", choices=("local", "federated"), default="federated")
    p.add_argument("--agent")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="score a weight file on one agent")
    p.add_argument("--model", required=True)
    p.add_argument("--agent", required=True)
    p.add_argument("--split", choices=("test", "validation", "train"), default="test")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grid-search", parents=[common], help="exhaustive hyperparameter search")
    p.add_argument("--grid", help="key = comma-separated values, one axis per line")
    p.add_argument("--full", action="store_true", help="the full 432-point grid")
    p.set_defaults(func=cmd_grid_search)

    p = sub.add_parser("compare", parents=[common], help="t tests and confidence intervals")
    p.add_argument("--errors", required=True, help="csv with columns group,error")
    p.add_argument("--baselines", required=True, help="csv with columns study,mu0")
    p.add_argument("--alpha", type=float)
    p.add_argument("--level", type=float, default=0.95)
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    args.format = getattr(args, "format", "text")
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config_path = getattr(args, "config", None)
        if args.command == "evaluate" and config_path is None:
            cfg = _model_config(None, Path(args.model))
        else:
            cfg = load_config(config_path)
        if hasattr(args, "seed"):
            cfg.seed = args.seed
        if hasattr(args, "out"):
            cfg.out = args.out
        return args.func(cfg, args)
    except (UsageError, ConfigError) as exc:
        print(f"fedrul: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, ParseError, WeightFormatError, DataError) as exc:
        print(f"fedrul: data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericAbort, FederationAbort) as exc:
        print(f"fedrul: numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
