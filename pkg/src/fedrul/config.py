"""Flat ``key = value`` experiment configuration.

Blank lines and ``#`` comments are ignored. Every key maps onto one field
of the typed configs; unknown keys are errors. :meth:`ExperimentConfig.to_text`
writes a fully resolved copy that loads back to the same config.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from .features import FeatureConfig
from .federated import RoundConfig
from .ingest import AGENTS, BASE_FEATURES
from .nn.model import ModelConfig
from .nn.train import TrainConfig
from .pipeline import PipelineConfig
from .preprocess import SENSOR_INDICES, FilterPlan, PruneConfig


class ConfigError(ValueError):
    pass


def parse_key_values(text: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {line_no}: empty key")
        if key in out:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}")
        out[key] = value
    return out


def _signals(value: str) -> List[int]:
    v = value.strip().lower()
    if v in ("", "none"):
        return []
    if v == "sensors":
        return list(SENSOR_INDICES)
    if v == "all":
        return list(range(len(BASE_FEATURES)))
    out = []
    for name in value.split(","):
        name = name.strip()
        if name not in BASE_FEATURES:
            raise ConfigError(f"unknown signal {name!r}")
        out.append(BASE_FEATURES.index(name))
    return out


def _signals_text(idx: List[int]) -> str:
    if not idx:
        return "none"
    if idx == list(SENSOR_INDICES):
        return "sensors"
    return ",".join(BASE_FEATURES[i] for i in idx)


def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


@dataclass
class ExperimentConfig:
    data_dir: str = "data"
    agents: List[str] = field(default_factory=lambda: list(AGENTS))
    paths: Dict[str, str] = field(default_factory=dict)  # "FD001.train" -> path
    seed: int = 0
    out: str = "runs/default"
    features: FeatureConfig = field(default_factory=FeatureConfig)
    prune: PruneConfig = field(default_factory=PruneConfig)
    filter_mode: str = "auto"
    filter_kernels: Dict[int, int] = field(default_factory=dict)
    validation_fraction: float = 0.2
    rul_cap: Optional[int] = None
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    rounds: int = 10
    local_epochs: int = 1
    early_stop: bool = True
    early_stop_epsilon: float = 0.01
    early_stop_window: int = 5
    grid_rounds: int = 1

    # ------------------------------------------------------------ views

    def pipeline(self) -> PipelineConfig:
        plan = FilterPlan(dict(self.filter_kernels)) if self.filter_mode == "explicit" else None
        return PipelineConfig(
            features=self.features,
            prune=self.prune,
            filter_mode=self.filter_mode,
            filter_plan=plan,
            validation_fraction=self.validation_fraction,
            rul_cap=self.rul_cap,
            seed=self.seed,
        )

    def round_config(self, rounds: Optional[int] = None) -> RoundConfig:
        return RoundConfig(
            rounds=rounds or self.rounds,
            local_epochs=self.local_epochs,
            train=self.train,
            early_stop_epsilon=self.early_stop_epsilon,
            early_stop_window=self.early_stop_window,
            early_stop=self.early_stop,
        )

    def agent_paths(self, agent: str) -> Dict[str, Path]:
        """train/test/rul paths, explicit overrides first, then data_dir naming."""
        from .ingest import find_agent_files

        keys = {s: self.paths.get(f"{agent}.{s}") for s in ("train", "test", "rul")}
        if all(keys.values()):
            return {s: Path(p) for s, p in keys.items()}
        found = find_agent_files(self.data_dir, agent)
        return {s: Path(keys[s]) if keys[s] else found[s] for s in found}

    # ------------------------------------------------------------ text form

    def to_text(self) -> str:
        f, p, t, m = self.features, self.prune, self.train, self.model
        lines = [
            "# resolved experiment configuration",
            f"data_dir = {self.data_dir}",
            f"agents = {','.join(self.agents)}",
        ]
        lines += [f"{k} = {v}" for k, v in sorted(self.paths.items())]
        lines += [
            f"seed = {self.seed}",
            f"out = {self.out}",
            f"sequence_length = {f.sequence_length}",
            f"derivative_signals = {_signals_text(f.derivative_signals)}",
            f"cumsum_signals = {_signals_text(f.cumsum_signals)}",
            f"dt = {f.dt}",
            f"prune_chance = {p.prune_chance!r}",
            f"prune_p = {p.p!r}",
            f"prune_pplus = {p.pplus!r}",
            f"prune_seed = {p.seed}",
            f"filter = {self.filter_mode}",
        ]
        lines += [f"filter.{BASE_FEATURES[j]} = {k}" for j, k in sorted(self.filter_kernels.items())]
        lines += [
            f"validation_fraction = {self.validation_fraction!r}",
            f"rul_cap = {'none' if self.rul_cap is None else self.rul_cap}",
            f"units = {m.units}",
            f"lstm_layers = {m.lstm_layers}",
            f"dense_layers = {m.dense_layers}",
            f"learning_rate = {t.learning_rate!r}",
            f"batch_size = {t.batch_size}",
            f"gaussian_noise = {t.gaussian_noise_sigma!r}",
            f"dropout = {t.dropout!r}",
            f"recurrent_dropout = {t.recurrent_dropout!r}",
            f"train_seed = {t.seed}",
            f"rounds = {self.rounds}",
            f"local_epochs = {self.local_epochs}",
            f"early_stop = {'true' if self.early_stop else 'false'}",
            f"early_stop_epsilon = {self.early_stop_epsilon!r}",
            f"early_stop_window = {self.early_stop_window}",
            f"grid_rounds = {self.grid_rounds}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        return cls.from_mapping(parse_key_values(text))

    @classmethod
    def from_mapping(cls, kv: Dict[str, str]) -> "ExperimentConfig":
        kv = dict(kv)
        cfg = cls()
        feat = dict(sequence_length=8, derivative_signals=list(SENSOR_INDICES), cumsum_signals=[], dt=1)
        prune = dict(prune_chance=0.3, p=0.4, pplus=0.1, seed=0)
        train = dict(TrainConfig().__dict__)
        model = dict(ModelConfig().__dict__)

        def pop(key, conv, target=None, name=None):
            if key not in kv:
                return
            raw = kv.pop(key)
            try:
                value = conv(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{key}: {exc}") from None
            if target is None:
                setattr(cfg, name or key, value)
            else:
                target[name or key] = value

        pop("data_dir", str)
        pop("agents", lambda v: [a.strip() for a in v.split(",") if a.strip()])
        pop("seed", int)
        pop("out", str)
        pop("sequence_length", int, feat)
        pop("derivative_signals", _signals, feat)
        pop("cumsum_signals", _signals, feat)
        pop("dt", int, feat)
        pop("prune_chance", float, prune)
        pop("prune_p", float, prune, "p")
        pop("prune_pplus", float, prune, "pplus")
        pop("prune_seed", int, prune, "seed")
        pop("filter", str, name="filter_mode")
        pop("validation_fraction", float)
        pop("rul_cap", lambda v: None if v.lower() == "none" else int(v))
        pop("units", int, model)
        pop("lstm_layers", int, model)
        pop("dense_layers", int, model)
        pop("learning_rate", float, train)
        pop("batch_size", int, train)
        pop("gaussian_noise", float, train, "gaussian_noise_sigma")
        pop("dropout", float, train)
        pop("recurrent_dropout", float, train)
        pop("train_seed", int, train, "seed")
        pop("rounds", int)
        pop("local_epochs", int)
        pop("early_stop", _bool)
        pop("early_stop_epsilon", float)
        pop("early_stop_window", int)
        pop("grid_rounds", int)
        for key in list(kv):
            head, _, tail = key.partition(".")
            if head == "filter" and tail in BASE_FEATURES:
                cfg.filter_kernels[BASE_FEATURES.index(tail)] = int(kv.pop(key))
            elif head in AGENTS and tail in ("train", "test", "rul"):
                cfg.paths[key] = kv.pop(key)
        if kv:
            raise ConfigError(f"unknown keys: {', '.join(sorted(kv))}")
        for a in cfg.agents:
            if a not in AGENTS:
                raise ConfigError(f"unknown agent {a!r}")
        if cfg.filter_mode not in ("auto", "explicit", "off"):
            raise ConfigError(f"filter must be auto, explicit or off, got {cfg.filter_mode!r}")
        try:
            cfg.features = FeatureConfig(**feat)
            cfg.prune = PruneConfig(**prune)
            cfg.train = TrainConfig(**train)
            cfg.model = ModelConfig(**model)
            cfg.round_config()
            cfg.pipeline()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return cfg


def load_config(path: Optional[str]) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(p))
    return ExperimentConfig.from_text(p.read_text())
