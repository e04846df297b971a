"""Flat ``key = value`` experiment configuration.

Grammar, one entry per line::

    # comment                      (also allowed after a value)
    key = value
    key = 1, 2, 3                  list
    key = 5:30:5                   inclusive range start:stop:step
    key = 1:29:1 \\ 5:30:5         range minus another list or range

Unknown keys, repeated keys and values of the wrong type raise
:class:`ConfigError` naming the line.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError

MODELS = ("sir", "seir", "custom")
METHODS = ("jgdla", "em", "em-ind", "ode")


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "sir"
    network_file: str | None = None
    theta: tuple[float, ...] = (0.5, 0.15)
    N: int = 1000
    N_grid: tuple[int, ...] = (100, 300, 500, 1000)
    x0: tuple[float, ...] = (0.95, 0.05)
    t_end: float = 30.0
    obs_times: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    pred_times: tuple[float, ...] = tuple(float(t) for t in range(1, 30) if t % 5)
    record_times: tuple[float, ...] = tuple(float(t) for t in range(31))
    method: str = "jgdla"
    methods: tuple[str, ...] = ("ode", "jgdla", "em", "em-ind")
    simulator: str = "gillespie"
    sim_dt: float = 0.01
    h: float = 0.1
    em_dt: float = 1.0
    mcmc_iter: int | None = None
    burn_in: int | None = None
    prop_sd_theta: float = 0.02
    prop_sd_latent: float = 0.005
    mc_samples: int = 1000
    seed: int = 0
    n_seeds: int = 20
    data: str | None = None
    truth: str | None = None
    prediction: str | None = None
    artifact: str | None = None
    out: str = "out"
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.model == "custom" and not self.network_file:
            raise ConfigError("model = custom needs network_file")
        for m in (self.method, *self.methods):
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
        if self.N < 1 or any(n < 1 for n in self.N_grid):
            raise ConfigError("population sizes must be positive")
        if set(np.round(self.obs_times, 9)) & set(np.round(self.pred_times, 9)):
            raise ConfigError("obs_times and pred_times overlap")
        late = [t for t in (*self.obs_times, *self.pred_times) if t > self.t_end + 1e-9]
        if late:
            raise ConfigError(f"times {late} exceed t_end={self.t_end}")
        if self.simulator not in ("gillespie", "em"):
            raise ConfigError("simulator must be gillespie or em")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out.pop("source")
        return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}


def _scalar(text: str, kind):
    if kind is str:
        return text
    if kind is int:
        value = float(text)
        if value != int(value):
            raise ValueError(f"{text!r} is not an integer")
        return int(value)
    return kind(text)


def _range(text: str) -> list[float]:
    parts = [float(p) for p in text.split(":")]
    if len(parts) != 3 or parts[2] <= 0:
        raise ValueError(f"range {text!r} needs start:stop:step with step > 0")
    start, stop, step = parts
    n = int(np.floor((stop - start) / step + 1e-9))
    return [round(start + k * step, 12) for k in range(n + 1)]


def _items(text: str) -> list[str]:
    out: list = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            raise ValueError("empty list item")
        out.extend(_range(item) if ":" in item else [item])
    return out


def _sequence(text: str, kind):
    keep, _, drop = text.partition("\\")
    values = [_scalar(str(v), kind) for v in _items(keep)]
    if drop.strip():
        removed = {_scalar(str(v), kind) for v in _items(drop)}
        values = [v for v in values if v not in removed]
    return tuple(values)


def _field_kinds() -> dict[str, tuple[type, bool]]:
    kinds = {}
    for f in dataclasses.fields(ExperimentConfig):
        if f.name == "source":
            continue
        t = str(f.type)
        kind = int if "int" in t else float if "float" in t else str
        kinds[f.name] = (kind, t.startswith("tuple"))
    return kinds


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    kinds = _field_kinds()
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        where = f"{source}, line {lineno}"
        if not sep or not key:
            raise ConfigError(f"{where}: expected 'key = value'")
        if key not in kinds:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{where}: {key!r} given twice")
        if not value:
            raise ConfigError(f"{where}: {key!r} has no value")
        kind, is_seq = kinds[key]
        try:
            values[key] = _sequence(value, kind) if is_seq else _scalar(value, kind)
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None
    try:
        return ExperimentConfig(source=source, **values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))
