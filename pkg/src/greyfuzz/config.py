"""Campaign configuration and its INI file form."""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class CampaignConfig:
    program: str = "magic_deep"  # builtin name or path to a program file
    seeds: list = field(default_factory=list)  # seed file paths; empty means one all-zero input
    iterations: int = 1000
    max_executions: int | None = None
    rng_seed: int = 0
    label_seed: int | None = None  # defaults to rng_seed
    m: int = 4
    map_bits: int = 16
    switch_every: int = 10000  # iterations between label switches; 0 disables
    flush: bool = True
    flush_every: int = 5000
    flush_window: int = 1000
    inner_budget: int = 64
    taint_repeats: int = 2
    fti_threshold: int = 64
    fti_values: int = 1
    ga_population: int = 32
    ga_tournament: int = 4
    ga_elitism: int = 1
    ga_position_generations: int = 3
    ga_invert_generations: int = 8
    gamma: float = 0.99
    c: float = math.sqrt(2)
    xi: float = 1.0
    baseline: bool = False
    baseline_dataflow: bool = False
    recompute_cap: int | None = None
    strategies: list = field(default_factory=list)  # restrict mutation arms; empty means all

    def validate(self) -> "CampaignConfig":
        checks = [
            (self.iterations >= 0, "iterations must be >= 0"),
            (self.max_executions is None or self.max_executions >= 0, "max_executions must be >= 0"),
            (self.m >= 1, "m must be >= 1"),
            (1 <= self.map_bits <= 24, "map_bits must lie in 1..24"),
            (self.switch_every >= 0, "switch_every must be >= 0"),
            (self.flush_every >= 1, "flush_every must be >= 1"),
            (0 < self.flush_window < self.flush_every, "flush_window must lie in 1..flush_every-1"),
            (self.inner_budget >= 0, "inner_budget must be >= 0"),
            (self.taint_repeats >= 1, "taint_repeats must be >= 1"),
            (self.fti_values >= 1, "fti_values must be >= 1"),
            (self.ga_population >= 2, "ga_population must be >= 2"),
            (1 <= self.ga_tournament <= self.ga_population, "ga_tournament out of range"),
            (0 <= self.ga_elitism < self.ga_population, "ga_elitism out of range"),
            (0 < self.gamma <= 1, "gamma must lie in (0, 1]"),
            (self.c >= 0, "c must be >= 0"),
            (self.recompute_cap is None or self.recompute_cap >= 0, "recompute_cap must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        from .mutators import STRATEGIES

        bad = [s for s in self.strategies if s not in STRATEGIES]
        if bad:
            raise ConfigError(f"unknown strategies: {', '.join(bad)}")
        return self

    def replace(self, **changes) -> "CampaignConfig":
        return dataclasses.replace(self, **changes)


def _convert(f: dataclasses.Field, raw: str):
    kind = str(f.type)
    raw = raw.strip()
    if kind.startswith("list"):
        return [item.strip() for item in raw.split(",") if item.strip()]
    if raw.lower() in ("none", "") and "None" in kind:
        return None
    if kind.startswith("bool"):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{f.name}: expected a boolean, got {raw!r}")
    try:
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{f.name}: cannot parse {raw!r}") from None
    return raw


def load_config(path, **overrides) -> CampaignConfig:
    """Read a ``[campaign]`` section of ``key = value`` lines."""
    parser = configparser.ConfigParser()
    text = Path(path).read_text()
    parser.read_string(text)
    if not parser.has_section("campaign"):
        raise ConfigError(f"{path}: missing [campaign] section")
    fields = {f.name: f for f in dataclasses.fields(CampaignConfig)}
    values = {}
    for key, raw in parser.items("campaign"):
        if key not in fields:
            raise ConfigError(f"{path}: unknown key {key!r}")
        values[key] = _convert(fields[key], raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return CampaignConfig(**values).validate()


def dump_config(config: CampaignConfig) -> str:
    lines = ["[campaign]"]
    for f in dataclasses.fields(config):
        v = getattr(config, f.name)
        if isinstance(v, list):
            v = ", ".join(map(str, v))
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
