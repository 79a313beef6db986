"""Scenario files (TOML).

Layout::

    out = "results.csv"          # optional
    workers = 1                  # optional

    [scenario]                   # SystemParams fields; gamma_db is the SNR grid
    N = 10
    tau = 0.1
    gamma_db = [0, 5, 10, 15, 20, 25, 30]

    [solve]
    out = "policy.json"

    [run]
    sweep = "ber"                # ber | efficiency | objective
    strategies = ["rs_osr", "rs_all"]
    N_list = [5, 10, 25, 50]     # efficiency sweep only
    window_db = [20, 30]         # optional diversity fit
    estimator = "sd_avg"
    policy = "policy.json"       # optional, otherwise solved on the fly

    [validate]
    policy = "policy.json"       # optional
    trials = 20000
    probes = 20

Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .params import SystemParams

SWEEPS = ("ber", "efficiency", "objective")


class ConfigError(ValueError):
    """Bad scenario file; ``line`` is 1-based when it can be located."""

    def __init__(self, message: str, path=None, line: Optional[int] = None, field: Optional[str] = None):
        self.path, self.line, self.field = path, line, field
        where = str(path) if path is not None else "<config>"
        if line is not None:
            where += f":{line}"
        if field is not None:
            where += f": {field}"
        super().__init__(f"{where}: {message}")


@dataclass
class SolveBlock:
    out: Optional[str] = None


@dataclass
class RunBlock:
    sweep: str = "ber"
    strategies: list = field(default_factory=lambda: ["rs_osr", "rs_all"])
    N_list: list = field(default_factory=lambda: [5, 10, 15, 20, 25, 30, 40, 50])
    window_db: Optional[list] = None
    estimator: str = "sd_avg"
    policy: Optional[str] = None


@dataclass
class ValidateBlock:
    policy: Optional[str] = None
    trials: int = 20_000
    probes: int = 20


@dataclass
class ScenarioConfig:
    params: SystemParams = field(default_factory=SystemParams)
    solve: SolveBlock = field(default_factory=SolveBlock)
    run: RunBlock = field(default_factory=RunBlock)
    validate: ValidateBlock = field(default_factory=ValidateBlock)
    out: Optional[str] = None
    workers: int = 1


_SCENARIO_KEYS = {"N", "tau", "r", "q1", "q2", "gamma_db", "modulation", "trials", "seed"}
_BLOCKS = {"solve": SolveBlock, "run": RunBlock, "validate": ValidateBlock}
_TOP_KEYS = {"out", "workers", "scenario", *_BLOCKS}


def _line_of(text: str, key: str, section: Optional[str] = None) -> Optional[int]:
    lines = text.splitlines()
    start = 0
    if section is not None:
        hdr = re.compile(r"^\s*\[\s*" + re.escape(section) + r"\s*\]")
        start = next((i for i, ln in enumerate(lines) if hdr.match(ln)), 0)
        if key is None:
            return start + 1
    pat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    for i in range(start, len(lines)):
        if pat.match(lines[i]):
            return i + 1
    return None


def _check_keys(table: dict, allowed, text, path, section):
    for key in table:
        if key not in allowed:
            name = f"{section}.{key}" if section else key
            raise ConfigError(f"unknown key {key!r}", path, _line_of(text, key, section), name)


def parse_config(text: str, path=None) -> ScenarioConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", path, int(m.group(1)) if m else None) from None

    _check_keys(doc, _TOP_KEYS, text, path, None)
    cfg = ScenarioConfig()

    scen = doc.get("scenario", {})
    if not isinstance(scen, dict):
        raise ConfigError("[scenario] must be a table", path, _line_of(text, "scenario"), "scenario")
    _check_keys(scen, _SCENARIO_KEYS, text, path, "scenario")
    kwargs = {k: v for k, v in scen.items() if k != "gamma_db"}
    if "gamma_db" in scen:
        kwargs["gamma_db_list"] = scen["gamma_db"]
    try:
        cfg.params = SystemParams(**kwargs)
    except (ValueError, TypeError) as exc:
        bad = next((k for k in scen if k in str(exc) or k.replace("_db", "_db_list") in str(exc)), None)
        line = _line_of(text, bad, "scenario") if bad else _line_of(text, None, "scenario")
        raise ConfigError(str(exc), path, line, f"scenario.{bad}" if bad else "scenario") from None

    for name, cls in _BLOCKS.items():
        block = doc.get(name, {})
        if not isinstance(block, dict):
            raise ConfigError(f"[{name}] must be a table", path, _line_of(text, name), name)
        _check_keys(block, cls.__dataclass_fields__, text, path, name)
        defaults = cls()
        for key, value in block.items():
            want = type(getattr(defaults, key))
            if getattr(defaults, key) is not None and not isinstance(value, want) or isinstance(value, bool):
                raise ConfigError(f"expected {want.__name__}, got {type(value).__name__}", path,
                                  _line_of(text, key, name), f"{name}.{key}")
        setattr(cfg, name, cls(**block))

    if cfg.run.sweep not in SWEEPS:
        raise ConfigError(f"sweep must be one of {SWEEPS}", path, _line_of(text, "sweep", "run"), "run.sweep")
    if cfg.run.window_db is not None and len(cfg.run.window_db) != 2:
        raise ConfigError("window_db needs two values", path, _line_of(text, "window_db", "run"), "run.window_db")
    cfg.out = doc.get("out")
    cfg.workers = doc.get("workers", 1)
    if not isinstance(cfg.workers, int) or cfg.workers < 1:
        raise ConfigError("workers must be a positive integer", path, _line_of(text, "workers"), "workers")
    return cfg


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    return parse_config(text, path)
