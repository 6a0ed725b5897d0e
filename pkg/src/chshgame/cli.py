"""Command-line experiment runner.

Subcommands
-----------
``simulate <config>``
    Play one game and write a snapshot CSV and/or a JSON summary.
``sweep <config> --grid <file> --seeds 1,2,3``
    Run the cartesian product of a parameter grid over several seeds.
``oracle``
    Print the exact constants of :mod:`chshgame.oracle` as JSON.
``verify <trajectory.csv>``
    Recompute the W process and all statistics of a stride-1 CSV from its move
    columns and compare.

Exit codes: 0 ok, 1 verification mismatch, 2 configuration or usage error,
3 protocol violation during play.

Configuration files are INI files with three sections::

    [run]
    protocol = closed
    rounds = 100000
    seed = 1
    snapshot_stride = 100
    output = both
    history_mode = summary

    [scientist]
    kind = forcing
    settings = uniform

    [nature]
    kind = quantum
    fill = uniform

Every policy kind has a fixed set of typed parameters (see ``SCIENTISTS`` and
``NATURES``); unknown keys are rejected and omitted keys take their defaults.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .core import QUADS, HiddenVariable
from .games import COLUMNS, ConsistencyViolation, InvalidBet, run_game
from .gtp import BettingDistribution, CapitalError, kt_log_capital, run_predictive_game
from .oracle import oracle_report
from .stats import snapshot_stats, w_closed_form
from .strategies import (
    FairNatureA,
    FixedBetScientist,
    FixedScientistA,
    ForcingScientist,
    IndependentNature,
    LocalityExploitNature,
    LocalityNature,
    LocalityScientists,
    MeasurementDependentNature,
    MixtureNature,
    OddsScientistB,
    QuantumNature,
    ReplayExhausted,
    ReplayNature,
    ScientistA,
    ScientistB,
    DeterministicNature,
    UniformStream,
    derive_seed,
)

__all__ = [
    "ConfigError",
    "RunConfig",
    "SCIENTISTS",
    "NATURES",
    "SCHEMA_VERSION",
    "parse_config",
    "emit_config",
    "load_config",
    "build_policies",
    "simulate",
    "summarize",
    "sweep",
    "verify",
    "main",
]

SCHEMA_VERSION = 1
EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_PROTOCOL = 0, 1, 2, 3


class ConfigError(ValueError):
    """Invalid configuration file or command-line usage."""


# -- typed parameter values -----------------------------------------------------

@dataclass(frozen=True)
class Param:
    """One typed policy parameter: ``kind`` in int, float, bool, choice,
    floats, hv (a ``+-`` string) or hvs (comma-separated ``+-`` strings)."""

    kind: str
    default: Any = None
    choices: tuple = ()
    required: bool = False

    def parse(self, text: str, where: str):
        text = text.strip()
        try:
            if self.kind == "int":
                return int(text)
            if self.kind == "float":
                return float(text)
            if self.kind == "bool":
                low = text.lower()
                if low not in ("true", "false"):
                    raise ValueError("expected true or false")
                return low == "true"
            if self.kind == "choice":
                if text not in self.choices:
                    raise ValueError(f"expected one of {', '.join(self.choices)}")
                return text
            if self.kind == "floats":
                return tuple(float(x) for x in text.split(","))
            if self.kind == "hv":
                HiddenVariable.parse(text)
                return text
            if self.kind == "hvs":
                items = tuple(x.strip() for x in text.split(",") if x.strip())
                for x in items:
                    HiddenVariable.parse(x)
                return items
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        raise AssertionError(self.kind)

    def emit(self, value) -> str:
        if self.kind == "bool":
            return "true" if value else "false"
        if self.kind == "float":
            return repr(float(value))
        if self.kind == "floats":
            return ", ".join(repr(float(x)) for x in value)
        if self.kind == "hvs":
            return ", ".join(value)
        return str(value)


_SETTING_POLICY = Param("choice", "uniform", ("uniform", "round_robin"))
_FILL = Param("choice", "uniform", ("uniform", "copy"))
_COMPONENT = ("quantum", "md_lhv", "independent", "deterministic")

SCIENTISTS: dict = {
    "closed": {
        "forcing": {"settings": _SETTING_POLICY},
        "fixed": {"settings": _SETTING_POLICY},
    },
    "locality": {
        "balancing": {
            "settings": _SETTING_POLICY,
            "a": Param("choice", "kt", ("kt", "flat")),
            "b": Param("choice", "balancing", ("balancing", "odds", "flat")),
        },
    },
    "predictive": {
        "kt": {"thrift": Param("bool", False)},
    },
}

NATURES: dict = {
    "closed": {
        "quantum": {"fill": _FILL},
        "md_lhv": {"fill": _FILL},
        "independent": {"weights": Param("floats")},
        "deterministic": {"lam": Param("hv", "++++")},
        "mixture": {
            "first": Param("choice", "quantum", _COMPONENT),
            "second": Param("choice", "independent", _COMPONENT),
            "weight": Param("float", 0.5),
            "fill": _FILL,
            "lam": Param("hv", "++++"),
        },
        "replay": {"moves": Param("hvs", required=True)},
    },
    "locality": {
        "locality": {
            "a": Param("choice", "fair", ("fair", "deterministic")),
            "b": Param("choice", "exploit", ("exploit", "deterministic", "replay")),
            "lam": Param("hv", "++++"),
            "moves": Param("hvs"),
        },
    },
    "predictive": {
        "iid": {"probs": Param("floats", required=True)},
    },
}

_RUN_KEYS = ("protocol", "rounds", "seed", "snapshot_stride", "output", "history_mode", "odds")


@dataclass(frozen=True)
class RunConfig:
    """A fully typed run description. Policy parameters include defaults."""

    protocol: str
    scientist: str
    nature: str
    rounds: int
    seed: int
    snapshot_stride: int = 100
    output: str = "both"
    history_mode: str = "summary"
    odds: Optional[tuple] = None
    scientist_params: dict = field(default_factory=dict)
    nature_params: dict = field(default_factory=dict)

    def echo(self) -> dict:
        """JSON-ready form of the configuration."""
        return {
            "protocol": self.protocol, "rounds": self.rounds, "seed": self.seed,
            "snapshot_stride": self.snapshot_stride, "output": self.output,
            "history_mode": self.history_mode,
            "odds": list(self.odds) if self.odds is not None else None,
            "scientist": {"kind": self.scientist, **_jsonable(self.scientist_params)},
            "nature": {"kind": self.nature, **_jsonable(self.nature_params)},
        }


def _jsonable(params: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in params.items()}


def _policy_params(schema: dict, section, where: str) -> dict:
    out = {}
    for key in section:
        if key != "kind" and key not in schema:
            raise ConfigError(f"[{where}] unknown parameter {key!r}")
    for key, p in schema.items():
        if key in section:
            out[key] = p.parse(section[key], f"[{where}] {key}")
        elif p.required:
            raise ConfigError(f"[{where}] missing required parameter {key!r}")
        elif p.default is not None:
            out[key] = p.default
    return out


def _validate(cfg: RunConfig) -> RunConfig:
    if cfg.rounds < 1:
        raise ConfigError("rounds must be >= 1")
    if cfg.snapshot_stride < 1:
        raise ConfigError("snapshot_stride must be >= 1")
    if not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if cfg.output not in ("csv", "json", "both"):
        raise ConfigError(f"output must be csv, json or both, got {cfg.output!r}")
    if cfg.history_mode not in ("full", "summary"):
        raise ConfigError(f"history_mode must be full or summary, got {cfg.history_mode!r}")
    if cfg.protocol not in SCIENTISTS:
        raise ConfigError(f"unknown protocol {cfg.protocol!r}")
    if cfg.scientist not in SCIENTISTS[cfg.protocol]:
        raise ConfigError(f"scientist kind {cfg.scientist!r} not available for protocol {cfg.protocol!r}")
    if cfg.nature not in NATURES[cfg.protocol]:
        raise ConfigError(f"nature kind {cfg.nature!r} not available for protocol {cfg.protocol!r}")
    if cfg.protocol == "predictive":
        if cfg.odds is None:
            raise ConfigError("predictive protocol needs [run] odds")
        probs = cfg.nature_params["probs"]
        if len(probs) != len(cfg.odds):
            raise ConfigError("nature probs and odds have different alphabet sizes")
        for name, vec in (("odds", cfg.odds), ("probs", probs)):
            try:
                BettingDistribution(vec)
            except ValueError as exc:
                raise ConfigError(f"{name}: {exc}") from None
    elif cfg.odds is not None:
        raise ConfigError("odds only apply to the predictive protocol")
    if cfg.nature == "independent" and "weights" in cfg.nature_params:
        w = np.asarray(cfg.nature_params["weights"])
        if w.shape != (16,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError("independent weights must be 16 nonnegative numbers summing to 1")
    if cfg.nature == "mixture" and not 0.0 <= cfg.nature_params["weight"] <= 1.0:
        raise ConfigError("mixture weight must lie in [0, 1]")
    if cfg.nature == "locality" and cfg.nature_params["b"] == "replay" and not cfg.nature_params.get("moves"):
        raise ConfigError("replay nature needs moves")
    return cfg


def parse_config(text: str) -> RunConfig:
    """Parse INI text into a validated :class:`RunConfig`."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    for name in ("run", "scientist", "nature"):
        if not cp.has_section(name):
            raise ConfigError(f"missing section [{name}]")
    extra = set(cp.sections()) - {"run", "scientist", "nature"}
    if extra:
        raise ConfigError(f"unknown sections: {', '.join(sorted(extra))}")
    run = cp["run"]
    for key in run:
        if key not in _RUN_KEYS:
            raise ConfigError(f"[run] unknown key {key!r}")
    for key in ("protocol", "rounds", "seed"):
        if key not in run:
            raise ConfigError(f"[run] missing {key!r}")
    protocol = run["protocol"].strip()
    if protocol not in SCIENTISTS:
        raise ConfigError(f"unknown protocol {protocol!r}")
    ints = {}
    for key, default in (("rounds", None), ("seed", None), ("snapshot_stride", 100)):
        ints[key] = Param("int").parse(run[key], f"[run] {key}") if key in run else default
    odds = Param("floats").parse(run["odds"], "[run] odds") if "odds" in run else None
    kinds = {}
    for role in ("scientist", "nature"):
        if "kind" not in cp[role]:
            raise ConfigError(f"[{role}] missing 'kind'")
        kinds[role] = cp[role]["kind"].strip()
    table = {"scientist": SCIENTISTS, "nature": NATURES}
    params = {}
    for role, kind in kinds.items():
        schema = table[role][protocol].get(kind)
        if schema is None:
            raise ConfigError(f"{role} kind {kind!r} not available for protocol {protocol!r}")
        params[role] = _policy_params(schema, cp[role], role)
    cfg = RunConfig(protocol, kinds["scientist"], kinds["nature"], ints["rounds"], ints["seed"],
                    ints["snapshot_stride"], run.get("output", "both").strip(),
                    run.get("history_mode", "summary").strip(), odds,
                    params["scientist"], params["nature"])
    return _validate(cfg)


def emit_config(cfg: RunConfig) -> str:
    """INI text that :func:`parse_config` maps back to ``cfg``."""
    lines = ["[run]", f"protocol = {cfg.protocol}", f"rounds = {cfg.rounds}", f"seed = {cfg.seed}",
             f"snapshot_stride = {cfg.snapshot_stride}", f"output = {cfg.output}",
             f"history_mode = {cfg.history_mode}"]
    if cfg.odds is not None:
        lines.append(f"odds = {Param('floats').emit(cfg.odds)}")
    for role, kind, params, schema in (
            ("scientist", cfg.scientist, cfg.scientist_params, SCIENTISTS),
            ("nature", cfg.nature, cfg.nature_params, NATURES)):
        lines += ["", f"[{role}]", f"kind = {kind}"]
        param_schema = schema[cfg.protocol][kind]
        for key, value in params.items():
            lines.append(f"{key} = {param_schema[key].emit(value)}")
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text)


# -- policy construction --------------------------------------------------------

def _closed_component(kind: str, params: dict):
    if kind == "quantum":
        return QuantumNature(params.get("fill", "uniform"))
    if kind == "md_lhv":
        return MeasurementDependentNature(params.get("fill", "uniform"))
    if kind == "independent":
        return IndependentNature(params.get("weights"))
    if kind == "deterministic":
        return DeterministicNature(HiddenVariable.parse(params.get("lam", "++++")))
    raise ConfigError(f"unknown nature component {kind!r}")


def build_policies(cfg: RunConfig):
    """Fresh (scientist, nature) policy objects for a closed or locality run."""
    sp, np_ = cfg.scientist_params, cfg.nature_params
    if cfg.protocol == "closed":
        sci = (ForcingScientist(sp["settings"]) if cfg.scientist == "forcing"
               else FixedBetScientist(settings=sp["settings"]))
        if cfg.nature == "mixture":
            nat = MixtureNature(_closed_component(np_["first"], np_), _closed_component(np_["second"], np_),
                                np_["weight"])
        elif cfg.nature == "replay":
            nat = ReplayNature(np_["moves"])
        else:
            nat = _closed_component(cfg.nature, np_)
        return sci, nat
    if cfg.protocol == "locality":
        a = ScientistA(sp["settings"]) if sp["a"] == "kt" else FixedScientistA(sp["settings"])
        b = ScientistB() if sp["b"] == "balancing" else OddsScientistB(sp["b"])
        lam = HiddenVariable.parse(np_["lam"])
        na = FairNatureA() if np_["a"] == "fair" else DeterministicNature(lam)
        if np_["b"] == "exploit":
            nb = LocalityExploitNature()
        elif np_["b"] == "deterministic":
            nb = DeterministicNature(lam)
        else:
            nb = ReplayNature(np_["moves"])
        return LocalityScientists(a, b), LocalityNature(na, nb)
    raise ConfigError(f"protocol {cfg.protocol!r} has no game policies")


# -- running --------------------------------------------------------------------

class ProtocolViolation(RuntimeError):
    def __init__(self, message: str, round: Optional[int] = None):
        super().__init__(message)
        self.round = round


_VIOLATIONS = (ConsistencyViolation, InvalidBet, ReplayExhausted, CapitalError)


def _predictive_columns(cfg: RunConfig) -> dict:
    odds = BettingDistribution(cfg.odds)
    probs = np.asarray(cfg.nature_params["probs"])
    stream = UniformStream(derive_seed("nature", cfg.seed))
    cum = np.cumsum(probs)
    reality = np.minimum(np.searchsorted(cum, stream.take(cfg.rounds), side="right"), len(probs) - 1)
    traj = run_predictive_game(odds, reality, cfg.rounds, thrift=cfg.scientist_params["thrift"])
    n = np.arange(1, cfg.rounds + 1)
    pick = (n % cfg.snapshot_stride == 0) | (n == cfg.rounds)
    m = int(pick.sum())
    cols = {name: np.full(m, math.nan) for name in COLUMNS[6:]}
    cols["n"] = n[pick]
    cols["omega_A"] = traj.symbols[pick]
    cols["logK_A"] = traj.total_log[pick]
    for name in ("s", "t", "omega_B", "lambda"):
        cols[name] = None
    final_counts = traj.counts[-1]
    extra = {"counts": final_counts.tolist(),
             "frequencies": (final_counts / cfg.rounds).tolist(),
             "locked_log": float(traj.locked_log[-1])}
    return {"columns": cols, "extra": extra}


def run_config(cfg: RunConfig) -> dict:
    """Play the configured run. Returns the snapshot columns and extra summary data."""
    if cfg.protocol == "predictive":
        return _predictive_columns(cfg)
    sci, nat = build_policies(cfg)
    try:
        traj = run_game(cfg.protocol, sci, nat, cfg.rounds, cfg.seed, cfg.snapshot_stride, cfg.history_mode)
    except _VIOLATIONS as exc:
        rnd = getattr(exc, "round", None)
        raise ProtocolViolation(f"{type(exc).__name__}: {exc}", rnd) from exc
    final = traj.final
    extra = {"setting_counts": final.counts.setting_counts.tolist()}
    if cfg.protocol == "closed":
        extra.update(max_logK_AB=final.max_logK_AB, max_logW_AB=final.max_logW_AB)
    else:
        extra.update(max_logK_A=final.max_logK_A, max_logK_B=final.max_logK_B)
    return {"columns": traj.columns, "extra": extra}


def _fmt(name: str, value) -> str:
    if value is None:
        return ""
    if name == "lambda":
        return str(value)
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else repr(float(value))
    return str(int(value))


def write_csv(columns: dict, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(COLUMNS)
    m = len(columns["n"])
    for i in range(m):
        w.writerow([_fmt(c, None if columns[c] is None else columns[c][i]) for c in COLUMNS])


def growth_rate(n: np.ndarray, y: np.ndarray) -> Optional[float]:
    """Least-squares slope of ``y`` against ``n`` over the last half of the snapshots."""
    n = np.asarray(n, dtype=float)
    y = np.asarray(y, dtype=float)
    half = slice(len(n) // 2, None)
    n, y = n[half], y[half]
    ok = np.isfinite(y)
    n, y = n[ok], y[ok]
    if len(n) < 2 or np.ptp(n) == 0:
        return None
    nc = n - n.mean()
    return float(np.dot(nc, y - y.mean()) / np.dot(nc, nc))


def summarize(cfg: RunConfig, result: dict) -> dict:
    cols = result["columns"]
    final = {}
    for c in COLUMNS:
        if cols[c] is None:
            final[c] = None
            continue
        v = cols[c][-1]
        if c == "lambda":
            final[c] = str(v)
        elif isinstance(v, (float, np.floating)):
            final[c] = None if math.isnan(v) else float(v)
        else:
            final[c] = int(v)
    rates, per_round = {}, {}
    for c in ("logK_A", "logK_B", "logK_AB", "logW_AB"):
        if final[c] is not None:
            rates[c] = growth_rate(cols["n"], cols[c])
            per_round[c] = final[c] / final["n"]
    return {
        "schema_version": SCHEMA_VERSION,
        "columns": list(COLUMNS),
        "protocol": cfg.protocol,
        "rounds": cfg.rounds,
        "seed": cfg.seed,
        "snapshots": int(len(cols["n"])),
        "final": final,
        "growth_rate": rates,
        "final_per_round": per_round,
        **result["extra"],
        "config": cfg.echo(),
    }


def simulate(cfg: RunConfig, out_dir, stem: str = "run") -> dict:
    """Run ``cfg`` and write ``<stem>.csv`` and/or ``<stem>.json`` into ``out_dir``."""
    result = run_config(cfg)
    summary = summarize(cfg, result)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.output in ("csv", "both"):
        with open(out / f"{stem}.csv", "w", newline="") as fh:
            write_csv(result["columns"], fh)
    if cfg.output in ("json", "both"):
        (out / f"{stem}.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


# -- sweeps ---------------------------------------------------------------------

def parse_grid(text: str) -> list:
    """Grid file: a ``[grid]`` section whose keys are ``section.key`` and
    values comma-separated alternatives (``|``-separated if a value itself
    contains commas). Returns the list of grid points."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed grid: {exc}") from None
    if not cp.has_section("grid") or not list(cp["grid"]):
        raise ConfigError("parameter grid is empty")
    axes = []
    for key in cp["grid"]:
        if "." not in key or key.split(".", 1)[0] not in ("run", "scientist", "nature"):
            raise ConfigError(f"grid key {key!r} must look like run.x, scientist.x or nature.x")
        values = [v.strip() for v in cp["grid"][key].split("|" if "|" in cp["grid"][key] else ",")]
        values = [v for v in values if v]
        if not values:
            raise ConfigError(f"grid key {key!r} has no values")
        axes.append([(key, v) for v in values])
    return [dict(point) for point in itertools.product(*axes)]


def apply_point(base_text: str, point: dict, seed: int) -> RunConfig:
    """Override keys of a base INI text and parse it. Changing ``kind`` drops
    the other parameters of that section."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_string(base_text)
    for key, value in point.items():
        section, name = key.split(".", 1)
        if name == "kind" and cp[section].get("kind", "").strip() != value:
            for k in list(cp[section]):
                del cp[section][k]
        cp[section][name] = value
    cp["run"]["seed"] = str(seed)
    buf = io.StringIO()
    cp.write(buf)
    return parse_config(buf.getvalue())


def _sweep_cell(args) -> dict:
    base_text, point, seed = args
    row = {"point": point, "seed": seed, "status": "ok", "error": None}
    try:
        cfg = apply_point(base_text, point, seed)
        summary = summarize(cfg, run_config(cfg))
        row["rounds"] = cfg.rounds
        row["final"] = {k: summary["final"][k] for k in ("logK_A", "logK_B", "logK_AB", "logW_AB",
                                                          "kl_independence", "S_n", "max_cell_freq_error")}
        row["rate"] = summary["final_per_round"]
        row["growth_rate"] = summary["growth_rate"]
    except ConfigError as exc:
        row.update(status="config_error", error=str(exc))
    except ProtocolViolation as exc:
        row.update(status="protocol_violation", error=str(exc), round=exc.round)
    except Exception as exc:  # reported per cell, the sweep carries on
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
    return row


def sweep(base_text: str, grid: list, seeds: Sequence[int], jobs: int = 1) -> dict:
    """Run every (grid point, seed) cell. Rows come back in grid-then-seed order."""
    if not grid:
        raise ConfigError("parameter grid is empty")
    if not seeds:
        raise ConfigError("no seeds given")
    parse_config(base_text)
    cells = [(base_text, point, seed) for point in grid for seed in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    aggregates = []
    for point in grid:
        mine = [r for r in rows if r["point"] == point]
        ok = [r for r in mine if r["status"] == "ok"]
        agg = {"point": point, "cells": len(mine), "failures": len(mine) - len(ok), "rate": {}}
        for key in ("logK_A", "logK_B", "logK_AB", "logW_AB"):
            vals = [r["rate"][key] for r in ok if key in r["rate"]]
            if vals:
                agg["rate"][key] = {"mean": float(np.mean(vals)), "min": float(np.min(vals)),
                                    "max": float(np.max(vals))}
        aggregates.append(agg)
    return {"schema_version": SCHEMA_VERSION, "rows": rows, "aggregates": aggregates}


def write_sweep_csv(result: dict, stream) -> None:
    keys = sorted({k for r in result["rows"] for k in r["point"]})
    rate_keys = ("logK_A", "logK_B", "logK_AB", "logW_AB")
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(keys + ["seed", "status", "error"] + [f"rate_{k}" for k in rate_keys]
               + [f"slope_{k}" for k in rate_keys])
    for r in result["rows"]:
        rate = r.get("rate", {})
        slope = r.get("growth_rate", {})
        w.writerow([r["point"].get(k, "") for k in keys] + [r["seed"], r["status"], r["error"] or ""]
                   + [_fmt("", rate.get(k)) for k in rate_keys]
                   + [_fmt("", slope.get(k)) for k in rate_keys])


# -- verification ---------------------------------------------------------------

def read_csv(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != COLUMNS:
            raise ConfigError(f"{path}: header does not match the trajectory schema")
        rows = list(reader)
    cols = {}
    for j, name in enumerate(COLUMNS):
        raw = [r[j] for r in rows]
        if name == "lambda":
            cols[name] = raw
        else:
            cols[name] = np.array([float(x) if x != "" else math.nan for x in raw])
    return cols


def _close(a: np.ndarray, b: np.ndarray, rel: float, abs_: float) -> np.ndarray:
    both_nan = np.isnan(a) & np.isnan(b)
    return both_nan | (np.abs(a - b) <= abs_ + rel * np.abs(b))


def verify(cols: dict, odds: Optional[Sequence[float]] = None, chunk: int = 8192) -> list:
    """Recompute everything derivable from the move columns of a stride-1
    trajectory. Returns a list of mismatch messages (empty when all agree)."""
    n = cols["n"]
    m = len(n)
    if m == 0:
        return ["trajectory has no rows"]
    if not np.array_equal(n, np.arange(1, m + 1)):
        raise ConfigError("verify needs a stride-1 trajectory (n = 1, 2, 3, ...)")
    problems = []
    has = {c: bool(np.isfinite(cols[c]).any()) for c in ("logK_A", "logK_B", "logK_AB", "logW_AB")}
    if not any(cols["lambda"]):
        # predictive game: only the capital can be checked, and only against given odds
        if odds is None:
            return problems
        sym = cols["omega_A"].astype(np.int64)
        counts = np.cumsum(np.eye(len(odds), dtype=np.int64)[sym], axis=0)
        expect = np.array([kt_log_capital(c, odds) for c in counts])
        bad = ~_close(cols["logK_A"], expect, 1e-8, 1e-8)
        if bad.any():
            problems.append(f"logK_A differs from the add-half closed form at n={int(n[bad.argmax()])}")
        return problems
    try:
        lam = np.array([HiddenVariable.parse(x).index for x in cols["lambda"]], dtype=np.int64)
    except ValueError as exc:
        return [f"bad lambda entry: {exc}"]
    s = cols["s"].astype(np.int64)
    t = cols["t"].astype(np.int64)
    if np.any((s < 1) | (s > 2) | (t < 3) | (t > 4)):
        return ["setting columns out of range"]
    u = 2 * (s - 1) + (t - 3)
    for name, coord in (("omega_A", s), ("omega_B", t)):
        bad = QUADS[lam, coord - 1] != cols[name]
        if bad.any():
            problems.append(f"{name} is not the hidden variable's coordinate at n={int(n[bad.argmax()])}")
    cell = lam * 4 + u
    running = np.zeros(64, dtype=np.int64)
    first_bad = {}
    for start in range(0, m, chunk):
        stop = min(start + chunk, m)
        onehot = np.zeros((stop - start, 64), dtype=np.int64)
        onehot[np.arange(stop - start), cell[start:stop]] = 1
        cum = np.cumsum(onehot, axis=0) + running
        running = cum[-1].copy()
        tables = cum.reshape(-1, 16, 4)
        st = snapshot_stats(tables)
        recomputed = {"S_n": st["S"], "max_cell_freq_error": st["max_cell_freq_error"]}
        for j, name in enumerate(("C13", "C14", "C23", "C24")):
            recomputed[name] = st["C"][:, j]
        if has["logW_AB"]:
            recomputed["kl_independence"] = st["kl_independence"]
            recomputed["logW_AB"] = np.array([w_closed_form(tb) for tb in tables])
        for name, arr in recomputed.items():
            if name in first_bad:
                continue
            rel, abs_ = (1e-8, 1e-8) if name == "logW_AB" else (1e-9, 1e-9)
            bad = ~_close(cols[name][start:stop], arr, rel, abs_)
            if bad.any():
                first_bad[name] = int(n[start + bad.argmax()])
    for name, at in first_bad.items():
        problems.append(f"{name} disagrees with the recomputed value at n={at}")
    return problems


# -- entry point ----------------------------------------------------------------

def _parse_seeds(text: str) -> list:
    try:
        seeds = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad seed list {text!r}") from None
    if not seeds or any(not 0 <= x < 2 ** 64 for x in seeds):
        raise ConfigError("seeds must be a nonempty list of 64-bit unsigned integers")
    return seeds


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chshgame", description="Betting games for CHSH experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", help="play one configured game")
    s.add_argument("config")
    s.add_argument("--out-dir", default=".")
    s.add_argument("--stem", default=None, help="output file stem (default: config file stem)")
    w = sub.add_parser("sweep", help="run a parameter grid over several seeds")
    w.add_argument("config")
    w.add_argument("--grid", required=True)
    w.add_argument("--seeds", required=True)
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("--out", default=None, help="JSON output path (default: stdout)")
    w.add_argument("--csv", default=None, help="optional per-cell CSV output path")
    o = sub.add_parser("oracle", help="print exact constants as JSON")
    o.add_argument("--out", default=None)
    v = sub.add_parser("verify", help="recompute statistics of a stride-1 trajectory CSV")
    v.add_argument("trajectory")
    v.add_argument("--odds", default=None, help="odds of a predictive run, comma separated")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        if args.command == "simulate":
            cfg = load_config(args.config)
            stem = args.stem or Path(args.config).stem
            try:
                summary = simulate(cfg, args.out_dir, stem)
            except ProtocolViolation as exc:
                where = f" at round {exc.round}" if exc.round is not None else ""
                print(f"protocol violation{where}: {exc}", file=sys.stderr)
                return EXIT_PROTOCOL
            print(json.dumps({"final": summary["final"], "growth_rate": summary["growth_rate"]},
                             sort_keys=True))
            return EXIT_OK
        if args.command == "sweep":
            base = Path(args.config).read_text()
            grid = parse_grid(Path(args.grid).read_text())
            result = sweep(base, grid, _parse_seeds(args.seeds), args.jobs)
            text = json.dumps(result, indent=2, sort_keys=True) + "\n"
            if args.out:
                Path(args.out).write_text(text)
            else:
                sys.stdout.write(text)
            if args.csv:
                with open(args.csv, "w", newline="") as fh:
                    write_sweep_csv(result, fh)
            return EXIT_OK
        if args.command == "oracle":
            text = json.dumps(oracle_report(), indent=2, sort_keys=True) + "\n"
            if args.out:
                Path(args.out).write_text(text)
            else:
                sys.stdout.write(text)
            return EXIT_OK
        if args.command == "verify":
            odds = Param("floats").parse(args.odds, "--odds") if args.odds else None
            problems = verify(read_csv(args.trajectory), odds)
            for msg in problems:
                print(msg, file=sys.stderr)
            if problems:
                return EXIT_VERIFY
            print("ok")
            return EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    raise AssertionError(args.command)


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
