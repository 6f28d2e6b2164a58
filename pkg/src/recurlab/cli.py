"""Command-line front end.

Commands: lclt | recur2 | recur3 | gauss | mixing | certify-range.
Configuration comes from a flat ``key = value`` file plus flags (flags win).
Exit codes: 0 all assertions passed, 1 an assertion or bound was violated,
2 usage/config error. Outputs are deterministic given the config: JSON
reports with sorted keys, CSV with fixed column order, and the resolved
config embedded in every file.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Dict, Optional

from . import __version__
from .experiments import (
    exp_gaussian,
    exp_section2,
    exp_section3,
    mixing_probe,
    range_view_pool,
    section3_defaults,
)
from .fields import FieldSpec, default_k_max
from .gaussian import power_density_model, white_noise_model
from .pmf import lclt_deviation, walk_pmf
from .ranges import P_CUBE, P_SQUARE, certify_distinct, choose_k


class ConfigError(Exception):
    pass


# key -> (type, validator or None); validators raise ConfigError
def _positive(key):
    def check(v):
        if v <= 0:
            raise ConfigError(f"{key} must be positive, got {v}")
    return check


_COMMON = {
    "seed": int,
    "samples": int,
    "horizon": int,
    "out": str,
    "emit_plot_data": bool,
}

_SCHEMAS: Dict[str, Dict[str, type]] = {
    "lclt": {"n_grid": str, "k_max": int},
    "recur2": {"k_max": int, "zero": bool},
    "recur3": {"k": int, "pool_size": int, "k_max": int, "margin": float},
    "gauss": {"delta": float, "k": int, "c": int, "d": int, "mc": int,
              "white": bool},
    "mixing": {"M": int, "k_max": int, "zero": bool, "n_min": int},
    "certify-range": {"N": int, "C": int},
}

_DEFAULTS: Dict[str, Dict] = {
    "lclt": {"n_grid": "256,1024,4096,16384", "k_max": 0},
    "recur2": {"horizon": 2000, "samples": 1000, "k_max": 0, "zero": False},
    "recur3": {"horizon": 500, "samples": 1000, "k": 0, "pool_size": 150,
               "k_max": 0, "margin": 0.1},
    "gauss": {"delta": 0.3, "k": 2, "c": 1, "d": 1, "horizon": 64,
              "samples": 1000, "mc": 100_000, "white": False},
    "mixing": {"M": 5, "horizon": 4096, "samples": 100_000, "k_max": 0,
               "zero": False, "n_min": 64},
    "certify-range": {"N": 8, "C": 0, "samples": 1000},
}


def _parse_value(key: str, raw: str, typ: type):
    raw = raw.strip()
    try:
        if typ is bool:
            if raw.lower() in ("1", "true", "yes"):
                return True
            if raw.lower() in ("0", "false", "no"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r} (expected {typ.__name__})")


class RunConfig:
    def __init__(self, command: str, values: Dict):
        self.command = command
        self.values = values

    def __getitem__(self, key):
        return self.values[key]

    def resolved(self) -> Dict:
        # the output directory is where the report lands, not part of what
        # it reports; leaving it out keeps outputs byte-identical across
        # directories
        vals = {k: v for k, v in self.values.items() if k != "out"}
        return {"command": self.command, "version": __version__, **vals}


def parse_config(argv) -> RunConfig:
    parser = argparse.ArgumentParser(prog="recurlab", add_help=True)
    parser.add_argument("command", choices=sorted(_SCHEMAS))
    parser.add_argument("--config", default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--samples", type=int, default=None)
    parser.add_argument("--horizon", type=int, default=None)
    parser.add_argument("--emit-plot-data", action="store_true", default=None)
    parser.add_argument("--param", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="set a command-specific key")
    try:
        args = parser.parse_args(argv)
    except SystemExit:
        raise ConfigError("invalid command line")

    schema = {**_COMMON, **_SCHEMAS[args.command]}
    values: Dict = {"seed": 0, "out": ".", "emit_plot_data": False}
    values.update(_DEFAULTS[args.command])

    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} for {args.command}")
            values[key] = _parse_value(key, raw, schema[key])

    for flag in ("seed", "out", "samples", "horizon"):
        v = getattr(args, flag)
        if v is not None:
            if flag not in schema:
                raise ConfigError(f"unknown key {flag!r} for {args.command}")
            values[flag] = v
    if args.emit_plot_data:
        values["emit_plot_data"] = True
    for item in args.param:
        if "=" not in item:
            raise ConfigError(f"--param needs KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for {args.command}")
        values[key] = _parse_value(key, raw, schema[key])

    _validate(args.command, values)
    return RunConfig(args.command, values)


def _validate(command: str, v: Dict) -> None:
    for key in ("samples", "horizon", "mc", "pool_size", "n_min"):
        if key in v and v[key] <= 0:
            raise ConfigError(f"{key} must be positive, got {v[key]}")
    if command == "gauss":
        if not (0.0 < v["delta"] < 1.0):
            raise ConfigError(f"delta must lie in (0, 1), got {v['delta']}")
        if v["c"] == 0 or v["d"] == 0:
            raise ConfigError("c and d must be nonzero")
        if 2 * v["k"] * v["delta"] <= 1.0 and not v["white"]:
            raise ConfigError(
                f"summability needs 2*k*delta > 1, got {2 * v['k'] * v['delta']}")
    if command == "recur3" and v["k"] != 0 and v["k"] < 3:
        raise ConfigError(f"k must be 0 (auto) or >= 3, got {v['k']}")
    if command == "mixing" and v["M"] < 0:
        raise ConfigError("M must be >= 0")
    if command == "certify-range" and v["N"] < 1:
        raise ConfigError("N must be >= 1")


# ---------------------------------------------------------------------------
# output helpers


def _write(out_dir: str, name: str, text: str) -> Path:
    path = Path(out_dir) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _report(config: RunConfig, payload: Dict) -> str:
    return json.dumps({"config": config.resolved(), **payload},
                      sort_keys=True) + "\n"


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(x) if isinstance(x, float) else str(x)
                              for x in row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# command runners (each returns (exit_code, payload, plot_rows))


def _run_lclt(cfg: RunConfig) -> int:
    grid = []
    for tok in cfg["n_grid"].split(","):
        n = int(tok.strip())
        if n < 1:
            raise ConfigError(f"n_grid entries must be positive, got {n}")
        grid.append(n)
    k_max = cfg["k_max"] or default_k_max(max(grid))
    reports = []
    ok = True
    for n in grid:
        pmf, law = walk_pmf(FieldSpec(seed=cfg["seed"], dimension=1,
                                      k_max=k_max, doubling=False), n)
        rep = lclt_deviation(pmf, n)
        reports.append(rep)
        if abs(rep.mass - 1.0) > 1e-9 or rep.asymmetry > 0 or rep.peak > 1.0:
            ok = False
    peaks = [rep.peak for rep in reports]
    variation = (max(peaks) - min(peaks)) / max(peaks)
    if variation >= 0.5:
        ok = False
    payload = {
        "k_max": k_max,
        "grid": [{"n": r.n, "mass": r.mass, "asymmetry": r.asymmetry,
                  "peak": r.peak, "deviation": r.deviation} for r in reports],
        "peak_variation": variation,
        "pass": ok,
    }
    text = _report(cfg, payload)
    _write(cfg["out"], "lclt.json", text)
    if cfg["emit_plot_data"]:
        rows = [(r.n, r.peak, r.deviation) for r in reports]
        _write(cfg["out"], "lclt.csv", _csv(["n", "scaled_peak", "deviation"], rows))
    return 0 if ok else 1


def _run_recur2(cfg: RunConfig) -> int:
    k_max = cfg["k_max"] or default_k_max(cfg["horizon"])
    spec = FieldSpec(seed=cfg["seed"], dimension=1, k_max=k_max,
                     doubling=False, zero=cfg["zero"])
    bc, probe = exp_section2(spec, H=cfg["horizon"], samples=cfg["samples"],
                             seed0=cfg["seed"])
    ok = bc.verdict == "ok" and probe.violations == 0
    payload = {"report": json.loads(bc.to_json()),
               "probe": json.loads(probe.to_json()), "pass": ok}
    _write(cfg["out"], "report.json", _report(cfg, payload))
    rows = [(n + 1, float(bc.a_n[n]), float(bc.partial_sums[n]))
            for n in range(bc.H)]
    _write(cfg["out"], "decay.csv", _csv(["n", "a_n", "partial_sum"], rows))
    return 0 if ok else 1


def _run_recur3(cfg: RunConfig) -> int:
    H = cfg["horizon"]
    pool = range_view_pool(P_SQUARE, P_CUBE, N=H, size=cfg["pool_size"],
                           seed0=cfg["seed"], k_max=cfg["k_max"] or None)
    choice = section3_defaults(pool, margin=cfg["margin"])
    k = cfg["k"] or choice.k
    probe = exp_section3(pool, k=k, H=H, samples=cfg["samples"],
                         seed0=cfg["seed"])
    ok = probe.violations == 0 and probe.identity_failures == 0
    payload = {"k": k, "choose_k": json.loads(choice.to_json()),
               "probe": json.loads(probe.to_json()), "pass": ok}
    _write(cfg["out"], "recur3.json", _report(cfg, payload))
    return 0 if ok else 1


def _run_gauss(cfg: RunConfig) -> int:
    model = white_noise_model() if cfg["white"] else power_density_model(cfg["delta"])
    rep = exp_gaussian(model, k=cfg["k"], c=cfg["c"], d=cfg["d"],
                       H=cfg["horizon"], samples=cfg["samples"],
                       mc=cfg["mc"], seed0=cfg["seed"])
    ok = rep.verdict == "ok" and math.isfinite(rep.summability_total)
    payload = {"report": json.loads(rep.to_json()), "pass": ok}
    _write(cfg["out"], "gauss.json", _report(cfg, payload))
    if cfg["emit_plot_data"]:
        rows = [(n + 1, e) for n, e in enumerate(rep.estimates)]
        _write(cfg["out"], "gauss_decay.csv", _csv(["n", "estimate"], rows))
    return 0 if ok else 1


def _run_mixing(cfg: RunConfig) -> int:
    k_max = cfg["k_max"] or default_k_max(cfg["horizon"])
    spec = FieldSpec(seed=cfg["seed"], dimension=2, k_max=k_max,
                     doubling=True, zero=cfg["zero"])
    rep = mixing_probe(spec, M=cfg["M"], H=cfg["horizon"],
                       samples=cfg["samples"], n_min=cfg["n_min"],
                       seed0=cfg["seed"])
    ok = rep.decay_ok and rep.correlation_ok
    payload = {"report": json.loads(rep.to_json()), "pass": ok}
    _write(cfg["out"], "mixing.json", _report(cfg, payload))
    rows = list(zip(rep.n_grid, rep.box_probabilities))
    _write(cfg["out"], "boxes.csv", _csv(["n", "box_probability"], rows))
    return 0 if ok else 1


def _run_certify(cfg: RunConfig) -> int:
    C = cfg["C"] or None
    run = certify_distinct(seed0=cfg["seed"], N=cfg["N"], C=C,
                           samples=cfg["samples"])
    bounds_ok = all(log_mdk >= bound for _, log_mdk, bound in run.bound_checks)
    ok = (run.goal_failures == 0 and run.distinct_failures == 0 and bounds_ok)
    payload = {"report": json.loads(run.to_json()), "bounds_ok": bounds_ok,
               "pass": ok}
    _write(cfg["out"], "certify.json", _report(cfg, payload))
    return 0 if ok else 1


_RUNNERS = {
    "lclt": _run_lclt,
    "recur2": _run_recur2,
    "recur3": _run_recur3,
    "gauss": _run_gauss,
    "mixing": _run_mixing,
    "certify-range": _run_certify,
}


def dispatch(config: RunConfig) -> int:
    try:
        return _RUNNERS[config.command](config)
    except ConfigError:
        raise
    except ValueError as exc:
        # precondition violations surfaced by the engines are config errors
        raise ConfigError(str(exc))


def main(argv: Optional[list] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        config = parse_config(argv)
        return dispatch(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
