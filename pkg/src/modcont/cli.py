"""Command-line experiment runner.

Every subcommand reads a flat ``key = value`` config (``--config``), takes
``--set key=value`` overrides and writes CSV files into ``--out``.  Exit
codes: 0 success, 1 runtime error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import REQUIRED, SCHEMA, ConfigError, ExperimentConfig, load_config, parse_config
from .datagen import load_timeseries
from .metric import LabeledDataset, diameter, load_points

log = logging.getLogger("modcont")


def write_csv(path: Path, header, rows, cfg: ExperimentConfig):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_sha256={cfg.sha256()} seed={cfg['seed']}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])


def resolve_dataset(cfg: ExperimentConfig) -> LabeledDataset:
    if cfg.has("timeseries"):
        return load_timeseries(cfg["timeseries"])
    if cfg.has("sites") or cfg.has("values"):
        cfg.require("sites", "values")
        sites = load_points(cfg["sites"], cfg["site_metric"])
        values = load_points(cfg["values"], cfg["value_metric"])
        return LabeledDataset(sites, values)
    cfg.require("dataset")
    if not cfg["dataset"].startswith("toy-"):
        cfg.require("n")
    return ex.make_dataset(cfg["dataset"], cfg.get("n", 6), cfg["seed"], cfg["x0_index"])


def cmd_gen(cfg, out: Path):
    ds = ex.make_dataset(cfg["dataset"], cfg["n"], cfg["seed"], cfg["x0_index"])
    comment = f"config_sha256={cfg.sha256()} seed={cfg['seed']}"
    for name, ps in (("sites.csv", ds.sites), ("values.csv", ds.values)):
        path = out / name
        with open(path, "w") as fh:
            fh.write(f"# {comment}\n")
        _append_points(path, ps.coords)
    return ["sites.csv", "values.csv"]


def _append_points(path: Path, coords: np.ndarray):
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{c}" for c in range(coords.shape[1])])
        for row in coords:
            w.writerow([repr(float(v)) for v in row])


def cmd_modulus(cfg, out: Path):
    ds = resolve_dataset(cfg)
    mode = cfg["mode"]
    if mode == "fast":
        cfg.require("r", "T")
    elif mode != "exact":
        raise ConfigError(f"mode must be 'exact' or 'fast', got {mode!r}")
    if cfg.has("t_values"):
        ts = np.array(cfg["t_values"])
    else:
        t_max = cfg.get("t_max", cfg["T"] if cfg.has("T") else diameter(ds.sites))
        ts = ex.graded_grid(cfg["t_count"], t_max, cfg["t_min"])
    header, rows = ex.modulus_curve(ds, ts, mode, cfg["r"], cfg["R"], cfg["T"],
                                    cfg["inject_extremal"], cfg["leaf_max"])
    write_csv(out / "modulus.csv", header, rows, cfg)
    return ["modulus.csv"]


def cmd_cover(cfg, out: Path):
    ds = resolve_dataset(cfg)
    header, rows = ex.cover_rows(ds.sites, cfg["radius"], cfg["leaf_max"])
    write_csv(out / "cover.csv", header, rows, cfg)
    return ["cover.csv"]


def cmd_consistency(cfg, out: Path):
    header, rows = ex.consistency(cfg["target"], cfg["scheme"], cfg["n_values"],
                                  cfg["replicas"], cfg["seed"], cfg["quad_points"],
                                  cfg["quad_max"], cfg["threads"])
    write_csv(out / "consistency.csv", header, rows, cfg)
    return ["consistency.csv"]


def cmd_interp(cfg, out: Path):
    ds = resolve_dataset(cfg)
    header, rows = ex.interpolation_study(ds, cfg["replicas"], cfg["seed"], cfg["leaf_max"],
                                          cfg["r"], cfg["R"], cfg["threads"])
    write_csv(out / "interp.csv", header, rows, cfg)
    return ["interp.csv"]


def cmd_mlmc(cfg, out: Path):
    leaf_max = cfg["leaf_max"] if "leaf_max" in cfg.values else 1
    header, rows = ex.mlmc_study(cfg["field"], cfg["n_values"], cfg["replicas"], cfg["seed"],
                                 cfg["alpha"], cfg["c_uni"], cfg["q0_scale"], leaf_max,
                                 cfg["J"], cfg["threads"])
    write_csv(out / "mlmc.csv", header, rows, cfg)
    return ["mlmc.csv"]


COMMANDS = {"gen": cmd_gen, "modulus": cmd_modulus, "cover": cmd_cover,
            "consistency": cmd_consistency, "interp": cmd_interp, "mlmc": cmd_mlmc}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--threads", type=int, help="worker threads for replicas")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="modcont", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else parse_config("")
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, val = (s.strip() for s in item.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"--set: unknown key {key!r}")
        try:
            cfg.set(key, val)
        except ValueError as exc:
            raise ConfigError(f"--set: bad value for {key!r}: {exc}") from None
    for key in ("seed", "out", "threads"):
        val = getattr(args, key)
        if val is not None:
            cfg.set(key, val)
    exp = cfg["experiment"]
    if exp is not None and exp != args.command:
        line = cfg.lines.get("experiment")
        where = f" (line {line})" if line else ""
        raise ConfigError(f"config is for experiment {exp!r}{where}, not {args.command!r}")
    cfg.require(*REQUIRED[args.command])
    if cfg["threads"] < 1:
        raise ConfigError("threads must be positive")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve_config(args)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        written = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name in written:
        log.info("wrote %s", out / name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
