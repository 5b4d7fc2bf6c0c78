"""Flat ``key = value`` experiment configuration files."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any, Callable


class ConfigError(ValueError):
    """Invalid configuration (exit code 2 in the CLI)."""


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> list:
    return [float(v) for v in s.replace(",", " ").split()]


def _ints(s: str) -> list:
    return [int(v) for v in s.replace(",", " ").split()]


# key -> (parser, default); a default of None means "no default"
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "experiment": (str, None),
    "seed": (int, 0),
    "out": (str, "."),
    "threads": (int, 1),
    "replicas": (int, 10),
    "leaf_max": (int, 32),
    # data sources
    "dataset": (str, None),
    "n": (int, None),
    "x0_index": (int, 0),
    "sites": (str, None),
    "values": (str, None),
    "timeseries": (str, None),
    "site_metric": (str, "euclidean"),
    "value_metric": (str, "absolute"),
    # modulus
    "mode": (str, "exact"),
    "r": (float, None),
    "R": (float, 2.0),
    "T": (float, None),
    "inject_extremal": (_bool, False),
    "t_values": (_floats, None),
    "t_count": (int, 1000),
    "t_min": (float, 0.0),
    "t_max": (float, None),
    # cover
    "radius": (float, None),
    # consistency
    "target": (str, "sqrt-1d"),
    "scheme": (str, "uniform"),
    "n_values": (_ints, None),
    "quad_points": (int, 10_000),
    "quad_max": (float, 1.0),
    # mlmc
    "field": (str, "wiener"),
    "alpha": (float, 0.5),
    "c_uni": (float, 1.0),
    "q0_scale": (float, 1.0),
    "J": (int, None),
}

REQUIRED = {
    "gen": ["dataset", "n"],
    "modulus": [],
    "cover": ["radius"],
    "consistency": ["n_values"],
    "interp": [],
    "mlmc": ["n_values"],
}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)
    text: str = ""

    def __getitem__(self, key):
        if key not in SCHEMA:
            raise KeyError(key)
        return self.values.get(key, SCHEMA[key][1])

    def get(self, key, default=None):
        v = self[key]
        return default if v is None else v

    def has(self, key) -> bool:
        return self[key] is not None

    def set(self, key, raw):
        parser = SCHEMA[key][0]
        self.values[key] = raw if not isinstance(raw, str) else parser(raw)

    def require(self, *keys):
        missing = [k for k in keys if not self.has(k)]
        if missing:
            raise ConfigError("missing required key(s): " + ", ".join(missing))

    def sha256(self) -> str:
        """Digest of the resolved key/value pairs (order-independent).

        ``out`` and ``threads`` do not change results and are left out.
        """
        keys = sorted(k for k in self.values if k not in ("out", "threads"))
        canon = "\n".join(f"{k}={self.values[k]!r}" for k in keys)
        return hashlib.sha256(canon.encode()).hexdigest()


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    cfg = ExperimentConfig(text=text)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in cfg.values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            cfg.set(key, val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
        cfg.lines[key] = lineno
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))
