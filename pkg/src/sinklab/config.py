"""Run configuration: INI-style ``key = value`` sections with typed defaults.

Every key has a default, so an empty file is a valid NoSink run.  Values
given on the command line as ``section.key=value`` override the file.
Time and position grids accept either a comma list (``0.1, 0.5, 1``) or a
``start:stop:count`` range (inclusive, evenly spaced).
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field

import numpy as np

from sinklab.ilt import IltConfig
from sinklab.model import (
    Constant,
    ExpDecay,
    InverseTime,
    Linear,
    ModelParams,
    NoSink,
    ValidationError,
)
from sinklab.oracle import GridSpec


class ConfigError(ValidationError):
    """A configuration value is missing, malformed or out of range."""

    def __init__(self, message, field_name=None):
        super().__init__(f"{field_name}: {message}" if field_name else message)
        self.field = field_name


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    t = text.strip().lower()
    return None if t in ("", "auto", "none") else float(t)


def _str(text):
    return text.strip()


def parse_grid(text):
    """Comma list or ``start:stop:count`` range -> sorted float array (may be empty)."""
    t = text.strip()
    if not t:
        return np.zeros(0)
    if ":" in t:
        parts = t.split(":")
        if len(parts) != 3:
            raise ValueError(f"range must be start:stop:count, got {text!r}")
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise ValueError("range count must be >= 1")
        return np.linspace(a, b, n) if n > 1 else np.array([a])
    vals = np.array([float(v) for v in t.split(",") if v.strip()])
    if not np.all(np.isfinite(vals)):
        raise ValueError("grid values must be finite")
    return vals


def _grid(text):
    parse_grid(text)
    return text.strip()


# section -> key -> (parser, default text)
SCHEMA = {
    "model": {"D": (float, "1.0"), "omega": (float, "1.0"), "sigma": (int, "-1")},
    "sink": {
        "law": (_str, "none"),
        "alpha0": (float, "0.0"),
        "alpha1": (float, "0.0"),
        "alpha": (float, "0.0"),
        "t_on": (_opt_float, "auto"),
        "beta": (float, "0.0"),
        "alpha_decay": (float, "1.0"),
    },
    "source": {"x0": (float, "0.5")},
    "output": {"t": (_grid, "0.1:5:50"), "x": (_grid, "0"), "plots": (_bool, "true")},
    "ilt": {
        "method": (_str, "both"),
        "talbot_nodes": (int, "32"),
        "stehfest_terms": (int, "14"),
        "agreement_tol": (float, "1e-6"),
    },
    "closure": {
        "method": (_str, "quadrature"),
        "ode_tol": (float, "1e-10"),
        "s_max": (_opt_float, "auto"),
        "depth_max": (int, "400"),
        "tail_tol": (float, "1e-15"),
    },
    "cn": {
        "dx": (float, "0.01"),
        "dt": (float, "1e-3"),
        "L": (_opt_float, "auto"),
        "t_max": (_opt_float, "auto"),
        "delta_width": (float, "1.0"),
    },
    "mc": {
        "enabled": (_bool, "false"),
        "n_paths": (int, "100000"),
        "dt": (float, "2e-4"),
        "delta_width": (float, "0.05"),
    },
    "volterra": {"dt": (float, "1e-3")},
    "compare": {"tol": (float, "1e-2"), "t_min": (float, "0.1")},
    "sweep": {"t_obs": (float, "1.0"), "route": (_str, "analytic")},
    "run": {"seed": (int, "0")},
}

# [sweep] also accepts "section.key = v1, v2, ..." entries
SWEEP_FIXED = set(SCHEMA["sweep"])


@dataclass
class RunConfig:
    values: dict
    sweep: dict = field(default_factory=dict)

    # --- derived objects -------------------------------------------------
    def params(self) -> ModelParams:
        m = self.values["model"]
        try:
            return ModelParams(m["D"], m["omega"], m["sigma"])
        except ValidationError as exc:
            name = str(exc).split(" ", 1)[0]
            raise ConfigError(str(exc), f"model.{name}") from None

    def sink(self):
        s = self.values["sink"]
        law = s["law"]
        try:
            if law == "none":
                return NoSink()
            if law == "constant":
                return Constant(s["alpha0"])
            if law == "linear":
                return Linear(s["alpha1"])
            if law == "inverse":
                if s["t_on"] is None:
                    return InverseTime.for_params(s["alpha"], self.params())
                return InverseTime(s["alpha"], s["t_on"])
            if law == "expdecay":
                return ExpDecay(s["beta"], s["alpha_decay"])
        except ValidationError as exc:
            name = str(exc).split(" ", 1)[0]
            raise ConfigError(str(exc), f"sink.{name}") from None
        raise ConfigError(f"unknown law {law!r}; expected none, constant, linear, inverse or expdecay", "sink.law")

    @property
    def x0(self) -> float:
        return self.values["source"]["x0"]

    def times(self):
        t = parse_grid(self.values["output"]["t"])
        if len(t) == 0 or np.any(t <= 0):
            raise ConfigError("output times must be non-empty and > 0", "output.t")
        return t

    def positions(self):
        x = parse_grid(self.values["output"]["x"])
        if len(x) == 0:
            raise ConfigError("at least one position is required", "output.x")
        return x

    def ilt(self) -> IltConfig:
        i = self.values["ilt"]
        try:
            return IltConfig(i["method"], i["talbot_nodes"], i["stehfest_terms"], i["agreement_tol"])
        except ValidationError as exc:
            raise ConfigError(str(exc), "ilt") from None

    def closure_opts(self) -> dict:
        c = self.values["closure"]
        if c["method"] not in ("quadrature", "ode"):
            raise ConfigError("must be 'quadrature' or 'ode'", "closure.method")
        if not c["ode_tol"] > 0:
            raise ConfigError("must be > 0", "closure.ode_tol")
        if c["depth_max"] < 1:
            raise ConfigError("must be >= 1", "closure.depth_max")
        return {
            "method": c["method"],
            "ode_tol": c["ode_tol"],
            "s_max": c["s_max"],
            "depth_max": c["depth_max"],
            "tail_tol": c["tail_tol"],
        }

    def grid(self, t_max=None) -> GridSpec:
        c = self.values["cn"]
        t_max = c["t_max"] if c["t_max"] is not None else (t_max or float(self.times().max()))
        params = self.params()
        try:
            auto = GridSpec.auto(params, t_max, dx=c["dx"], dt=c["dt"], delta_width=c["delta_width"])
            if c["L"] is None:
                return auto
            n_half = int(math.ceil(c["L"] / c["dx"]))
            return GridSpec(n_half * c["dx"], 2 * n_half + 1, c["dt"], t_max, c["delta_width"])
        except ValidationError as exc:
            raise ConfigError(str(exc), "cn") from None

    def validate(self):
        """Build every derived object once so errors surface before any work."""
        self.params()
        self.sink()
        self.times()
        self.positions()
        self.ilt()
        self.closure_opts()
        g = self.grid()
        try:
            g.check_domain(self.params())
        except ValidationError as exc:
            raise ConfigError(str(exc), "cn.L") from None
        if self.values["sweep"]["route"] not in ("analytic", "cn"):
            raise ConfigError("must be 'analytic' or 'cn'", "sweep.route")
        for key in self.sweep:
            _split_key(key)
        return self

    # --- serialisation ---------------------------------------------------
    def to_text(self) -> dict:
        out = {}
        for sec, keys in self.values.items():
            out[sec] = {k: _format(v) for k, v in keys.items()}
        for key, vals in self.sweep.items():
            out["sweep"][key] = ", ".join(_format(v) for v in vals)
        return out

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for sec, keys in self.to_text().items():
            cp[sec] = keys
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def resolved(self) -> dict:
        """JSON-friendly echo of every value, defaults included."""
        out = {sec: dict(keys) for sec, keys in self.values.items()}
        out["sweep"] = dict(out["sweep"], **{k: list(v) for k, v in self.sweep.items()})
        return out


def _format(v):
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _split_key(key):
    if "." not in key:
        raise ConfigError("override keys look like section.key", key)
    sec, name = key.split(".", 1)
    if sec not in SCHEMA or name not in SCHEMA[sec]:
        raise ConfigError("unknown setting", key)
    return sec, name


def _convert(sec, name, text):
    parser, _ = SCHEMA[sec][name]
    try:
        return parser(text)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"cannot parse {text!r} ({exc})", f"{sec}.{name}") from None


def load_config(text: str = "", overrides=()) -> RunConfig:
    """Parse INI text plus ``section.key=value`` overrides into a RunConfig."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from None
    raw = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    sweep_raw = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError("unknown section", sec)
        for key, val in cp[sec].items():
            if sec == "sweep" and key not in SWEEP_FIXED:
                sweep_raw[key] = val
                continue
            if key not in SCHEMA[sec]:
                raise ConfigError("unknown setting", f"{sec}.{key}")
            raw[sec][key] = val
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, val = item.split("=", 1)
        key = key.strip()
        if key.startswith("sweep.") and key[len("sweep."):] not in SWEEP_FIXED:
            sweep_raw[key[len("sweep."):]] = val
            continue
        sec, name = _split_key(key)
        raw[sec][name] = val
    values = {sec: {k: _convert(sec, k, v) for k, v in keys.items()} for sec, keys in raw.items()}
    sweep = {}
    for key, val in sweep_raw.items():
        sec, name = _split_key(key)
        if sec == "sweep":
            raise ConfigError("cannot sweep over sweep settings", key)
        sweep[key] = [_convert(sec, name, v) for v in val.split(",") if v.strip()] if val.strip() else []
    return RunConfig(values, sweep)


def load_config_file(path, overrides=()) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}", "config") from None
    return load_config(text, overrides)


def with_values(cfg: RunConfig, updates: dict) -> RunConfig:
    """Copy of ``cfg`` with typed ``section.key`` updates applied (sweep cells)."""
    values = {sec: dict(keys) for sec, keys in cfg.values.items()}
    for key, v in updates.items():
        sec, name = _split_key(key)
        values[sec][name] = v
    return RunConfig(values, {})
