"""Scenario configuration files.

A scenario is a flat text file of ``section.key = value`` lines; ``#``
starts a comment.  Vectors are comma separated.  Every key is typed and
range-checked, and unknown keys are rejected.  Density specs are Gaussians
given by ``mean``/``var`` or CSV snapshots given by ``file`` (resolved
relative to the config file).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .dynamics import KINDS, Regime
from .grid import Density, Grid, gaussian_density, read_csv
from .model import (EnergyModel, InteractionKernel, LogisticCost, LogisticCost2D,
                    ReferenceDistribution, ZeroCost)


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the offending key."""


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _all_positive(v):
    return all(e > 0 for e in v)


# key -> (type, default, check, description); default None means optional,
# the sentinel REQUIRED means the key must be present
REQUIRED = object()

SCHEMA: dict[str, tuple] = {
    "regime.kind": ("str", REQUIRED, lambda v: v in KINDS, f"one of {', '.join(KINDS)}"),
    "regime.ratio": ("float", 1.0, _positive, "positive"),
    "regime.fixed_x": ("vector", None, None, ""),
    "regime.samples": ("int", 0, _nonneg, "nonnegative"),
    "regime.best_response": ("bool", False, None, ""),
    "grid.lower": ("vector", REQUIRED, None, ""),
    "grid.upper": ("vector", REQUIRED, None, ""),
    "grid.n": ("intvector", REQUIRED, lambda v: all(k >= 4 for k in v), "at least 4 per axis"),
    "model.cost": ("str", "logistic", lambda v: v in ("logistic", "logistic2d", "zero"),
                   "logistic, logistic2d or zero"),
    "model.slope": ("float", 3.0, _positive, "positive"),
    "model.alpha": ("float", REQUIRED, _positive, "positive"),
    "model.beta": ("float", REQUIRED, _positive, "positive"),
    "model.x0": ("vector", REQUIRED, None, ""),
    "model.kernel": ("str", "none", lambda v: v in ("none", "quadratic", "consensus"),
                     "none, quadratic or consensus"),
    "model.kernel_weight": ("float", 0.0, _nonneg, "nonnegative"),
    "reference.mean": ("vector", REQUIRED, None, ""),
    "reference.var": ("vector", REQUIRED, _all_positive, "positive"),
    "static.mean": ("vector", None, None, ""),
    "static.var": ("vector", None, _all_positive, "positive"),
    "static.file": ("path", None, None, ""),
    "initial.mean": ("vector", None, None, ""),
    "initial.var": ("vector", None, _all_positive, "positive"),
    "initial.file": ("path", None, None, ""),
    "initial.x": ("vector", REQUIRED, None, ""),
    "tau.mean": ("vector", None, None, ""),
    "tau.var": ("vector", None, _all_positive, "positive"),
    "tau.ref_mean": ("vector", None, None, ""),
    "tau.ref_var": ("vector", None, _all_positive, "positive"),
    "time.T": ("float", REQUIRED, _nonneg, "nonnegative"),
    "time.dt": ("float", REQUIRED, _positive, "positive"),
    "time.cfl": ("float", 0.5, lambda v: 0 < v <= 1, "in (0, 1]"),
    "time.stride": ("int", 10, lambda v: v >= 1, "at least 1"),
    "run.seed": ("int", 0, _nonneg, "nonnegative"),
    "run.output": ("str", "out", None, ""),
}

TYPE_NAMES = {"str": "string", "float": "real number", "int": "integer", "bool": "true/false",
              "vector": "comma-separated reals", "intvector": "comma-separated integers",
              "path": "file path"}


def _parse(key: str, kind: str, text: str, base: Path):
    text = text.strip()
    try:
        if kind == "str":
            if not text:
                raise ValueError
            return text
        if kind == "float":
            v = float(text)
            if not np.isfinite(v):
                raise ValueError
            return v
        if kind == "int":
            return int(text)
        if kind == "bool":
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError
            return low == "true"
        if kind == "vector":
            v = tuple(float(p) for p in text.split(","))
            if not all(np.isfinite(v)):
                raise ValueError
            return v
        if kind == "intvector":
            return tuple(int(p) for p in text.split(","))
        if kind == "path":
            p = Path(text)
            return str(p if p.is_absolute() else (base / p))
    except ValueError:
        raise ConfigError(f"{key}: expected {TYPE_NAMES[kind]}, got {text!r}") from None
    raise AssertionError(kind)


def _format(kind: str, value) -> str:
    if kind in ("vector", "intvector"):
        return ", ".join(repr(v) for v in value)
    if kind == "bool":
        return "true" if value else "false"
    if kind == "float":
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario; ``values`` maps every schema key to its value."""

    values: dict = field(default_factory=dict)
    source: Any = field(default=None, compare=False)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    @property
    def kind(self) -> str:
        return self.values["regime.kind"]

    @property
    def alpha(self) -> float:
        return self.values["model.alpha"]

    @property
    def beta(self) -> float:
        return self.values["model.beta"]

    @property
    def slope(self) -> float:
        return self.values["model.slope"]

    def replace(self, **changes) -> "ScenarioConfig":
        """Copy with ``section_key=value`` overrides (dots spelled as ``__``)."""
        vals = dict(self.values)
        for k, v in changes.items():
            vals[k.replace("__", ".")] = v
        return validate(vals, self.source)

    # --- construction of the numerical objects ---------------------------

    def grid(self) -> Grid:
        return Grid(self["grid.lower"], self["grid.upper"], self["grid.n"])

    def _density(self, section: str, grid: Grid) -> Density:
        f = self.get(f"{section}.file")
        if f is not None:
            return read_csv(f, grid)
        return gaussian_density(grid, self[f"{section}.mean"], self[f"{section}.var"])

    def cost(self):
        name = self["model.cost"]
        if name == "logistic":
            return LogisticCost(self.slope)
        if name == "logistic2d":
            return LogisticCost2D()
        return ZeroCost(len(self["grid.n"]))

    def model(self) -> EnergyModel:
        g = self.grid()
        return EnergyModel(
            grid=g,
            cost=self.cost(),
            kernel=InteractionKernel(self["model.kernel"], self["model.kernel_weight"]),
            reference=ReferenceDistribution(self["reference.mean"], self["reference.var"]),
            static=self._density("static", g),
            alpha=self.alpha,
            beta=self.beta,
            x0=np.array(self["model.x0"]),
        )

    def initial_density(self, grid: Grid | None = None) -> Density:
        return self._density("initial", grid or self.grid())

    def tau_initial(self, grid: Grid | None = None) -> Density:
        return self._density("tau", grid or self.grid())

    def tau_reference(self) -> ReferenceDistribution:
        return ReferenceDistribution(self["tau.ref_mean"], self["tau.ref_var"])

    def regime(self) -> Regime:
        return Regime(self.kind, ratio=self["regime.ratio"], fixed_x=self.get("regime.fixed_x"),
                      samples=self["regime.samples"], seed=self["run.seed"],
                      best_response=self["regime.best_response"])


def validate(values: dict, source=None) -> ScenarioConfig:
    """Fill defaults, check types, ranges and cross-key consistency."""
    unknown = sorted(set(values) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}")
    out = {}
    for key, (kind, default, check, desc) in SCHEMA.items():
        if key in values and values[key] is not None:
            v = values[key]
            if kind in ("vector", "intvector"):
                v = tuple(float(e) if kind == "vector" else int(e) for e in np.atleast_1d(v))
            elif kind == "float":
                v = float(v)
            elif kind == "int":
                v = int(v)
            if check is not None and not check(v):
                raise ConfigError(f"{key}: value {v!r} out of range (must be {desc})")
            out[key] = v
        elif default is REQUIRED:
            raise ConfigError(f"{key}: missing required key ({TYPE_NAMES[kind]})")
        else:
            out[key] = default
    _cross_check(out)
    return ScenarioConfig(out, source)


def _spec_given(vals, section, required: bool):
    has_file = vals.get(f"{section}.file") is not None
    has_gauss = vals.get(f"{section}.mean") is not None and vals.get(f"{section}.var") is not None
    if has_file and vals.get(f"{section}.file") and not Path(vals[f"{section}.file"]).is_file():
        raise ConfigError(f"{section}.file: no such file {vals[f'{section}.file']!r}")
    if required and not (has_file or has_gauss):
        raise ConfigError(f"{section}: need either {section}.file or {section}.mean and {section}.var")
    return has_file or has_gauss


def _cross_check(v: dict):
    dim = len(v["grid.n"])
    for key in ("grid.lower", "grid.upper", "reference.mean", "reference.var", "model.x0", "initial.x"):
        if len(v[key]) != dim:
            raise ConfigError(f"{key}: expected {dim} entries to match grid.n")
    for lo, hi in zip(v["grid.lower"], v["grid.upper"]):
        if not hi > lo:
            raise ConfigError("grid.upper: must exceed grid.lower on every axis")
    if dim not in (1, 2):
        raise ConfigError("grid.n: only 1D and 2D grids are supported")
    cost = v["model.cost"]
    if (cost == "logistic" and dim != 1) or (cost == "logistic2d" and dim != 2):
        raise ConfigError(f"model.cost: {cost!r} does not match a {dim}D grid")
    _spec_given(v, "static", True)
    _spec_given(v, "initial", True)
    kind = v["regime.kind"]
    if kind == "naive" and v["regime.fixed_x"] is None:
        raise ConfigError("regime.fixed_x: required for the naive regime")
    if kind == "sampled" and v["regime.samples"] < 1:
        raise ConfigError("regime.samples: sampled regime needs at least 1 sample")
    if kind == "two_populations":
        _spec_given(v, "tau", True)
        if v["tau.ref_mean"] is None or v["tau.ref_var"] is None:
            raise ConfigError("tau.ref_mean: two_populations needs tau.ref_mean and tau.ref_var")
    if kind == "competitive_2d" and dim != 2:
        raise ConfigError("regime.kind: competitive_2d needs a 2D grid")
    if dim == 2 and kind not in ("competitive_2d", "aligned", "naive"):
        raise ConfigError(f"regime.kind: {kind!r} is only implemented in 1D")
    if v["model.kernel"] != "none" and v["model.kernel_weight"] == 0:
        raise ConfigError("model.kernel_weight: must be positive for a nonzero kernel")


def parse_config(text: str, base: Path | str = ".", source=None) -> ScenarioConfig:
    base = Path(base)
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r} (line {lineno})")
        if key in raw:
            raise ConfigError(f"{key}: duplicate key (line {lineno})")
        raw[key] = _parse(key, SCHEMA[key][0], value, base)
    return validate(raw, source)


def load_config(path) -> ScenarioConfig:
    """Read and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(path)!r}: {exc.strerror}") from None
    return parse_config(text, path.parent, source=str(path))


def format_config(cfg: ScenarioConfig) -> str:
    lines = []
    section = None
    for key, (kind, *_rest) in SCHEMA.items():
        value = cfg.values.get(key)
        if value is None:
            continue
        sec = key.split(".", 1)[0]
        if sec != section:
            if section is not None:
                lines.append("")
            section = sec
        lines.append(f"{key} = {_format(kind, value)}")
    return "\n".join(lines) + "\n"


def write_config(cfg: ScenarioConfig, path) -> None:
    """Write ``cfg`` so that :func:`load_config` reproduces it exactly."""
    Path(path).write_text(format_config(cfg))


def bundled(name: str) -> Path:
    """Path of a configuration shipped with the package."""
    p = Path(__file__).parent / "configs" / f"{name}.cfg"
    if not p.is_file():
        raise FileNotFoundError(f"no bundled config named {name!r}")
    return p


def bundled_names() -> list[str]:
    return sorted(p.stem for p in (Path(__file__).parent / "configs").glob("*.cfg"))
