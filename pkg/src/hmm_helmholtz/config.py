"""Experiment configuration: a flat ``key = value`` text format.

Grammar, one entry per line::

    # comment            (also allowed after a value)
    key = value
    key = v1, v2, v3     (tuples)

Scalars are ints, floats, Python complex literals (``10-0.01j``) or
bare strings. Boxes are four numbers ``x_min, y_min, x_max, y_max``.
Every key can also be overridden on the command line.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

from .errors import ConfigError, NonAlignedInterface
from .mesh import AxisBox, _grid_index

EXPERIMENTS = ("mueff-sweep", "resolution", "eoc", "reconstruction", "bandgap", "manufactured", "dump-mesh")

DEFAULT_LEVELS = {
    "eoc": (8, 12, 16, 24, 32, 48, 64),
    "resolution": (8, 12, 16, 24, 32, 48, 64, 96),
    "reconstruction": (8, 16, 24, 32, 48, 64),
    "manufactured": (32, 64, 128, 256, 512),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "eoc"
    k: float = 29.0
    k_list: tuple[float, ...] = (34.0, 48.0, 68.0)
    k_min: float = 15.0
    k_max: float = 68.0
    k_step: float = 0.5
    k0: float = 1.0
    eps_e_inv: float = 10.0
    eps_i_inv: complex = 10.0 - 0.01j
    delta: float = 1.0 / 32.0
    G: tuple[float, ...] = (0.25, 0.25, 0.75, 0.75)
    omega: tuple[float, ...] = (0.375, 0.375, 0.625, 0.625)
    D: tuple[float, ...] = (0.25, 0.25, 0.75, 0.75)
    direction: tuple[float, ...] = (-1.0, 0.0)
    amplitude: complex = 1.0 + 0j
    levels: tuple[int, ...] = ()
    cell_factor: int = 1
    n_cell: int = 256
    n_ref: int = 512
    n_fine: int = 512
    n_macro: int = 64
    oracle_m: int = 41
    bisect_tol: float = 1e-3
    band_k: tuple[float, ...] = (29.0, 38.0)
    y_line: float = 0.545
    n_samples: int = 501
    write_fields: bool = True
    out: str = "results"

    @property
    def mesh_levels(self) -> tuple[int, ...]:
        return self.levels or DEFAULT_LEVELS.get(self.experiment, ())

    @property
    def G_box(self) -> AxisBox:
        return AxisBox(*self.G)

    @property
    def omega_box(self) -> AxisBox:
        return AxisBox(*self.omega)

    @property
    def D_box(self) -> AxisBox | None:
        return AxisBox(*self.D) if self.D else None

    def canonical(self, exclude: tuple[str, ...] = ("out",)) -> str:
        return "\n".join(f"{f.name} = {_format(getattr(self, f.name))}"
                         for f in fields(self) if f.name not in exclude)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _format(value: Any) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, complex):
        return repr(value).strip("()")
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _parse_scalar(text: str, kind: str, key: str):
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "complex":
            return complex(text.replace(" ", "").replace("i", "j") if "j" not in text else text.replace(" ", ""))
        if kind == "bool":
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key} = {text!r} as {kind}") from exc
    return text


def parse_value(key: str, text: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown configuration key {key!r}")
    t = str(_FIELD_TYPES[key])
    if t.startswith("tuple"):
        inner = t[t.index("[") + 1:t.index(",")]
        parts = [p for p in text.split(",") if p.strip()]
        return tuple(_parse_scalar(p, inner, key) for p in parts)
    return _parse_scalar(text, t, key)


def parse_text(text: str) -> dict[str, Any]:
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        values[key] = parse_value(key, val)
    return values


def load_config(path: str | Path | None = None, experiment: str | None = None,
                overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    values: dict[str, Any] = {}
    if path is not None:
        try:
            values.update(parse_text(Path(path).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if experiment is not None:
        values["experiment"] = experiment
    for key, val in (overrides or {}).items():
        values[key] = parse_value(key, val) if isinstance(val, str) else val
    cfg = replace(ExperimentConfig(), **values)
    validate(cfg)
    return cfg


def _check_aligned(box: AxisBox, n: int, inner: AxisBox, what: str) -> None:
    try:
        for val, lo, step in ((inner.x_min, box.x_min, box.width / n), (inner.x_max, box.x_min, box.width / n),
                              (inner.y_min, box.y_min, box.height / n), (inner.y_max, box.y_min, box.height / n)):
            _grid_index(val, lo, step, what)
    except NonAlignedInterface as exc:
        raise ConfigError(f"{what}: subdivision {n} does not resolve {inner}") from exc


def validate(cfg: ExperimentConfig) -> None:
    """Check downstream preconditions before any solve starts."""
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    for name in ("G", "omega", "D"):
        box = getattr(cfg, name)
        if box and len(box) != 4:
            raise ConfigError(f"{name} needs four numbers")
    try:
        G, omega, D = cfg.G_box, cfg.omega_box, cfg.D_box
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not G.contains(omega, strict=True):
        raise ConfigError("omega must lie strictly inside G")
    unit = AxisBox(0.0, 0.0, 1.0, 1.0)
    if D is not None and not unit.contains(D, strict=True):
        raise ConfigError("D must lie strictly inside the unit cell")
    if complex(cfg.eps_i_inv).imag >= 0 or complex(cfg.eps_i_inv).real <= 0 or cfg.eps_e_inv <= 0:
        raise ConfigError("need eps_e_inv > 0 and eps_i_inv with Re > 0, Im < 0")
    if cfg.delta <= 0:
        raise ConfigError("delta must be positive")

    ks = {"mueff-sweep": (cfg.k_min, cfg.k_max), "resolution": cfg.k_list, "bandgap": cfg.band_k}
    for k in ks.get(cfg.experiment, (cfg.k,)):
        if k < cfg.k0:
            raise ConfigError(f"wavenumber {k} below k0 = {cfg.k0}")
    if cfg.experiment == "mueff-sweep":
        if cfg.k_step <= 0 or cfg.k_max <= cfg.k_min:
            raise ConfigError("need k_min < k_max and k_step > 0")
        if D is not None:
            _check_aligned(unit, cfg.n_cell, D, "n_cell")

    levels = cfg.mesh_levels
    if cfg.experiment in DEFAULT_LEVELS:
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigError(f"levels must be strictly increasing, got {levels}")
        if any(n < 1 for n in levels):
            raise ConfigError("levels must be positive")
    if cfg.experiment in ("eoc", "resolution", "reconstruction"):
        for n in levels:
            _check_aligned(G, n, omega, "levels")
            if D is not None:
                _check_aligned(unit, cfg.cell_factor * n, D, "cell_factor * levels")
    if cfg.experiment in ("eoc", "resolution"):
        _check_aligned(G, cfg.n_ref, omega, "n_ref")
        if D is not None:
            _check_aligned(unit, cfg.n_ref, D, "n_ref")
    if cfg.experiment in ("reconstruction", "bandgap"):
        _check_aligned(G, cfg.n_fine, omega, "n_fine")
    if cfg.experiment in ("bandgap", "dump-mesh"):
        _check_aligned(G, cfg.n_macro, omega, "n_macro")
        if D is not None and cfg.experiment == "bandgap":
            _check_aligned(unit, cfg.cell_factor * cfg.n_macro, D, "cell_factor * n_macro")
