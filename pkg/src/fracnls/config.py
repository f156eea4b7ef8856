"""Run configuration: parsing, validation and notes on departures from nominal defaults."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .spectral_core import Grid1D

__all__ = [
    "ConfigError",
    "DatumSpec",
    "MonitorSpec",
    "SimulationConfig",
    "load_json",
    "config_hash",
]

NOMINAL_SOBOLEV_ORDER = 100
NOMINAL_Z_WEIGHT = 10
NOMINAL_P0_MAX = 1e-3


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _get(d: dict, key: str, path: str, default=..., kind=float):
    if key not in d:
        if default is ...:
            raise ConfigError(f"{path}.{key}".lstrip("."), "required field is missing")
        return default
    value = d[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}.{key}".lstrip("."), f"expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{path}.{key}".lstrip("."), "must be finite")
    elif kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}.{key}".lstrip("."), f"expected an integer, got {value!r}")
    elif kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}.{key}".lstrip("."), f"expected true/false, got {value!r}")
    elif kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}.{key}".lstrip("."), f"expected a string, got {value!r}")
    return value


@dataclass(frozen=True)
class DatumSpec:
    """Initial datum family.

    gaussian: A exp(-(x - x0)^2 / sigma^2) exp(i xi0 x)
    sech:     A sech((x - x0) / width) exp(i xi0 x)
    file:     samples read from ``path`` (.npy complex array or JSON {"real", "imag"}),
              rescaled so that max |u0| = A
    """

    family: str = "gaussian"
    sigma: float = 1.0
    width: float = 1.0
    x0: float = 0.0
    xi0: float = 0.0
    path: str | None = None

    @classmethod
    def from_dict(cls, d: Any, path: str = "datum") -> "DatumSpec":
        if not isinstance(d, dict):
            raise ConfigError(path, "expected an object")
        family = _get(d, "family", path, "gaussian", str)
        if family not in ("gaussian", "sech", "file"):
            raise ConfigError(f"{path}.family", f"unknown family {family!r}")
        spec = cls(
            family=family,
            sigma=_get(d, "sigma", path, 1.0),
            width=_get(d, "width", path, 1.0),
            x0=_get(d, "x0", path, 0.0),
            xi0=_get(d, "xi0", path, 0.0),
            path=_get(d, "path", path, None, str) if "path" in d else None,
        )
        if family == "gaussian" and spec.sigma <= 0:
            raise ConfigError(f"{path}.sigma", "must be positive")
        if family == "sech" and spec.width <= 0:
            raise ConfigError(f"{path}.width", "must be positive")
        if family == "file" and not spec.path:
            raise ConfigError(f"{path}.path", "required for the file family")
        return spec

    def samples(self, grid: Grid1D, amplitude: float, base_dir: Path | None = None) -> np.ndarray:
        x = grid.x
        carrier = np.exp(1j * self.xi0 * x)
        if self.family == "gaussian":
            return amplitude * np.exp(-((x - self.x0) ** 2) / self.sigma**2) * carrier
        if self.family == "sech":
            return amplitude / np.cosh((x - self.x0) / self.width) * carrier
        p = Path(self.path)
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        if p.suffix == ".npy":
            raw = np.load(p)
        else:
            blob = json.loads(p.read_text())
            raw = np.asarray(blob["real"], float) + 1j * np.asarray(blob.get("imag", np.zeros(len(blob["real"]))), float)
        raw = np.asarray(raw, dtype=complex)
        if raw.shape != (grid.N,):
            raise ConfigError("datum.path", f"file holds {raw.shape} samples, grid needs ({grid.N},)")
        peak = np.max(np.abs(raw))
        return raw if peak == 0 else amplitude * raw / peak

    def fourier(self, amplitude: float):
        """Closed-form transform xi -> u0_hat(xi) for the analytic families."""
        if self.family == "gaussian":
            s, x0, k0 = self.sigma, self.x0, self.xi0

            def g(xi):
                xi = np.asarray(xi, dtype=float)
                return amplitude * s * np.sqrt(np.pi) * np.exp(-(s**2) * (xi - k0) ** 2 / 4) * np.exp(-1j * (xi - k0) * x0)

            return g
        if self.family == "sech":
            w, x0, k0 = self.width, self.x0, self.xi0

            def g(xi):
                xi = np.asarray(xi, dtype=float)
                return amplitude * w * np.pi / np.cosh(np.pi * w * (xi - k0) / 2) * np.exp(-1j * (xi - k0) * x0)

            return g
        return None


@dataclass(frozen=True)
class MonitorSpec:
    p0: float = 1e-3
    sobolev_order: float = 10.0
    z_weight: float = 10.0
    boundary_fraction: float = 0.9
    boundary_tolerance: float = 1e-8
    mass_tolerance: float = 1e-11
    bounded_ratio: float = 3.0
    z_band: float = 3.0
    decay_window: tuple[float, float] = (0.4, 0.6)
    decay_t_min: float = 20.0
    cauchy_noise: float = 1e-10

    @classmethod
    def from_dict(cls, d: Any, path: str = "monitor") -> "MonitorSpec":
        if d is None:
            return cls()
        if not isinstance(d, dict):
            raise ConfigError(path, "expected an object")
        p0 = _get(d, "p0", path, 1e-3)
        if not (0 < p0 < 0.5):
            raise ConfigError(f"{path}.p0", "must lie in (0, 1/2)")
        window = d.get("decay_window", [0.4, 0.6])
        if not (isinstance(window, list) and len(window) == 2):
            raise ConfigError(f"{path}.decay_window", "expected [low, high]")
        return cls(
            p0=p0,
            sobolev_order=_get(d, "sobolev_order", path, 10.0),
            z_weight=_get(d, "z_weight", path, 10.0),
            boundary_fraction=_get(d, "boundary_fraction", path, 0.9),
            boundary_tolerance=_get(d, "boundary_tolerance", path, 1e-8),
            mass_tolerance=_get(d, "mass_tolerance", path, 1e-11),
            bounded_ratio=_get(d, "bounded_ratio", path, 3.0),
            z_band=_get(d, "z_band", path, 3.0),
            decay_window=(float(window[0]), float(window[1])),
            decay_t_min=_get(d, "decay_t_min", path, 20.0),
            cauchy_noise=_get(d, "cauchy_noise", path, 1e-10),
        )


@dataclass(frozen=True)
class SimulationConfig:
    alpha: float
    c_star: float
    epsilon0: float
    datum: DatumSpec
    half_length: float
    point_count: int
    dt: float
    t_end: float
    output_every: float
    phase_every: int = 10
    ladder_per_octave: int = 4
    ladder_t_min: float = 1.0
    gauge: bool = True
    store_floor: float = 1e-14
    monitor: MonitorSpec = field(default_factory=MonitorSpec)
    base_dir: str | None = None

    @property
    def grid(self) -> Grid1D:
        return Grid1D(self.half_length, self.point_count)

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @classmethod
    def from_dict(cls, d: Any, base_dir: str | None = None) -> "SimulationConfig":
        if not isinstance(d, dict):
            raise ConfigError("<root>", "expected a JSON object")
        alpha = _get(d, "alpha", "")
        if not (1.0 / 3.0 < alpha < 1.0):
            raise ConfigError("alpha", f"must lie in (1/3, 1), got {alpha}")
        eps = _get(d, "epsilon0", "")
        if eps <= 0:
            raise ConfigError("epsilon0", "must be positive")
        grid = d.get("grid")
        if not isinstance(grid, dict):
            raise ConfigError("grid", "required object is missing")
        half_length = _get(grid, "half_length", "grid")
        points = _get(grid, "point_count", "grid", kind=int)
        try:
            Grid1D(half_length, points)
        except ValueError as exc:
            raise ConfigError("grid", str(exc)) from None
        dt = _get(d, "dt", "")
        if dt <= 0:
            raise ConfigError("dt", "must be positive")
        t_end = _get(d, "t_end", "")
        if t_end < 0 or (0 < t_end < dt):
            raise ConfigError("t_end", "must be 0 or at least dt")
        if abs(t_end / dt - round(t_end / dt)) > 1e-9 * max(1.0, t_end / dt):
            raise ConfigError("t_end", "must be an integer multiple of dt")
        output_every = _get(d, "output_every", "", dt)
        ratio = output_every / dt
        if output_every <= 0 or abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ConfigError("output_every", "must be a positive integer multiple of dt")
        phase_every = _get(d, "phase_every", "", 10, int)
        if phase_every < 1:
            raise ConfigError("phase_every", "must be >= 1")
        ladder = _get(d, "ladder_per_octave", "", 4, int)
        if ladder < 1:
            raise ConfigError("ladder_per_octave", "must be >= 1")
        return cls(
            alpha=alpha,
            c_star=_get(d, "c_star", "", 1.0),
            epsilon0=eps,
            datum=DatumSpec.from_dict(d.get("datum", {"family": "gaussian"})),
            half_length=half_length,
            point_count=points,
            dt=dt,
            t_end=t_end,
            output_every=output_every,
            phase_every=phase_every,
            ladder_per_octave=ladder,
            ladder_t_min=_get(d, "ladder_t_min", "", 1.0),
            gauge=_get(d, "gauge", "", True, bool),
            store_floor=_get(d, "store_floor", "", 1e-14),
            monitor=MonitorSpec.from_dict(d.get("monitor")),
            base_dir=base_dir,
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "SimulationConfig":
        path = Path(path)
        return cls.from_dict(load_json(path), base_dir=str(path.parent))

    def initial_samples(self) -> np.ndarray:
        base = Path(self.base_dir) if self.base_dir else None
        return self.datum.samples(self.grid, self.epsilon0, base)

    def deviation_notes(self) -> list[str]:
        notes = []
        m = self.monitor
        if m.sobolev_order != NOMINAL_SOBOLEV_ORDER:
            notes.append(f"Sobolev order s={m.sobolev_order:g} (nominal {NOMINAL_SOBOLEV_ORDER})")
        if m.z_weight != NOMINAL_Z_WEIGHT:
            notes.append(f"Z weight w={m.z_weight:g} (nominal {NOMINAL_Z_WEIGHT})")
        if m.p0 > NOMINAL_P0_MAX:
            notes.append(f"p0={m.p0:g} exceeds the nominal range (0, {NOMINAL_P0_MAX:g}]")
        if m.p0 <= NOMINAL_P0_MAX and self.alpha > 1.0 / (1.0 + 2.0 * m.p0):
            notes.append(f"alpha={self.alpha:g} exceeds 1/(1+2 p0) needed for the nominal decay range")
        if not self.gauge:
            notes.append("phase correction disabled (H forced to 0)")
        return notes

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d["monitor"]["decay_window"] = list(d["monitor"]["decay_window"])
        return d


def load_json(path: str | Path) -> Any:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from None


def config_hash(obj: Any) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
