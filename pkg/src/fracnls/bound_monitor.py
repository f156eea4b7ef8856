"""Monitored norms along a run, trend fits and pass/trend flags."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .config import SimulationConfig
from .evolution import RunSnapshot, weighted_distance
from .spectral_core import Grid1D, LpBank, NormConfig, SpectralField, _idft, compute_norms

__all__ = [
    "InsufficientDataError",
    "BoundRow",
    "BoundReport",
    "BoundMonitor",
    "evaluate_bounds",
    "cauchy_pairs",
    "fit_loglog_slope",
    "nonlinear_energy_inequality_check",
    "sobolev_norm",
]

ROW_COLUMNS = ["t", "h_s_weighted", "x_df_weighted", "z", "sup_u_decay", "d_ref"]


class InsufficientDataError(ValueError):
    pass


@dataclass
class BoundRow:
    t: float
    h_s_weighted: float
    x_df_weighted: float
    z: float
    sup_u_decay: float
    d_ref: float
    sup_u: float
    bands: list[tuple[int, float, float, float]] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {c: getattr(self, c) for c in ROW_COLUMNS}


@dataclass
class BoundReport:
    rows: list[BoundRow]
    cauchy: list[dict]
    fits: dict
    flags: dict
    header: dict

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def to_dict(self) -> dict:
        return {"header": self.header, "fits": self.fits, "flags": self.flags, "cauchy": self.cauchy}


def fit_loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log y against log x over positive pairs."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def cauchy_pairs(snaps: Sequence[RunSnapshot], w_weight: float, xi: np.ndarray, tol: float = 1e-9) -> list[dict]:
    """D(t, 2t) for every snapshot pair whose times differ by a factor of two."""
    by_t = {round(s.t, 9): s for s in snaps}
    out = []
    for s in snaps:
        if s.t <= 0:
            continue
        partner = by_t.get(round(2 * s.t, 9))
        if partner is None:
            match = [p for p in snaps if abs(p.t - 2 * s.t) <= tol * max(1.0, s.t)]
            partner = match[0] if match else None
        if partner is None:
            continue
        out.append({"t1": s.t, "t2": partner.t, "distance": weighted_distance(xi, partner.corrected, s.corrected, w_weight)})
    return out


def _fit_p1(cauchy: list[dict], t_end: float) -> float:
    """p1 = -slope of log D(t, 2t) over t in [t_end/20, t_end/2]."""
    sel = [c for c in cauchy if t_end / 20 * (1 - 1e-9) <= c["t1"] <= t_end / 2 * (1 + 1e-9)]
    if len(sel) < 2:
        return float("nan")
    if all(c["distance"] == 0 for c in sel):
        return float("inf")
    return -fit_loglog_slope([c["t1"] for c in sel], [c["distance"] for c in sel])


def sobolev_norm(grid: Grid1D, u_hat: np.ndarray, order: float) -> float:
    w = (1 + grid.xi**2) ** (order / 2)
    return float(np.sqrt(grid.dxi / (2 * np.pi) * np.sum(np.abs(w * u_hat) ** 2)))


class BoundMonitor:
    """Observer collecting monitored quantities from a run, see :func:`evaluate_bounds`."""

    def __init__(self, config: SimulationConfig, bank: LpBank | None = None):
        self.config = config
        self.grid = config.grid
        self.bank = bank or LpBank.for_grid(self.grid)
        self.rows: list[BoundRow] = []
        self.ladder: list[RunSnapshot] = []
        self.energy: list[tuple[float, float, float]] = []
        self._reference = None

    def __call__(self, snap: RunSnapshot) -> None:
        self.observe(snap)

    def observe(self, snap: RunSnapshot) -> None:
        if self._reference is None:
            self._reference = snap.corrected
        mon = self.config.monitor
        if snap.ladder:
            self.ladder.append(snap)
        if not snap.series:
            return
        g = self.grid
        f = SpectralField.from_frequency(g, snap.f_hat)
        norms = compute_norms(f, NormConfig(mon.sobolev_order, mon.z_weight, self.bank))
        sup_u = float(np.max(np.abs(_idft(g, snap.u_hat))))
        decay = (1 + snap.t) ** -mon.p0
        self.rows.append(BoundRow(
            t=snap.t,
            h_s_weighted=decay * norms.h_s_value,
            x_df_weighted=decay * norms.weighted_value,
            z=norms.z_value,
            sup_u_decay=sup_u * (1 + snap.t) ** 0.5,
            d_ref=weighted_distance(g.xi, snap.corrected, self._reference, mon.z_weight),
            sup_u=sup_u,
            bands=list(zip(norms.band_indices, norms.band_l2, norms.band_dl2, norms.band_sup)),
        ))
        self.energy.append((snap.t, sobolev_norm(g, snap.u_hat, mon.sobolev_order), sup_u))

    def report(self) -> BoundReport:
        return evaluate_bounds(self.rows, self.ladder, self.config)


def evaluate_bounds(rows: Sequence[BoundRow], ladder: Sequence[RunSnapshot], config: SimulationConfig) -> BoundReport:
    """Trend fits and flags for collected rows.

    Flags: finite and nonnegative entries, increasing times, bounded weighted
    columns (max/min <= bounded_ratio), Z within [Z(0)/z_band, z_band Z(0)],
    sup |u| decay exponent within decay_window over [decay_t_min, t_end], and
    the fitted p1 positive (or D zero up to ``cauchy_noise * Z(0)``).
    """
    if len(rows) < 4:
        raise InsufficientDataError(f"need at least 4 snapshots for a trend fit, got {len(rows)}")
    mon = config.monitor
    grid = config.grid
    t = np.array([r.t for r in rows])
    table = np.array([[getattr(r, c) for c in ROW_COLUMNS] for r in rows])
    band_vals = np.array([v for r in rows for b in r.bands for v in b[1:]]) if rows[0].bands else np.zeros(0)

    def spread(col):
        v = table[:, ROW_COLUMNS.index(col)]
        return float(v.max() / v.min()) if v.min() > 0 else (1.0 if v.max() == 0 else float("inf"))

    cauchy = cauchy_pairs(ladder, mon.z_weight, grid.xi)
    p1 = _fit_p1(cauchy, config.t_end)
    late = t >= mon.decay_t_min
    sup = np.array([r.sup_u for r in rows])
    decay_exp = -fit_loglog_slope(t[late], sup[late]) if late.sum() >= 2 else float("nan")
    z = table[:, ROW_COLUMNS.index("z")]
    fits = {
        "p1": p1,
        "sup_decay_exponent": decay_exp,
        "spread_h_s_weighted": spread("h_s_weighted"),
        "spread_x_df_weighted": spread("x_df_weighted"),
        "spread_z": spread("z"),
        "z_over_z0_min": float(z.min() / z[0]) if z[0] > 0 else float("nan"),
        "z_over_z0_max": float(z.max() / z[0]) if z[0] > 0 else float("nan"),
        "d_final": cauchy[-1]["distance"] if cauchy else float("nan"),
    }
    # free-flow runs leave only roundoff in D; treat that as zero
    noise = mon.cauchy_noise * z[0] if z[0] > 0 else 0.0
    all_d_zero = bool(cauchy) and all(c["distance"] <= noise for c in cauchy)
    lo, hi = mon.decay_window
    flags = {
        "finite_nonnegative": bool(np.all(np.isfinite(table)) and np.all(table >= 0)
                                   and np.all(np.isfinite(band_vals)) and np.all(band_vals >= 0)),
        "times_increasing": bool(np.all(np.diff(t) > 0)),
        "bounded_weighted_columns": max(fits["spread_h_s_weighted"], fits["spread_x_df_weighted"]) <= mon.bounded_ratio,
        "z_within_band": bool(z[0] > 0 and z.max() <= mon.z_band * z[0] and z.min() >= z[0] / mon.z_band) or bool(np.all(z == 0)),
        "sup_decay_in_window": bool(lo <= decay_exp <= hi) if math.isfinite(decay_exp) else False,
        "p1_positive": bool(all_d_zero or (math.isfinite(p1) and p1 > 0)),
    }
    header = {
        "alpha": config.alpha,
        "c_star": config.c_star,
        "epsilon0": config.epsilon0,
        "p0": mon.p0,
        "sobolev_order": mon.sobolev_order,
        "z_weight": mon.z_weight,
        "gauge": config.gauge,
        "deviations": config.deviation_notes(),
    }
    return BoundReport(list(rows), cauchy, fits, flags, header)


def nonlinear_energy_inequality_check(samples: Iterable[tuple[float, float, float]], floor: float = 1e-14) -> float:
    """Worst ratio (||u(t2)||_HN - ||u(t1)||_HN) / int ||u||_HN ||u||_inf^2 over consecutive pairs.

    ``samples`` holds (t, ||u||_HN, sup |u|). Pairs with right side <= floor are skipped;
    returns 0.0 when every pair is skipped.
    """
    samples = list(samples)
    worst = None
    for (t1, n1, s1), (t2, n2, s2) in zip(samples, samples[1:]):
        rhs = 0.5 * (n1 * s1**2 + n2 * s2**2) * (t2 - t1)
        if rhs <= floor:
            continue
        ratio = (n2 - n1) / rhs
        worst = ratio if worst is None else max(worst, ratio)
    return 0.0 if worst is None else float(worst)
