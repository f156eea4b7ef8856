"""Strang-split time stepping, the profile, and the logarithmic phase correction.

The equation is i u_t - |D|^alpha u = c |u|^2 u, i.e.

    u_t = -i |D|^alpha u - i c |u|^2 u.

The profile is f = exp(i t |D|^alpha) u and the phase correction is

    H(xi, t) = c0 c (2 pi)^-2 |xi|^(2-alpha) int_0^t |f_hat(xi, r)|^2 dr / (r + 1),
    c0 = 2 pi / (alpha (1 - alpha)).

The (2 pi)^-2 factor is what the resonant part of the cubic interaction carries
under the package's Fourier convention.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Iterator

import numpy as np

from .config import SimulationConfig
from .spectral_core import FractionalSymbol, Grid1D, SpectralField, _dft, _idft

__all__ = [
    "InstabilityError",
    "BoundaryContaminationError",
    "SolverState",
    "PhaseAccumulator",
    "ScatteringSnapshot",
    "RunSnapshot",
    "SimulationResult",
    "phase_constant",
    "CONVENTION_FACTOR",
    "initial_state",
    "strang_step",
    "compute_profile",
    "accumulate_phase",
    "scattering_snapshot",
    "weighted_distance",
    "ladder_times",
    "iterate_simulation",
    "run_simulation",
]

log = logging.getLogger(__name__)

CONVENTION_FACTOR = (2 * np.pi) ** -2


class InstabilityError(RuntimeError):
    pass


class BoundaryContaminationError(RuntimeError):
    pass


def phase_constant(alpha: float) -> float:
    return 2 * np.pi / (alpha * (1 - alpha))


@dataclass(frozen=True)
class SolverState:
    t: float
    u: SpectralField
    step: int = 0
    mass0: float = 0.0

    @property
    def mass(self) -> float:
        u_hat = self.u.u_hat()
        return float(self.u.grid.dxi / (2 * np.pi) * np.sum(np.abs(u_hat) ** 2))

    @property
    def mass_drift(self) -> float:
        if self.mass0 == 0:
            return 0.0
        return abs(self.mass - self.mass0) / self.mass0


def initial_state(grid: Grid1D, samples) -> SolverState:
    u = SpectralField.from_physical(grid, samples).complete()
    st = SolverState(0.0, u, 0, 0.0)
    return replace(st, mass0=st.mass)


def strang_step(state: SolverState, symbol: FractionalSymbol, c_star: float, dt: float) -> SolverState:
    """Half linear step, exact cubic gauge step, half linear step."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    grid = state.u.grid
    half = np.exp(-0.5j * dt * symbol.values)
    u_hat = state.u.u_hat() * half
    u = _idft(grid, u_hat)
    u = u * np.exp(-1j * c_star * dt * np.abs(u) ** 2)
    u_hat = _dft(grid, u) * half
    if not np.all(np.isfinite(u_hat)):
        raise InstabilityError(f"non-finite field values after step {state.step + 1}")
    return SolverState(state.t + dt, SpectralField.from_frequency(grid, u_hat), state.step + 1, state.mass0)


def _advance(u_hat: np.ndarray, grid: Grid1D, symbol_values: np.ndarray, c_star: float, dt: float, n: int) -> np.ndarray:
    """n Strang steps with adjacent half linear steps merged."""
    half = np.exp(-0.5j * dt * symbol_values)
    full = half * half
    if c_star == 0.0:
        for _ in range(n):
            u_hat = u_hat * full
        return u_hat
    u_hat = u_hat * half
    for i in range(n):
        u = _idft(grid, u_hat)
        u *= np.exp(-1j * c_star * dt * (u.real**2 + u.imag**2))
        u_hat = _dft(grid, u)
        u_hat *= full if i < n - 1 else half
    return u_hat


def compute_profile(state: SolverState, symbol: FractionalSymbol) -> SpectralField:
    return SpectralField.from_frequency(state.u.grid, np.exp(1j * state.t * symbol.values) * state.u.u_hat())


@dataclass(frozen=True)
class PhaseAccumulator:
    alpha: float
    c_star: float
    xi: np.ndarray
    H: np.ndarray
    t_last: float = 0.0
    integrand_last: np.ndarray | None = None
    enabled: bool = True

    @property
    def c0(self) -> float:
        return phase_constant(self.alpha)

    @property
    def rate(self) -> np.ndarray:
        """Per-bin factor c0 c (2 pi)^-2 |xi|^(2 - alpha)."""
        return self.c0 * self.c_star * CONVENTION_FACTOR * np.abs(self.xi) ** (2 - self.alpha)

    @classmethod
    def start(cls, grid: Grid1D, alpha: float, c_star: float, f_hat0, enabled: bool = True) -> "PhaseAccumulator":
        f_hat0 = np.asarray(f_hat0)
        return cls(alpha, c_star, np.asarray(grid.xi), np.zeros(grid.N), 0.0, np.abs(f_hat0) ** 2, enabled)


def accumulate_phase(acc: PhaseAccumulator, f_hat_prev, f_hat_new, t_prev: float, t_new: float) -> PhaseAccumulator:
    """Trapezoidal update of H over [t_prev, t_new]."""
    if not t_new > t_prev:
        raise ValueError(f"time must increase: {t_prev} -> {t_new}")
    if t_prev < 0:
        raise ValueError("time must be nonnegative")
    new_integrand = np.abs(np.asarray(f_hat_new)) ** 2
    if not acc.enabled:
        return replace(acc, t_last=t_new, integrand_last=new_integrand)
    prev = np.abs(np.asarray(f_hat_prev)) ** 2 / (t_prev + 1)
    cur = new_integrand / (t_new + 1)
    H = acc.H + acc.rate * 0.5 * (prev + cur) * (t_new - t_prev)
    return replace(acc, H=H, t_last=t_new, integrand_last=new_integrand)


@dataclass(frozen=True)
class ScatteringSnapshot:
    t: float
    corrected: np.ndarray
    distance: float | None = None


def weighted_distance(xi: np.ndarray, a: np.ndarray, b: np.ndarray, w_weight: float) -> float:
    return float(np.max((1 + np.abs(xi)) ** w_weight * np.abs(a - b)))


def scattering_snapshot(
    state: SolverState,
    acc: PhaseAccumulator,
    symbol: FractionalSymbol,
    reference: ScatteringSnapshot | None = None,
    w_weight: float = 10.0,
) -> ScatteringSnapshot:
    """exp(i H) f_hat, and its weighted sup distance to ``reference`` if given."""
    if not math.isclose(acc.t_last, state.t, rel_tol=1e-12, abs_tol=1e-12):
        raise ValueError(f"phase accumulator is at t={acc.t_last}, state at t={state.t}")
    f_hat = compute_profile(state, symbol).frequency
    corrected = np.exp(1j * acc.H) * f_hat
    dist = None
    if reference is not None:
        if reference.corrected.shape != corrected.shape:
            raise ValueError("reference snapshot lives on a different grid")
        dist = weighted_distance(symbol.grid.xi, corrected, reference.corrected, w_weight)
    return ScatteringSnapshot(state.t, corrected, dist)


# ---------------------------------------------------------------------------
# driver


@dataclass(frozen=True)
class RunSnapshot:
    """Everything observed at one output time."""

    t: float
    step: int
    f_hat: np.ndarray
    H: np.ndarray
    u_hat: np.ndarray
    series: bool
    ladder: bool

    @property
    def corrected(self) -> np.ndarray:
        return np.exp(1j * self.H) * self.f_hat


@dataclass
class SimulationResult:
    config: SimulationConfig
    series: list[dict] = field(default_factory=list)
    ladder: list[RunSnapshot] = field(default_factory=list)
    status: str = "ok"
    diagnostic: str | None = None
    mass_drift_max: float = 0.0
    boundary_max: float = 0.0
    steps_taken: int = 0

    @property
    def violated(self) -> bool:
        return self.status != "ok"


def ladder_times(t_end: float, dt: float, per_octave: int, t_min: float) -> list[int]:
    """Step indices of t_end * 2^(-j/per_octave) >= t_min (plus step 0), ascending."""
    steps = {0}
    if t_end <= 0:
        return [0]
    j = 0
    while True:
        t = t_end * 2.0 ** (-j / per_octave)
        if t < t_min:
            break
        steps.add(int(round(t / dt)))
        j += 1
    return sorted(steps)


def boundary_fraction(grid: Grid1D, u: np.ndarray, fraction: float) -> float:
    total = np.sum(np.abs(u) ** 2)
    if total == 0:
        return 0.0
    outer = np.abs(grid.x) > fraction * grid.L
    return float(np.sum(np.abs(u[outer]) ** 2) / total)


def iterate_simulation(config: SimulationConfig, result: SimulationResult | None = None) -> Iterator[RunSnapshot]:
    """Advance the run, yielding a :class:`RunSnapshot` at every output time.

    Raises :class:`BoundaryContaminationError` or :class:`InstabilityError`
    after updating ``result`` with the diagnostic.
    """
    grid = config.grid
    symbol = FractionalSymbol(config.alpha, grid)
    m = symbol.values
    dt = config.dt
    n_total = config.steps
    out_every = int(round(config.output_every / dt))
    ladder = set(ladder_times(config.t_end, dt, config.ladder_per_octave, config.ladder_t_min))
    series = set(range(0, n_total + 1, out_every)) | {n_total}
    events = sorted(series | ladder)

    state = initial_state(grid, config.initial_samples())
    u_hat = state.u.u_hat()
    mass0 = state.mass0
    acc = PhaseAccumulator.start(grid, config.alpha, config.c_star, u_hat, enabled=config.gauge)
    f_prev = u_hat
    step = 0
    mon = config.monitor

    def make(step_, u_hat_):
        t = step_ * dt
        f_hat = np.exp(1j * t * m) * u_hat_
        return RunSnapshot(t, step_, f_hat, acc.H.copy(), u_hat_, step_ in series, step_ in ladder)

    first = make(0, u_hat)
    yield first
    for ev in events[1:]:
        while step < ev:
            n = min(config.phase_every, ev - step)
            u_hat = _advance(u_hat, grid, m, config.c_star, dt, n)
            t_prev, step = step * dt, step + n
            t_new = step * dt
            if not np.all(np.isfinite(u_hat)):
                if result is not None:
                    result.status, result.diagnostic = "instability", f"non-finite values at t={t_new:g}"
                raise InstabilityError(f"non-finite values at t={t_new:g}")
            f_new = np.exp(1j * t_new * m) * u_hat
            acc = accumulate_phase(acc, f_prev, f_new, t_prev, t_new)
            f_prev = f_new
        u = _idft(grid, u_hat)
        frac = boundary_fraction(grid, u, mon.boundary_fraction)
        mass = float(grid.dxi / (2 * np.pi) * np.sum(np.abs(u_hat) ** 2))
        drift = abs(mass - mass0) / mass0 if mass0 else 0.0
        if result is not None:
            result.boundary_max = max(result.boundary_max, frac)
            result.mass_drift_max = max(result.mass_drift_max, drift)
            result.steps_taken = step
        if frac > mon.boundary_tolerance:
            msg = f"boundary mass fraction {frac:.3e} exceeds {mon.boundary_tolerance:g} at t={step * dt:g}"
            if result is not None:
                result.status, result.diagnostic = "boundary_contamination", msg
            log.warning(msg)
            raise BoundaryContaminationError(msg)
        if drift > mon.mass_tolerance and result is not None and result.status == "ok":
            result.status = "mass_drift"
            result.diagnostic = f"relative mass drift {drift:.3e} exceeds {mon.mass_tolerance:g} at t={step * dt:g}"
        yield make(step, u_hat)


def series_row(snap: RunSnapshot, grid: Grid1D, config: SimulationConfig, reference: np.ndarray) -> dict:
    """Basic per-snapshot quantities written to series.csv."""
    from .spectral_core import NormConfig, compute_norms

    f = SpectralField.from_frequency(grid, snap.f_hat)
    norms = compute_norms(f, NormConfig(config.monitor.sobolev_order, config.monitor.z_weight))
    u = _idft(grid, snap.u_hat)
    return {
        "t": snap.t,
        "l2": float(np.sqrt(grid.dx * np.sum(np.abs(u) ** 2))),
        "h_s": norms.h_s_value,
        "z": norms.z_value,
        "x_df": norms.weighted_value,
        "sup_u": float(np.max(np.abs(u))),
        "d_ref": weighted_distance(grid.xi, snap.corrected, reference, config.monitor.z_weight),
    }


def run_simulation(
    config: SimulationConfig,
    observers: Iterable[Callable[[RunSnapshot], None]] = (),
) -> SimulationResult:
    """Run to t_end (or the first violation), collecting series rows and ladder snapshots.

    The reference for the ``d_ref`` column is the corrected profile at t = 0.
    """
    result = SimulationResult(config)
    grid = config.grid
    observers = list(observers)
    reference = None
    try:
        for snap in iterate_simulation(config, result):
            if reference is None:
                reference = snap.corrected
            if snap.series:
                result.series.append(series_row(snap, grid, config, reference))
            if snap.ladder:
                result.ladder.append(snap)
            for obs in observers:
                obs(snap)
    except (BoundaryContaminationError, InstabilityError):
        pass
    return result
