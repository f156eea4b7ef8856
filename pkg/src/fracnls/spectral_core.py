"""Periodic grid, Fourier transforms, fractional multipliers and dyadic projectors.

Fourier convention used throughout the package::

    u_hat(xi) = int u(x) exp(-i xi x) dx,      u(x) = (2 pi)^-1 int u_hat(xi) exp(i xi x) dxi

On the torus [-L, L) the integrals become Riemann sums with spacing ``dx`` and
``dxi = pi / L``.  Frequency arrays are kept in FFT order (``numpy.fft.fftfreq``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import expit

__all__ = [
    "Grid1D",
    "SpectralField",
    "LpBank",
    "FractionalSymbol",
    "NormReport",
    "NormConfig",
    "base_cutoff",
    "base_cutoff_derivative",
    "forward_transform",
    "inverse_transform",
    "half_wave_propagate",
    "lp_project",
    "spectral_derivative",
    "compute_norms",
    "scaling_field_apply",
    "commutator_x_dx_fractional",
    "GridMismatchError",
    "l2_norm",
]


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Grid1D:
    half_length: float
    point_count: int

    def __post_init__(self):
        n = int(self.point_count)
        if n < 16 or n & (n - 1):
            raise ValueError(f"point_count must be a power of two >= 16, got {self.point_count}")
        if not (np.isfinite(self.half_length) and self.half_length > 0):
            raise ValueError(f"half_length must be positive, got {self.half_length}")

    @property
    def L(self) -> float:
        return float(self.half_length)

    @property
    def N(self) -> int:
        return int(self.point_count)

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def dxi(self) -> float:
        return np.pi / self.L

    @cached_property
    def x(self) -> np.ndarray:
        x = -self.L + self.dx * np.arange(self.N)
        x.setflags(write=False)
        return x

    @cached_property
    def xi(self) -> np.ndarray:
        """Frequencies pi*j/L in FFT order, j = 0..N/2-1, -N/2..-1."""
        j = np.fft.fftfreq(self.N, d=1.0 / self.N)
        xi = j * self.dxi
        xi.setflags(write=False)
        return xi

    @cached_property
    def mode_index(self) -> np.ndarray:
        j = np.rint(np.fft.fftfreq(self.N, d=1.0 / self.N)).astype(np.int64)
        j.setflags(write=False)
        return j

    @cached_property
    def _shift_phase(self) -> np.ndarray:
        # exp(i xi_j L): accounts for x_0 = -L in the DFT sum
        s = np.where(self.mode_index % 2 == 0, 1.0, -1.0)
        s.setflags(write=False)
        return s

    def bin_of(self, xi: float, atol: float = 1e-9) -> int:
        """Array index of the grid frequency equal to ``xi``."""
        j = int(round(xi / self.dxi))
        if abs(j * self.dxi - xi) > atol * max(1.0, abs(xi)) or not (-self.N // 2 <= j < self.N // 2):
            raise ValueError(f"frequency {xi} is not a grid frequency")
        return j % self.N


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex field on a :class:`Grid1D`, physical and/or frequency samples.

    Arrays are frozen; use the module functions to derive new fields.
    """

    grid: Grid1D
    physical: np.ndarray | None = None
    frequency: np.ndarray | None = None

    def __post_init__(self):
        if self.physical is None and self.frequency is None:
            raise ValueError("SpectralField needs at least one representation")
        for name in ("physical", "frequency"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.array(arr, dtype=np.complex128, copy=True)
            if arr.shape != (self.grid.N,):
                raise GridMismatchError(f"{name} samples have shape {arr.shape}, grid needs ({self.grid.N},)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def physical_valid(self) -> bool:
        return self.physical is not None

    @property
    def frequency_valid(self) -> bool:
        return self.frequency is not None

    @classmethod
    def from_physical(cls, grid: Grid1D, values) -> "SpectralField":
        return cls(grid, physical=values)

    @classmethod
    def from_frequency(cls, grid: Grid1D, values) -> "SpectralField":
        return cls(grid, frequency=values)

    def complete(self) -> "SpectralField":
        """Return a field with both representations valid."""
        if self.physical_valid and self.frequency_valid:
            return self
        if self.physical_valid:
            return forward_transform(self)
        return inverse_transform(self)

    def u(self) -> np.ndarray:
        return self.complete().physical

    def u_hat(self) -> np.ndarray:
        return self.complete().frequency


def _dft(grid: Grid1D, u: np.ndarray) -> np.ndarray:
    return grid.dx * grid._shift_phase * np.fft.fft(u)


def _idft(grid: Grid1D, u_hat: np.ndarray) -> np.ndarray:
    return np.fft.ifft(grid._shift_phase * u_hat) / grid.dx


def forward_transform(field: SpectralField) -> SpectralField:
    if not field.physical_valid:
        raise ValueError("forward_transform needs valid physical samples")
    return SpectralField(field.grid, physical=field.physical, frequency=_dft(field.grid, field.physical))


def inverse_transform(field: SpectralField) -> SpectralField:
    if not field.frequency_valid:
        raise ValueError("inverse_transform needs valid frequency samples")
    return SpectralField(field.grid, physical=_idft(field.grid, field.frequency), frequency=field.frequency)


@dataclass(frozen=True)
class FractionalSymbol:
    """The multiplier |xi|^alpha of (-Laplacian)^(alpha/2) sampled on a grid."""

    alpha: float
    grid: Grid1D

    def __post_init__(self):
        if not (0.0 < self.alpha < 2.0):
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")

    @cached_property
    def values(self) -> np.ndarray:
        v = np.abs(self.grid.xi) ** self.alpha
        v.setflags(write=False)
        return v


def half_wave_propagate(field: SpectralField, symbol: FractionalSymbol, t: float, sign: int = 1) -> SpectralField:
    """Multiply every frequency bin by exp(sign * i * t * |xi|^alpha)."""
    if not np.isfinite(t):
        raise ValueError(f"propagation time must be finite, got {t}")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if symbol.grid != field.grid:
        raise GridMismatchError("symbol and field live on different grids")
    u_hat = field.u_hat()
    if t == 0:
        return SpectralField(field.grid, frequency=u_hat)
    return SpectralField(field.grid, frequency=u_hat * np.exp(sign * 1j * t * symbol.values))


# ---------------------------------------------------------------------------
# Littlewood-Paley machinery


def _smooth_step(y):
    """C-infinity step: 0 for y <= 0, 1 for y >= 1, built from exp(-1/y)."""
    y = np.asarray(y, dtype=float)
    out = np.where(y >= 1.0, 1.0, 0.0)
    inside = (y > 0.0) & (y < 1.0)
    yi = y[inside]
    # psi(y) / (psi(y) + psi(1-y)) with psi(s) = exp(-1/s)
    out[inside] = expit(1.0 / (1.0 - yi) - 1.0 / yi)
    return out


def _smooth_step_derivative(y):
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    inside = (y > 0.0) & (y < 1.0)
    yi = y[inside]
    s = expit(1.0 / (1.0 - yi) - 1.0 / yi)
    out[inside] = s * (1.0 - s) * (1.0 / (1.0 - yi) ** 2 + 1.0 / yi**2)
    return out


def base_cutoff(x):
    """Smooth even bump: 1 on [-1, 1], 0 outside (-2, 2), values in [0, 1]."""
    x = np.abs(np.asarray(x, dtype=float))
    return 1.0 - _smooth_step(x - 1.0)


def base_cutoff_derivative(x):
    x = np.asarray(x, dtype=float)
    return -np.sign(x) * _smooth_step_derivative(np.abs(x) - 1.0)


@dataclass(frozen=True)
class LpBank:
    """Dyadic cutoffs phi_k^(m), k = k_min..k_max, with floor index m = k_min."""

    k_min: int
    k_max: int

    def __post_init__(self):
        if self.k_max < self.k_min:
            raise ValueError("k_max must be >= k_min")

    @property
    def floor(self) -> int:
        return self.k_min

    @property
    def indices(self) -> range:
        return range(self.k_min, self.k_max + 1)

    @classmethod
    def for_grid(cls, grid: Grid1D, k_min: int | None = None) -> "LpBank":
        """Bank whose partition of unity covers every grid frequency."""
        xi_max = np.max(np.abs(grid.xi))
        k_max = int(np.ceil(np.log2(xi_max)))
        if k_min is None:
            k_min = int(np.floor(np.log2(grid.dxi))) - 1
        return cls(int(k_min), max(k_max, int(k_min)))

    def cutoff(self, k: int, x) -> np.ndarray:
        if not (self.k_min <= k <= self.k_max):
            raise ValueError(f"dyadic index {k} outside bank range [{self.k_min}, {self.k_max}]")
        x = np.asarray(x, dtype=float)
        if k == self.k_min:
            return base_cutoff(x / 2.0**k)
        return base_cutoff(x / 2.0**k) - base_cutoff(x / 2.0 ** (k - 1))

    def cutoff_derivative(self, k: int, x) -> np.ndarray:
        if not (self.k_min <= k <= self.k_max):
            raise ValueError(f"dyadic index {k} outside bank range [{self.k_min}, {self.k_max}]")
        x = np.asarray(x, dtype=float)
        d = base_cutoff_derivative(x / 2.0**k) / 2.0**k
        if k > self.k_min:
            d = d - base_cutoff_derivative(x / 2.0 ** (k - 1)) / 2.0 ** (k - 1)
        return d

    def total(self, x) -> np.ndarray:
        return sum(self.cutoff(k, x) for k in self.indices)

    def band_of(self, xi: float) -> list[int]:
        """Indices k whose cutoff does not vanish at ``xi``."""
        return [k for k in self.indices if self.cutoff(k, xi) != 0.0]


def lp_project(field: SpectralField, bank: LpBank, k: int) -> SpectralField:
    mult = bank.cutoff(k, field.grid.xi)
    return SpectralField(field.grid, frequency=field.u_hat() * mult)


# ---------------------------------------------------------------------------
# norms


def spectral_derivative(field: SpectralField) -> SpectralField:
    return SpectralField(field.grid, frequency=1j * field.grid.xi * field.u_hat())


def l2_norm(field: SpectralField) -> float:
    if field.physical_valid:
        return float(np.sqrt(field.grid.dx * np.sum(np.abs(field.physical) ** 2)))
    return float(np.sqrt(field.grid.dxi / (2 * np.pi) * np.sum(np.abs(field.frequency) ** 2)))


@dataclass(frozen=True)
class NormConfig:
    sobolev_order: float = 10.0
    z_weight: float = 10.0
    bank: LpBank | None = None


@dataclass
class NormReport:
    sobolev_order: float
    z_weight: float
    h_s_value: float
    z_value: float
    weighted_value: float
    sup_value: float
    l2_value: float
    band_indices: list[int] = field(default_factory=list)
    band_l2: list[float] = field(default_factory=list)
    band_dl2: list[float] = field(default_factory=list)
    band_sup: list[float] = field(default_factory=list)


def _h_s(grid: Grid1D, u_hat: np.ndarray, s: float) -> float:
    w = (1.0 + grid.xi**2) ** (s / 2.0)
    return float(np.sqrt(grid.dxi / (2 * np.pi) * np.sum(np.abs(w * u_hat) ** 2)))


def compute_norms(field: SpectralField, config: NormConfig | None = None) -> NormReport:
    """H^s, Z, ||x d_x f||_2, sup and L^2 norms plus per-band Littlewood-Paley values.

    Band values are norms over xi of f_hat * phi_l, of d/dxi (f_hat * phi_l)
    and the sup of |f_hat * phi_l|.
    """
    config = config or NormConfig()
    f = field.complete()
    grid = f.grid
    u, u_hat = f.physical, f.frequency
    xi = grid.xi

    dfdx = _idft(grid, 1j * xi * u_hat)
    weighted = float(np.sqrt(grid.dx * np.sum(np.abs(grid.x * dfdx) ** 2)))
    z = float(np.max((1.0 + np.abs(xi)) ** config.z_weight * np.abs(u_hat)))

    report = NormReport(
        sobolev_order=config.sobolev_order,
        z_weight=config.z_weight,
        h_s_value=_h_s(grid, u_hat, config.sobolev_order),
        z_value=z,
        weighted_value=weighted,
        sup_value=float(np.max(np.abs(u))),
        l2_value=float(np.sqrt(grid.dx * np.sum(np.abs(u) ** 2))),
    )
    if config.bank is not None:
        for k in config.bank.indices:
            band_hat = u_hat * config.bank.cutoff(k, xi)
            # d/dxi of the band: transform of (-i x) times the band's physical samples
            d_band = _dft(grid, -1j * grid.x * _idft(grid, band_hat))
            report.band_indices.append(k)
            report.band_l2.append(float(np.sqrt(grid.dxi * np.sum(np.abs(band_hat) ** 2))))
            report.band_dl2.append(float(np.sqrt(grid.dxi * np.sum(np.abs(d_band) ** 2))))
            report.band_sup.append(float(np.max(np.abs(band_hat))))
    return report


def scaling_field_apply(u: SpectralField, dt_u: SpectralField, t: float, alpha: float) -> SpectralField:
    """S u = alpha t d_t u + x d_x u with a spectral x-derivative."""
    if u.grid != dt_u.grid:
        raise GridMismatchError("u and d_t u live on different grids")
    grid = u.grid
    dxu = _idft(grid, 1j * grid.xi * u.u_hat())
    return SpectralField(grid, physical=alpha * t * dt_u.u() + grid.x * dxu)


def commutator_x_dx_fractional(field: SpectralField, symbol: FractionalSymbol) -> SpectralField:
    """[x d_x, |D|^alpha] g = x d_x |D|^alpha g - |D|^alpha (x d_x g)."""
    grid = field.grid
    g_hat = field.u_hat()
    m = symbol.values

    def x_dx(h_hat):
        return grid.x * _idft(grid, 1j * grid.xi * h_hat)

    first = x_dx(m * g_hat)
    second = _idft(grid, m * _dft(grid, x_dx(g_hat)))
    return SpectralField(grid, physical=first - second)
