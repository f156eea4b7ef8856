"""Trilinear frequency interactions, resonances and the phase approximations.

The cubic term drives the profile through

    d/dt f_hat(xi, t) = kappa * I(xi, t),
    I(xi, t) = int int exp(i t Psi) f_hat(xi - eta) f_hat(eta - sigma) conj(f_hat(-sigma)) deta dsigma,
    Psi = |xi|^a - |xi - eta|^a - |eta - sigma|^a + |sigma|^a,

with kappa = -i c (2 pi)^-2 for f_hat = int f exp(-i xi x) dx.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import binom

from .spectral_core import FractionalSymbol, Grid1D, LpBank, SpectralField, _dft, _idft

__all__ = [
    "QuadratureError",
    "TrilinearPhase",
    "ResonancePoint",
    "ResonanceScan",
    "duhamel_kappa",
    "trilinear_integral",
    "band_decomposed_integral",
    "fft_cubic_integral",
    "DuhamelResult",
    "duhamel_consistency",
    "profile_snapshots",
    "classify_point",
    "find_resonances",
    "quadratic_phase_residual",
    "taylor_samples",
    "gaussian_integral",
    "gaussian_integral_quadrature",
    "gaussian_substitute",
    "gaussian_limit_window",
    "gaussian_limit_check",
]


class QuadratureError(RuntimeError):
    pass


def _g(alpha, y):
    """d/dy |y|^alpha."""
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return alpha * np.sign(y) * np.abs(y) ** (alpha - 1.0)


def _g1(alpha, y):
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore"):
        return alpha * (alpha - 1.0) * np.abs(y) ** (alpha - 2.0)


@dataclass(frozen=True)
class TrilinearPhase:
    alpha: float

    def psi(self, xi, eta, sigma):
        a = self.alpha
        xi, eta, sigma = (np.asarray(v, dtype=float) for v in (xi, eta, sigma))
        return np.abs(xi) ** a - np.abs(xi - eta) ** a - np.abs(eta - sigma) ** a + np.abs(sigma) ** a

    def phi_shifted(self, xi, eta, sigma):
        a = self.alpha
        xi, eta, sigma = (np.asarray(v, dtype=float) for v in (xi, eta, sigma))
        return np.abs(xi) ** a - np.abs(xi + eta) ** a - np.abs(xi + sigma) ** a + np.abs(xi + eta + sigma) ** a

    def gradient(self, xi, eta, sigma):
        """(d Psi / d eta, d Psi / d sigma)."""
        a = self.alpha
        d_eta = _g(a, xi - eta) - _g(a, eta - sigma)
        d_sigma = _g(a, eta - sigma) + _g(a, sigma)
        return d_eta, d_sigma

    def hessian(self, xi, eta, sigma):
        a = self.alpha
        p, q, r = _g1(a, np.subtract(xi, eta)), _g1(a, np.subtract(eta, sigma)), _g1(a, sigma)
        return np.array([[-p - q, q], [q, -q + r]])

    def phi_shifted_gradient(self, xi, eta, sigma):
        a = self.alpha
        return (-_g(a, np.add(xi, eta)) + _g(a, np.add(np.add(xi, eta), sigma)),
                -_g(a, np.add(xi, sigma)) + _g(a, np.add(np.add(xi, eta), sigma)))


def duhamel_kappa(c_star: float) -> complex:
    return -1j * c_star / (4 * np.pi**2)


# ---------------------------------------------------------------------------
# trilinear integral on the grid lattice


def _signed(grid: Grid1D, f_hat: np.ndarray) -> tuple[np.ndarray, int]:
    """f_hat reordered by signed mode index, with the offset of mode 0."""
    return np.fft.fftshift(f_hat), grid.N // 2


def _check_resolved(grid: Grid1D, f_hat: np.ndarray, floor: float):
    mag = np.abs(f_hat)
    peak = mag.max() if mag.size else 0.0
    if peak == 0:
        return np.zeros(0, dtype=int)
    idx = grid.mode_index[mag > floor * peak]
    if np.max(np.abs(idx)) > grid.N // 6:
        raise QuadratureError(
            "profile is not resolved: significant modes beyond N/6, the lattice sum would alias"
        )
    return idx


def trilinear_integral(
    field: SpectralField,
    alpha: float,
    t: float,
    xi_index: Sequence[int] | int,
    bands: tuple[int, int, int] | None = None,
    bank: LpBank | None = None,
    floor: float = 1e-13,
) -> np.ndarray:
    """I(xi, t) at the lattice frequencies ``xi_index * dxi``.

    The (eta, sigma) integral is a tensor sum over the frequency lattice, which
    is spectrally accurate for smooth, resolved profiles. With ``bands`` the
    three factors are multiplied by phi_k1, phi_k2, phi_k3 from ``bank``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    grid = field.grid
    f_hat = field.complete().frequency
    scalar = np.isscalar(xi_index)
    m_list = np.atleast_1d(np.asarray(xi_index, dtype=int))
    support = _check_resolved(grid, f_hat, floor)
    if support.size == 0:
        return np.zeros(m_list.shape, dtype=complex)[0] if scalar else np.zeros(m_list.shape, dtype=complex)
    lo, hi = int(support.min()), int(support.max())
    n = grid.N
    mag = np.abs(f_hat)
    f_hat = np.where(mag > floor * mag.max(), f_hat, 0.0)
    shifted, off = _signed(grid, f_hat)

    def factor(k):
        if bands is None:
            return shifted
        b = bank or LpBank.for_grid(grid)
        xi_s = np.fft.fftshift(grid.xi)
        return shifted * b.cutoff(bands[k], xi_s)

    f1, f2, f3 = factor(0), factor(1), factor(2)

    def take(arr, idx):
        out = np.zeros(idx.shape, dtype=complex)
        ok = (idx >= -n // 2) & (idx < n // 2)
        out[ok] = arr[idx[ok] + off]
        return out

    dxi = grid.dxi
    phase = TrilinearPhase(alpha)
    sig = -np.arange(lo, hi + 1)  # -sigma in support
    c3 = np.conj(take(f3, -sig))
    out = np.empty(m_list.shape, dtype=complex)
    for i, m in enumerate(m_list):
        eta = m - np.arange(lo, hi + 1)  # xi - eta in support
        a1 = take(f1, m - eta)
        d = eta[:, None] - sig[None, :]
        a2 = take(f2, d)
        psi = phase.psi(m * dxi, eta[:, None] * dxi, sig[None, :] * dxi)
        mat = np.exp(1j * t * psi) * a2
        out[i] = dxi**2 * (a1 @ mat @ c3)
    return out[0] if scalar else out


def band_decomposed_integral(
    field: SpectralField,
    alpha: float,
    t: float,
    xi_index: Sequence[int],
    bank: LpBank,
    floor: float = 1e-13,
) -> np.ndarray:
    """Sum of the band-filtered integrals over every triple of active bands."""
    grid = field.grid
    f_hat = field.complete().frequency
    mag = np.abs(f_hat)
    active = [k for k in bank.indices if np.any(bank.cutoff(k, grid.xi) * mag > floor * mag.max())]
    total = np.zeros(len(xi_index), dtype=complex)
    for k1 in active:
        for k2 in active:
            for k3 in active:
                total += trilinear_integral(field, alpha, t, xi_index, (k1, k2, k3), bank, floor)
    return total


def fft_cubic_integral(field: SpectralField, alpha: float, t: float) -> np.ndarray:
    """I(xi, t) on every bin via (2 pi)^2 exp(i t |xi|^a) F[|u|^2 u], u = exp(-i t |D|^a) f."""
    grid = field.grid
    m = FractionalSymbol(alpha, grid).values
    u = _idft(grid, np.exp(-1j * t * m) * field.complete().frequency)
    return (2 * np.pi) ** 2 * np.exp(1j * t * m) * _dft(grid, np.abs(u) ** 2 * u)


# ---------------------------------------------------------------------------
# Duhamel calibration


def profile_snapshots(config, times: Sequence[float]) -> list[np.ndarray]:
    """f_hat at the requested times (multiples of config.dt) for a solver run."""
    from .evolution import _advance

    grid = config.grid
    m = FractionalSymbol(config.alpha, grid).values
    u_hat = _dft(grid, config.initial_samples())
    out, step = [], 0
    for t in times:
        target = int(round(t / config.dt))
        if abs(target * config.dt - t) > 1e-9 * max(1.0, t):
            raise ValueError(f"time {t} is not a multiple of dt={config.dt}")
        if target < step:
            raise ValueError("times must be increasing")
        if target > step:
            u_hat = _advance(u_hat, grid, m, config.c_star, config.dt, target - step)
            step = target
        out.append(np.exp(1j * step * config.dt * m) * u_hat)
    return out


@dataclass
class DuhamelResult:
    t: float
    spacing: float
    xi: np.ndarray
    finite_difference: np.ndarray
    predicted: np.ndarray
    error: float

    @property
    def bin_errors(self) -> np.ndarray:
        scale = np.max(np.abs(self.predicted))
        if scale == 0:
            return np.abs(self.finite_difference - self.predicted)
        return np.abs(self.finite_difference - self.predicted) / scale


def duhamel_consistency(
    grid: Grid1D,
    times: Sequence[float],
    snapshots: Sequence[np.ndarray],
    alpha: float,
    c_star: float,
    n_bins: int = 24,
    level: float = 0.1,
) -> DuhamelResult:
    """Centered difference of f_hat against kappa * I at the middle snapshot.

    The error is max |FD - kappa I| / max |kappa I| over monitored bins, which are
    up to ``n_bins`` lattice frequencies with |f_hat| >= level * max.
    """
    if len(times) != 3 or len(snapshots) != 3:
        raise ValueError("need exactly three snapshots")
    t0, t1, t2 = (float(v) for v in times)
    h = t1 - t0
    if not h > 0 or abs((t2 - t1) - h) > 1e-9 * max(1.0, h):
        raise ValueError("snapshot spacing must be uniform and positive")
    f0, f1, f2 = (np.asarray(s) for s in snapshots)
    fd = (f2 - f0) / (2 * h)
    mag = np.abs(f1)
    if mag.max() == 0:
        idx = np.zeros(0, dtype=int)
    else:
        idx = np.flatnonzero(mag >= level * mag.max())
        if idx.size > n_bins:
            idx = idx[np.round(np.linspace(0, idx.size - 1, n_bins)).astype(int)]
    modes = grid.mode_index[idx]
    kappa = duhamel_kappa(c_star)
    if c_star == 0 or idx.size == 0:
        pred = np.zeros(idx.size, dtype=complex)
    else:
        pred = kappa * trilinear_integral(SpectralField.from_frequency(grid, f1), alpha, t1, modes)
    diff = np.abs(fd[idx] - pred)
    scale = np.max(np.abs(pred)) if pred.size else 0.0
    err = float(np.max(diff) / scale) if scale > 0 else float(np.max(diff, initial=0.0))
    return DuhamelResult(t1, h, grid.xi[idx], fd[idx], pred, err)


# ---------------------------------------------------------------------------
# resonances


@dataclass(frozen=True)
class ResonancePoint:
    xi: float
    eta: float
    sigma: float
    psi: float
    d_eta: float
    d_sigma: float
    tol: float = 1e-8

    @property
    def pattern(self) -> dict[str, bool]:
        return {"psi": self.psi < self.tol, "d_eta": self.d_eta < self.tol, "d_sigma": self.d_sigma < self.tol}

    @property
    def is_full(self) -> bool:
        return all(self.pattern.values())

    def to_dict(self) -> dict:
        return {
            "xi": self.xi, "eta": self.eta, "sigma": self.sigma,
            "residual_psi": self.psi, "residual_d_eta": self.d_eta, "residual_d_sigma": self.d_sigma,
            "vanishing": self.pattern, "space_time_resonance": self.is_full,
        }


@dataclass
class ResonanceScan:
    alpha: float
    tol: float
    points: list[ResonancePoint] = field(default_factory=list)
    boundary: list[ResonancePoint] = field(default_factory=list)
    probes: list[ResonancePoint] = field(default_factory=list)


def classify_point(alpha: float, xi: float, eta: float, sigma: float, tol: float = 1e-8) -> ResonancePoint:
    ph = TrilinearPhase(alpha)
    de, ds = ph.gradient(xi, eta, sigma)
    return ResonancePoint(float(xi), float(eta), float(sigma), float(abs(ph.psi(xi, eta, sigma))),
                          float(abs(de)), float(abs(ds)), tol)


def _locus_signs(xi, eta, sigma):
    return np.sign([xi - eta, eta - sigma, sigma])


def _newton(ph: TrilinearPhase, xi, z, tol, max_iter=60):
    """Newton on grad Psi = 0. Returns (point, converged, crossed_locus)."""
    signs = _locus_signs(xi, *z)
    for _ in range(max_iter):
        g = np.array(ph.gradient(xi, *z), dtype=float)
        if np.max(np.abs(g)) < 1e-14:
            return z, True, False
        H = ph.hessian(xi, *z)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            return z, False, False
        # backtrack to stay inside the smooth cell
        lam = 1.0
        while lam > 1e-6:
            cand = z + lam * step
            if np.all(_locus_signs(xi, *cand) == signs):
                break
            lam *= 0.5
        else:
            return z, False, True
        z = cand
        if not np.all(np.isfinite(z)):
            return z, False, False
        if np.max(np.abs(lam * step)) < 1e-15 * (1 + np.max(np.abs(z))):
            break
    g = np.array(ph.gradient(xi, *z), dtype=float)
    return z, bool(np.max(np.abs(g)) < tol), False


def find_resonances(
    alpha: float,
    xi_values: Sequence[float],
    tol: float = 1e-8,
    n_scan: int = 161,
    extent: float = 3.0,
    probes: Sequence[tuple[float, float]] = ((0.0, -1.0), (0.0, 1.0)),
) -> ResonanceScan:
    """Locate points with Psi = d_eta Psi = d_sigma Psi = 0 for each xi.

    A coarse scan of |Psi| + |grad Psi| over (eta, sigma) in [-extent |xi|, extent |xi|]^2
    seeds Newton on the gradient equations inside the smooth cells. Candidates
    that are pushed onto a non-smooth locus (xi - eta, eta - sigma or sigma = 0)
    are listed in ``boundary``. ``probes`` are (eta/xi, sigma/xi) pairs whose
    vanishing pattern is recorded regardless of the outcome.
    """
    ph = TrilinearPhase(alpha)
    scan = ResonanceScan(alpha, tol)
    for xi in xi_values:
        xi = float(xi)
        if xi == 0:
            raise ValueError("xi = 0 lies on the non-smooth locus")
        r = extent * abs(xi)
        # cell centres: offset so no sample sits exactly on a locus
        h = 2 * r / n_scan
        grid = -r + h * (np.arange(n_scan) + 0.5) + 0.137 * h
        E, S = np.meshgrid(grid, grid, indexing="ij")
        de, ds = ph.gradient(xi, E, S)
        F = np.abs(ph.psi(xi, E, S)) + np.abs(de) + np.abs(ds)
        F = np.where(np.isfinite(F), F, np.inf)
        inner = F[1:-1, 1:-1]
        is_min = np.ones_like(inner, dtype=bool)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di or dj:
                    is_min &= inner <= F[1 + di : n_scan - 1 + di, 1 + dj : n_scan - 1 + dj]
        seeds = np.argwhere(is_min) + 1
        found: list[ResonancePoint] = []
        for i, j in seeds:
            z0 = np.array([grid[i], grid[j]])
            z, ok, crossed = _newton(ph, xi, z0, tol)
            if crossed:
                pt = classify_point(alpha, xi, *z, tol)
                if not any(abs(p.eta - pt.eta) + abs(p.sigma - pt.sigma) < 1e-6 * abs(xi) for p in scan.boundary):
                    scan.boundary.append(pt)
                continue
            if not ok:
                continue
            pt = classify_point(alpha, xi, *z, tol)
            if not pt.is_full:
                continue
            if any(abs(p.eta - pt.eta) + abs(p.sigma - pt.sigma) < 1e-6 * abs(xi) for p in found):
                continue
            found.append(pt)
        scan.points.extend(sorted(found, key=lambda p: (p.eta, p.sigma)))
        for pe, ps in probes:
            scan.probes.append(classify_point(alpha, xi, pe * xi, ps * xi, tol))
    return scan


# ---------------------------------------------------------------------------
# quadratic Taylor model of the shifted phase


def _cubic_remainder(alpha: float, a: np.ndarray, b: np.ndarray, terms: int = 60) -> np.ndarray:
    """sum_{n>=3} C(alpha, n) ((a+b)^n - a^n - b^n), summed termwise without cancellation."""
    total = np.zeros(np.broadcast(a, b).shape)
    for n in range(3, terms + 1):
        j = np.arange(1, n)
        cross = np.sum(binom(n, j)[:, None] * a[None, :] ** j[:, None] * b[None, :] ** (n - j)[:, None], axis=0)
        total = total + binom(alpha, n) * cross
    return total


def taylor_samples(xi: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Lattice points of an n x n grid on [-r, r]^2 inside |eta| + |sigma| <= r, r = |xi| / 4."""
    r = abs(xi) / 4
    g = np.linspace(-r, r, n)
    e, s = np.meshgrid(g, g, indexing="ij")
    keep = np.abs(e) + np.abs(s) <= r * (1 + 1e-12)
    return e[keep], s[keep]


def quadratic_phase_residual(alpha: float, xi: float, eta, sigma) -> float:
    """max |Phi - a(a-1) eta sigma / |xi|^(2-a)| / (|xi|^(a-3) (|eta|+|sigma|)^3).

    Phi is the shifted phase; samples must satisfy |eta| + |sigma| <= |xi| / 4.
    """
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    eta, sigma = np.broadcast_arrays(eta, sigma)
    size = np.abs(eta) + np.abs(sigma)
    if xi == 0 or np.any(size > abs(xi) / 4 * (1 + 1e-12)):
        raise ValueError("samples must satisfy |eta| + |sigma| <= |xi| / 4")
    keep = size > 0
    if not np.any(keep):
        return 0.0
    a, b = eta[keep] / xi, sigma[keep] / xi
    # Phi / |xi|^a = E(a+b) - E(a) - E(b) with E(x) = (1+x)^alpha - 1
    num = np.abs(_cubic_remainder(alpha, a, b))
    return float(np.max(num / (np.abs(a) + np.abs(b)) ** 3))


# ---------------------------------------------------------------------------
# Gaussian limit of the quadratic-phase double integral


def gaussian_integral(a: complex, b: complex) -> complex:
    """int exp(-a x^2 - b x) dx = exp(b^2 / 4a) sqrt(pi / a), Re a > 0."""
    a = complex(a)
    if a.real <= 0:
        raise ValueError("need Re a > 0")
    return complex(np.exp(b * b / (4 * a)) * np.sqrt(np.pi) / np.sqrt(a))


def gaussian_integral_quadrature(a: complex, b: complex, rtol: float = 1e-13) -> complex:
    """Same integral by Gauss-Hermite-free panel quadrature on a truncated line."""
    from scipy.integrate import quad

    a = complex(a)
    if a.real <= 0:
        raise ValueError("need Re a > 0")
    centre = -(b / (2 * a)).real
    half = math.sqrt(40.0 / a.real) + abs(b) / a.real

    def part(fn):
        return quad(lambda x: fn(np.exp(-a * x * x - b * x)), centre - half, centre + half,
                    epsabs=0, epsrel=rtol, limit=400, points=[centre])[0]

    return complex(part(np.real), part(np.imag))


def gaussian_substitute(n: float) -> float:
    """int int exp(i eta sigma) exp(-(eta/n)^2 - (sigma/n)^2) deta dsigma = 2 pi / sqrt(1 + 4/n^4)."""
    return 2 * np.pi / math.sqrt(1.0 + 4.0 / n**4)


def gaussian_limit_window(alpha: float, xi: float, s: float) -> int:
    """Smallest integer l with 2^(2l) >= 2^(k(2-alpha)) / s, k = floor(log2 |xi|)."""
    k = math.floor(math.log2(abs(xi)))
    target = k * (2 - alpha) - math.log2(s)
    l = math.ceil(target / 2)
    while 2 * (l - 1) >= target:
        l -= 1
    return l


def _bump(x):
    from .spectral_core import base_cutoff

    return base_cutoff(x)


def _phi_quadrature(c: float, R: float, n_panels: int, order: int = 32) -> complex:
    """int int exp(i c eta sigma) phi(eta/R) phi(sigma/R) over [-2R, 2R]^2, tensor Gauss-Legendre."""
    x, w = np.polynomial.legendre.leggauss(order)
    # panels on [-2, 2] with breaks at +-1 where phi switches regime
    edges = np.unique(np.concatenate([np.linspace(-2, -1, n_panels + 1), np.linspace(-1, 1, 2 * n_panels + 1),
                                      np.linspace(1, 2, n_panels + 1)]))
    lo, hi = edges[:-1], edges[1:]
    nodes = ((hi - lo)[:, None] * (x[None, :] + 1) / 2 + lo[:, None]).ravel()
    weights = ((hi - lo)[:, None] * w[None, :] / 2).ravel()
    amp = weights * _bump(nodes)
    z = R * nodes
    # separable: sum_ij A_i A_j exp(i c R^2 z_i z_j) R^2
    kernel = np.exp(1j * c * np.outer(z, z))
    return complex(R * R * (amp @ kernel @ amp))


def gaussian_limit_check(
    alpha: float,
    xi: float,
    s: float,
    l_bar: int | None = None,
    rtol: float = 1e-11,
    max_panels: int = 4096,
) -> dict:
    """Deviation of the windowed quadratic-phase integral from 2 pi |xi|^(2-alpha) / (alpha (1-alpha) s)."""
    if s < 1:
        raise ValueError("s must be >= 1")
    if l_bar is None:
        l_bar = gaussian_limit_window(alpha, xi, s)
    c = s * alpha * (alpha - 1) / abs(xi) ** (2 - alpha)
    R = 2.0**l_bar
    n = max(2, int(math.ceil(abs(c) * 4 * R * R / math.pi)))
    prev = _phi_quadrature(c, R, n)
    while True:
        n *= 2
        if n > max_panels:
            raise QuadratureError("double integral did not converge under panel refinement")
        cur = _phi_quadrature(c, R, n)
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
            break
        prev = cur
    target = 2 * np.pi * abs(xi) ** (2 - alpha) / (alpha * (1 - alpha) * s)
    return {"alpha": alpha, "xi": xi, "s": s, "l_bar": l_bar, "value": cur, "target": target,
            "deviation": abs(cur - target), "panels": n}
