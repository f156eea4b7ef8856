"""Oscillatory-integral checks of the fractional dispersive decay estimate.

The object of study is::

    A(t, x) = int exp(i (t |xi|^alpha + x xi)) f_hat(xi) dxi

so that ``exp(i t |D|^alpha) f (x) = A(t, x) / (2 pi)`` under the package convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .spectral_core import LpBank, NormConfig, SpectralField, compute_norms

__all__ = [
    "ConvergenceError",
    "OscillatoryIntegralSpec",
    "RegionDecomposition",
    "DispersiveRow",
    "profile_from_field",
    "profile_support",
    "linear_solution_values",
    "evaluate_linear_solution",
    "stationary_point",
    "stationary_point_closed_form",
    "stationary_point_bisection",
    "stationary_phase_leading",
    "stationary_phase_estimate",
    "sup_linear_solution",
    "verify_dispersive_bound",
    "region_split",
    "stationary_window_index",
]

Profile = Callable[[np.ndarray], np.ndarray]

_GL_ORDER = 24
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class OscillatoryIntegralSpec:
    alpha: float
    t: float
    x: float
    profile: Profile
    support: tuple[float, float]

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.t < 0:
            raise ValueError("t must be nonnegative")
        if not self.support[0] < self.support[1]:
            raise ValueError("support must be an increasing pair")

    def phase(self, xi):
        xi = np.asarray(xi, dtype=float)
        return self.t * np.abs(xi) ** self.alpha + self.x * xi

    def phase_d1(self, xi):
        xi = np.asarray(xi, dtype=float)
        return self.t * self.alpha * np.sign(xi) * np.abs(xi) ** (self.alpha - 1.0) + self.x

    def phase_d2(self, xi):
        xi = np.asarray(xi, dtype=float)
        return self.alpha * (self.alpha - 1.0) * self.t * np.abs(xi) ** (self.alpha - 2.0)


# ---------------------------------------------------------------------------
# profiles


def profile_from_field(field: SpectralField, chunk: int = 2048) -> Profile:
    """Continuous extension xi -> dx * sum_j u(x_j) exp(-i xi x_j) of a grid field."""
    grid = field.grid
    u = field.u()
    keep = np.abs(u) > 0
    xs, us = grid.x[keep], u[keep] * grid.dx

    def f_hat(xi):
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        out = np.empty(xi.shape, dtype=complex)
        flat = xi.ravel()
        res = out.ravel()
        for s in range(0, flat.size, chunk):
            blk = flat[s : s + chunk]
            res[s : s + chunk] = np.exp(-1j * np.outer(blk, xs)) @ us
        return out

    return f_hat


def profile_support(field: SpectralField, rel_floor: float = 1e-14) -> tuple[float, float]:
    """Interval of grid frequencies where |f_hat| exceeds ``rel_floor * max``."""
    u_hat = np.abs(field.u_hat())
    if not np.any(u_hat > 0):
        return (-field.grid.dxi, field.grid.dxi)
    big = field.grid.xi[u_hat > rel_floor * u_hat.max()]
    return float(big.min() - field.grid.dxi), float(big.max() + field.grid.dxi)


# ---------------------------------------------------------------------------
# quadrature


def _half_line_nodes(alpha, t, xmax, lo, hi, phase_step, grade_levels=40):
    """Gauss-Legendre nodes/weights on [lo, hi] (0 <= lo < hi) in s = xi^alpha."""
    s_lo, s_hi = lo**alpha, hi**alpha
    # cumulative bound on phase variation in s: t*s + xmax*s^(1/alpha)
    s_fine = np.linspace(s_lo, s_hi, 4097)
    g = t * s_fine + xmax * s_fine ** (1.0 / alpha) + (s_fine - s_lo) / max(s_hi - s_lo, 1e-300) * 8 * np.pi
    n_panels = max(1, int(np.ceil((g[-1] - g[0]) / phase_step)))
    targets = np.linspace(g[0], g[-1], n_panels + 1)
    breaks = np.interp(targets, g, s_fine)
    breaks[0], breaks[-1] = s_lo, s_hi
    if lo == 0.0 and grade_levels:
        # jacobian s^(1/alpha - 1) is not smooth at s = 0; grade the first panel
        first = breaks[1]
        graded = first * 2.0 ** -np.arange(grade_levels, 0, -1)
        breaks = np.concatenate([[0.0], graded, breaks[1:]])
    a, b = breaks[:-1], breaks[1:]
    half = 0.5 * (b - a)
    s = (0.5 * (a + b))[:, None] + half[:, None] * _GL_NODES[None, :]
    w = half[:, None] * _GL_WEIGHTS[None, :]
    s, w = s.ravel(), w.ravel()
    xi = s ** (1.0 / alpha)
    jac = s ** (1.0 / alpha - 1.0) / alpha
    return xi, w * jac


def _nodes(alpha, t, xmax, support, phase_step):
    a, b = support
    parts = []
    if b > 0:
        xi, w = _half_line_nodes(alpha, t, xmax, max(a, 0.0), b, phase_step)
        parts.append((xi, w))
    if a < 0:
        xi, w = _half_line_nodes(alpha, t, xmax, max(-b, 0.0), -a, phase_step)
        parts.append((-xi, w))
    xi = np.concatenate([p[0] for p in parts])
    w = np.concatenate([p[1] for p in parts])
    return xi, w


def _apply(alpha, t, xs, xi, w, fvals, chunk_elems=4_000_000):
    base = w * fvals * np.exp(1j * t * np.abs(xi) ** alpha)
    out = np.empty(xs.size, dtype=complex)
    step = max(1, chunk_elems // max(xi.size, 1))
    for s in range(0, xs.size, step):
        out[s : s + step] = np.exp(1j * np.outer(xs[s : s + step], xi)) @ base
    return out


def linear_solution_values(
    profile: Profile,
    alpha: float,
    t: float,
    xs,
    support: tuple[float, float],
    rtol: float = 1e-8,
    max_refinements: int = 8,
    max_nodes: int = 4_000_000,
) -> np.ndarray:
    """A(t, x) for every x in ``xs`` by adaptive panel Gauss-Legendre quadrature.

    Panels are laid out so that the phase advances by a fixed step across each
    one; the step is halved until the change between successive levels is below
    ``rtol`` times the absolute integral of the profile.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    xmax = float(np.max(np.abs(xs))) if xs.size else 0.0
    step = 4.0 * np.pi
    xi, w = _nodes(alpha, t, xmax, support, step)
    fvals = profile(xi)
    scale = float(np.sum(w * np.abs(fvals)))
    if scale == 0.0:
        return np.zeros(xs.size, dtype=complex)
    prev = _apply(alpha, t, xs, xi, w, fvals)
    for _ in range(max_refinements):
        step /= 2.0
        xi, w = _nodes(alpha, t, xmax, support, step)
        if xi.size > max_nodes:
            break
        cur = _apply(alpha, t, xs, xi, w, profile(xi))
        if np.max(np.abs(cur - prev)) <= rtol * scale:
            return cur
        prev = cur
    raise ConvergenceError(
        f"oscillatory quadrature did not settle (t={t}, |x|<={xmax}, nodes={xi.size})"
    )


def evaluate_linear_solution(spec: OscillatoryIntegralSpec, rtol: float = 1e-8) -> complex:
    return complex(linear_solution_values(spec.profile, spec.alpha, spec.t, [spec.x], spec.support, rtol)[0])


# ---------------------------------------------------------------------------
# stationary phase


def stationary_point(alpha: float, t: float, x: float, check: bool = True) -> float | None:
    """Critical point of t|xi|^alpha + x xi, or ``None`` for x = 0.

    Phi'(xi) = t alpha sgn(xi) |xi|^(alpha-1) + x vanishes only where
    sgn(xi) = -sgn(x) and |xi|^(1-alpha) = alpha t / |x|.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if x == 0:
        return None
    xi0 = -math.copysign((alpha * t / abs(x)) ** (1.0 / (1.0 - alpha)), x)
    if check:
        resid = t * alpha * math.copysign(abs(xi0) ** (alpha - 1.0), xi0) + x
        if abs(resid) >= 1e-10 * t:
            raise ArithmeticError(f"stationary point residual {resid} too large")
    return xi0


def stationary_point_closed_form(alpha: float, t: float, x: float) -> float:
    """alpha^(-1/(1-alpha)) |t/x|^(1/(1-alpha)) sgn(t/x), a sign-reversed closed form.

    Kept for comparison only: it does not zero Phi'.
    """
    r = t / x
    return alpha ** (-1.0 / (1.0 - alpha)) * abs(r) ** (1.0 / (1.0 - alpha)) * math.copysign(1.0, r)


def stationary_point_bisection(alpha: float, t: float, x: float, xtol: float = 1e-15) -> float:
    """Root of Phi' on the half-line where Phi' changes sign, by bisection."""
    if x == 0:
        raise ValueError("no stationary point for x = 0")
    side = -1.0 if x > 0 else 1.0

    def d1(r):  # r = |xi| > 0
        return t * alpha * side * r ** (alpha - 1.0) + x

    lo, hi = 1e-300, 1.0
    while d1(hi) * d1(lo) > 0:
        hi *= 2.0
        if hi > 1e300:
            raise ArithmeticError("could not bracket the stationary point")
    root = brentq(d1, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=2000)
    return side * root


def stationary_phase_leading(phase0: float, phase2: float, amplitude: complex) -> complex:
    """sqrt(2 pi / |Phi''|) exp(i (Phi + pi/4 sgn Phi'')) g at a nondegenerate critical point."""
    if abs(phase2) < 1e-14:
        raise ArithmeticError("degenerate critical point")
    return math.sqrt(2 * math.pi / abs(phase2)) * np.exp(1j * (phase0 + math.copysign(math.pi / 4, phase2))) * amplitude


def stationary_phase_estimate(spec: OscillatoryIntegralSpec, xi0: float | None = None) -> complex:
    if xi0 is None:
        xi0 = stationary_point(spec.alpha, spec.t, spec.x)
        if xi0 is None:
            raise ArithmeticError("x = 0: no stationary point")
    amp = complex(np.atleast_1d(spec.profile(np.array([xi0])))[0])
    return stationary_phase_leading(float(spec.phase(xi0)), float(spec.phase_d2(xi0)), amp)


# ---------------------------------------------------------------------------
# sup over x


def _x_window(profile, alpha, t, support, n_probe=2001):
    """x-interval mapped by the group velocity from the significant support."""
    a, b = support
    probe = np.linspace(a, b, n_probe)
    probe = probe[probe != 0]
    weight = np.abs(probe) ** (1 - alpha / 2) * np.abs(profile(probe))
    if not np.any(weight > 0):
        return -1.0, 1.0
    sig = probe[weight >= 1e-3 * weight.max()]
    xs = -alpha * t * np.sign(sig) * np.abs(sig) ** (alpha - 1.0)
    lo, hi = float(xs.min()), float(xs.max())
    pad = 0.1 * (hi - lo) + 1.0
    return lo - pad, hi + pad


def sup_linear_solution(
    profile: Profile,
    alpha: float,
    t: float,
    support: tuple[float, float],
    n_x: int = 256,
    rtol: float = 1e-8,
    stability: float = 1e-3,
    max_doublings: int = 4,
) -> tuple[float, float]:
    """(sup_x |A(t, x)|, argmax) on a group-velocity window, refined locally.

    The coarse x-grid is doubled until the refined sup changes by less than
    ``stability`` (relative).
    """
    lo, hi = _x_window(profile, alpha, t, support)

    def refined(n):
        xs = np.linspace(lo, hi, n)
        vals = np.abs(linear_solution_values(profile, alpha, t, xs, support, rtol))
        order = np.argsort(vals)[::-1][:3]
        best_val, best_x = float(vals[order[0]]), float(xs[order[0]])
        h = xs[1] - xs[0]
        for i in order:
            res = minimize_scalar(
                lambda x: -abs(linear_solution_values(profile, alpha, t, [x], support, rtol)[0]),
                bounds=(xs[i] - h, xs[i] + h),
                method="bounded",
                options={"xatol": 1e-6 * max(1.0, abs(xs[i]))},
            )
            if -res.fun > best_val:
                best_val, best_x = float(-res.fun), float(res.x)
        return best_val, best_x

    prev = refined(n_x)
    n = n_x
    for _ in range(max_doublings):
        n *= 2
        cur = refined(n)
        if abs(cur[0] - prev[0]) <= stability * max(cur[0], 1e-300):
            return max(cur, prev)
        prev = cur
    raise ConvergenceError("sup over x is unstable under x-grid refinement")


# ---------------------------------------------------------------------------
# region decomposition


def stationary_window_index(alpha: float, t: float, k: int) -> int:
    """Smallest integer l0 with 2^(2 l0) >= 2^(k (2 - alpha)) / t."""
    target = k * (2.0 - alpha) - math.log2(t)
    l0 = math.ceil(target / 2.0)
    while 2 * (l0 - 1) >= target:
        l0 -= 1
    while 2 * l0 < target:
        l0 += 1
    return l0


@dataclass
class RegionDecomposition:
    alpha: float
    p0: float
    t: float
    low_cutoff: float
    high_cutoff: float
    low: list[int] = field(default_factory=list)
    middle: list[int] = field(default_factory=list)
    high: list[int] = field(default_factory=list)
    windows: dict[int, int] = field(default_factory=dict)
    sup_low: float = 0.0
    sup_middle: float = 0.0
    sup_high: float = 0.0


def region_split(
    profile: Profile,
    support: tuple[float, float],
    alpha: float,
    p0: float,
    t: float,
    bank: LpBank,
    margin_log2: float = 10.0,
    n_x: int = 128,
    rtol: float = 1e-8,
) -> RegionDecomposition:
    """Split frequencies into low / middle / high dyadic ranges and measure each.

    low: 2^k <= 2^margin (1+t)^-(1+2 p0); high: 2^k >= 2^-margin (1+t);
    a band meeting both conditions is counted as low.
    """
    if t < 1:
        raise ValueError("region_split needs t >= 1")
    low_cut = 2.0**margin_log2 * (1.0 + t) ** (-(1.0 + 2.0 * p0))
    high_cut = 2.0**-margin_log2 * (1.0 + t)
    dec = RegionDecomposition(alpha, p0, t, low_cut, high_cut)
    for k in bank.indices:
        if 2.0**k <= low_cut:
            dec.low.append(k)
        elif 2.0**k >= high_cut:
            dec.high.append(k)
        else:
            dec.middle.append(k)
            dec.windows[k] = stationary_window_index(alpha, t, k)

    def masked(ks):
        def g(xi):
            xi = np.asarray(xi, dtype=float)
            m = np.zeros(xi.shape)
            for k in ks:
                m = m + bank.cutoff(k, xi)
            return profile(xi) * m
        return g

    for name, ks in (("low", dec.low), ("middle", dec.middle), ("high", dec.high)):
        if not ks:
            continue
        g = masked(ks)
        probe = np.linspace(*support, 4001)
        if not np.any(np.abs(g(probe)) > 0):
            continue
        val, _ = sup_linear_solution(g, alpha, t, support, n_x=n_x, rtol=rtol)
        setattr(dec, f"sup_{name}", val / (2 * np.pi))
    return dec


# ---------------------------------------------------------------------------
# the bound itself


@dataclass
class DispersiveRow:
    t: float
    lhs: float
    rhs_term1: float
    rhs_term2: float
    ratio: float
    region_low: float = 0.0
    region_mid: float = 0.0
    region_high: float = 0.0
    argmax_x: float = 0.0

    @property
    def dominant(self) -> str:
        return "term1" if self.rhs_term1 >= self.rhs_term2 else "term2"


def verify_dispersive_bound(
    f: SpectralField,
    alpha: float,
    p0: float,
    times: Sequence[float],
    profile: Profile | None = None,
    n_x: int = 256,
    regions: bool = False,
    bank: LpBank | None = None,
    margin_log2: float = 10.0,
) -> list[DispersiveRow]:
    """Ratio of sup_x |exp(i t |D|^alpha) f| to the right side of the decay estimate.

    term1 = (1+t)^-1/2 sup_xi |xi|^((2-alpha)/2) |f_hat|,
    term2 = (1+t)^-(1/2+p0) (||f||_H2 + ||x d_x f||_L2).
    The implicit constant is not applied; only the ratio is reported.
    """
    f = f.complete()
    support = profile_support(f)
    if profile is None:
        profile = profile_from_field(f)
    norms = compute_norms(f, NormConfig(sobolev_order=2.0, z_weight=0.0))
    weighted_sup = float(np.max(np.abs(f.grid.xi) ** ((2 - alpha) / 2) * np.abs(f.frequency)))
    h2_plus = norms.h_s_value + norms.weighted_value
    if bank is None:
        bank = LpBank.for_grid(f.grid)
    rows = []
    for t in times:
        t = float(t)
        term1 = (1 + t) ** -0.5 * weighted_sup
        term2 = (1 + t) ** -(0.5 + p0) * h2_plus
        if term1 + term2 == 0.0:
            rows.append(DispersiveRow(t, 0.0, 0.0, 0.0, 0.0))
            continue
        sup, arg = sup_linear_solution(profile, alpha, t, support, n_x=n_x)
        lhs = sup / (2 * np.pi)
        row = DispersiveRow(t, lhs, term1, term2, lhs / (term1 + term2), argmax_x=arg)
        if regions and t >= 1:
            dec = region_split(profile, support, alpha, p0, t, bank, margin_log2)
            row.region_low, row.region_mid, row.region_high = dec.sup_low, dec.sup_middle, dec.sup_high
        rows.append(row)
    return rows
