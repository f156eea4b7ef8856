"""Command line entry point: ``fracnls {simulate,verify-dispersive,resonance-scan,scattering-report}``.

Exit codes: 0 clean, 1 configuration / input error, 2 monitored violation.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .bound_monitor import BoundMonitor, InsufficientDataError, fit_loglog_slope, nonlinear_energy_inequality_check
from .config import ConfigError, DatumSpec, SimulationConfig, _get, config_hash, load_json
from .dispersive_lab import (
    OscillatoryIntegralSpec,
    evaluate_linear_solution,
    profile_from_field,
    profile_support,
    stationary_phase_estimate,
    verify_dispersive_bound,
)
from .evolution import RunSnapshot, run_simulation, weighted_distance
from .io import decode_bins, encode_bins, write_csv, write_json
from .resonance_lab import (
    duhamel_consistency,
    find_resonances,
    gaussian_integral,
    gaussian_limit_check,
    gaussian_substitute,
    profile_snapshots,
    quadratic_phase_residual,
    taylor_samples,
)
from .spectral_core import Grid1D, SpectralField

log = logging.getLogger("fracnls")

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION = 0, 1, 2

SERIES_COLUMNS = ["t", "l2", "h_s", "z", "x_df", "sup_u", "d_ref", "h_s_weighted", "x_df_weighted", "sup_u_decay"]


def worker_count() -> int:
    raw = os.environ.get("FRACNLS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def ordered_map(fn: Callable, items: Sequence) -> list:
    """Map with up to FRACNLS_THREADS workers; results keep input order."""
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


class Outputs:
    """Tracks emitted files so summary.json can list all of them."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def path(self, rel: str) -> Path:
        self.files.append(rel)
        return self.root / rel

    def json(self, rel: str, obj: Any) -> None:
        write_json(self.path(rel), obj)

    def csv(self, rel: str, columns, rows) -> None:
        write_csv(self.path(rel), columns, rows)


def _manifest(out: Outputs, cfg_path: Path, raw: Any, subcommand: str, started: float, notes: list[str]) -> None:
    out.json("manifest.json", {
        "config_path": str(cfg_path),
        "config_hash": config_hash(raw),
        "version": __version__,
        "subcommand": subcommand,
        "output_dir": str(out.root),
        "wall_clock_seconds": time.perf_counter() - started,
        "deviation_notes": notes,
    })


def _finish(out: Outputs, summary: dict, cfg_path: Path, raw: Any, subcommand: str, started: float, notes: list[str]) -> None:
    _manifest(out, cfg_path, raw, subcommand, started, notes)
    out.files.append("summary.json")
    summary["files"] = sorted(out.files)
    summary["version"] = __version__
    summary["config_hash"] = config_hash(raw)
    write_json(out.root / "summary.json", summary)


# ---------------------------------------------------------------------------
# simulate


def _svg_plots(out: Outputs, columns: list[str], rows: list[list[float]], prefix: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    data = np.array(rows, dtype=float)
    t = data[:, 0]
    for j, name in enumerate(columns[1:], start=1):
        y = data[:, j]
        ok = (t > 0) & (y > 0)
        if ok.sum() < 2:
            continue
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.loglog(t[ok], y[ok], marker=".")
        ax.set_xlabel("t")
        ax.set_ylabel(name)
        fig.tight_layout()
        fig.savefig(out.path(f"{prefix}_{name}.svg"), format="svg", metadata={"Date": None})
        plt.close(fig)


def simulate(cfg_path: Path, out_dir: Path | None, plots: bool = False) -> int:
    started = time.perf_counter()
    raw = load_json(cfg_path)
    config = SimulationConfig.from_dict(raw, base_dir=str(cfg_path.parent))
    out = Outputs(out_dir or Path("runs") / cfg_path.stem)
    notes = config.deviation_notes()
    for n in notes:
        log.info("deviation: %s", n)
    monitor = BoundMonitor(config)
    grid = config.grid
    snap_index: list[dict] = []

    def write_snapshot(snap: RunSnapshot) -> None:
        if not snap.ladder:
            return
        mag = np.abs(snap.f_hat)
        keep = mag >= config.store_floor * mag.max() if mag.max() > 0 else np.zeros(grid.N, bool)
        rel = f"snapshots/{len(snap_index):04d}.json"
        blob = {"t": snap.t, "step": snap.step, "point_count": grid.N, "half_length": grid.L,
                **encode_bins(grid.xi, {"f_hat": snap.f_hat, "H": snap.H, "corrected": snap.corrected}, keep)}
        out.json(rel, blob)
        snap_index.append({"t": snap.t, "file": rel})

    result = run_simulation(config, observers=[monitor, write_snapshot])
    rows = []
    for base, mrow in zip(result.series, monitor.rows):
        rows.append([base[c] for c in SERIES_COLUMNS[:7]] + [mrow.h_s_weighted, mrow.x_df_weighted, mrow.sup_u_decay])
    out.csv("series.csv", SERIES_COLUMNS, rows)
    out.csv("bands.csv", ["t", "k", "l2", "dl2", "sup"],
            [[r.t, k, a, b, c] for r in monitor.rows for (k, a, b, c) in r.bands])
    bounds: dict[str, Any]
    try:
        report = monitor.report()
        bounds = report.to_dict()
    except InsufficientDataError as exc:
        bounds = {"error": str(exc), "flags": {}}
    bounds["energy_inequality_ratio"] = nonlinear_energy_inequality_check(monitor.energy)
    out.json("bounds_summary.json", bounds)
    if plots and rows:
        _svg_plots(out, SERIES_COLUMNS, rows, "series")
    summary = {
        "subcommand": "simulate",
        "config": config.to_dict(),
        "status": result.status,
        "diagnostic": result.diagnostic,
        "steps_taken": result.steps_taken,
        "t_reached": result.steps_taken * config.dt,
        "mass_drift_max": result.mass_drift_max,
        "boundary_fraction_max": result.boundary_max,
        "flags": {"completed": result.status == "ok" or result.status == "mass_drift",
                  "mass_conserved": result.mass_drift_max <= config.monitor.mass_tolerance,
                  "boundary_clean": result.boundary_max <= config.monitor.boundary_tolerance},
        "bound_flags": bounds.get("flags", {}),
        "snapshots": snap_index,
        "deviation_notes": notes,
    }
    _finish(out, summary, cfg_path, raw, "simulate", started, notes)
    if result.violated:
        print(f"violation: {result.diagnostic}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify-dispersive


def _dispersive_setup(raw: dict):
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a JSON object")
    alphas = raw.get("alphas")
    if not isinstance(alphas, list) or not alphas:
        raise ConfigError("alphas", "required non-empty list")
    for i, a in enumerate(alphas):
        if isinstance(a, bool) or not isinstance(a, (int, float)) or not (0 < a < 1):
            raise ConfigError(f"alphas[{i}]", "must lie in (0, 1)")
    times = raw.get("times")
    if not isinstance(times, list) or not times or any(isinstance(t, bool) or not isinstance(t, (int, float)) or t <= 0 for t in times):
        raise ConfigError("times", "required list of positive times")
    grid = raw.get("grid")
    if not isinstance(grid, dict):
        raise ConfigError("grid", "required object is missing")
    try:
        g = Grid1D(_get(grid, "half_length", "grid"), _get(grid, "point_count", "grid", kind=int))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("grid", str(exc)) from None
    datum = DatumSpec.from_dict(raw.get("datum", {"family": "gaussian"}))
    return alphas, sorted(float(t) for t in times), g, datum


def verify_dispersive(cfg_path: Path, out_dir: Path | None, plots: bool = False) -> int:
    started = time.perf_counter()
    raw = load_json(cfg_path)
    alphas, times, grid, datum = _dispersive_setup(raw)
    p0 = _get(raw, "p0", "", 1e-3)
    amp = _get(raw, "epsilon0", "", 1.0)
    band = _get(raw, "plateau_band", "", 1.5)
    n_x = _get(raw, "n_x", "", 256, int)
    regions = _get(raw, "regions", "", False, bool)
    sp = raw.get("stationary_phase", {})
    sp_t = _get(sp, "t", "stationary_phase", 100.0)
    sp_xi = _get(sp, "xi0", "stationary_phase", 1.0)
    sp_tol = _get(sp, "tolerance", "stationary_phase", 0.05)
    out = Outputs(out_dir or Path("runs") / cfg_path.stem)
    field = SpectralField.from_physical(grid, datum.samples(grid, amp, cfg_path.parent)).complete()
    profile = datum.fourier(amp) if _get(raw, "analytic_profile", "", True, bool) else None
    if profile is None:
        profile = profile_from_field(field)
    support = profile_support(field)

    def one(alpha):
        rows = verify_dispersive_bound(field, alpha, p0, times, profile=profile, n_x=n_x, regions=regions)
        spec = OscillatoryIntegralSpec(alpha, sp_t, -alpha * sp_t * math.copysign(abs(sp_xi) ** (alpha - 1), sp_xi), profile, support)
        quad = evaluate_linear_solution(spec)
        est = stationary_phase_estimate(spec)
        return rows, quad, est

    results = ordered_map(one, alphas)
    table, per_alpha, violated = [], [], False
    for alpha, (rows, quad, est) in zip(alphas, results):
        for r in rows:
            table.append([r.t, r.lhs, r.rhs_term1, r.rhs_term2, r.ratio, r.region_low, r.region_mid, r.region_high, alpha])
        plateau = [r.lhs * r.t**0.5 for r in rows]
        stat = max(plateau) / min(plateau) if min(plateau) > 0 else float("inf")
        sp_err = abs(est - quad) / abs(quad) if quad != 0 else float("inf")
        ok = stat <= band and sp_err <= sp_tol
        violated |= not ok
        per_alpha.append({"alpha": alpha, "plateau_ratio": stat, "stationary_phase_relative_error": sp_err,
                          "ratio_max": max(r.ratio for r in rows), "dominant_terms": [r.dominant for r in rows],
                          "decay_exponent": -fit_loglog_slope([r.t for r in rows], [r.lhs for r in rows]),
                          "passed": ok})
    cols = ["t", "lhs", "rhs_term1", "rhs_term2", "ratio", "region_low", "region_mid", "region_high", "alpha"]
    out.csv("dispersive_report.csv", cols, table)
    if plots:
        for a in alphas:
            sub = [[r[0], r[1], r[4]] for r in table if r[8] == a]
            _svg_plots(out, ["t", "lhs", "ratio"], sub, f"dispersive_alpha{a:g}")
    summary = {"subcommand": "verify-dispersive", "p0": p0, "plateau_band": band, "times": times,
               "per_alpha": per_alpha, "status": "violation" if violated else "ok"}
    _finish(out, summary, cfg_path, raw, "verify-dispersive", started, [])
    return EXIT_VIOLATION if violated else EXIT_OK


# ---------------------------------------------------------------------------
# resonance-scan


def resonance_scan(cfg_path: Path, out_dir: Path | None, plots: bool = False) -> int:
    started = time.perf_counter()
    raw = load_json(cfg_path)
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a JSON object")
    alphas = raw.get("alphas")
    if not isinstance(alphas, list) or not alphas:
        raise ConfigError("alphas", "required non-empty list")
    xis = raw.get("xi_values", [1.0])
    if not isinstance(xis, list) or not xis or any(x == 0 for x in xis):
        raise ConfigError("xi_values", "required list of nonzero frequencies")
    tol = _get(raw, "tolerance", "", 1e-8)
    out = Outputs(out_dir or Path("runs") / cfg_path.stem)

    scans = ordered_map(lambda a: find_resonances(a, xis, tol), alphas)
    report: dict[str, Any] = {"tolerance": tol, "scans": []}
    for a, sc in zip(alphas, scans):
        report["scans"].append({
            "alpha": a,
            "resonances": [p.to_dict() for p in sc.points],
            "boundary_candidates": [p.to_dict() for p in sc.boundary],
            "probes": [p.to_dict() for p in sc.probes],
        })

    q = raw.get("quadratic", {})
    qa, qxi, qn = _get(q, "alpha", "quadratic", 0.5), _get(q, "xi", "quadratic", 1.0), _get(q, "samples", "quadratic", 41, int)
    ratios = {}
    for n in (qn, 2 * qn - 1):
        e, sg = taylor_samples(qxi, n)
        ratios[n] = quadratic_phase_residual(qa, qxi, e, sg)
    report["quadratic_phase"] = {"alpha": qa, "xi": qxi, "ratio_by_samples": {str(k): v for k, v in ratios.items()}}

    gl = raw.get("gaussian_limit", {})
    ga, gxi = _get(gl, "alpha", "gaussian_limit", 0.5), _get(gl, "xi", "gaussian_limit", 1.0)
    s_list = gl.get("s", [64, 256, 1024])
    checks = [gaussian_limit_check(ga, gxi, float(s)) for s in s_list]
    report["gaussian_limit"] = {
        "alpha": ga, "xi": gxi,
        "rows": [{k: v for k, v in c.items() if k != "value"} | {"value": [c["value"].real, c["value"].imag],
                                                                 "deviation_times_s": c["deviation"] * c["s"]} for c in checks],
        "gaussian_identity_a1_b0": gaussian_integral(1.0, 0.0),
        "gaussian_substitute": {str(n): gaussian_substitute(n) for n in (4, 16, 64)},
    }

    violated = False
    duh = raw.get("duhamel")
    drows = []
    if duh is not None:
        sim = SimulationConfig.from_dict(duh.get("simulation"), base_dir=str(cfg_path.parent)) if isinstance(duh, dict) else None
        if sim is None:
            raise ConfigError("duhamel.simulation", "required object is missing")
        t_mid = _get(duh, "t", "duhamel", 10.0)
        spacings = duh.get("spacings", [0.05, 0.025, 0.0125])
        dtol = _get(duh, "tolerance", "duhamel", 1e-3)
        times = sorted({t_mid + k * h for h in spacings for k in (-1, 0, 1)})
        times = [round(t / sim.dt) * sim.dt for t in times]
        snaps = dict(zip(times, profile_snapshots(sim, times)))

        def near(t):
            return snaps[min(snaps, key=lambda s: abs(s - t))]

        errs = []
        for h in spacings:
            trio = [t_mid - h, t_mid, t_mid + h]
            res = duhamel_consistency(sim.grid, trio, [near(t) for t in trio], sim.alpha, sim.c_star)
            errs.append(res.error)
            for xi, fd, pr, be in zip(res.xi, res.finite_difference, res.predicted, res.bin_errors):
                drows.append([h, xi, fd.real, fd.imag, pr.real, pr.imag, be])
        orders = [math.log2(errs[i] / errs[i + 1]) if errs[i + 1] > 0 else float("inf") for i in range(len(errs) - 1)]
        violated = any(e > dtol for e in errs)
        report["duhamel"] = {"t": t_mid, "spacings": spacings, "errors": errs, "observed_orders": orders,
                             "tolerance": dtol, "kappa": [0.0, -sim.c_star / (4 * np.pi**2)]}
        out.csv("duhamel_report.csv", ["spacing", "xi", "fd_re", "fd_im", "kappa_I_re", "kappa_I_im", "relative_error"], drows)
    out.json("resonance_report.json", report)
    summary = {"subcommand": "resonance-scan", "status": "violation" if violated else "ok",
               "alphas": alphas, "xi_values": xis}
    _finish(out, summary, cfg_path, raw, "resonance-scan", started, [])
    return EXIT_VIOLATION if violated else EXIT_OK


# ---------------------------------------------------------------------------
# scattering-report


def load_run(run_dir: Path) -> dict:
    """Summary plus the corrected-profile snapshots of a finished simulate run."""
    run_dir = Path(run_dir)
    summ = run_dir / "summary.json"
    if not summ.is_file():
        raise ConfigError(str(run_dir), "no summary.json: not a simulate output directory")
    summary = load_json(summ)
    entries = summary.get("snapshots") or []
    if not entries:
        raise ConfigError(str(run_dir), "run has no snapshots")
    snaps, grid = [], None
    for e in entries:
        p = run_dir / e["file"]
        if not p.is_file():
            raise ConfigError(str(p), "snapshot file is missing")
        blob = load_json(p)
        if grid is None:
            grid = Grid1D(float(blob["half_length"]), int(blob["point_count"]))
        snaps.append((float(blob["t"]), decode_bins(blob, grid.N, "corrected")))
    return {"summary": summary, "snaps": snaps, "grid": grid,
            "w": float(summary["config"]["monitor"]["z_weight"]), "gauge": bool(summary["config"]["gauge"])}


def cauchy_table(run: dict) -> tuple[list[float], np.ndarray, list[dict], float]:
    xi, w = run["grid"].xi, run["w"]
    times = [t for t, _ in run["snaps"]]
    vals = [v for _, v in run["snaps"]]
    n = len(times)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = weighted_distance(xi, vals[i], vals[j], w)
    doubling = []
    for i, t in enumerate(times):
        for j, s in enumerate(times):
            if t > 0 and abs(s - 2 * t) <= 1e-9 * max(1.0, t):
                doubling.append({"t1": t, "t2": s, "distance": D[i, j]})
    t_end = max(times)
    sel = [c for c in doubling if t_end / 20 * (1 - 1e-9) <= c["t1"] <= t_end / 2 * (1 + 1e-9)]
    p1 = -fit_loglog_slope([c["t1"] for c in sel], [c["distance"] for c in sel]) if len(sel) >= 2 else float("nan")
    return times, D, doubling, p1


def scattering_report(run_dirs: Sequence[Path], out_dir: Path | None) -> int:
    started = time.perf_counter()
    runs = [load_run(d) for d in run_dirs]
    out = Outputs(out_dir or Path(run_dirs[0]) / "scattering")
    report: dict[str, Any] = {"runs": []}
    for k, (d, run) in enumerate(zip(run_dirs, runs)):
        times, D, doubling, p1 = cauchy_table(run)
        out.csv(f"cauchy_table_{k}.csv", ["t"] + [f"D@{t:g}" for t in times],
                [[t] + list(D[i]) for i, t in enumerate(times)])
        report["runs"].append({"run_dir": str(d), "gauge": run["gauge"], "times": times, "doubling": doubling,
                               "p1": p1, "final_doubling_distance": doubling[-1]["distance"] if doubling else None})
    if len(runs) == 2:
        a, b = report["runs"]
        same_times = a["times"] == b["times"]
        cmp = {"same_snapshot_times": same_times}
        if a["gauge"] != b["gauge"] and a["final_doubling_distance"] is not None and b["final_doubling_distance"] is not None:
            on, off = (a, b) if a["gauge"] else (b, a)
            cmp.update({"gauge_on_final": on["final_doubling_distance"], "gauge_off_final": off["final_doubling_distance"],
                        "gauge_on_smaller": on["final_doubling_distance"] < off["final_doubling_distance"]})
        report["comparison"] = cmp
    out.json("scattering_report.json", report)
    raw = {"runs": [str(d) for d in run_dirs]}
    _finish(out, {"subcommand": "scattering-report", "status": "ok", "inputs": raw["runs"]},
            Path(run_dirs[0]), raw, "scattering-report", started, [])
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracnls", description="Fractional cubic NLS experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("simulate", "time-step a configured run"),
                           ("verify-dispersive", "check the linear decay estimate"),
                           ("resonance-scan", "resonances, phase approximations, Duhamel calibration")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("config", type=Path)
        s.add_argument("--out", type=Path, default=None, help="output directory (default runs/<config stem>)")
        s.add_argument("--plots", action="store_true", help="also write SVG line plots")
    s = sub.add_parser("scattering-report", help="Cauchy tables for finished simulate runs")
    s.add_argument("run_dir", type=Path)
    s.add_argument("second_run", type=Path, nargs="?", default=None)
    s.add_argument("--out", type=Path, default=None)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "simulate":
            return simulate(args.config, args.out, args.plots)
        if args.command == "verify-dispersive":
            return verify_dispersive(args.config, args.out, args.plots)
        if args.command == "resonance-scan":
            return resonance_scan(args.config, args.out, args.plots)
        dirs = [args.run_dir] + ([args.second_run] if args.second_run else [])
        return scattering_report(dirs, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
