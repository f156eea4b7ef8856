import copy
import json
import math

import numpy as np
import pytest

from conftest import SMALL_RUN, shipped
from fracnls import __version__
from fracnls.cli import EXIT_CONFIG, EXIT_OK, EXIT_VIOLATION, main
from fracnls.config import SimulationConfig
from fracnls.io import decode_bins, dump_json, encode_bins, fmt, read_csv, write_csv


def write_cfg(path, obj):
    path.write_text(json.dumps(obj))
    return path


def output_files(root):
    return sorted(p.relative_to(root).as_posix() for p in root.rglob("*") if p.is_file())


@pytest.fixture
def sim_cfg(tmp_path):
    return write_cfg(tmp_path / "small.json", SMALL_RUN)


def test_simulate_writes_expected_files(sim_cfg, tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", str(sim_cfg), "--out", str(out)]) == EXIT_OK
    files = output_files(out)
    for name in ("series.csv", "bands.csv", "bounds_summary.json", "summary.json", "manifest.json"):
        assert name in files
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "ok"
    # every produced file is referenced by the summary
    assert sorted(summary["files"]) == files
    assert [s["file"] for s in summary["snapshots"]] == sorted(f for f in files if f.startswith("snapshots/"))
    assert len(summary["config_hash"]) >= 16
    header, rows = read_csv(out / "series.csv")
    assert header[:7] == ["t", "l2", "h_s", "z", "x_df", "sup_u", "d_ref"]
    assert len(rows) == 9


def test_simulate_is_byte_identical(sim_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", str(sim_cfg), "--out", str(a)]) == EXIT_OK
    assert main(["simulate", str(sim_cfg), "--out", str(b)]) == EXIT_OK
    files = output_files(a)
    assert files == output_files(b)
    for f in files:
        if f != "manifest.json":
            assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_t_end_zero(tmp_path):
    cfg = write_cfg(tmp_path / "zero.json", dict(SMALL_RUN, t_end=0.0))
    out = tmp_path / "run"
    assert main(["simulate", str(cfg), "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["snapshots"]) == 1
    _, rows = read_csv(out / "series.csv")
    assert len(rows) == 1


def test_missing_field_is_reported(tmp_path, capsys):
    d = copy.deepcopy(SMALL_RUN)
    del d["alpha"]
    cfg = write_cfg(tmp_path / "bad.json", d)
    assert main(["simulate", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "alpha" in capsys.readouterr().err


@pytest.mark.parametrize("key,value", [("alpha", 0.3), ("dt", -0.1), ("point_count", 1000)])
def test_invalid_values_are_rejected(tmp_path, capsys, key, value):
    d = copy.deepcopy(SMALL_RUN)
    if key == "point_count":
        d["grid"]["point_count"] = value
    else:
        d[key] = value
    cfg = write_cfg(tmp_path / "bad.json", d)
    assert main(["simulate", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert capsys.readouterr().err


def test_unreadable_json(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert main(["simulate", str(p)]) == EXIT_CONFIG


def test_boundary_violation_exit_code(tmp_path):
    d = dict(SMALL_RUN, grid={"half_length": 8.0, "point_count": 256})
    d["datum"] = {"family": "gaussian", "sigma": 4.0, "xi0": 2.0}
    cfg = write_cfg(tmp_path / "edge.json", d)
    out = tmp_path / "run"
    assert main(["simulate", str(cfg), "--out", str(out)]) == EXIT_VIOLATION
    assert json.loads((out / "summary.json").read_text())["status"] == "boundary_contamination"


def test_scattering_report_self_and_pair(sim_cfg, tmp_path):
    on = tmp_path / "on"
    off = tmp_path / "off"
    main(["simulate", str(sim_cfg), "--out", str(on)])
    cfg_off = write_cfg(tmp_path / "off.json", dict(SMALL_RUN, gauge=False))
    main(["simulate", str(cfg_off), "--out", str(off)])
    rep_dir = tmp_path / "rep"
    assert main(["scattering-report", str(on), str(off), "--out", str(rep_dir)]) == EXIT_OK
    header, rows = read_csv(rep_dir / "cauchy_table_0.csv")
    table = np.array([[float(v) for v in r[1:]] for r in rows])
    assert np.all(np.diag(table) == 0) and np.allclose(table, table.T)
    rep = json.loads((rep_dir / "scattering_report.json").read_text())
    assert rep["comparison"]["same_snapshot_times"] is True
    assert "gauge_on_smaller" in rep["comparison"]


def test_scattering_report_empty_dir(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["scattering-report", str(empty)]) == EXIT_CONFIG
    assert "summary.json" in capsys.readouterr().err


def test_verify_dispersive_small(tmp_path):
    cfg = {
        "alphas": [0.5],
        "p0": 1e-3,
        "epsilon0": 1.0,
        "datum": {"family": "gaussian", "sigma": 1.0, "xi0": 1.0},
        "grid": {"half_length": 16 * math.pi, "point_count": 512},
        "times": [20, 40, 80],
        "n_x": 64,
        "stationary_phase": {"t": 100, "xi0": 1.0, "tolerance": 0.05},
    }
    out = tmp_path / "disp"
    assert main(["verify-dispersive", str(write_cfg(tmp_path / "d.json", cfg)), "--out", str(out)]) == EXIT_OK
    header, rows = read_csv(out / "dispersive_report.csv")
    assert header == ["t", "lhs", "rhs_term1", "rhs_term2", "ratio", "region_low", "region_mid", "region_high", "alpha"]
    assert len(rows) == 3
    per = json.loads((out / "summary.json").read_text())["per_alpha"][0]
    assert per["plateau_ratio"] <= 1.5 and per["stationary_phase_relative_error"] <= 0.05


def test_verify_dispersive_bad_alpha(tmp_path, capsys):
    cfg = {"alphas": [1.5], "times": [1.0], "grid": {"half_length": 10.0, "point_count": 64}}
    assert main(["verify-dispersive", str(write_cfg(tmp_path / "d.json", cfg))]) == EXIT_CONFIG
    assert "alphas[0]" in capsys.readouterr().err


def test_resonance_scan_small(tmp_path):
    cfg = {
        "alphas": [0.5],
        "xi_values": [1.0],
        "quadratic": {"alpha": 0.5, "xi": 1.0, "samples": 11},
        "gaussian_limit": {"alpha": 0.5, "xi": 1.0, "s": [16]},
        "duhamel": {
            "t": 1.0,
            "spacings": [0.1, 0.05],
            "tolerance": 1e-2,
            "simulation": {
                "alpha": 0.5, "c_star": 1.0, "epsilon0": 0.05,
                "datum": {"family": "gaussian", "sigma": 2.0, "xi0": 1.0},
                "grid": {"half_length": 16 * math.pi, "point_count": 1024},
                "dt": 0.0025, "t_end": 1.2, "output_every": 0.1,
            },
        },
    }
    out = tmp_path / "res"
    assert main(["resonance-scan", str(write_cfg(tmp_path / "r.json", cfg)), "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "resonance_report.json").read_text())
    res = rep["scans"][0]["resonances"]
    assert any(abs(r["eta"]) < 1e-8 and abs(r["sigma"] + 1) < 1e-8 for r in res)
    assert len(rep["duhamel"]["errors"]) == 2
    assert (out / "duhamel_report.csv").is_file()


def test_shipped_configs_parse():
    for name in ("simulate_small.json", "simulate_small_nogauge.json", "mass_check.json"):
        cfg = SimulationConfig.from_dict(shipped(name))
        assert cfg.grid.N & (cfg.grid.N - 1) == 0
    assert SimulationConfig.from_dict(shipped("resonance.json")["duhamel"]["simulation"]).alpha == 0.5


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0 and __version__ in capsys.readouterr().out


# ---------------------------------------------------------------------------
# io


def test_float_formatting_round_trips():
    for v in (0.1, 1 / 3, 2.0**-1074, 1e308, -np.pi):
        assert float(fmt(v)) == v
    assert fmt(float("nan")) == "nan" and fmt(float("-inf")) == "-inf"


def test_json_emitter_sorted_and_exact():
    text = dump_json({"b": 0.1, "a": [1, 2.5, float("inf")], "c": {"z": True, "y": None}, "d": 1 + 2j})
    back = json.loads(text)
    assert list(back) == ["a", "b", "c", "d"]
    assert back["b"] == 0.1 and back["a"][2] == "inf" and back["d"] == [1.0, 2.0]
    assert "0.10000000000000001" in text


def test_csv_writer_uses_17_digits(tmp_path):
    p = write_csv(tmp_path / "x.csv", ["a", "b"], [[0.1, 3]])
    assert p.read_text().splitlines()[1] == "0.10000000000000001,3"


def test_bin_codec_round_trip():
    rng = np.random.default_rng(1)
    xi = np.arange(16.0)
    z = rng.normal(size=16) + 1j * rng.normal(size=16)
    keep = np.abs(z) > 0.5
    blob = json.loads(dump_json(encode_bins(xi, {"f": z, "h": z.real}, keep)))
    assert np.array_equal(decode_bins(blob, 16, "f"), np.where(keep, z, 0))
    assert np.array_equal(decode_bins(blob, 16, "h"), np.where(keep, z.real, 0))
