"""Deterministic CSV / JSON writers (17 significant digits, sorted keys)."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

__all__ = ["fmt", "to_jsonable", "dump_json", "write_json", "write_csv", "read_csv", "encode_bins", "decode_bins"]


def fmt(x: float) -> str:
    """17 significant digits; nan/inf spelled out."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def to_jsonable(obj: Any) -> Any:
    """Plain Python containers; complex numbers become [re, im]."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _scalar(v: Any) -> str:
    if isinstance(v, bool) or v is None or isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        # JSON has no nan/inf literals; store them as strings
        return fmt(v) if math.isfinite(v) else json.dumps(fmt(v))
    return json.dumps(str(v), ensure_ascii=False)


def _emit(obj: Any, out: list[str], indent: int) -> None:
    pad = " " * indent
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = sorted(obj.items())
        for i, (k, v) in enumerate(items):
            out.append(f"{pad} {json.dumps(k, ensure_ascii=False)}: ")
            _emit(v, out, indent + 1)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
        elif all(not isinstance(v, (dict, list)) for v in obj):
            out.append("[" + ", ".join(_scalar(v) for v in obj) + "]")
        else:
            out.append("[\n")
            for i, v in enumerate(obj):
                out.append(pad + " ")
                _emit(v, out, indent + 1)
                out.append(",\n" if i < len(obj) - 1 else "\n")
            out.append(pad + "]")
    else:
        out.append(_scalar(obj))


def dump_json(obj: Any) -> str:
    out: list[str] = []
    _emit(to_jsonable(obj), out, 0)
    return "".join(out) + "\n"


def write_json(path: Path, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_json(obj), encoding="utf-8")
    return path


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        r = list(csv.reader(fh))
    return r[0], r[1:]


def encode_bins(xi: np.ndarray, values: dict[str, np.ndarray], keep: np.ndarray) -> dict:
    """Bin list of the kept frequencies with real/imag parts of each complex field."""
    idx = np.flatnonzero(keep)
    out = {"bin": idx, "xi": xi[idx]}
    for name, v in values.items():
        v = np.asarray(v)[idx]
        if np.iscomplexobj(v):
            out[f"{name}_re"] = v.real
            out[f"{name}_im"] = v.imag
        else:
            out[name] = v
    return out


def decode_bins(blob: dict, n: int, name: str) -> np.ndarray:
    idx = np.asarray(blob["bin"], dtype=int)
    if f"{name}_re" in blob:
        out = np.zeros(n, dtype=complex)
        out[idx] = np.asarray(blob[f"{name}_re"], float) + 1j * np.asarray(blob[f"{name}_im"], float)
    else:
        out = np.zeros(n)
        out[idx] = np.asarray(blob[name], float)
    return out
