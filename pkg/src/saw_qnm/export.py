"""CSV/JSON readers and writers with byte-stable output."""
from __future__ import annotations

import csv
import io
import json
import math
import platform
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from . import __version__

MODE_COLUMNS = ("label", "index", "frequency_hz", "re_omega", "im_omega", "q_radiation", "residual")
FIELD_COLUMNS = ("x_m", "re_A", "im_A", "abs_A")
SWEEP_COLUMNS = ("param", "value", "label", "best_q", "f0_hz", "n_modes")


def fmt(x) -> str:
    """Shortest round-tripping text for a number; empty for None."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def _rows_to_text(header: Iterable[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def modes_csv(modes, label: str = "") -> str:
    rows = (
        (label, m.index_pair[0], m.frequency_hz, m.omega.real, m.omega.imag, m.q_radiation, m.residual)
        for m in modes
    )
    return _rows_to_text(MODE_COLUMNS, rows)


def field_csv(x, a) -> str:
    a = np.asarray(a)
    return _rows_to_text(FIELD_COLUMNS, zip(np.asarray(x), a.real, a.imag, np.abs(a)))


def sweep_csv(rows) -> str:
    return _rows_to_text(SWEEP_COLUMNS, rows)


def dumps_json(obj) -> str:
    """Sorted, indented JSON; non-finite floats become null."""
    def clean(v):
        if isinstance(v, dict):
            return {str(k): clean(w) for k, w in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(w) for w in v]
        if isinstance(v, (float, np.floating)):
            return float(v) if math.isfinite(v) else None
        if isinstance(v, np.integer):
            return int(v)
        return v
    return json.dumps(clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_text(path: str | Path | None, text: str, stream: IO[str] | None = None) -> None:
    """Write to ``path``, or to ``stream`` when path is None or '-'."""
    if path is None or str(path) == "-":
        (stream or _stdout()).write(text)
        return
    Path(path).write_text(text, encoding="utf-8")


def write_sidecar(path: str | Path | None, command: str) -> None:
    """Version information next to a data file (never inside it)."""
    if path is None or str(path) == "-":
        return
    import scipy

    meta = {
        "command": command,
        "package_version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }
    Path(str(path) + ".meta.json").write_text(dumps_json(meta), encoding="utf-8")


def _stdout():
    import sys

    return sys.stdout


def read_s11_csv(path: str | Path, polar: bool = False):
    """Read ``frequency_hz, re_s11, im_s11`` (or ``frequency_hz, mag_db, phase_deg`` when polar)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = ("frequency_hz", "mag_db", "phase_deg") if polar else ("frequency_hz", "re_s11", "im_s11")
        missing = [c for c in cols if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        data = np.array([[float(row[c]) for c in cols] for row in reader], dtype=float)
    if data.size == 0:
        raise ValueError(f"{path}: no data rows")
    f = data[:, 0]
    if polar:
        s = 10.0 ** (data[:, 1] / 20.0) * np.exp(1j * np.deg2rad(data[:, 2]))
    else:
        s = data[:, 1] + 1j * data[:, 2]
    return f, s


def s11_csv(f, s) -> str:
    s = np.asarray(s)
    return _rows_to_text(("frequency_hz", "re_s11", "im_s11"), zip(np.asarray(f), s.real, s.imag))


def read_manifest(path: str | Path):
    """Batch manifest rows: ``path`` plus optional ``power_dbm``, ``temperature_k``, ``label``, ``polar``."""
    base = Path(path).parent
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if "path" not in (reader.fieldnames or []):
            raise ValueError(f"{path}: manifest needs a 'path' column")
        for row in reader:
            p = Path(row["path"])
            out.append({
                "path": p if p.is_absolute() else base / p,
                "power_dbm": float(row["power_dbm"]) if row.get("power_dbm") else None,
                "temperature_k": float(row["temperature_k"]) if row.get("temperature_k") else None,
                "label": row.get("label") or p.stem,
                "polar": (row.get("polar") or "").strip().lower() in ("1", "true", "yes"),
            })
    return out
