"""Persistence: diagnostics CSV, run metadata, and flat binary field snapshots."""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .. import __version__
from ..grid import make_grid
from ..models import State
from .runner import RunReport

SNAPSHOT_HEADER = struct.Struct("<qqq")


class ExportError(OSError):
    pass


def format_value(v) -> str:
    return f"{float(v):.17g}"


def csv_text(report: RunReport) -> str:
    lines = [",".join(report.columns)]
    for rec in report.records:
        lines.append(",".join(format_value(v) for v in rec.row(report.columns)))
    return "\n".join(lines) + "\n"


def metadata(report: RunReport) -> dict:
    return {
        "name": report.name,
        "config_hash": report.config_hash,
        "termination": report.termination,
        "message": report.message,
        "final_t": report.final_t,
        "steps": report.steps,
        "records": len(report.records),
        "columns": report.columns,
        "fit": None if report.fit is None else {"T_star": report.fit[0], "exponent": report.fit[1]},
        "tags": report.tags,
        "warnings": report.warnings,
        "version": __version__,
    }


def _write(path: Path, data, mode: str = "w"):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, mode) as fh:
            fh.write(data)
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc


def write_snapshot(path, state: State) -> None:
    fields = [state.rho, state.c] + ([] if state.u is None else list(state.u))
    data = np.stack(fields).astype("<f8")
    header = SNAPSHOT_HEADER.pack(state.grid.dim, state.grid.n, len(fields))
    _write(Path(path), header + data.tobytes(order="C"), "wb")


def read_snapshot(path) -> tuple[int, int, np.ndarray]:
    """Returns (dim, n, array of shape (components, n, ..., n))."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc}") from exc
    dim, n, comps = SNAPSHOT_HEADER.unpack_from(blob)
    data = np.frombuffer(blob, dtype="<f8", offset=SNAPSHOT_HEADER.size)
    return dim, n, data.reshape((comps,) + (n,) * dim).astype(float)


def snapshot_state(path, t: float = 0.0) -> State:
    dim, n, data = read_snapshot(path)
    u = None if data.shape[0] == 2 else data[2:].copy()
    return State(make_grid(dim, n), t, data[0].copy(), data[1].copy(), u)


def export(report: RunReport, out_dir, snapshot: bool = False) -> dict:
    """Write ``<name>.csv`` and ``<name>.meta.json`` (and a snapshot when asked)."""
    out_dir = Path(out_dir)
    paths = {
        "csv": out_dir / f"{report.name}.csv",
        "meta": out_dir / f"{report.name}.meta.json",
    }
    _write(paths["csv"], csv_text(report))
    _write(paths["meta"], json.dumps(metadata(report), indent=2, sort_keys=True) + "\n")
    if snapshot and report.final_state is not None:
        paths["snapshot"] = out_dir / f"{report.name}.snap"
        write_snapshot(paths["snapshot"], report.final_state)
    return paths
