"""Plain-text output formats: field snapshots, run tables, loss history.

Every file starts with ``# key value`` header lines naming the format, tool
version and the config hash. Floats are written with ``repr`` so they
round-trip exactly, and nothing time-dependent goes into these files
(wall-clock timings live in their own table), which keeps reruns
byte-identical.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .driver import RunRecord
from .pixels import PixelGrid, format_grid_text, parse_grid_text

FIELD_FORMAT = "ifenn-field v1"
TABLE_FORMAT = "ifenn-table v1"
FIELD_UNITS = {"H": "N/mm^2", "H_capped": "N/mm^2", "phi": "1"}

REACTION_COLUMNS = ("increment", "u", "F", "mode", "stag_iters", "phi_max", "tip_col")
TIMING_COLUMNS = ("increment", "mode", "t_equilibrium", "t_phase", "t_total")


def _header(kind: str, config_hash: str, extra=()) -> list[str]:
    return [f"format {kind}", f"tool ifenn {__version__}", f"config {config_hash}", *extra]


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_snapshot(path, pix: PixelGrid, increment: int, name: str, config_hash: str) -> None:
    extra = [f"increment {increment}", f"field {name}", f"units {FIELD_UNITS.get(name, '-')}"]
    Path(path).write_text(format_grid_text(pix, _header(FIELD_FORMAT, config_hash, extra)))


@dataclass
class FieldSnapshot:
    grid: PixelGrid
    increment: int
    name: str
    header: dict


def read_snapshot(path) -> FieldSnapshot:
    grid, header = parse_grid_text(Path(path).read_text())
    if header.get("format") != FIELD_FORMAT:
        raise ValueError(f"{path}: not an {FIELD_FORMAT} file")
    return FieldSnapshot(grid, int(header["increment"]), header["field"], header)


def _write_table(path, columns, rows, config_hash, extra=()) -> None:
    buf = io.StringIO()
    for line in _header(TABLE_FORMAT, config_hash, extra):
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def read_table(path) -> tuple[dict, dict]:
    """Return ``(columns, header)``; numeric columns become arrays."""
    header, body = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(" ")
            header[key] = val.strip()
        elif line:
            body.append(line)
    if header.get("format") != TABLE_FORMAT:
        raise ValueError(f"{path}: not an {TABLE_FORMAT} file")
    reader = list(csv.reader(body))
    names, data = reader[0], reader[1:]
    cols = {}
    for i, name in enumerate(names):
        raw = [r[i] for r in data]
        try:
            cols[name] = np.array([float(v) for v in raw])
        except ValueError:
            cols[name] = np.array(raw)
    return cols, header


def write_reactions(path, record: RunRecord, config_hash: str) -> None:
    extra = [f"activation {record.activation_increment if record.activation_increment else '-'}"]
    rows = [(r.increment, r.u, r.force, r.mode, r.stag_iters, r.phi_max, r.tip_col) for r in record.increments]
    _write_table(path, REACTION_COLUMNS, rows, config_hash, extra)


def write_timings(path, record: RunRecord, config_hash: str) -> None:
    rows = [(r.increment, r.mode, r.t_equilibrium, r.t_phase, r.t_total) for r in record.increments]
    _write_table(path, TIMING_COLUMNS, rows, config_hash)


def write_loss(path, history, config_hash: str) -> None:
    _write_table(path, ("epoch", "loss"), [(i + 1, v) for i, v in enumerate(history)], config_hash)


def write_snapshots(out_dir, record: RunRecord, config_hash: str) -> list[tuple[int, str, str]]:
    """Write every snapshot of ``record`` plus ``snapshots.csv`` indexing them."""
    out_dir = Path(out_dir)
    index = []
    for k in sorted(record.snapshots):
        for name, pix in record.snapshots[k].items():
            fname = f"{name}_{k:05d}.txt"
            write_snapshot(out_dir / fname, pix, k, name, config_hash)
            index.append((k, name, fname))
    _write_table(out_dir / "snapshots.csv", ("increment", "field", "file"), index, config_hash)
    return index


def read_snapshot_index(out_dir) -> dict[tuple[int, str], Path]:
    out_dir = Path(out_dir)
    path = out_dir / "snapshots.csv"
    if not path.exists():
        return {}
    cols, _ = read_table(path)
    return {
        (int(k), str(f)): out_dir / str(name)
        for k, f, name in zip(cols.get("increment", []), cols.get("field", []), cols.get("file", []))
    }
