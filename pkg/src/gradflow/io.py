"""Snapshot CSV files, run manifests and delimited reports."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .grid import GridSpec
from .jko import RunManifest, Snapshot

_AXES = "xyzw"


def _fmt(v: float, precision: int) -> str:
    return format(float(v), f".{precision}g")


def snapshot_header(d: int) -> list[str]:
    coords = [_AXES[l] if d <= len(_AXES) else f"x{l}" for l in range(d)]
    return coords + ["rho"] + [f"m_{c}" for c in coords]


def write_snapshot(path: str | Path, grid: GridSpec, snap: Snapshot, precision: int = 17) -> Path:
    """One row per node: coordinates, density, momentum components."""
    path = Path(path)
    coords = grid.coords
    rho = np.asarray(snap.rho).ravel()
    mom = np.asarray(snap.mom).reshape(grid.d, grid.size)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(snapshot_header(grid.d))
        for i in range(grid.size):
            row = list(coords[i]) + [rho[i]] + list(mom[:, i])
            w.writerow([_fmt(v, precision) for v in row])
    return path


def read_snapshot(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(coords, rho, mom)`` from a snapshot file; ``mom`` has shape ``(d, n)``."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    d = (len(header) - 1) // 2
    return body[:, :d], body[:, d], body[:, d + 1:].T


def snapshot_name(step: int, width: int = 6) -> str:
    return f"rho_{step:0{width}d}.csv"


def write_manifest(path: str | Path, manifest: RunManifest) -> Path:
    path = Path(path)
    path.write_text(json.dumps(manifest.to_dict(), indent=2, default=json_default) + "\n")
    return path


def json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_table(path: str | Path, header: Sequence[str], rows: Iterable[Sequence], precision: int = 10) -> Path:
    """Comma-separated table; floats are written with ``precision`` significant digits."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v, precision) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_run(out_dir: str | Path, grid: GridSpec, snaps: list[Snapshot], manifest: RunManifest,
              echo: dict | None = None, precision: int = 17) -> list[Path]:
    """Write snapshots, ``manifest.json`` and ``config.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [write_snapshot(out / snapshot_name(s.step), grid, s, precision) for s in snaps]
    written.append(write_manifest(out / "manifest.json", manifest))
    if echo is not None:
        p = out / "config.json"
        p.write_text(json.dumps(echo, indent=2) + "\n")
        written.append(p)
    return written


def read_manifest(path: str | Path) -> RunManifest:
    return RunManifest.from_dict(json.loads(Path(path).read_text()))


def read_run(run_dir: str | Path) -> tuple[list[Snapshot], RunManifest]:
    """Snapshots (sorted by step) and manifest from a directory written by :func:`write_run`."""
    run_dir = Path(run_dir)
    man = read_manifest(run_dir / "manifest.json")
    times = man.times
    snaps = []
    for p in sorted(run_dir.glob("rho_*.csv")):
        step = int(p.stem.split("_")[1])
        _, rho, mom = read_snapshot(p)
        snaps.append(Snapshot(step, float(times[step]), rho, mom))
    return snaps, man
