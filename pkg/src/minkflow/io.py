"""Persistence: body sample files, trajectory CSV, summary JSON and OBJ meshes.

Body file layout::

    {"format": "minkflow-body", "n": 2, "n_theta": 32, "n_phi": 64, ...}
    1.0000000000000000
    ...

The first line is a JSON header; then one sample per line, row-major over
``(theta, phi)``, printed with 17 significant digits so that reading the
file back reproduces every double exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from minkflow.body import SupportField, embedding
from minkflow.errors import GridError
from minkflow.flow import ROW_COLUMNS, Trajectory
from minkflow.sphere import SphereGrid, build_grid

BODY_FORMAT = "minkflow-body"


def write_samples(path, grid: SphereGrid, values, field: str = "u", symmetric: bool = False,
                  provenance: dict | None = None) -> None:
    values = grid.check_field(values)
    header = {
        "format": BODY_FORMAT,
        "field": field,
        "n": grid.n,
        "n_theta": grid.n_theta,
        "n_phi": grid.n_phi,
        "symmetric": bool(symmetric),
        "provenance": provenance or {},
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend("%.17g" % v for v in values)
    Path(path).write_text("\n".join(lines) + "\n")


def read_samples(path, grid: SphereGrid | None = None) -> tuple[SphereGrid, np.ndarray, dict]:
    """Read a sample file; ``grid`` (if given) must match the header."""
    text = Path(path).read_text().splitlines()
    if not text:
        raise ValueError(f"{path}: empty file")
    try:
        header = json.loads(text[0])
    except json.JSONDecodeError as err:
        raise ValueError(f"{path}: first line is not a JSON header ({err})") from None
    if header.get("format") != BODY_FORMAT:
        raise ValueError(f"{path}: not a {BODY_FORMAT} file")
    n, nt, npf = header["n"], header["n_theta"], header["n_phi"]
    if grid is None:
        grid = build_grid(n, nt, npf if n == 2 else None)
    elif (grid.n, grid.n_theta, grid.n_phi) != (n, nt, npf):
        raise GridError(f"{path}: samples for grid n={n} {nt}x{npf}, expected {grid.describe()}")
    values = np.array([float(s) for s in text[1:] if s.strip()])
    if values.size != grid.size:
        raise GridError(f"{path}: {values.size} samples, expected {grid.size}")
    return grid, values, header


def write_body(path, body: SupportField, provenance: dict | None = None) -> None:
    write_samples(path, body.grid, body.u, "u", body.symmetric, provenance)


def read_body(path, grid: SphereGrid | None = None) -> SupportField:
    grid, values, header = read_samples(path, grid)
    return SupportField(grid, values, bool(header.get("symmetric", False)))


def _fmt(v) -> str:
    return "%.17g" % v


def write_trajectory_csv(path, traj: Trajectory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ROW_COLUMNS)
        for row in traj.rows:
            w.writerow([_fmt(row[c]) for c in ROW_COLUMNS])


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = np.array([[float(x) for x in row] for row in r])
    return {name: data[:, i] for i, name in enumerate(header)}


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_summary(path, summary: dict) -> None:
    Path(path).write_text(json.dumps(_plain(summary), sort_keys=True, indent=2) + "\n")


def export_mesh(body: SupportField, path) -> None:
    """Triangulated OBJ of the boundary X(x) = u x + grad u.

    One vertex per grid node; quads between neighbouring rings are split in
    two with longitude wrap, and each polar cap is closed by a fan over its
    ring. Faces are oriented outward.
    """
    grid = body.grid
    if grid.n != 2:
        raise GridError("mesh export needs n=2")
    X = embedding(body)
    nt, npf = grid.n_theta, grid.n_phi

    def vid(j, k):
        return j * npf + (k % npf) + 1

    faces = []
    for k in range(1, npf - 1):
        faces.append((vid(0, 0), vid(0, k), vid(0, k + 1)))
    for j in range(nt - 1):
        for k in range(npf):
            a, b = vid(j, k), vid(j, k + 1)
            c, d = vid(j + 1, k + 1), vid(j + 1, k)
            faces.append((a, d, c))
            faces.append((a, c, b))
    last = nt - 1
    for k in range(1, npf - 1):
        faces.append((vid(last, 0), vid(last, k + 1), vid(last, k)))
    lines = ["# minkflow mesh"]
    lines.extend("v %.17g %.17g %.17g" % tuple(p) for p in X)
    lines.extend("f %d %d %d" % f for f in faces)
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj_vertices(path) -> np.ndarray:
    pts = [list(map(float, ln.split()[1:4])) for ln in Path(path).read_text().splitlines() if ln.startswith("v ")]
    return np.array(pts)
