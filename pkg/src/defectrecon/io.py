"""Plain-text file formats: Cauchy datasets, phase fields, iteration
histories, and run manifests.

Everything is CSV or plain PGM so runs can be diffed and inspected
without tooling.  Floats are written with repr (shortest round-trip),
which makes identical runs byte-identical.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .datagen import CauchyDataset, NoiseSpec
from .grid import check_sides

DATASET_MAGIC = "# defectrecon cauchy dataset v1"


class DatasetFormatError(ValueError):
    """Malformed dataset file."""


def _fmt(x):
    return repr(float(x))


# ---------------------------------------------------------------------------
# Cauchy datasets

def write_dataset(ds, path):
    lines = [
        DATASET_MAGIC,
        "# electrodes: " + ",".join(ds.electrodes),
        "# gamma: " + ",".join(ds.gamma),
        f"# domain: {_fmt(ds.width)},{_fmt(ds.height)}",
        f"# points_per_side: {ds.points_per_side}",
    ]
    noise = ds.noise if ds.noise is not None else NoiseSpec(0.0, 0.0, 0)
    lines += [
        f"# noise_level_f: {_fmt(noise.level_f)}",
        f"# noise_level_g: {_fmt(noise.level_g)}",
        f"# noise_seed: {int(noise.seed)}",
        "s,f,g",
    ]
    lines += [f"{_fmt(s)},{_fmt(f)},{_fmt(g)}"
              for s, f, g in zip(ds.s, ds.f, ds.g)]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _header_value(line, key, path):
    prefix = f"# {key}:"
    if not line.startswith(prefix):
        raise DatasetFormatError(f"{path}: expected header {key!r}, got {line!r}")
    return line[len(prefix):].strip()


def read_dataset(path):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    lines = [ln for ln in lines if ln.strip()]
    if not lines or lines[0] != DATASET_MAGIC:
        raise DatasetFormatError(f"{path}: not a dataset file (bad magic line)")
    if len(lines) < 10:
        raise DatasetFormatError(f"{path}: truncated dataset file")
    try:
        electrodes = tuple(_header_value(lines[1], "electrodes", path).split(","))
        gamma = check_sides(_header_value(lines[2], "gamma", path).split(","))
        width_s, height_s = _header_value(lines[3], "domain", path).split(",")
        width, height = float(width_s), float(height_s)
        pps = int(_header_value(lines[4], "points_per_side", path))
        level_f = float(_header_value(lines[5], "noise_level_f", path))
        level_g = float(_header_value(lines[6], "noise_level_g", path))
        seed = int(_header_value(lines[7], "noise_seed", path))
    except (ValueError, IndexError) as exc:
        if isinstance(exc, DatasetFormatError):
            raise
        raise DatasetFormatError(f"{path}: bad header ({exc})") from exc
    if lines[8] != "s,f,g":
        raise DatasetFormatError(f"{path}: expected column header 's,f,g'")
    rows = []
    for ln in lines[9:]:
        parts = ln.split(",")
        if len(parts) != 3:
            raise DatasetFormatError(f"{path}: bad data row {ln!r}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise DatasetFormatError(f"{path}: bad data row {ln!r}") from exc
    if not rows:
        raise DatasetFormatError(f"{path}: dataset has no data rows")
    arr = np.asarray(rows)
    ds = CauchyDataset(electrodes, gamma, width, height, pps,
                       arr[:, 0], arr[:, 1], arr[:, 2],
                       NoiseSpec(level_f, level_g, seed))
    ds.validate()
    return ds


# ---------------------------------------------------------------------------
# phase fields

def phase_to_rows(grid, phase):
    """v = 1 - tilde_v as a (ny+1, nx+1) array, row 0 at the bottom."""
    return phase.v.reshape(grid.ny + 1, grid.nx + 1)


def write_phase_csv(grid, phase, path):
    rows = phase_to_rows(grid, phase)
    with open(path, "w", newline="\n") as fh:
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def read_phase_csv(path):
    """Parse a phase CSV back to the (ny+1, nx+1) array of v values."""
    rows = []
    with open(path) as fh:
        for ln in fh:
            ln = ln.strip()
            if ln:
                rows.append([float(p) for p in ln.split(",")])
    if not rows:
        raise ValueError(f"{path}: empty phase file")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: ragged phase rows")
    return np.asarray(rows)


def pgm_text(v_rows):
    """Plain PGM (P2, maxval 255) from v rows ordered bottom-to-top."""
    v_rows = np.asarray(v_rows, dtype=float)
    pix = np.rint(255.0 * np.clip(v_rows, 0.0, 1.0)).astype(int)
    ny, nx = pix.shape
    lines = ["P2", f"{nx} {ny}", "255"]
    lines += [" ".join(str(p) for p in row) for row in pix[::-1]]
    return "\n".join(lines) + "\n"


def write_phase_pgm(grid, phase, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(pgm_text(phase_to_rows(grid, phase)))


def write_phase_field(grid, phase, base_path, formats=("csv", "pgm")):
    """Write one phase field in the requested formats; returns the paths."""
    base = str(base_path)
    written = []
    for fmt in formats:
        if fmt == "csv":
            write_phase_csv(grid, phase, base + ".csv")
            written.append(base + ".csv")
        elif fmt == "pgm":
            write_phase_pgm(grid, phase, base + ".pgm")
            written.append(base + ".pgm")
        else:
            raise ValueError(f"unknown phase output format {fmt!r}")
    return written


# ---------------------------------------------------------------------------
# history and manifest

HISTORY_COLUMNS = ("stage", "iteration", "eps", "total", "fidelity",
                   "dirichlet", "well", "gradient_term", "step",
                   "dual_norm", "reductions", "converged")


def write_history(history, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(HISTORY_COLUMNS) + "\n")
        for rec in history:
            row = (str(rec.stage), str(rec.iteration), _fmt(rec.eps),
                   _fmt(rec.cost.total), _fmt(rec.cost.fidelity),
                   _fmt(rec.cost.dirichlet), _fmt(rec.cost.well),
                   _fmt(rec.cost.gradient_term), _fmt(rec.step),
                   _fmt(rec.dual_norm), str(rec.reductions),
                   "1" if rec.converged else "0")
            fh.write(",".join(row) + "\n")


def read_history(path):
    """History rows as a list of dicts keyed by HISTORY_COLUMNS."""
    out = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != HISTORY_COLUMNS:
            raise ValueError(f"{path}: unexpected history header {header}")
        for ln in fh:
            ln = ln.strip()
            if not ln:
                continue
            vals = ln.split(",")
            rec = dict(zip(HISTORY_COLUMNS, vals))
            for key in ("stage", "iteration", "reductions", "converged"):
                rec[key] = int(rec[key])
            for key in ("eps", "total", "fidelity", "dirichlet", "well",
                        "gradient_term", "step", "dual_norm"):
                rec[key] = float(rec[key])
            out.append(rec)
    return out


def write_manifest(manifest, path):
    """Atomic JSON write: tmp file in the target directory, then rename."""
    text = json.dumps(manifest, indent=2, sort_keys=True)
    tmp = str(path) + ".tmp"
    with open(tmp, "w", newline="\n") as fh:
        fh.write(text + "\n")
    os.replace(tmp, path)


def read_manifest(path):
    with open(path) as fh:
        return json.load(fh)
