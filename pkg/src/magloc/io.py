"""
Plain-text file formats.

Every file is a CSV table preceded by a block of ``#``-prefixed lines that
hold a YAML mapping (radius, metadata, basis, slice plane, ...). Floats are
written with 17 significant digits so reading back is exact and rewriting is
byte-identical.
"""

from __future__ import annotations

import csv
import io as _io
from pathlib import Path

import numpy as np
import yaml

from .aperture import VshBasisSpec, VshCoefficients
from .errors import ConfigError
from .forward import Measurement

FLOAT_FMT = "%.17g"
MEASUREMENT_COLUMNS = [
    "dir_x", "dir_y", "dir_z",
    "re_hx", "im_hx", "re_hy", "im_hy", "re_hz", "im_hz",
    "weight",
]
COEFFICIENT_COLUMNS = ["family", "n", "m", "re", "im"]
GRID_COLUMNS = ["x", "y", "z", "I_raw", "I_norm", "saturated"]


def plain(obj):
    """Convert numpy scalars/arrays and tuples into YAML-safe builtins."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.complexfloating, complex)):
        return [float(obj.real), float(obj.imag)]
    return obj


def _header(kind, fields):
    body = yaml.safe_dump({"format": kind, **plain(fields)}, sort_keys=True, default_flow_style=None)
    return "".join(f"# {line}\n" for line in body.splitlines())


def _split(path, kind):
    text = Path(path).read_text()
    head, rows = [], []
    for line in text.splitlines():
        if line.startswith("#"):
            head.append(line[2:] if line.startswith("# ") else line[1:])
        elif line.strip():
            rows.append(line)
    meta = yaml.safe_load("\n".join(head)) or {}
    if meta.get("format") != kind:
        raise ConfigError(f"{path}: expected a {kind!r} file, found {meta.get('format')!r}")
    if not rows:
        raise ConfigError(f"{path}: missing column header")
    return meta, list(csv.reader(rows))


def _fmt(x):
    return FLOAT_FMT % x


def write_measurement(meas, path):
    header = _header("measurement", {"radius": meas.radius, "metadata": meas.metadata})
    out = _io.StringIO()
    out.write(header)
    out.write(",".join(MEASUREMENT_COLUMNS) + "\n")
    v = meas.values
    cols = np.column_stack([
        meas.directions,
        v[:, 0].real, v[:, 0].imag, v[:, 1].real, v[:, 1].imag, v[:, 2].real, v[:, 2].imag,
    ])
    for k, row in enumerate(cols):
        w = "" if meas.weights is None else _fmt(meas.weights[k])
        out.write(",".join(_fmt(x) for x in row) + "," + w + "\n")
    Path(path).write_text(out.getvalue())


def read_measurement(path):
    meta, rows = _split(path, "measurement")
    if rows[0] != MEASUREMENT_COLUMNS:
        raise ConfigError(f"{path}: unexpected columns {rows[0]}")
    body = rows[1:]
    if not body:
        raise ConfigError(f"{path}: no samples")
    num = np.array([[float(x) for x in r[:9]] for r in body])
    wcol = [r[9] if len(r) > 9 else "" for r in body]
    if all(w == "" for w in wcol):
        weights = None
    elif any(w == "" for w in wcol):
        raise ConfigError(f"{path}: weight column is only partly filled")
    else:
        weights = np.array([float(w) for w in wcol])
    values = num[:, 3::2] + 1j * num[:, 4::2]
    return Measurement(num[:, :3], float(meta["radius"]), values, weights, meta.get("metadata") or {})


def write_coefficients(coeffs, path, report=None):
    fields = {"basis": [coeffs.basis.N1, coeffs.basis.N2, coeffs.basis.N3]}
    if report is not None:
        fields["fit"] = {
            "residual_norm": report.residual_norm,
            "relative_residual": report.relative_residual,
            "condition": report.condition,
            "rank": report.rank,
        }
    out = _io.StringIO()
    out.write(_header("vsh-coefficients", fields))
    out.write(",".join(COEFFICIENT_COLUMNS) + "\n")
    for (fam, n, m), c in zip(coeffs.basis.indices(), coeffs.vector()):
        out.write(f"{fam},{n},{m},{_fmt(c.real)},{_fmt(c.imag)}\n")
    Path(path).write_text(out.getvalue())


def read_coefficients(path):
    meta, rows = _split(path, "vsh-coefficients")
    if rows[0] != COEFFICIENT_COLUMNS:
        raise ConfigError(f"{path}: unexpected columns {rows[0]}")
    basis = VshBasisSpec(*meta["basis"])
    maps = {"I": {}, "T": {}, "N": {}}
    for fam, n, m, re, im in rows[1:]:
        maps[fam][(int(n), int(m))] = complex(float(re), float(im))
    return VshCoefficients(basis, maps["I"], maps["T"], maps["N"])


def write_grid(ig, path):
    """Indicator sweep as ``x,y,z,I_raw,I_norm,saturated``; slices name their plane."""
    grid = ig.grid
    fields = {"h": grid.h, "inner_radius": grid.inner_radius, "outer_radius": grid.outer_radius}
    if grid.slice is not None:
        fields["slice"] = {"point": grid.slice.point, "normal": grid.slice.normal}
    out = _io.StringIO()
    out.write(_header("indicator-grid", fields))
    out.write(",".join(GRID_COLUMNS) + "\n")
    table = np.column_stack([grid.points, ig.values, ig.normalized])
    for row, sat in zip(table, ig.saturated):
        out.write(",".join(_fmt(x) for x in row) + f",{int(sat)}\n")
    Path(path).write_text(out.getvalue())


def read_grid(path):
    """Returns (header mapping, points (G,3), raw values, normalized values, saturated flags)."""
    meta, rows = _split(path, "indicator-grid")
    if rows[0] != GRID_COLUMNS:
        raise ConfigError(f"{path}: unexpected columns {rows[0]}")
    arr = np.array([[float(x) for x in r] for r in rows[1:]])
    return meta, arr[:, :3], arr[:, 3], arr[:, 4], arr[:, 5].astype(bool)


def write_yaml(data, path):
    Path(path).write_text(yaml.safe_dump(plain(data), sort_keys=False, default_flow_style=None))
