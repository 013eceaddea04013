"""
Plain CSV for spectra and series: one header line naming columns with
units, comma separated, '.' decimal point, floats written with repr so a
read-back is exact.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spectro import Spectrum

AXIS_COLUMNS = {"detuning": "detuning_hz", "frequency": "frequency_hz", "wavelength": "wavelength_nm"}
AXIS_KIND_OF = {v: k for k, v in AXIS_COLUMNS.items()}


class CSVFormatError(ValueError):
    pass


@dataclass
class Table:
    """Named numeric columns as read from a CSV file."""

    names: list
    data: np.ndarray

    def column(self, name):
        try:
            return self.data[:, self.names.index(name)]
        except ValueError:
            raise CSVFormatError(f"no column {name!r}; have {self.names}") from None

    @property
    def axis(self):
        return self.data[:, 0]


def _fmt(v):
    return repr(float(v))


def write_columns(path, names, columns):
    """Write equal-length columns under a header; returns the path."""
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    if len(names) != len(cols) or len({c.size for c in cols}) != 1:
        raise ValueError("need one name per column and equal column lengths")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])
    return path


def read_columns(path, monotonic_axis=True):
    """
    Read a headed numeric CSV. The first column is treated as the axis and
    must be strictly monotonic unless ``monotonic_axis`` is False.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not any(c.strip() for c in rows[0]):
        raise CSVFormatError(f"{path}: missing header line")
    names = [c.strip() for c in rows[0]]
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(names):
            raise CSVFormatError(
                f"{path}:{lineno}: expected {len(names)} fields, got {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise CSVFormatError(f"{path}:{lineno}: non-numeric field in {row}") from None
        if not all(np.isfinite(vals)):
            raise CSVFormatError(f"{path}:{lineno}: non-finite value")
        data.append(vals)
    if not data:
        raise CSVFormatError(f"{path}: no data rows")
    arr = np.array(data, dtype=float)
    if monotonic_axis and arr.shape[0] > 1:
        step = np.diff(arr[:, 0])
        if not (np.all(step > 0) or np.all(step < 0)):
            raise CSVFormatError(f"{path}: axis column {names[0]!r} is not strictly monotonic")
    return Table(names, arr)


def write_csv(path, obj, value_name=None):
    """
    Write a :class:`Spectrum` (axis column named after its kind) or a
    ``(names, columns)`` pair.
    """
    if isinstance(obj, Spectrum):
        vname = value_name or obj.meta.get("quantity", "value")
        return write_columns(path, [AXIS_COLUMNS[obj.axis_kind], vname], [obj.axis, obj.values])
    names, cols = obj
    return write_columns(path, list(names), cols)


def read_csv(path):
    return read_columns(path)


def read_spectrum(path, value_column=None):
    """Read a two-or-more-column CSV as a Spectrum over its first column."""
    t = read_columns(path)
    if t.data.shape[0] < 2:
        raise CSVFormatError(f"{path}: a spectrum needs at least two rows")
    kind = AXIS_KIND_OF.get(t.names[0])
    if kind is None:
        raise CSVFormatError(
            f"{path}: first column must be one of {sorted(AXIS_KIND_OF)}, got {t.names[0]!r}")
    vname = value_column or t.names[1]
    return Spectrum(t.axis.copy(), t.column(vname).copy(), kind, {"quantity": vname})


def read_series(path):
    """(x, y) from the first two columns, e.g. ``delay_s,hole_area``."""
    t = read_columns(path)
    if len(t.names) < 2:
        raise CSVFormatError(f"{path}: need at least two columns")
    return t.data[:, 0].copy(), t.data[:, 1].copy(), t.names[:2]
