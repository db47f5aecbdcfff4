"""CSV loading with explicit column validation."""

import csv

import numpy as np


class PlotDataError(Exception):
    """Missing file, empty table, or a required column is absent."""


def read_csv(path):
    """Read one nhprk CSV into (columns, array).

    Raises PlotDataError when the file has no data rows.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    except OSError as exc:
        raise PlotDataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise PlotDataError(f"{path}: empty file")
    header = [name.strip() for name in rows[0]]
    body = rows[1:]
    if not body:
        raise PlotDataError(f"{path}: no data rows")
    try:
        data = np.array([[float(cell) for cell in row] for row in body])
    except ValueError as exc:
        raise PlotDataError(f"{path}: non-numeric cell ({exc})") from exc
    if data.shape[1] != len(header):
        raise PlotDataError(f"{path}: ragged rows")
    return header, data


def column(header, data, name, path="input"):
    if name not in header:
        raise PlotDataError(f"{path}: missing column {name!r}")
    return data[:, header.index(name)]
