"""KFLD field container and CSV artifact writers"""

import json
import logging
import os

import numpy as np
import pandas as pd

from .errors import ValidationError
from .fields import DensityField, VelocityGrid

logger = logging.getLogger(__name__)

MAGIC = b"KFLD"
VERSION = 1
HEADER = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u4"),
        ("d", "<u4"),
        ("n", "<u4"),
        ("L", "<f8"),
        ("tail_c", "<f8"),
        ("tail_q", "<f8"),
    ]
)
FLOAT_FORMAT = "%.17g"


def write_field(path, f):
    """Write a DensityField as little-endian header plus row-major f64 samples"""
    header = np.zeros(1, dtype=HEADER)
    header["magic"] = MAGIC
    header["version"] = VERSION
    header["d"] = f.grid.d
    header["n"] = f.grid.n
    header["L"] = f.grid.L
    header["tail_c"] = f.tail_c
    header["tail_q"] = f.tail_q
    with open(path, "wb") as handle:
        handle.write(header.tobytes())
        handle.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    logger.debug(f"Wrote field {f!r} to {path}")


def read_field(path, interpolation="linear"):
    """Read a KFLD file back into a DensityField"""
    with open(path, "rb") as handle:
        raw = handle.read()
    if len(raw) < HEADER.itemsize:
        raise ValidationError(f"Truncated field file: {path}")
    header = np.frombuffer(raw[: HEADER.itemsize], dtype=HEADER)[0]
    if header["magic"] != MAGIC:
        raise ValidationError(f"Not a KFLD file: {path}")
    if header["version"] != VERSION:
        raise ValidationError(f"Unsupported KFLD version {header['version']} in {path}")
    grid = VelocityGrid(int(header["d"]), int(header["n"]), float(header["L"]))
    samples = np.frombuffer(raw[HEADER.itemsize :], dtype="<f8")
    if samples.size != grid.n**grid.d:
        raise ValidationError(
            f"{path} holds {samples.size} samples, header declares {grid.n**grid.d}"
        )
    return DensityField(
        grid,
        samples.reshape(grid.shape).astype(float),
        float(header["tail_c"]),
        float(header["tail_q"]),
        interpolation,
    )


def write_table(path, table):
    """Write a DataFrame (or list of row dicts) as a plot-ready CSV"""
    frame = table if isinstance(table, pd.DataFrame) else pd.DataFrame(table)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return frame


def read_table(path):
    return pd.read_csv(path)


def write_json(path, payload):
    """Write a JSON document with sorted keys so reruns compare byte for byte"""
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, default=_to_builtin)
        handle.write("\n")


def _to_builtin(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Not JSON serializable: {type(value).__name__}")


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
