"""Matrix and sample-table file formats.

Dense matrices travel either as CSV (one row per line, comma-separated
decimal floats) or as raw binary: an 8-byte header of (rows, cols) as two
little-endian uint32 followed by row-major little-endian float64 payload.
"""

from __future__ import annotations

import struct

import numpy as np

_HEADER = struct.Struct("<II")


def load_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)


def save_matrix_csv(path, M) -> None:
    np.savetxt(path, np.atleast_2d(np.asarray(M, dtype=float)),
               delimiter=",", fmt="%.17g")


def load_matrix_bin(path) -> np.ndarray:
    with open(path, "rb") as fh:
        rows, cols = _HEADER.unpack(fh.read(_HEADER.size))
        payload = np.frombuffer(fh.read(), dtype="<f8")
    if payload.size != rows * cols:
        raise ValueError(f"payload holds {payload.size} values, "
                         f"header promises {rows}x{cols}")
    return payload.reshape(rows, cols).astype(float)


def save_matrix_bin(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(M.shape[0], M.shape[1]))
        fh.write(M.astype("<f8").tobytes(order="C"))


def load_matrix(path) -> np.ndarray:
    """Dispatch on extension: .bin uses the binary format, anything else CSV."""
    if str(path).endswith(".bin"):
        return load_matrix_bin(path)
    return load_matrix_csv(path)


def load_labeled_samples(path):
    """Read classification data: one sample per row, +-1 label in column 0.

    Returns (X, labels) with X of shape (samples, features).
    """
    table = load_matrix_csv(path)
    labels = table[:, 0]
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise ValueError("labels in the first column must be +1 or -1")
    return table[:, 1:], labels
