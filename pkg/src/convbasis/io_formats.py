"""Matrix and basis serialization.

CBM1: 4-byte magic b"CBM1", u64-le rows, u64-le cols, then rows*cols f64-le
row-major. CBB1: 4-byte magic b"CBB1", u64-le n, u64-le k, then per term
u64-le window m followed by n f64-le floats. CSV is plain decimal with `.`
separator, one row per line.
"""

import csv
import struct

import numpy as np

from .structures import ConvBasis
from .validate import as_matrix

_MATRIX_MAGIC = b"CBM1"
_BASIS_MAGIC = b"CBB1"


def save_matrix_cbm(path, a):
    a = as_matrix(a, "matrix")
    with open(path, "wb") as fh:
        fh.write(_MATRIX_MAGIC)
        fh.write(struct.pack("<QQ", a.shape[0], a.shape[1]))
        fh.write(a.astype("<f8").tobytes(order="C"))


def load_matrix_cbm(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MATRIX_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {_MATRIX_MAGIC!r}")
        rows, cols = struct.unpack("<QQ", fh.read(16))
        data = np.frombuffer(fh.read(8 * rows * cols), dtype="<f8")
        if data.size != rows * cols:
            raise ValueError(f"truncated file: expected {rows * cols} floats")
    return data.astype(np.float64).reshape(rows, cols)


def save_matrix_csv(path, a):
    a = as_matrix(a, "matrix")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in a:
            writer.writerow([repr(float(x)) for x in row])


def load_matrix_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for record in csv.reader(fh):
            if record:
                rows.append([float(x) for x in record])
    if not rows:
        raise ValueError("empty CSV matrix")
    return as_matrix(np.asarray(rows), "matrix")


def save_basis_cbb(path, basis):
    with open(path, "wb") as fh:
        fh.write(_BASIS_MAGIC)
        fh.write(struct.pack("<QQ", basis.n, basis.k))
        for b, m in zip(basis.vectors, basis.windows):
            fh.write(struct.pack("<Q", m))
            fh.write(b.astype("<f8").tobytes())


def load_basis_cbb(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _BASIS_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {_BASIS_MAGIC!r}")
        n, k = struct.unpack("<QQ", fh.read(16))
        vectors, windows = [], []
        for _ in range(k):
            (m,) = struct.unpack("<Q", fh.read(8))
            b = np.frombuffer(fh.read(8 * n), dtype="<f8")
            if b.size != n:
                raise ValueError("truncated basis term")
            windows.append(m)
            vectors.append(b.astype(np.float64))
    return ConvBasis(n, vectors, windows)
