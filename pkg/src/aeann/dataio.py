"""Binary dataset files and truth CSVs.

Dataset layout (little-endian)::

    "AEAN" | u8 version=1 | u32 n | u32 d | f64 p_exp | n*d f64 row-major
"""

from __future__ import annotations

import csv
import struct

import numpy as np

from .errors import BadMagicError, NonFiniteValueError, TruncatedPayloadError, VersionMismatchError
from .metric import Dataset

MAGIC = b"AEAN"
VERSION = 1
_HEADER = struct.Struct("<4sBIId")


def dataset_to_bytes(P: Dataset) -> bytes:
    n, d = P.points.shape
    return _HEADER.pack(MAGIC, VERSION, n, d, P.p_exp) + P.points.astype("<f8").tobytes(order="C")


def dataset_from_bytes(raw: bytes) -> Dataset:
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError(f"header truncated: expected {_HEADER.size} bytes, got {len(raw)}")
    _, version, n, d, p_exp = _HEADER.unpack_from(raw)
    if version != VERSION:
        raise VersionMismatchError(f"unsupported dataset version {version}, expected {VERSION}")
    expected = n * d * 8
    actual = len(raw) - _HEADER.size
    if actual != expected:
        raise TruncatedPayloadError(f"payload is {actual} bytes, expected {expected} (n={n}, d={d})")
    pts = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n, d).astype(np.float64)
    if not np.all(np.isfinite(pts)) or not np.isfinite(p_exp):
        raise NonFiniteValueError("dataset file contains non-finite values")
    return Dataset(pts, p_exp)


def write_dataset(P: Dataset, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dataset_to_bytes(P))


def read_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        return dataset_from_bytes(fh.read())


def write_truth(truth, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["query_id", "nn_id", "distance"])
        for qi, nn, dist in truth:
            wr.writerow([int(qi), int(nn), repr(float(dist))])


def read_truth(path) -> list[tuple[int, int, float]]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh, strict=True)
        header = next(rd)
        if header != ["query_id", "nn_id", "distance"]:
            raise ValueError(f"unexpected truth header {header}")
        return [(int(a), int(b), float(c)) for a, b, c in rd]
