"""On-disk array formats.

Raw arrays: 8-byte magic, uint32 ndim, ndim × uint64 dims, then the values as
little-endian float64. PGM images: binary 16-bit greyscale with linear scaling
between the recorded min and max.
"""

import csv
import struct
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Tuple, Union

import numpy as np

from shared.exceptions import DatasetFormatError

RAW_MAGIC = b"KIDOTRAW"

PathLike = Union[str, Path]


def encode_raw(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype="<f8")
    header = RAW_MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + arr.tobytes(order="C")


def decode_raw(blob: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(blob) < 12 or blob[:8] != RAW_MAGIC:
        raise DatasetFormatError(f"{source}: missing raw array magic")
    (ndim,) = struct.unpack_from("<I", blob, 8)
    offset = 12 + 8 * ndim
    if len(blob) < offset:
        raise DatasetFormatError(f"{source}: truncated shape header")
    shape = struct.unpack_from(f"<{ndim}Q", blob, 12)
    expected = int(np.prod(shape, dtype=np.int64)) * 8
    if len(blob) - offset != expected:
        raise DatasetFormatError(
            f"{source}: payload has {len(blob) - offset} bytes, expected {expected}",
            details={"shape": list(shape)},
        )
    return np.frombuffer(blob, dtype="<f8", offset=offset).reshape(shape).astype(np.float64)


def write_raw(path: PathLike, arr: np.ndarray) -> None:
    Path(path).write_bytes(encode_raw(arr))


def read_raw(path: PathLike) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DatasetFormatError(f"missing array file {path}")
    return decode_raw(path.read_bytes(), source=str(path))


def write_pgm16(path: PathLike, image: np.ndarray) -> Tuple[float, float]:
    """Write a 2-D array as 16-bit PGM and return the (min, max) used for scaling"""
    image = np.asarray(image, dtype=np.float64)
    lo, hi = float(image.min()), float(image.max())
    span = hi - lo
    scaled = np.zeros_like(image) if span == 0 else (image - lo) / span
    pixels = np.round(scaled * 65535.0).astype(">u2")
    height, width = image.shape
    header = f"P5\n{width} {height}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + pixels.tobytes())
    return lo, hi


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])


def write_dict_csv(path: PathLike, rows: Sequence[Mapping]) -> None:
    header = list(rows[0].keys()) if rows else []
    write_csv(path, header, ([row[k] for k in header] for row in rows))


def _format_cell(value):
    # repr keeps every bit of a float so reruns can be compared byte for byte
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value
