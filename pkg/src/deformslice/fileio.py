"""Binary tensor (FMAP) and parameter bundle (DATP) formats.

FMAP layout, all little-endian::

    b"FMAP" | u16 version=1 | u16 dtype=1 (float64) | u8 rank
    | rank x u32 extents | row-major float64 payload

DATP layout::

    b"DATP" | u16 version=1 | u32 n_sections
    | n_sections x (u16 name_len | utf-8 name | FMAP body)
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import BinaryIO, Mapping

import numpy as np

from .errors import FormatError
from .tensor import MAX_RANK

FMAP_MAGIC = b"FMAP"
DATP_MAGIC = b"DATP"
VERSION = 1
DTYPE_F64 = 1

_HEADER = struct.Struct("<4sHHB")


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated {what}: expected {n} bytes, got {len(buf)}")
    return buf


def write_fmap(fh: BinaryIO, arr) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    if not 1 <= arr.ndim <= MAX_RANK:
        raise FormatError(f"rank {arr.ndim} not storable")
    fh.write(_HEADER.pack(FMAP_MAGIC, VERSION, DTYPE_F64, arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.tobytes(order="C"))


def read_fmap(fh: BinaryIO) -> np.ndarray:
    magic, version, dtype, rank = _HEADER.unpack(_read_exact(fh, _HEADER.size, "FMAP header"))
    if magic != FMAP_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {FMAP_MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported FMAP version {version}")
    if dtype != DTYPE_F64:
        raise FormatError(f"unsupported dtype code {dtype}")
    if not 1 <= rank <= MAX_RANK:
        raise FormatError(f"invalid rank {rank}")
    dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "FMAP extents"))
    if any(d < 1 for d in dims):
        raise FormatError(f"zero extent in {dims}")
    nbytes = 8 * int(np.prod(dims))
    payload = _read_exact(fh, nbytes, "FMAP payload")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)


def save_tensor(path, arr) -> None:
    with open(path, "wb") as fh:
        write_fmap(fh, arr)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        arr = read_fmap(fh)
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after FMAP payload")
    return arr


def dumps_sections(sections: Mapping[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(DATP_MAGIC + struct.pack("<HI", VERSION, len(sections)))
    for name, arr in sections.items():
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)) + raw)
        write_fmap(buf, arr)
    return buf.getvalue()


def loads_sections(data: bytes) -> dict[str, np.ndarray]:
    fh = io.BytesIO(data)
    magic = _read_exact(fh, 4, "DATP magic")
    if magic != DATP_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {DATP_MAGIC!r}")
    version, count = struct.unpack("<HI", _read_exact(fh, 6, "DATP header"))
    if version != VERSION:
        raise FormatError(f"unsupported DATP version {version}")
    sections = {}
    for _ in range(count):
        (n,) = struct.unpack("<H", _read_exact(fh, 2, "section name length"))
        try:
            name = _read_exact(fh, n, "section name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"section name is not utf-8: {exc}") from None
        if name in sections:
            raise FormatError(f"duplicate section {name!r}")
        sections[name] = read_fmap(fh)
    if fh.read(1):
        raise FormatError("trailing bytes after last DATP section")
    return sections


def save_sections(path, sections: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps_sections(sections))


def load_sections(path) -> dict[str, np.ndarray]:
    return loads_sections(Path(path).read_bytes())
