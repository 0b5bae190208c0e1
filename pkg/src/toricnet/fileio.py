"""Shared helpers for the binary dataset and model file formats."""

from __future__ import annotations

from typing import BinaryIO

import numpy as np


class FormatError(Exception):
    """A file does not conform to its declared binary format."""


class BadMagicError(FormatError):
    """Wrong magic bytes at the start of a file."""


class TruncatedError(FormatError):
    """File ends before the declared payload is complete."""


class LatticeMismatchError(FormatError):
    """File header declares a lattice size other than the expected one."""


def read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedError(f"truncated payload: expected {n} bytes of {what}, got {len(buf)}")
    return buf


def check_magic(f: BinaryIO, magic: bytes) -> None:
    buf = f.read(len(magic))
    if buf != magic:
        raise BadMagicError(f"bad magic: expected {magic!r}, got {buf!r}")


def read_f64_array(f: BinaryIO, shape: tuple[int, ...], what: str) -> np.ndarray:
    count = int(np.prod(shape))
    buf = read_exact(f, 8 * count, what)
    return np.frombuffer(buf, dtype="<f8", count=count).reshape(shape).copy()


def write_f64_array(f: BinaryIO, arr: np.ndarray) -> None:
    f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
