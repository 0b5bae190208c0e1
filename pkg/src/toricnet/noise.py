"""Phase-flip error channel and dataset generation/persistence.

Datasets store error chains only; syndromes are recomputed on demand (they
are a deterministic function of the chain, so storing them would double the
integrity surface for no information).

Dataset file format (little-endian):
    header:  magic "TNDS" | version u16 = 1 | L u16 | p_err f64 | M u64 | seed u64
    payload: M records of ceil(2*L^2 / 8) bytes, packed chain bits in flat
             link order, LSB-first within each byte.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .fileio import (
    FormatError,
    LatticeMismatchError,
    check_magic,
    read_exact,
)
from .lattice import Chain, Lattice, syndromes_of
from .seeds import NS_DATASET, substream

DATASET_MAGIC = b"TNDS"
DATASET_VERSION = 1
_HEADER = struct.Struct("<HHdQQ")  # after magic: version, L, p_err, M, seed


@dataclass(frozen=True)
class ErrorModel:
    """Independent phase-flip with probability p_err per link."""

    p_err: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_err <= 1.0:
            raise ValueError(f"p_err must lie in [0, 1], got {self.p_err}")


@dataclass
class Dataset:
    """M sampled error chains at one error probability."""

    lattice: Lattice
    p_err: float
    chains: np.ndarray = field(repr=False)  # (M, n_links) uint8
    seed: int

    def __post_init__(self) -> None:
        self.chains = np.asarray(self.chains, dtype=np.uint8)
        if self.chains.ndim != 2 or self.chains.shape[1] != self.lattice.n_links:
            raise ValueError(
                f"chains have shape {self.chains.shape}, expected "
                f"(M, {self.lattice.n_links})"
            )
        if self.M < 1:
            raise ValueError("dataset must contain at least one chain")

    @property
    def M(self) -> int:
        return self.chains.shape[0]

    def syndromes(self) -> np.ndarray:
        """(M, n_vertices) syndrome bits, recomputed from the chains."""
        return syndromes_of(self.lattice, self.chains)


def sample_chain(lattice: Lattice, model: ErrorModel, rng: np.random.Generator) -> Chain:
    """One error chain: each link flips independently with probability p_err."""
    return (rng.random(lattice.n_links) < model.p_err).astype(np.uint8)


def generate_dataset(lattice: Lattice, model: ErrorModel, M: int, seed: int) -> Dataset:
    """M independent chains, bit-exact reproducible from (L, p_err, M, seed).

    Sample k draws from the substream (seed, NS_DATASET, k), so generation
    may be parallelized across samples without changing the result.
    """
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    chains = np.empty((M, lattice.n_links), dtype=np.uint8)
    for k in range(M):
        chains[k] = sample_chain(lattice, model, substream(seed, NS_DATASET, k))
    return Dataset(lattice=lattice, p_err=model.p_err, chains=chains, seed=seed)


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC)
        f.write(
            _HEADER.pack(
                DATASET_VERSION,
                dataset.lattice.L,
                dataset.p_err,
                dataset.M,
                dataset.seed,
            )
        )
        packed = np.packbits(dataset.chains, axis=1, bitorder="little")
        f.write(packed.tobytes())


def load_dataset(path, expect_lattice: Lattice | None = None) -> Dataset:
    with open(path, "rb") as f:
        check_magic(f, DATASET_MAGIC)
        version, L, p_err, M, seed = _HEADER.unpack(read_exact(f, _HEADER.size, "header"))
        if version != DATASET_VERSION:
            raise FormatError(f"unsupported dataset format version {version}")
        if L < 2:
            raise FormatError(f"corrupt header: L={L}")
        if not 0.0 <= p_err <= 1.0 or M < 1:
            raise FormatError(f"corrupt header: p_err={p_err}, M={M}")
        if expect_lattice is not None and expect_lattice.L != L:
            raise LatticeMismatchError(
                f"dataset is for L={L}, expected L={expect_lattice.L}"
            )
        lattice = Lattice(L)
        n_links = lattice.n_links
        record = (n_links + 7) // 8
        payload = read_exact(f, M * record, "chain records")
        packed = np.frombuffer(payload, dtype=np.uint8).reshape(M, record)
        chains = np.unpackbits(packed, axis=1, count=n_links, bitorder="little")
    return Dataset(lattice=lattice, p_err=p_err, chains=chains, seed=seed)
