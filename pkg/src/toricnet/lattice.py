"""Toric-code geometry: link indexing, chain algebra, syndromes, homology.

Qubits live on the links of an L x L square lattice with periodic boundaries.
A chain is a bit vector over the 2L^2 links; its syndrome is the parity of
chain bits on the four links incident to each vertex.  Chains with empty
syndrome (cycles) fall into four homology classes on the torus, measured by
winding parities across one vertical and one horizontal cut.

Link layout (fixed so that datasets and model files are portable):
    flat index = orientation * L^2 + y * L + x,  orientation 0 = horizontal,
    1 = vertical.  Horizontal link (x, y) joins vertex (x, y) to
    ((x+1) mod L, y); vertical link (x, y) joins (x, y) to (x, (y+1) mod L).
Vertices are indexed y * L + x.

Plaquette parity checks act trivially on phase-flip chains and are not
represented.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

# Chains and syndromes are plain uint8 arrays of 0/1 bits.
Chain = np.ndarray
Syndrome = np.ndarray

HORIZONTAL = 0
VERTICAL = 1


class HomologyClass(NamedTuple):
    """Winding parities of a cycle: wx across the x=0|x=1 cut, wy across y=0|y=1."""

    wx: int
    wy: int


TRIVIAL = HomologyClass(0, 0)

# Canonical bin order used by histograms and reports: trivial, horizontal
# winding, vertical winding, both.
CLASS_ORDER = (
    HomologyClass(0, 0),
    HomologyClass(1, 0),
    HomologyClass(0, 1),
    HomologyClass(1, 1),
)

CLASS_NAMES = ("h0", "z1", "z2", "z1z2")


def class_index(cls: HomologyClass) -> int:
    """Position of a homology class in CLASS_ORDER."""
    return int(cls.wx) + 2 * int(cls.wy)


def class_xor(a: HomologyClass, b: HomologyClass) -> HomologyClass:
    return HomologyClass(a.wx ^ b.wx, a.wy ^ b.wy)


@dataclass(frozen=True)
class Lattice:
    """L x L periodic lattice with one qubit per link."""

    L: int

    def __post_init__(self) -> None:
        if self.L < 2:
            raise ValueError(f"L must be >= 2, got {self.L}")

    @property
    def n_links(self) -> int:
        return 2 * self.L * self.L

    @property
    def n_vertices(self) -> int:
        return self.L * self.L

    def link_index(self, orientation: int, x: int, y: int) -> int:
        L = self.L
        return orientation * L * L + (y % L) * L + (x % L)

    def vertex_index(self, x: int, y: int) -> int:
        L = self.L
        return (y % L) * L + (x % L)

    def vertex_coords(self, index: int) -> tuple[int, int]:
        return index % self.L, index // self.L

    @cached_property
    def incidence(self) -> np.ndarray:
        """(n_vertices, n_links) 0/1 matrix; row v marks the links touching v."""
        L = self.L
        inc = np.zeros((self.n_vertices, self.n_links), dtype=np.uint8)
        for y in range(L):
            for x in range(L):
                v = self.vertex_index(x, y)
                inc[v, self.link_index(HORIZONTAL, x, y)] = 1
                inc[v, self.link_index(HORIZONTAL, x - 1, y)] = 1
                inc[v, self.link_index(VERTICAL, x, y)] = 1
                inc[v, self.link_index(VERTICAL, x, y - 1)] = 1
        inc.setflags(write=False)
        return inc

    @cached_property
    def wx_cut_links(self) -> np.ndarray:
        """Horizontal links crossing the cut between columns x=0 and x=1."""
        return np.array([self.link_index(HORIZONTAL, 0, y) for y in range(self.L)])

    @cached_property
    def wy_cut_links(self) -> np.ndarray:
        """Vertical links crossing the cut between rows y=0 and y=1."""
        return np.array([self.link_index(VERTICAL, x, 0) for x in range(self.L)])


def empty_chain(lattice: Lattice) -> Chain:
    return np.zeros(lattice.n_links, dtype=np.uint8)


def chain_from_links(lattice: Lattice, links) -> Chain:
    """Chain with the given (orientation, x, y) links set."""
    chain = empty_chain(lattice)
    for orientation, x, y in links:
        chain[lattice.link_index(orientation, x, y)] ^= 1
    return chain


def _check_chain(lattice: Lattice, chain: Chain) -> np.ndarray:
    chain = np.asarray(chain)
    if chain.shape != (lattice.n_links,):
        raise ValueError(
            f"chain has shape {chain.shape}, lattice expects ({lattice.n_links},)"
        )
    return chain.astype(np.uint8, copy=False)


def _check_syndrome(lattice: Lattice, syndrome: Syndrome) -> np.ndarray:
    syndrome = np.asarray(syndrome)
    if syndrome.shape != (lattice.n_vertices,):
        raise ValueError(
            f"syndrome has shape {syndrome.shape}, lattice expects ({lattice.n_vertices},)"
        )
    return syndrome.astype(np.uint8, copy=False)


def syndrome_of(lattice: Lattice, chain: Chain) -> Syndrome:
    """Vertex parities of a chain: bit v is the parity of chain bits on the
    four links incident to vertex v."""
    chain = _check_chain(lattice, chain)
    return (lattice.incidence @ chain) % 2


def syndromes_of(lattice: Lattice, chains: np.ndarray) -> np.ndarray:
    """Row-wise syndrome_of for an (M, n_links) array of chains."""
    chains = np.asarray(chains, dtype=np.uint8)
    if chains.ndim != 2 or chains.shape[1] != lattice.n_links:
        raise ValueError(
            f"chains have shape {chains.shape}, expected (M, {lattice.n_links})"
        )
    return (chains @ lattice.incidence.T) % 2


def compose(a: Chain, b: Chain) -> Chain:
    """Symmetric difference of two chains (bitwise XOR)."""
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.shape != b.shape:
        raise ValueError(f"cannot compose chains of shapes {a.shape} and {b.shape}")
    return a ^ b


def is_cycle(lattice: Lattice, chain: Chain) -> bool:
    return not syndrome_of(lattice, chain).any()


def homology_class(lattice: Lattice, cycle: Chain, cut_x: int = 0, cut_y: int = 0) -> HomologyClass:
    """Winding parities of a cycle.

    wx counts cycle links crossing the vertical cut between columns cut_x and
    cut_x+1; wy the horizontal cut between rows cut_y and cut_y+1.  For a
    cycle the result does not depend on where the cuts sit; the defaults give
    the canonical (0|1) cuts.
    """
    cycle = _check_chain(lattice, cycle)
    if not is_cycle(lattice, cycle):
        raise ValueError("not a cycle: chain has a non-empty syndrome")
    if cut_x == 0 and cut_y == 0:
        xs, ys = lattice.wx_cut_links, lattice.wy_cut_links
    else:
        xs = np.array([lattice.link_index(HORIZONTAL, cut_x, y) for y in range(lattice.L)])
        ys = np.array([lattice.link_index(VERTICAL, x, cut_y) for x in range(lattice.L)])
    wx = int(cycle[xs].sum() % 2)
    wy = int(cycle[ys].sum() % 2)
    return HomologyClass(wx, wy)


def logical_representative(lattice: Lattice, cls: HomologyClass) -> Chain:
    """Canonical cycle in a homology class: the row-0 horizontal loop for
    (1,0), the column-0 vertical loop for (0,1), their XOR for (1,1)."""
    chain = empty_chain(lattice)
    if cls.wx:
        for x in range(lattice.L):
            chain[lattice.link_index(HORIZONTAL, x, 0)] ^= 1
    if cls.wy:
        for y in range(lattice.L):
            chain[lattice.link_index(VERTICAL, 0, y)] ^= 1
    return chain


def plaquette_boundary(lattice: Lattice, x: int, y: int) -> Chain:
    """The four links bounding the plaquette with lower-left corner (x, y)."""
    return chain_from_links(
        lattice,
        [
            (HORIZONTAL, x, y),
            (HORIZONTAL, x, y + 1),
            (VERTICAL, x, y),
            (VERTICAL, x + 1, y),
        ],
    )
