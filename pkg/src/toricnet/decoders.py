"""Decoders: clamped-Gibbs neural decoding, its maximum-likelihood variant,
and an exact minimum-weight perfect-matching baseline.

The neural decoder clamps the syndrome layer of a trained machine, lets the
(error, hidden) layers equilibrate, and returns the first sampled error chain
whose syndrome reproduces the input.  The ML variant keeps sampling
compatible chains, bins them by homology class relative to the first one, and
returns a chain from the modal class.

The matching baseline pairs syndrome defects at minimum total torus Manhattan
distance via dynamic programming over defect subsets, then connects each pair
along a shortest wrap-around path.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .lattice import (
    CLASS_ORDER,
    Chain,
    HomologyClass,
    HORIZONTAL,
    Lattice,
    Syndrome,
    class_index,
    compose,
    empty_chain,
    homology_class,
    syndrome_of,
    VERTICAL,
)
from .rbm import RbmParams

logger = logging.getLogger(__name__)

DEFAULT_N_EQ = 100
DEFAULT_MAX_SWEEPS = 100_000

# Above this defect count the subset DP is rejected rather than approximated.
MAX_DEFECTS = 24


@dataclass
class DecodeOutcome:
    """Result of one decode call.

    If not timed out, the recovery chain reproduces the input syndrome.
    class_counts and reference are filled by ml_decode only: the histogram of
    collected chains over CLASS_ORDER, binned relative to the first collected
    chain (the reference).
    """

    recovery: Chain
    sweeps_used: int
    timed_out: bool
    class_counts: np.ndarray | None = None
    reference: Chain | None = field(default=None, repr=False)


def lattice_for_params(params: RbmParams) -> Lattice:
    """Recover the lattice from the visible layer sizes."""
    L = math.isqrt(params.n_s)
    if L * L != params.n_s or params.n_e != 2 * L * L:
        raise ValueError(
            f"model dims (n_e={params.n_e}, n_s={params.n_s}) do not describe a torus"
        )
    return Lattice(L)


class _ClampedSampler:
    """Gibbs sampling over (e, h) with the syndrome layer held fixed.

    Draw order per sweep matches gibbs_sweep with clamping: n_h uniforms for
    the hidden layer, then n_e uniforms for the error layer.
    """

    def __init__(self, params: RbmParams, lattice: Lattice, syndrome: Syndrome,
                 rng: np.random.Generator):
        self.params = params
        self.lattice = lattice
        self.rng = rng
        self.target = np.asarray(syndrome, dtype=np.uint8)
        # syndrome contribution to the hidden field is constant while clamped
        self.hidden_base = params.c + params.U @ self.target.astype(np.float64)
        # fair-coin initialization of the free layers
        self.e = (rng.random(params.n_e) < 0.5).astype(np.float64)
        self.h = (rng.random(params.n_h) < 0.5).astype(np.float64)

    def sweep(self) -> None:
        p = self.params
        ph = expit(self.hidden_base + p.W @ self.e)
        self.h = (self.rng.random(p.n_h) < ph).astype(np.float64)
        pe = expit(p.b + self.h @ p.W)
        self.e = (self.rng.random(p.n_e) < pe).astype(np.float64)

    def compatible(self) -> bool:
        synd = (self.lattice.incidence @ self.e.astype(np.uint8)) % 2
        return bool(np.array_equal(synd, self.target))

    def chain(self) -> Chain:
        return self.e.astype(np.uint8)


def _check_syndrome_dims(params: RbmParams, syndrome: Syndrome) -> None:
    syndrome = np.asarray(syndrome)
    if syndrome.shape != (params.n_s,):
        raise ValueError(
            f"syndrome has shape {syndrome.shape}, model expects ({params.n_s},)"
        )


def neural_decode(
    params: RbmParams,
    syndrome: Syndrome,
    *,
    n_eq: int = DEFAULT_N_EQ,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    rng: np.random.Generator,
) -> DecodeOutcome:
    """Sample a recovery chain compatible with the syndrome.

    Starts from fair-coin (e, h), clamps the syndrome layer, runs n_eq
    equilibration sweeps without checking, then returns the error state after
    the first subsequent sweep whose syndrome matches.  After max_sweeps
    checked sweeps the call gives up and reports a timeout.
    """
    _check_syndrome_dims(params, syndrome)
    lattice = lattice_for_params(params)
    sampler = _ClampedSampler(params, lattice, syndrome, rng)
    for _ in range(n_eq):
        sampler.sweep()
    for step in range(max_sweeps):
        sampler.sweep()
        if sampler.compatible():
            return DecodeOutcome(
                recovery=sampler.chain(),
                sweeps_used=n_eq + step + 1,
                timed_out=False,
            )
    return DecodeOutcome(
        recovery=sampler.chain(),
        sweeps_used=n_eq + max_sweeps,
        timed_out=True,
    )


def ml_decode(
    params: RbmParams,
    syndrome: Syndrome,
    n_samples: int,
    *,
    n_eq: int = DEFAULT_N_EQ,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    rng: np.random.Generator,
) -> DecodeOutcome:
    """Maximum-likelihood decoding by homology histogram.

    Collects n_samples compatible chains from one clamped chain (continuing
    to sweep between collections), bins each by the homology class of its
    cycle with the first collected chain, and returns the first collected
    chain from the modal class (ties toward the lower class index in
    CLASS_ORDER).  max_sweeps bounds the total checked sweeps; on timeout the
    partial histogram decides and the outcome is flagged.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    _check_syndrome_dims(params, syndrome)
    lattice = lattice_for_params(params)
    sampler = _ClampedSampler(params, lattice, syndrome, rng)
    for _ in range(n_eq):
        sampler.sweep()

    counts = np.zeros(4, dtype=np.int64)
    reference: Chain | None = None
    first_in_class: list[Chain | None] = [None, None, None, None]
    collected = 0
    sweeps = 0
    timed_out = True
    while sweeps < max_sweeps:
        sampler.sweep()
        sweeps += 1
        if not sampler.compatible():
            continue
        chain = sampler.chain()
        if reference is None:
            reference = chain
        cls = homology_class(lattice, compose(reference, chain))
        idx = class_index(cls)
        counts[idx] += 1
        if first_in_class[idx] is None:
            first_in_class[idx] = chain
        collected += 1
        if collected == n_samples:
            timed_out = False
            break

    if collected == 0:
        return DecodeOutcome(
            recovery=sampler.chain(),
            sweeps_used=n_eq + sweeps,
            timed_out=True,
            class_counts=counts,
        )
    if timed_out:
        logger.warning(
            "ml_decode timed out after %d sweeps with %d/%d chains collected; "
            "partial histogram %s",
            sweeps, collected, n_samples, counts.tolist(),
        )
    modal = int(np.argmax(counts))
    return DecodeOutcome(
        recovery=first_in_class[modal],
        sweeps_used=n_eq + sweeps,
        timed_out=timed_out,
        class_counts=counts,
        reference=reference,
    )


def torus_distance(u: tuple[int, int], v: tuple[int, int], L: int) -> int:
    """Manhattan distance between two vertices with periodic wrap-around."""
    dx = abs(u[0] - v[0])
    dy = abs(u[1] - v[1])
    return min(dx, L - dx) + min(dy, L - dy)


def _min_weight_pairing(coords: list[tuple[int, int]], L: int) -> list[tuple[int, int]]:
    """Exact minimum-weight perfect matching by subset DP.

    State is the bitmask of still-unmatched defects; the lowest unmatched
    index is always paired next.  Returns index pairs (i, j) with i < j.
    """
    n = len(coords)
    dist = [[torus_distance(coords[i], coords[j], L) for j in range(n)] for i in range(n)]
    full = (1 << n) - 1
    best: dict[int, int] = {0: 0}
    choice: dict[int, int] = {}

    def solve(mask: int) -> int:
        if mask in best:
            return best[mask]
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        best_cost = None
        best_j = -1
        j_bits = rest
        while j_bits:
            j = (j_bits & -j_bits).bit_length() - 1
            j_bits &= j_bits - 1
            cost = dist[i][j] + solve(rest & ~(1 << j))
            if best_cost is None or cost < best_cost:
                best_cost = cost
                best_j = j
        best[mask] = best_cost
        choice[mask] = best_j
        return best_cost

    solve(full)
    pairs = []
    mask = full
    while mask:
        i = (mask & -mask).bit_length() - 1
        j = choice[mask]
        pairs.append((i, j))
        mask &= ~((1 << i) | (1 << j))
    return pairs


def _pair_path(lattice: Lattice, u: tuple[int, int], v: tuple[int, int]) -> Chain:
    """Shortest wrap-aware path from u to v: x direction first, then y.

    Equal-length wrap choices go in the positive direction.
    """
    L = lattice.L
    chain = empty_chain(lattice)
    ux, uy = u
    vx, vy = v

    fwd = (vx - ux) % L
    back = (ux - vx) % L
    if fwd <= back:
        for t in range(fwd):
            chain[lattice.link_index(HORIZONTAL, ux + t, uy)] ^= 1
    else:
        for t in range(back):
            chain[lattice.link_index(HORIZONTAL, ux - 1 - t, uy)] ^= 1

    fwd = (vy - uy) % L
    back = (uy - vy) % L
    if fwd <= back:
        for t in range(fwd):
            chain[lattice.link_index(VERTICAL, vx, uy + t)] ^= 1
    else:
        for t in range(back):
            chain[lattice.link_index(VERTICAL, vx, uy - 1 - t)] ^= 1
    return chain


def mwpm_decode(lattice: Lattice, syndrome: Syndrome) -> Chain:
    """Recovery chain from exact minimum-weight perfect matching of defects."""
    syndrome = np.asarray(syndrome)
    if syndrome.shape != (lattice.n_vertices,):
        raise ValueError(
            f"syndrome has shape {syndrome.shape}, lattice expects ({lattice.n_vertices},)"
        )
    defects = np.flatnonzero(syndrome)
    if len(defects) % 2:
        raise ValueError(f"invalid syndrome: odd defect count {len(defects)}")
    if len(defects) > MAX_DEFECTS:
        raise ValueError(
            f"instance too large: {len(defects)} defects exceeds the {MAX_DEFECTS}-defect cap"
        )
    chain = empty_chain(lattice)
    if len(defects) == 0:
        return chain
    coords = [lattice.vertex_coords(int(i)) for i in defects]
    for i, j in _min_weight_pairing(coords, lattice.L):
        chain = compose(chain, _pair_path(lattice, coords[i], coords[j]))
    return chain


def matching_weight(lattice: Lattice, syndrome: Syndrome) -> int:
    """Total torus distance of the minimum-weight defect pairing."""
    syndrome = np.asarray(syndrome)
    defects = np.flatnonzero(syndrome)
    if len(defects) % 2:
        raise ValueError(f"invalid syndrome: odd defect count {len(defects)}")
    if len(defects) > MAX_DEFECTS:
        raise ValueError(
            f"instance too large: {len(defects)} defects exceeds the {MAX_DEFECTS}-defect cap"
        )
    if len(defects) == 0:
        return 0
    coords = [lattice.vertex_coords(int(i)) for i in defects]
    pairs = _min_weight_pairing(coords, lattice.L)
    return sum(torus_distance(coords[i], coords[j], lattice.L) for i, j in pairs)


def evaluate_recovery(lattice: Lattice, e0: Chain, r: Chain) -> HomologyClass:
    """Homology class of the combined cycle e0 XOR r.

    The trivial class means the recovery succeeded; any other names the
    logical operation the recovery applied.
    """
    if not np.array_equal(syndrome_of(lattice, e0), syndrome_of(lattice, r)):
        raise ValueError("syndrome mismatch: recovery does not reproduce the error syndrome")
    return homology_class(lattice, compose(e0, r))
