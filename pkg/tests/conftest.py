import numpy as np
import pytest

from toricnet.lattice import Lattice
from toricnet.rbm import MachineState, RbmParams, energy, enumerate_bits


@pytest.fixture
def lat4():
    return Lattice(4)


@pytest.fixture
def lat2():
    return Lattice(2)


def random_chain(lattice, rng, p=0.5):
    return (rng.random(lattice.n_links) < p).astype(np.uint8)


def random_cycle(lattice, rng):
    """Random cycle: XOR of random plaquette boundaries and logical loops."""
    from toricnet.lattice import (
        HomologyClass,
        compose,
        empty_chain,
        logical_representative,
        plaquette_boundary,
    )

    cycle = empty_chain(lattice)
    for y in range(lattice.L):
        for x in range(lattice.L):
            if rng.random() < 0.5:
                cycle = compose(cycle, plaquette_boundary(lattice, x, y))
    cls = HomologyClass(int(rng.integers(2)), int(rng.integers(2)))
    return compose(cycle, logical_representative(lattice, cls))


def tiny_params(rng, n_h=3, n_e=4, n_s=2, scale=1.0):
    """Random small machine for enumeration oracles."""
    return RbmParams(
        U=rng.uniform(-scale, scale, size=(n_h, n_s)),
        W=rng.uniform(-scale, scale, size=(n_h, n_e)),
        b=rng.uniform(-scale, scale, size=n_e),
        c=rng.uniform(-scale, scale, size=n_h),
        d=rng.uniform(-scale, scale, size=n_s),
    )


def exact_joint_table(params):
    """Exact joint p(e, S, h) from the raw energy, as a flat probability array.

    State index packs bits as (e, S, h) with e fastest; the companion arrays
    of the visible/hidden patterns are returned alongside.  Built on `energy`
    alone so it can serve as the independent oracle for everything else.
    """
    E = enumerate_bits(params.n_e)
    S = enumerate_bits(params.n_s)
    H = enumerate_bits(params.n_h)
    probs = np.empty((len(E), len(S), len(H)))
    for i, e in enumerate(E):
        for j, s in enumerate(S):
            for k, h in enumerate(H):
                probs[i, j, k] = -energy(params, MachineState(e=e, S=s, h=h))
    probs -= probs.max()
    np.exp(probs, out=probs)
    probs /= probs.sum()
    return probs, E, S, H
