"""Tri-layer restricted Boltzmann machine over (error, syndrome, hidden) units.

All units are binary in {0, 1}.  The machine assigns a configuration the
energy

    E = - h.U.S - h.W.e - b.e - c.h - d.S

and the Boltzmann probability exp(-E)/Z.  There are no intra-layer
connections, so summing out the hidden layer is exact (effective_energy) and
all layer conditionals factorize into independent logistic units.  Hidden
activation uses the standard logistic sigma(x) = 1/(1+exp(-x)) of the field
x_i = c_i + sum_k U_ik S_k + sum_j W_ij e_j, the form consistent with the
energy above.

Exact enumeration oracles (log partition function) are provided for small
instances and reject anything larger.

Model file format (little-endian):
    header:  magic "TNRB" | version u16 = 1 | L u16 | n_h u32 | p_err f64
    payload: U row-major f64, W row-major f64, then b, c, d as f64 arrays.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .fileio import FormatError, check_magic, read_exact, read_f64_array, write_f64_array
from .lattice import Lattice

MODEL_MAGIC = b"TNRB"
MODEL_VERSION = 1
_HEADER = struct.Struct("<HHId")  # after magic: version, L, n_h, p_err

# Exact oracles enumerate all 2^(n_e + n_s) visible states.
ORACLE_MAX_VISIBLE = 20


@dataclass(frozen=True)
class RbmParams:
    """Weights and biases of the machine.

    U couples hidden to syndrome units, W couples hidden to error units;
    b, c, d bias the error, hidden and syndrome layers.
    """

    U: np.ndarray  # (n_h, n_s)
    W: np.ndarray  # (n_h, n_e)
    b: np.ndarray  # (n_e,)
    c: np.ndarray  # (n_h,)
    d: np.ndarray  # (n_s,)

    def __post_init__(self) -> None:
        for name in ("U", "W", "b", "c", "d"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.U.ndim != 2 or self.W.ndim != 2:
            raise ValueError("U and W must be 2-D weight matrices")
        n_h, n_s = self.U.shape
        if self.W.shape[0] != n_h:
            raise ValueError(f"U has {n_h} hidden rows but W has {self.W.shape[0]}")
        if self.b.shape != (self.n_e,) or self.c.shape != (n_h,) or self.d.shape != (n_s,):
            raise ValueError("bias vector shapes do not match weight matrices")
        for name in ("U", "W", "b", "c", "d"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite entries in {name}")

    @property
    def n_h(self) -> int:
        return self.U.shape[0]

    @property
    def n_s(self) -> int:
        return self.U.shape[1]

    @property
    def n_e(self) -> int:
        return self.W.shape[1]


@dataclass
class MachineState:
    """One joint configuration of the three layers."""

    e: np.ndarray
    S: np.ndarray
    h: np.ndarray


def zeros_params(n_h: int, n_e: int, n_s: int) -> RbmParams:
    return RbmParams(
        U=np.zeros((n_h, n_s)),
        W=np.zeros((n_h, n_e)),
        b=np.zeros(n_e),
        c=np.zeros(n_h),
        d=np.zeros(n_s),
    )


def _check_vec(v, n: int, name: str) -> np.ndarray:
    v = np.asarray(v)
    if v.shape != (n,):
        raise ValueError(f"{name} has shape {v.shape}, expected ({n},)")
    return v.astype(np.float64, copy=False)


def energy(params: RbmParams, state: MachineState) -> float:
    """Joint energy of a full (e, S, h) configuration."""
    e = _check_vec(state.e, params.n_e, "e")
    S = _check_vec(state.S, params.n_s, "S")
    h = _check_vec(state.h, params.n_h, "h")
    return float(
        -h @ params.U @ S
        - h @ params.W @ e
        - params.b @ e
        - params.c @ h
        - params.d @ S
    )


def hidden_field(params: RbmParams, e, S) -> np.ndarray:
    """Input field to each hidden unit: c + U.S + W.e (batched over rows)."""
    e = np.asarray(e, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    if e.shape[-1] != params.n_e or S.shape[-1] != params.n_s:
        raise ValueError(
            f"visible shapes {e.shape}, {S.shape} do not match model "
            f"(n_e={params.n_e}, n_s={params.n_s})"
        )
    return params.c + S @ params.U.T + e @ params.W.T


def _softplus(x: np.ndarray) -> np.ndarray:
    # log(1 + exp(x)) without overflow for large |x|
    return np.logaddexp(0.0, x)


def effective_energy(params: RbmParams, e, S) -> float:
    """Free energy of a visible configuration after summing out hidden units:
    -b.e - d.S - sum_i softplus(c_i + (U.S)_i + (W.e)_i)."""
    e = _check_vec(e, params.n_e, "e")
    S = _check_vec(S, params.n_s, "S")
    return float(-params.b @ e - params.d @ S - _softplus(hidden_field(params, e, S)).sum())


def effective_energy_batch(params: RbmParams, E: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Row-wise effective_energy for (B, n_e) and (B, n_s) arrays."""
    E = np.asarray(E, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    return -E @ params.b - S @ params.d - _softplus(hidden_field(params, E, S)).sum(axis=-1)


def prob_h_given_vis(params: RbmParams, e, S) -> np.ndarray:
    """Activation probability of each hidden unit given the visible layers."""
    e = _check_vec(e, params.n_e, "e")
    S = _check_vec(S, params.n_s, "S")
    return expit(hidden_field(params, e, S))


def prob_e_given_h(params: RbmParams, h) -> np.ndarray:
    """Activation probability of each error unit given the hidden layer."""
    h = _check_vec(h, params.n_h, "h")
    return expit(params.b + h @ params.W)


def prob_s_given_h(params: RbmParams, h) -> np.ndarray:
    """Activation probability of each syndrome unit given the hidden layer."""
    h = _check_vec(h, params.n_h, "h")
    return expit(params.d + h @ params.U)


def gibbs_sweep(
    params: RbmParams,
    state: MachineState,
    clamp_syndrome: bool,
    rng: np.random.Generator,
) -> MachineState:
    """One block-Gibbs sweep: resample h, then e, then (unless clamped) S.

    With clamp_syndrome the syndrome layer is returned unchanged, so iterating
    the sweep samples the conditional distribution over (e, h) at fixed S.
    """
    h = (rng.random(params.n_h) < prob_h_given_vis(params, state.e, state.S)).astype(np.uint8)
    e = (rng.random(params.n_e) < prob_e_given_h(params, h)).astype(np.uint8)
    if clamp_syndrome:
        S = state.S
    else:
        S = (rng.random(params.n_s) < prob_s_given_h(params, h)).astype(np.uint8)
    return MachineState(e=e, S=S, h=h)


def enumerate_bits(n: int) -> np.ndarray:
    """(2^n, n) array of all bit patterns; pattern i has bit j = (i >> j) & 1."""
    if n < 0:
        raise ValueError("n must be non-negative")
    idx = np.arange(1 << n, dtype=np.uint32)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(np.uint8)


def exact_log_partition(params: RbmParams, max_visible: int = ORACLE_MAX_VISIBLE) -> float:
    """log Z by enumerating all visible states (small instances only)."""
    n_vis = params.n_e + params.n_s
    if n_vis > max_visible:
        raise ValueError(
            f"oracle size exceeded: n_e + n_s = {n_vis} > {max_visible}"
        )
    E_states = enumerate_bits(params.n_e)
    S_states = enumerate_bits(params.n_s)
    # Chunk over error patterns to bound the (chunk, 2^n_s, n_h) intermediate.
    chunk = max(1, (1 << 22) // max(1, (1 << params.n_s) * params.n_h))
    pieces = []
    for start in range(0, E_states.shape[0], chunk):
        E = E_states[start : start + chunk]
        field_ = (
            params.c
            + (S_states @ params.U.T)[None, :, :]
            + (E @ params.W.T)[:, None, :]
        )
        neg_eff = (
            (E @ params.b)[:, None]
            + (S_states @ params.d)[None, :]
            + _softplus(field_).sum(axis=-1)
        )
        pieces.append(logsumexp(neg_eff.ravel()))
    return float(logsumexp(np.array(pieces)))


def save_model(params: RbmParams, path, lattice: Lattice, p_err: float) -> None:
    """Write a trained model with its lattice size and training-regime tag."""
    if params.n_e != lattice.n_links or params.n_s != lattice.n_vertices:
        raise ValueError(
            f"model dims (n_e={params.n_e}, n_s={params.n_s}) do not match L={lattice.L}"
        )
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(_HEADER.pack(MODEL_VERSION, lattice.L, params.n_h, p_err))
        write_f64_array(f, params.U)
        write_f64_array(f, params.W)
        write_f64_array(f, params.b)
        write_f64_array(f, params.c)
        write_f64_array(f, params.d)


def load_model(path) -> tuple[RbmParams, Lattice, float]:
    """Read a model file; returns (params, lattice, training p_err)."""
    with open(path, "rb") as f:
        check_magic(f, MODEL_MAGIC)
        version, L, n_h, p_err = _HEADER.unpack(read_exact(f, _HEADER.size, "header"))
        if version != MODEL_VERSION:
            raise FormatError(f"unsupported model format version {version}")
        if L < 2 or n_h < 1:
            raise FormatError(f"corrupt header: L={L}, n_h={n_h}")
        lattice = Lattice(L)
        n_e, n_s = lattice.n_links, lattice.n_vertices
        params = RbmParams(
            U=read_f64_array(f, (n_h, n_s), "U"),
            W=read_f64_array(f, (n_h, n_e), "W"),
            b=read_f64_array(f, (n_e,), "b"),
            c=read_f64_array(f, (n_h,), "c"),
            d=read_f64_array(f, (n_s,), "d"),
        )
    return params, lattice, p_err
