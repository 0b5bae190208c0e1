"""Contrastive-divergence training of the machine and hyper-parameter search.

The gradient estimator runs, for every minibatch sample, a kappa-step
unclamped Gibbs chain started at the data point, and returns the difference
of correlation statistics between the data and the chain end.  Hidden-unit
statistics use the exact activation probabilities rather than sampled bits
(lower variance); error and syndrome statistics at the chain end use the
sampled bits.  The returned direction is the ascent direction of the mean
data log-likelihood, so the update rule is params + eta * grad.

An exact gradient (full enumeration of the visible state space) is provided
for small instances as an oracle.
"""

from __future__ import annotations

import csv
import itertools
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

from .lattice import TRIVIAL, Lattice
from .noise import Dataset
from .rbm import RbmParams, effective_energy_batch, enumerate_bits, hidden_field
from .seeds import NS_GRID, NS_TRAIN, derive_seed, substream

TRAIN_LOG_COLUMNS = [
    "epoch",
    "mean_effective_energy",
    "grad_norm_U",
    "grad_norm_W",
    "grad_norm_b",
    "grad_norm_c",
    "grad_norm_d",
    "wall_time_s",
]

# Exact gradient enumerates all 2^(n_e + n_s) visible states.
ORACLE_MAX_VISIBLE = 20

MONITOR_SUBSAMPLE = 1024


@dataclass(frozen=True)
class Hyperparams:
    """Everything that dictates a training run besides data and seed."""

    eta: float = 0.05          # learning rate
    batch_size: int = 100      # minibatch size
    init_width: float = 0.1    # width of the uniform weight init
    cd_k: int = 1              # Gibbs steps in the gradient estimator
    l2: float = 0.0            # weight-decay coefficient (U, W only)
    n_h: int = 32              # hidden units
    epochs: int = 500
    n_eq: int = 100            # equilibration sweeps used when decoding

    def __post_init__(self) -> None:
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.init_width < 0:
            raise ValueError(f"init_width must be >= 0, got {self.init_width}")
        if self.cd_k < 1:
            raise ValueError(f"cd_k must be >= 1, got {self.cd_k}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")
        if self.n_h < 1:
            raise ValueError(f"n_h must be >= 1, got {self.n_h}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.n_eq < 0:
            raise ValueError(f"n_eq must be >= 0, got {self.n_eq}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ValueError(f"unknown hyper-parameter keys: {sorted(extra)}")
        return cls(**known)


@dataclass
class GradientSet:
    """Gradient with the same shapes as the corresponding parameters."""

    dU: np.ndarray
    dW: np.ndarray
    db: np.ndarray
    dc: np.ndarray
    dd: np.ndarray

    def norms(self) -> dict[str, float]:
        return {
            name: float(np.linalg.norm(getattr(self, name)))
            for name in ("dU", "dW", "db", "dc", "dd")
        }


def init_params(lattice: Lattice, hyper: Hyperparams, rng: np.random.Generator) -> RbmParams:
    """Uniform weights on [-w/2, +w/2]; biases start at zero."""
    w = hyper.init_width
    n_e, n_s, n_h = lattice.n_links, lattice.n_vertices, hyper.n_h
    return RbmParams(
        U=rng.uniform(-w / 2, w / 2, size=(n_h, n_s)),
        W=rng.uniform(-w / 2, w / 2, size=(n_h, n_e)),
        b=np.zeros(n_e),
        c=np.zeros(n_h),
        d=np.zeros(n_s),
    )


def _batch_stats(params: RbmParams, E: np.ndarray, S: np.ndarray):
    """Mean correlation statistics of a batch, with hidden probabilities."""
    B = E.shape[0]
    PH = expit(hidden_field(params, E, S))
    return (
        PH.T @ S / B,
        PH.T @ E / B,
        E.mean(axis=0),
        PH.mean(axis=0),
        S.mean(axis=0),
    )


def cd_k_gradient(
    params: RbmParams,
    minibatch: tuple[np.ndarray, np.ndarray],
    k: int,
    rng: np.random.Generator,
) -> GradientSet:
    """CD_k estimate of the log-likelihood gradient on one minibatch.

    minibatch is a pair (errors, syndromes) of row-aligned (B, n_e) and
    (B, n_s) bit arrays.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    E, S = minibatch
    E = np.atleast_2d(np.asarray(E, dtype=np.float64))
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    B = E.shape[0]
    if B == 0:
        raise ValueError("empty minibatch")
    if S.shape[0] != B:
        raise ValueError(f"minibatch rows disagree: {B} errors vs {S.shape[0]} syndromes")

    pos = _batch_stats(params, E, S)

    # kappa unclamped sweeps from the data points, one chain per row;
    # buffers are reused across sweeps to keep the tight loop allocation-free
    U, W, b, c, d = params.U, params.W, params.b, params.c, params.d
    Em, Sm = E.copy(), S.copy()
    H = np.empty((B, params.n_h))
    fh = np.empty((B, params.n_h))
    fe = np.empty((B, params.n_e))
    fs = np.empty((B, params.n_s))
    for _ in range(k):
        np.matmul(Sm, U.T, out=fh)
        fh += Em @ W.T
        fh += c
        expit(fh, out=fh)
        rng.random(out=H)
        np.less(H, fh, out=H)
        np.matmul(H, W, out=fe)
        fe += b
        expit(fe, out=fe)
        rng.random(out=Em)
        np.less(Em, fe, out=Em)
        np.matmul(H, U, out=fs)
        fs += d
        expit(fs, out=fs)
        rng.random(out=Sm)
        np.less(Sm, fs, out=Sm)
    neg = _batch_stats(params, Em, Sm)

    return GradientSet(*(p - n for p, n in zip(pos, neg)))


def exact_kl_gradient(
    params: RbmParams,
    errors: np.ndarray,
    syndromes: np.ndarray,
    max_visible: int = ORACLE_MAX_VISIBLE,
) -> GradientSet:
    """Exact gradient of the mean data log-likelihood (small instances only).

    The model expectation is computed by enumerating every visible state, so
    this equals the descent direction of the KL divergence up to its constant
    entropy term.
    """
    n_vis = params.n_e + params.n_s
    if n_vis > max_visible:
        raise ValueError(f"oracle size exceeded: n_e + n_s = {n_vis} > {max_visible}")
    E = np.atleast_2d(np.asarray(errors, dtype=np.float64))
    S = np.atleast_2d(np.asarray(syndromes, dtype=np.float64))
    if E.shape[0] == 0:
        raise ValueError("empty dataset")
    if E.shape[0] != S.shape[0]:
        raise ValueError("errors and syndromes row counts disagree")

    pos = _batch_stats(params, E, S)

    # model expectation over the full visible state space
    EV = np.repeat(enumerate_bits(params.n_e), 1 << params.n_s, axis=0).astype(np.float64)
    SV = np.tile(enumerate_bits(params.n_s), (1 << params.n_e, 1)).astype(np.float64)
    log_w = -effective_energy_batch(params, EV, SV)
    log_w -= log_w.max()
    w = np.exp(log_w)
    w /= w.sum()
    PH = expit(hidden_field(params, EV, SV))
    neg = (
        PH.T @ (w[:, None] * SV),
        PH.T @ (w[:, None] * EV),
        w @ EV,
        w @ PH,
        w @ SV,
    )
    return GradientSet(*(p - n for p, n in zip(pos, neg)))


def sgd_step(params: RbmParams, grad: GradientSet, hyper: Hyperparams) -> RbmParams:
    """Ascent step with weight decay on the weight matrices only."""
    if grad.dU.shape != params.U.shape or grad.dW.shape != params.W.shape:
        raise ValueError("gradient shapes do not match parameters")
    eta, l2 = hyper.eta, hyper.l2
    return RbmParams(
        U=params.U + eta * grad.dU - eta * l2 * params.U,
        W=params.W + eta * grad.dW - eta * l2 * params.W,
        b=params.b + eta * grad.db,
        c=params.c + eta * grad.dc,
        d=params.d + eta * grad.dd,
    )


def train(
    dataset: Dataset,
    hyper: Hyperparams,
    seed: int,
    log_path=None,
) -> RbmParams:
    """Minibatch SGD with CD_k gradients over the dataset.

    Each epoch reshuffles the sample order deterministically from the seed and
    keeps the final short minibatch.  The result is a pure function of
    (dataset, hyper, seed).  If log_path is given, one CSV record per epoch is
    appended (see TRAIN_LOG_COLUMNS).
    """
    lattice = dataset.lattice
    errors = dataset.chains.astype(np.float64)
    syndromes = dataset.syndromes().astype(np.float64)
    M = dataset.M

    params = init_params(lattice, hyper, substream(seed, NS_TRAIN, 0))
    shuffle_rng = substream(seed, NS_TRAIN, 1)
    chain_rng = substream(seed, NS_TRAIN, 2)

    n_mon = min(MONITOR_SUBSAMPLE, M)
    mon_E, mon_S = errors[:n_mon], syndromes[:n_mon]

    log_rows = []
    t0 = time.perf_counter()
    for epoch in range(hyper.epochs):
        order = shuffle_rng.permutation(M)
        norm_sums = np.zeros(5)
        n_batches = 0
        for start in range(0, M, hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            grad = cd_k_gradient(params, (errors[idx], syndromes[idx]), hyper.cd_k, chain_rng)
            params = sgd_step(params, grad, hyper)
            norm_sums += (
                np.linalg.norm(grad.dU),
                np.linalg.norm(grad.dW),
                np.linalg.norm(grad.db),
                np.linalg.norm(grad.dc),
                np.linalg.norm(grad.dd),
            )
            n_batches += 1
        mean_norms = norm_sums / n_batches
        log_rows.append(
            {
                "epoch": epoch,
                "mean_effective_energy": float(
                    effective_energy_batch(params, mon_E, mon_S).mean()
                ),
                "grad_norm_U": mean_norms[0],
                "grad_norm_W": mean_norms[1],
                "grad_norm_b": mean_norms[2],
                "grad_norm_c": mean_norms[3],
                "grad_norm_d": mean_norms[4],
                "wall_time_s": time.perf_counter() - t0,
            }
        )

    if log_path is not None:
        _append_log(log_path, log_rows)
    return params


def _append_log(path, rows) -> None:
    new_file = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=TRAIN_LOG_COLUMNS)
        if new_file:
            writer.writeheader()
        for row in rows:
            writer.writerow(row)


def default_grid(lattice: Lattice, epochs: int = 500, n_eq: int = 100) -> list[Hyperparams]:
    """Default hyper-parameter grid, bracketing common settings at this size.

    Axes (slowest to fastest): n_h in {2L^2, 4L^2, 8L^2}; eta in
    {0.01, 0.05, 0.1}; cd_k in {1, 10}; l2 in {0, 1e-4}; batch_size in
    {50, 100}; init_width in {0.01, 0.1}.
    """
    n = lattice.n_vertices
    points = []
    for n_h, eta, cd_k, l2, batch_size, init_width in itertools.product(
        (2 * n, 4 * n, 8 * n),
        (0.01, 0.05, 0.1),
        (1, 10),
        (0.0, 1e-4),
        (50, 100),
        (0.01, 0.1),
    ):
        points.append(
            Hyperparams(
                eta=eta,
                batch_size=batch_size,
                init_width=init_width,
                cd_k=cd_k,
                l2=l2,
                n_h=n_h,
                epochs=epochs,
                n_eq=n_eq,
            )
        )
    return points


def _score_point(args):
    (index, dataset, hyper, validation_chains, seed, max_sweeps) = args
    from .decoders import evaluate_recovery, neural_decode
    from .lattice import syndrome_of

    t0 = time.perf_counter()
    params = train(dataset, hyper, derive_seed(seed, NS_GRID, index, 0))
    lattice = dataset.lattice
    n_fail = 0
    n_timeout = 0
    for k, chain in enumerate(validation_chains):
        outcome = neural_decode(
            params,
            syndrome_of(lattice, chain),
            n_eq=hyper.n_eq,
            max_sweeps=max_sweeps,
            rng=substream(seed, NS_GRID, index, 1, k),
        )
        if outcome.timed_out:
            n_timeout += 1
            n_fail += 1
        elif evaluate_recovery(lattice, chain, outcome.recovery) != TRIVIAL:
            n_fail += 1
    p_fail = n_fail / len(validation_chains)
    return index, p_fail, n_timeout, time.perf_counter() - t0, params


def grid_search(
    dataset: Dataset,
    grid: list[Hyperparams],
    validation_chains: np.ndarray,
    seed: int,
    max_sweeps: int = 1000,
    n_jobs: int = 1,
    report_path=None,
) -> tuple[Hyperparams, RbmParams]:
    """Train one model per grid point and keep the one with the lowest
    logical failure probability over the validation chains.

    Timeouts count as failures.  Ties break toward the lower grid index.
    Results are independent of n_jobs: every point trains and is scored from
    seeds derived from (seed, point index).
    """
    if not grid:
        raise ValueError("empty hyper-parameter grid")
    validation_chains = np.atleast_2d(np.asarray(validation_chains, dtype=np.uint8))
    if validation_chains.shape[1] != dataset.lattice.n_links:
        raise ValueError("validation chains do not match the dataset lattice")

    jobs = [
        (i, dataset, hyper, validation_chains, seed, max_sweeps)
        for i, hyper in enumerate(grid)
    ]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_score_point, jobs))
    else:
        results = [_score_point(job) for job in jobs]
    results.sort(key=lambda r: r[0])

    if report_path is not None:
        _write_grid_report(report_path, grid, results, len(validation_chains))

    scores = [r[1] for r in results]
    best = int(np.argmin(scores))
    return grid[best], results[best][4]


def _write_grid_report(path, grid, results, n_validation) -> None:
    fields = ["index", *Hyperparams.__dataclass_fields__, "n_validation", "p_fail", "n_timeout", "wall_time_s"]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for index, p_fail, n_timeout, wall, _params in results:
            row = {"index": index, "n_validation": n_validation, "p_fail": p_fail,
                   "n_timeout": n_timeout, "wall_time_s": wall}
            row.update(grid[index].to_dict())
            writer.writerow(row)
