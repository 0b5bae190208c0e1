"""Failure-probability estimation, homology histograms, decoder comparison.

Reports are deterministic given their seed: test chain k of a run is drawn
from the substream (seed, eval namespace, p, k) — a namespace disjoint from
dataset generation, so test sets never overlap training data — and decode k
uses its own substream.  Per-chain work is independent and could run in
parallel without changing any count.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from .decoders import (
    DEFAULT_MAX_SWEEPS,
    DEFAULT_N_EQ,
    DecodeOutcome,
    evaluate_recovery,
    lattice_for_params,
    mwpm_decode,
    neural_decode,
)
from .lattice import (
    CLASS_NAMES,
    Chain,
    HomologyClass,
    Lattice,
    Syndrome,
    class_index,
    compose,
    logical_representative,
    syndrome_of,
)
from .noise import ErrorModel, sample_chain
from .rbm import RbmParams, load_model
from .seeds import NS_DECODE, NS_EVAL, substream

REPORT_COLUMNS = [
    "decoder",
    "L",
    "p_err",
    "M",
    "n_fail",
    "p_fail",
    "n_h0",
    "n_z1",
    "n_z2",
    "n_z1z2",
    "n_timeout",
    "seed",
    "wall_time_s",
]

DEFAULT_P_GRID = [round(0.05 + 0.01 * i, 2) for i in range(11)]
DEFAULT_TEST_M = 10_000


@dataclass
class EvalReport:
    """Outcome counts for one (decoder, L, p_err) benchmark run.

    class_counts bins the cycles e XOR r over CLASS_ORDER.  Timed-out (or
    per-chain rejected) decodes are not binned: they are failures tallied in
    n_timeout, so sum(class_counts) + n_timeout = M and
    n_fail = M - class_counts[0] always holds.
    """

    decoder: str
    L: int
    p_err: float
    M: int
    n_fail: int
    p_fail: float
    class_counts: tuple[int, int, int, int]
    n_timeout: int
    seed: int
    wall_time_s: float

    def to_row(self) -> dict:
        row = {
            "decoder": self.decoder,
            "L": self.L,
            "p_err": self.p_err,
            "M": self.M,
            "n_fail": self.n_fail,
            "p_fail": self.p_fail,
            "n_timeout": self.n_timeout,
            "seed": self.seed,
            "wall_time_s": round(self.wall_time_s, 3),
        }
        for name, count in zip(CLASS_NAMES, self.class_counts):
            row[f"n_{name}"] = count
        return row


class NeuralDecoder:
    """Clamped-Gibbs sampling decoder around a trained model."""

    name = "neural"

    def __init__(self, params: RbmParams, n_eq: int = DEFAULT_N_EQ,
                 max_sweeps: int = DEFAULT_MAX_SWEEPS):
        self.params = params
        self.n_eq = n_eq
        self.max_sweeps = max_sweeps

    def decode(self, lattice: Lattice, e0: Chain, syndrome: Syndrome,
               rng: np.random.Generator) -> DecodeOutcome:
        return neural_decode(
            self.params, syndrome, n_eq=self.n_eq, max_sweeps=self.max_sweeps, rng=rng
        )


class MwpmDecoder:
    """Exact minimum-weight perfect-matching decoder."""

    name = "mwpm"

    def decode(self, lattice, e0, syndrome, rng) -> DecodeOutcome:
        return DecodeOutcome(recovery=mwpm_decode(lattice, syndrome),
                             sweeps_used=0, timed_out=False)


class IdentityDecoder:
    """Calibration only: returns the true error chain (p_fail must be 0)."""

    name = "identity"

    def decode(self, lattice, e0, syndrome, rng) -> DecodeOutcome:
        return DecodeOutcome(recovery=e0.copy(), sweeps_used=0, timed_out=False)


class LogicalFlipDecoder:
    """Calibration only: true error plus a logical loop (p_fail must be 1)."""

    name = "logical_flip"

    def decode(self, lattice, e0, syndrome, rng) -> DecodeOutcome:
        flip = compose(e0, logical_representative(lattice, HomologyClass(1, 0)))
        return DecodeOutcome(recovery=flip, sweeps_used=0, timed_out=False)


def estimate_pfail(
    lattice: Lattice,
    decoder,
    p_err: float,
    M: int,
    seed: int,
) -> EvalReport:
    """Decode M fresh test chains at p_err and report failure statistics.

    A decode fails when the combined cycle has non-trivial homology, or when
    the decoder times out or rejects the instance (tallied in n_timeout).
    """
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    model = ErrorModel(p_err)
    pmicro = int(round(p_err * 1_000_000))
    counts = np.zeros(4, dtype=np.int64)
    n_timeout = 0
    t0 = time.perf_counter()
    for k in range(M):
        e0 = sample_chain(lattice, model, substream(seed, NS_EVAL, pmicro, k))
        syndrome = syndrome_of(lattice, e0)
        try:
            outcome = decoder.decode(
                lattice, e0, syndrome, substream(seed, NS_DECODE, pmicro, k)
            )
        except ValueError:
            n_timeout += 1
            continue
        if outcome.timed_out:
            n_timeout += 1
            continue
        cls = evaluate_recovery(lattice, e0, outcome.recovery)
        counts[class_index(cls)] += 1
    wall = time.perf_counter() - t0
    n_fail = M - int(counts[0])
    return EvalReport(
        decoder=decoder.name,
        L=lattice.L,
        p_err=p_err,
        M=M,
        n_fail=n_fail,
        p_fail=n_fail / M,
        class_counts=tuple(int(c) for c in counts),
        n_timeout=n_timeout,
        seed=seed,
        wall_time_s=wall,
    )


def homology_histogram(
    lattice: Lattice,
    params: RbmParams,
    p_err: float,
    M: int,
    seed: int,
    n_eq: int = DEFAULT_N_EQ,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> EvalReport:
    """Neural-decoder benchmark emphasizing the homology class histogram."""
    if lattice_for_params(params).L != lattice.L:
        raise ValueError(
            f"model is for L={lattice_for_params(params).L}, requested L={lattice.L}"
        )
    decoder = NeuralDecoder(params, n_eq=n_eq, max_sweeps=max_sweeps)
    return estimate_pfail(lattice, decoder, p_err, M, seed)


def _resolve_model_path(config: dict, L: int, p_err: float):
    models = config.get("models", {})
    for key in (f"{p_err:.2f}", str(p_err)):
        if key in models:
            return models[key]
    pattern = config.get("model_pattern")
    if pattern:
        return pattern.format(L=L, p=f"{p_err:.2f}")
    return None


def compare_decoders(config: dict) -> list[dict]:
    """Benchmark the configured decoders over a probability grid.

    Config keys: L (required); p_grid (default 0.05..0.15 step 0.01); M
    (default 10^4); seed (default 0); decoders (default ["mwpm", "neural"]);
    models: {"0.05": path, ...} and/or model_pattern with {L}/{p}
    placeholders; n_eq; max_sweeps.

    Returns one row dict per (decoder, p_err), sorted.  A missing or
    unreadable model yields a row whose "error" field says why; the run
    continues.
    """
    lattice = Lattice(int(config["L"]))
    p_grid = [float(p) for p in config.get("p_grid", DEFAULT_P_GRID)]
    M = int(config.get("M", DEFAULT_TEST_M))
    seed = int(config.get("seed", 0))
    decoder_names = list(config.get("decoders", ["mwpm", "neural"]))
    n_eq = int(config.get("n_eq", DEFAULT_N_EQ))
    max_sweeps = int(config.get("max_sweeps", DEFAULT_MAX_SWEEPS))

    rows = []
    for name in sorted(decoder_names):
        for p_err in sorted(p_grid):
            base = {"decoder": name, "L": lattice.L, "p_err": p_err, "M": M, "seed": seed}
            if name == "mwpm":
                decoder = MwpmDecoder()
            elif name == "neural":
                path = _resolve_model_path(config, lattice.L, p_err)
                if path is None:
                    rows.append({**base, "error": f"no model configured for p={p_err:.2f}"})
                    continue
                try:
                    params, model_lattice, _model_p = load_model(path)
                except Exception as exc:
                    rows.append({**base, "error": f"cannot load model {path}: {exc}"})
                    continue
                if model_lattice.L != lattice.L:
                    rows.append({**base, "error": f"model {path} is for L={model_lattice.L}"})
                    continue
                decoder = NeuralDecoder(params, n_eq=n_eq, max_sweeps=max_sweeps)
            else:
                rows.append({**base, "error": f"unknown decoder {name!r}"})
                continue
            report = estimate_pfail(lattice, decoder, p_err, M, seed)
            rows.append(report.to_row())
    return rows


def write_report_csv(rows: list[dict], path) -> None:
    """Write benchmark rows with the fixed report schema.

    Rows carrying an "error" field keep their identifying cells and leave the
    metric cells empty; the error text itself goes to the caller (the CLI
    prints it to stderr), not into the CSV.
    """
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow([row.get(col, "") for col in REPORT_COLUMNS])
