"""Command-line interface.

Subcommands cover the full experiment pipeline: generate datasets, train a
model (or grid-search hyper-parameters), benchmark decoders, and emit report
CSVs.  A JSON config file can hold any option; every flag overrides its
config key.

Exit codes: 0 success, 1 usage error, 2 I/O or file-format error,
3 precondition violation.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys

from .bench import (
    MwpmDecoder,
    NeuralDecoder,
    compare_decoders,
    estimate_pfail,
    homology_histogram,
    write_report_csv,
)
from .decoders import DEFAULT_MAX_SWEEPS, DEFAULT_N_EQ
from .fileio import FormatError
from .lattice import CLASS_NAMES, Lattice
from .noise import ErrorModel, generate_dataset, load_dataset, save_dataset
from .rbm import load_model, save_model
from .seeds import NS_VALID, derive_seed
from .training import Hyperparams, default_grid, grid_search, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_PRECONDITION = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as f:
            config = json.load(f)
    except json.JSONDecodeError as exc:
        raise FormatError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise FormatError(f"config {path} must hold a JSON object")
    return config


def _merged(config: dict, args, keys) -> dict:
    """Config values for the given keys, with set CLI flags taking precedence."""
    out = {k: config[k] for k in keys if k in config}
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


HYPER_KEYS = list(Hyperparams.__dataclass_fields__)


def _add_hyper_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eta", type=float, help="learning rate")
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--init-width", dest="init_width", type=float)
    p.add_argument("--cd-k", dest="cd_k", type=int)
    p.add_argument("--l2", type=float)
    p.add_argument("--n-h", dest="n_h", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--n-eq", dest="n_eq", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="toricnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="sample an error-chain dataset")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="JSON file of hyper-parameters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="append per-epoch training log CSV here")
    _add_hyper_flags(p)

    p = sub.add_parser("grid", help="hyper-parameter grid search")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="JSON config with a 'grid' object of axis lists")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="path for the winning model")
    p.add_argument("--report", help="per-point score CSV")
    p.add_argument("--val-chains", dest="val_chains", type=int)
    p.add_argument("--max-sweeps", dest="max_sweeps", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--epochs", type=int)
    p.add_argument("--n-eq", dest="n_eq", type=int)

    p = sub.add_parser("eval", help="benchmark one decoder")
    p.add_argument("--decoder", choices=["neural", "mwpm"], required=True)
    p.add_argument("--model")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--n-eq", dest="n_eq", type=int, default=DEFAULT_N_EQ)
    p.add_argument("--max-sweeps", dest="max_sweeps", type=int, default=DEFAULT_MAX_SWEEPS)

    p = sub.add_parser("compare", help="benchmark decoders over a probability grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--L", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("hist", help="homology histogram of the neural decoder")
    p.add_argument("--model", required=True)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--n-eq", dest="n_eq", type=int, default=DEFAULT_N_EQ)
    p.add_argument("--max-sweeps", dest="max_sweeps", type=int, default=DEFAULT_MAX_SWEEPS)

    return parser


def _cmd_gen(args) -> int:
    lattice = Lattice(args.L)
    dataset = generate_dataset(lattice, ErrorModel(args.p), args.M, args.seed)
    save_dataset(dataset, args.out)
    print(f"wrote {dataset.M} chains (L={lattice.L}, p_err={args.p}) to {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    config = _load_config(args.config)
    hyper = Hyperparams.from_dict(_merged(config, args, HYPER_KEYS))
    params = train(dataset, hyper, args.seed, log_path=args.log)
    save_model(params, args.out, dataset.lattice, dataset.p_err)
    print(f"trained n_h={hyper.n_h} for {hyper.epochs} epochs; model saved to {args.out}")
    return EXIT_OK


def _grid_from_config(config: dict, lattice: Lattice, args) -> list[Hyperparams]:
    epochs = args.epochs if args.epochs is not None else int(config.get("epochs", 500))
    n_eq = args.n_eq if args.n_eq is not None else int(config.get("n_eq", 100))
    axes = config.get("grid")
    if not axes:
        return default_grid(lattice, epochs=epochs, n_eq=n_eq)
    base = {"epochs": epochs, "n_eq": n_eq}
    names = list(axes)
    points = []
    for values in itertools.product(*(axes[n] for n in names)):
        points.append(Hyperparams.from_dict({**base, **dict(zip(names, values))}))
    return points


def _cmd_grid(args) -> int:
    dataset = load_dataset(args.data)
    config = _load_config(args.config)
    grid = _grid_from_config(config, dataset.lattice, args)
    n_val = args.val_chains if args.val_chains is not None else int(config.get("val_chains", 2000))
    max_sweeps = args.max_sweeps if args.max_sweeps is not None else int(config.get("max_sweeps", 1000))
    validation = generate_dataset(
        dataset.lattice,
        ErrorModel(dataset.p_err),
        n_val,
        derive_seed(args.seed, NS_VALID),
    ).chains
    best_hyper, best_params = grid_search(
        dataset, grid, validation, args.seed,
        max_sweeps=max_sweeps, n_jobs=args.jobs, report_path=args.report,
    )
    save_model(best_params, args.out, dataset.lattice, dataset.p_err)
    print(f"searched {len(grid)} points; best {best_hyper.to_dict()}; model saved to {args.out}")
    return EXIT_OK


def _load_model_checked(path, L: int):
    params, model_lattice, model_p = load_model(path)
    if model_lattice.L != L:
        raise ValueError(f"model {path} is for L={model_lattice.L}, requested L={L}")
    return params


def _print_report(report) -> None:
    bins = ", ".join(f"{n}={c}" for n, c in zip(CLASS_NAMES, report.class_counts))
    print(
        f"{report.decoder}: L={report.L} p_err={report.p_err} M={report.M} "
        f"p_fail={report.p_fail:.4f} ({bins}, timeouts={report.n_timeout})"
    )


def _cmd_eval(args) -> int:
    lattice = Lattice(args.L)
    if args.decoder == "neural":
        if not args.model:
            raise UsageError("--decoder neural requires --model")
        params = _load_model_checked(args.model, args.L)
        decoder = NeuralDecoder(params, n_eq=args.n_eq, max_sweeps=args.max_sweeps)
    else:
        decoder = MwpmDecoder()
    report = estimate_pfail(lattice, decoder, args.p, args.M, args.seed)
    write_report_csv([report.to_row()], args.out)
    _print_report(report)
    return EXIT_OK


def _cmd_compare(args) -> int:
    config = _load_config(args.config)
    for key in ("L", "M", "seed"):
        value = getattr(args, key)
        if value is not None:
            config[key] = value
    if "L" not in config:
        raise UsageError("compare needs L from --L or the config file")
    rows = compare_decoders(config)
    write_report_csv(rows, args.out)
    n_err = 0
    for row in rows:
        if "error" in row:
            n_err += 1
            print(
                f"error: decoder={row['decoder']} p_err={row['p_err']}: {row['error']}",
                file=sys.stderr,
            )
    print(f"wrote {len(rows)} rows ({n_err} errored) to {args.out}")
    return EXIT_OK


def _cmd_hist(args) -> int:
    lattice = Lattice(args.L)
    params = _load_model_checked(args.model, args.L)
    report = homology_histogram(
        lattice, params, args.p, args.M, args.seed,
        n_eq=args.n_eq, max_sweeps=args.max_sweeps,
    )
    write_report_csv([report.to_row()], args.out)
    _print_report(report)
    return EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "grid": _cmd_grid,
    "eval": _cmd_eval,
    "compare": _cmd_compare,
    "hist": _cmd_hist,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
