"""Command-line surface.

Subcommands: synth, train, eval, predict, gradcheck, inspect, export-curve.
Training flags mirror the run-config field names in kebab-case and can also
be set through a flat `key = value` config file; precedence is CLI flag over
file over built-in default. Exit codes: 0 success, 2 usage error, 3 data or
validation error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

import numpy as np

from .data import (
    LABEL_NONE,
    SPLIT_NAMES,
    SyntheticConfig,
    generate_synthetic,
    load_store,
    save_store,
    store_file_size,
)
from .errors import DataError, NumericalAbort, UsageError
from .metrics import export_distance_curve, write_distance_curve
from .model import GRAD_CHECK_MODES, grad_check_sweep
from .training import (
    RunConfig,
    config_from_mapping,
    evaluate,
    load_checkpoint,
    parse_config_text,
    predict,
    save_checkpoint,
    train,
    write_train_report,
)

LABEL_KIND_NAMES = {0: "none", 1: "real", 2: "binary"}


def _kebab_flags(parser: argparse.ArgumentParser, config_cls) -> None:
    """One optional flag per dataclass field, kebab-case, default None so
    unset flags are distinguishable from explicit values."""
    for f in dataclasses.fields(config_cls):
        flag = "--" + f.name.replace("_", "-")
        if f.type in ("bool", bool):
            parser.add_argument(flag, dest=f.name, default=None,
                                action=argparse.BooleanOptionalAction)
        elif f.type in ("int", int):
            parser.add_argument(flag, dest=f.name, type=int, default=None)
        elif f.type in ("float", float):
            parser.add_argument(flag, dest=f.name, type=float, default=None)
        else:
            parser.add_argument(flag, dest=f.name, default=None)


def _resolve_run_config(args) -> RunConfig:
    mapping = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                mapping = parse_config_text(fh.read())
        except OSError as exc:
            raise UsageError(f"cannot read config file {args.config}: {exc}")
    config = config_from_mapping(mapping)
    for f in dataclasses.fields(RunConfig):
        value = getattr(args, f.name)
        if value is not None:
            setattr(config, f.name, value)
    return config


def _resolve_synth_config(args) -> SyntheticConfig:
    config = SyntheticConfig()
    for f in dataclasses.fields(SyntheticConfig):
        value = getattr(args, f.name)
        if value is not None:
            setattr(config, f.name, value)
    return config


def _require(value: str, flag: str) -> str:
    if not value:
        raise UsageError(f"{flag} is required")
    return value


def cmd_synth(args) -> int:
    config = _resolve_synth_config(args)
    store = generate_synthetic(config, seed=args.seed)
    save_store(store, args.out)
    print(f"wrote {args.out}: n_drugs={store.n_drugs} "
          f"n_prots={store.n_prots} n_records={store.n_records}")
    return 0


def cmd_train(args) -> int:
    config = _resolve_run_config(args)
    store = load_store(_require(config.store_path, "--store-path"))
    resume = load_checkpoint(args.resume) if args.resume else None
    checkpoint, report = train(store, config,
                               stop_after_epoch=args.stop_after_epoch,
                               resume=resume)
    out = _require(config.checkpoint_path, "--checkpoint-path")
    save_checkpoint(checkpoint, out)
    if args.report:
        write_train_report(report, args.report)
    final = report.final_val
    tail = ""
    if final is not None:
        parts = [f"val_{key}={value}" for key, value in final.as_dict().items()
                 if value is not None]
        tail = " " + " ".join(parts)
    print(f"trained {checkpoint.epoch} epoch(s), {report.n_steps} step(s); "
          f"checkpoint {out}{tail}")
    return 0


def cmd_eval(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint_path)
    store = load_store(args.store_path)
    report = evaluate(checkpoint, store, args.split)
    for key, value in report.as_dict().items():
        if value is not None:
            print(f"{key} = {value}")
    return 0


def cmd_predict(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint_path)
    if args.drug_vec or args.prot_vec:
        if not (args.drug_vec and args.prot_vec):
            raise UsageError("--drug-vec and --prot-vec must be given together")
        z_d = _read_vector(args.drug_vec)
        z_t = _read_vector(args.prot_vec)
        value = predict(checkpoint, z_d=z_d, z_t=z_t)
    else:
        if not (args.drug and args.prot):
            raise UsageError(
                "predict needs --drug and --prot ids (with --store-path) "
                "or --drug-vec and --prot-vec files"
            )
        store = load_store(_require(args.store_path, "--store-path"))
        value = predict(checkpoint, store, drug_id=args.drug,
                        prot_id=args.prot)
    print(repr(value))
    return 0


def _read_vector(path: str) -> np.ndarray:
    try:
        vec = np.loadtxt(path, dtype=np.float64, ndmin=1)
    except OSError as exc:
        raise DataError(f"cannot read vector file {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: not a numeric vector: {exc}") from exc
    return np.ravel(vec)


def cmd_gradcheck(args) -> int:
    modes = tuple(m.strip() for m in args.modes.split(",")) if args.modes \
        else GRAD_CHECK_MODES
    worst = grad_check_sweep(
        n_seeds=args.seeds, d_drug=args.d_drug, d_prot=args.d_prot,
        d_shared=args.d_shared, k=args.k, step=args.step, modes=modes,
    )
    failed = False
    for mode, err in worst.items():
        verdict = "ok" if err < args.tol else "FAIL"
        if err >= args.tol:
            failed = True
        print(f"{mode}: max_rel_err={err:.3e} {verdict}")
    print(f"seeds={args.seeds} tol={args.tol:g}")
    if failed:
        print("gradient check FAILED", file=sys.stderr)
        return 4
    return 0


def cmd_inspect(args) -> int:
    store = load_store(args.path)
    print(f"path = {args.path}")
    print("magic = FDTI")
    print("version = 1")
    print(f"n_drugs = {store.n_drugs}")
    print(f"n_prots = {store.n_prots}")
    print(f"d_drug = {store.d_drug}")
    print(f"d_prot = {store.d_prot}")
    print(f"n_records = {store.n_records}")
    kind = LABEL_KIND_NAMES.get(store.label_kind, "?")
    print(f"label_kind = {kind} ({store.label_kind})")
    print(f"has_splits = {'true' if store.has_splits else 'false'}")
    if store.has_splits:
        counts = [int(np.sum(store.rec_split == code))
                  for code in range(len(SPLIT_NAMES))]
        print("records_per_split = " +
              " ".join(f"{name}:{n}" for name, n in zip(SPLIT_NAMES, counts)))
    if store.label_kind != LABEL_NONE:
        n_absent = int(np.sum(np.isnan(store.rec_label)))
        print(f"unlabeled_records = {n_absent}")
    print(f"file_bytes = {store_file_size(store)}")
    return 0


def cmd_export_curve(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint_path)
    table = export_distance_curve(
        checkpoint.params, n_points=args.points,
        label_mean=checkpoint.label_mean, label_std=checkpoint.label_std,
    )
    write_distance_curve(table, args.out)
    print(f"wrote {table.shape[0]} points to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtihead",
        description="Drug-target affinity head over precomputed embeddings.",
    )
    parser.add_argument("--verbose", action="store_true",
                        help="log progress at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic embedding store")
    _kebab_flags(p, SyntheticConfig)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output store path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on a store's train split")
    _kebab_flags(p, RunConfig)
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--report", help="write the per-epoch train report here")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--stop-after-epoch", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics over one split")
    p.add_argument("--checkpoint-path", required=True)
    p.add_argument("--store-path", required=True)
    p.add_argument("--split", default="test", choices=SPLIT_NAMES)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="score a single drug-protein pair")
    p.add_argument("--checkpoint-path", required=True)
    p.add_argument("--store-path")
    p.add_argument("--drug", help="drug id in the store")
    p.add_argument("--prot", help="protein id in the store")
    p.add_argument("--drug-vec", help="text file with one embedding vector")
    p.add_argument("--prot-vec", help="text file with one embedding vector")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck",
                       help="compare analytic gradients to finite differences")
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--d-drug", type=int, default=5)
    p.add_argument("--d-prot", type=int, default=5)
    p.add_argument("--d-shared", type=int, default=4)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--modes", help="comma-separated subset of "
                   + ",".join(GRAD_CHECK_MODES))
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("inspect", help="dump a store file's header")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("export-curve",
                       help="tabulate the learned distance-to-prediction curve")
    p.add_argument("--checkpoint-path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--points", type=int, default=201)
    p.set_defaults(func=cmd_export_curve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except NumericalAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.record_ids:
            shown = ", ".join(exc.record_ids[:8])
            more = len(exc.record_ids) - 8
            tail = f" (+{more} more)" if more > 0 else ""
            print(f"records in the failing batch: {shown}{tail}",
                  file=sys.stderr)
        return 4
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
