"""Command-line interface.

Verbs:
  impute   one dataset, one method, write the completed CSV (original units)
  bench    full experiment campaign from a JSON config
  oos      train/test split protocol from a JSON config
  maskgen  emit a missingness mask as 0/1 CSV for audit
  check    run the invariant self-test suite
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import bench as bench_mod
from .data import (
    IncompleteMatrix,
    read_csv,
    standardize,
    unstandardize,
    write_csv,
    write_mask_csv,
)
from .imputers import (
    DirectConfig,
    RoundRobinConfig,
    fit_direct,
    ice_fit,
    impute_mean,
    impute_softimpute,
    rr_fit,
    save_model,
)
from .masking import MECHANISMS, MaskSpec
from .selfcheck import run_selfcheck


def _parse_params(text):
    if not text:
        return {}
    if os.path.exists(text):
        with open(text) as fh:
            return json.load(fh)
    return json.loads(text)


def _cmd_impute(args) -> int:
    raw = read_csv(args.data)
    print(
        f"loaded {args.data}: n={raw.n} d={raw.d} "
        f"missing_fraction={raw.missing_fraction:.4f}"
    )
    std, means, stds = standardize(raw)
    params = _parse_params(args.params)
    rng = np.random.default_rng(args.seed)
    model = None
    if args.method == "mean":
        completed = impute_mean(std)
    elif args.method == "ice":
        completed, _ = ice_fit(std, **params)
    elif args.method == "softimpute":
        completed = impute_softimpute(std, seed=args.seed, **params)
    elif args.method == "sinkhorn_direct":
        completed, _ = fit_direct(std, DirectConfig(**params), rng)
    elif args.method in ("linear_rr", "mlp_rr"):
        cfg = RoundRobinConfig(**{"mcar": args.mcar, **params})
        kind = "linear" if args.method == "linear_rr" else "mlp"
        completed, model, _ = rr_fit(std, kind, cfg, rng)
    else:
        print(f"unknown method {args.method!r}", file=sys.stderr)
        return 2
    restored = np.where(raw.mask == 1, raw.values, unstandardize(completed, means, stds))
    write_csv(args.out, restored, raw.column_names)
    print(f"wrote completed matrix to {args.out}")
    if args.model_out:
        if model is None:
            print("--model-out is only available for linear_rr/mlp_rr", file=sys.stderr)
            return 2
        save_model(model, args.model_out)
        print(f"wrote model to {args.model_out}")
    return 0


def _load_bench_config(args) -> bench_mod.ExperimentConfig:
    cfg = bench_mod.ExperimentConfig.from_json(args.config)
    cfg.base_seed = args.seed
    cfg.out_dir = args.out
    return cfg


def _cmd_bench(args) -> int:
    cfg = _load_bench_config(args)
    os.makedirs(args.out, exist_ok=True)
    cfg.to_json(os.path.join(args.out, "config.json"))
    results = bench_mod.run_experiment(
        cfg, results_path=os.path.join(args.out, "results.csv")
    )
    paths = bench_mod.export_results(results, args.out)
    n_failed = sum(r.failed for r in results)
    print(f"{len(results)} runs ({n_failed} failed); wrote {paths['summary']}")
    return 0


def _cmd_oos(args) -> int:
    cfg = _load_bench_config(args)
    os.makedirs(args.out, exist_ok=True)
    cfg.to_json(os.path.join(args.out, "config.json"))
    results = bench_mod.run_oos_experiment(
        cfg, results_path=os.path.join(args.out, "results.csv")
    )
    paths = bench_mod.export_results(results, args.out)
    n_failed = sum(r.failed for r in results)
    print(f"{len(results)} rows ({n_failed} failed); wrote {paths['summary']}")
    return 0


def _cmd_maskgen(args) -> int:
    raw = read_csv(args.data)
    if raw.missing_fraction > 0 and args.mechanism != "mcar":
        print("maskgen needs a complete matrix for data-dependent mechanisms", file=sys.stderr)
        return 2
    values = np.where(raw.mask == 1, raw.values, 0.0)
    spec = MaskSpec(args.mechanism, args.rate, args.input_fraction, args.q, args.seed)
    mask = spec.generate(values)
    write_mask_csv(args.out, mask, raw.column_names)
    print(
        f"wrote {args.mechanism} mask at rate {args.rate} "
        f"(empirical {float((mask == 0).mean()):.4f}) to {args.out}"
    )
    return 0


def _cmd_check(args) -> int:
    results = run_selfcheck()
    width = max(len(name) for name, _, _ in results)
    failed = 0
    for name, ok, detail in results:
        status = "ok  " if ok else "FAIL"
        print(f"{status} {name.ljust(width)}  {detail}")
        failed += 0 if ok else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otimpute",
        description="Missing-value imputation by minibatch Sinkhorn divergences",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("impute", help="impute one dataset with one method")
    p.add_argument("--data", required=True, help="CSV with empty/NA cells for missing")
    p.add_argument(
        "--method",
        required=True,
        choices=list(bench_mod.METHODS),
    )
    p.add_argument("--out", required=True, help="completed CSV path")
    p.add_argument("--model-out", default=None, help="save fitted RR model JSON here")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", default=None, help="JSON dict (inline or file) of hyperparameters")
    p.add_argument(
        "--mcar",
        action="store_true",
        help="declare MCAR missingness (enables stratified batch sampling)",
    )
    p.set_defaults(fn=_cmd_impute)

    for verb, fn, desc in (
        ("bench", _cmd_bench, "run a benchmark campaign from a config"),
        ("oos", _cmd_oos, "run the out-of-sample split protocol"),
    ):
        p = sub.add_parser(verb, help=desc)
        p.add_argument("--config", required=True, help="ExperimentConfig JSON path")
        p.add_argument("--seed", type=int, required=True, help="base seed")
        p.add_argument("--out", required=True, help="output directory")
        p.set_defaults(fn=fn)

    p = sub.add_parser("maskgen", help="generate a missingness mask for audit")
    p.add_argument("--data", required=True)
    p.add_argument("--mechanism", required=True, choices=list(MECHANISMS))
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--input-fraction", type=float, default=0.3)
    p.add_argument("--q", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_maskgen)

    p = sub.add_parser("check", help="run the invariant self-test suite")
    p.set_defaults(fn=_cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
