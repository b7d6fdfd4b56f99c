"""Seeded experiment harness: mask draws, method execution, metric collection,
and plot-ready CSV export.

Seeding layout: every random stream is derived from a stable hash of
(base seed, dataset, mechanism, draw, consumer). The mask stream's consumer
tag is fixed, so all methods see the identical (data, mask) per draw, and
adding a method to a config never changes the other methods' results.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .data import IncompleteMatrix, resolve_batch_size, standardize
from .exceptions import ConfigError
from .imputers import (
    DirectConfig,
    RoundRobinConfig,
    fit_direct,
    ice_fit,
    ice_transform,
    impute_mean,
    impute_softimpute,
    rr_fit,
    rr_transform,
)
from .masking import MECHANISMS, MaskSpec
from .metrics import evaluate
from .registry import load_dataset
from . import toydata

__all__ = [
    "METHODS",
    "OOS_METHODS",
    "ExperimentConfig",
    "RunResult",
    "child_seed",
    "resolve_batch_size",
    "run_experiment",
    "run_oos_experiment",
    "export_results",
    "read_results_csv",
]

METHODS = ("mean", "ice", "softimpute", "sinkhorn_direct", "linear_rr", "mlp_rr")
OOS_METHODS = ("mean", "ice", "linear_rr", "mlp_rr")
CONFIG_SCHEMA_VERSION = 1
MASK_TAG = "__mask__"
SPLIT_TAG = "__split__"
DATA_TAG = "__data__"


def child_seed(base_seed: int, dataset: str, mechanism: str, draw, consumer: str) -> int:
    """Stable 64-bit seed for one consumer of randomness within one draw."""
    text = f"{base_seed}|{dataset}|{mechanism}|{draw}|{consumer}"
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class ExperimentConfig:
    """Declarative benchmark description; round-trips losslessly through JSON."""

    dataset: str
    methods: list
    mechanism: str = "mcar"
    p: float = 0.3
    input_fraction: float = 0.3
    q: float = 0.25
    method_params: dict = field(default_factory=dict)
    n_draws: int = 30
    base_seed: int = 0
    split_fraction: float = 0.7
    w2_cap: int = 4096
    data_dir: str | None = None
    out_dir: str | None = None
    schema_version: int = CONFIG_SCHEMA_VERSION

    def __post_init__(self):
        self.methods = list(self.methods)
        self.mechanism = self.mechanism.lower().replace("-", "_")

    def validate(self, oos: bool = False):
        if self.schema_version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema {self.schema_version!r}")
        if self.n_draws < 1:
            raise ConfigError("n_draws must be at least 1")
        if not self.methods:
            raise ConfigError("at least one method is required")
        allowed = OOS_METHODS if oos else METHODS
        for m in self.methods:
            if m not in allowed:
                raise ConfigError(
                    f"method {m!r} is not {'OOS-capable' if oos else 'registered'};"
                    f" choose from {allowed}"
                )
        for m in self.method_params:
            if m not in METHODS:
                raise ConfigError(f"method_params for unknown method {m!r}")
        if self.mechanism not in MECHANISMS:
            raise ConfigError(f"unknown mechanism {self.mechanism!r}")
        if not 0 < self.p < 1:
            raise ConfigError(f"missing rate must lie in (0, 1), got {self.p}")
        if not 0 < self.split_fraction < 1:
            raise ConfigError(
                f"split_fraction must lie strictly in (0, 1), got {self.split_fraction}"
            )
        return self

    def mask_spec(self) -> MaskSpec:
        return MaskSpec(self.mechanism, self.p, self.input_fraction, self.q)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        return cls(**payload)

    @classmethod
    def from_json(cls, text_or_path) -> "ExperimentConfig":
        if os.path.exists(str(text_or_path)):
            with open(text_or_path) as fh:
                payload = json.load(fh)
        else:
            payload = json.loads(text_or_path)
        return cls.from_dict(payload)


@dataclass
class RunResult:
    dataset: str
    method: str
    mechanism: str
    draw: int
    seed: int
    split: str = "full"  # "full" | "train" | "test"
    mae: float | None = None
    rmse: float | None = None
    w2: float | None = None
    w2_skipped: bool = False
    m0: int = 0
    m1: int = 0
    seconds: float = 0.0
    failed: bool = False
    error: str | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        row = asdict(self)
        row["diagnostics"] = json.dumps(self.diagnostics, sort_keys=True)
        return row


RESULT_COLUMNS = [
    "dataset",
    "method",
    "mechanism",
    "draw",
    "seed",
    "split",
    "mae",
    "rmse",
    "w2",
    "w2_skipped",
    "m0",
    "m1",
    "seconds",
    "failed",
    "error",
    "diagnostics",
]


class ResultWriter:
    """Append-only CSV sink so partial campaigns stay recoverable."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w", newline="")
        import csv as _csv

        self._writer = _csv.DictWriter(self._fh, fieldnames=RESULT_COLUMNS)
        self._writer.writeheader()
        self._fh.flush()

    def write(self, result: RunResult):
        self._writer.writerow(result.to_row())
        self._fh.flush()

    def close(self):
        self._fh.close()


def _toy_matrix(spec: str, base_seed: int) -> np.ndarray:
    """Resolve `toy:<name>:<args>` dataset strings to a complete matrix."""
    parts = spec.split(":")
    name = parts[1]
    seed = child_seed(base_seed, spec, "data", 0, DATA_TAG)
    if name in toydata.SHAPES:
        n = int(parts[2]) if len(parts) > 2 else 500
        noise = float(parts[3]) if len(parts) > 3 else 0.05
        return toydata.SHAPES[name](n, noise=noise, rng=seed)
    if name == "gaussian":
        n = int(parts[2]) if len(parts) > 2 else 500
        d = int(parts[3]) if len(parts) > 3 else 10
        corr = float(parts[4]) if len(parts) > 4 else 0.5
        return toydata.correlated_gaussian(n, d, corr=corr, rng=seed)
    if name == "mixture":
        n = int(parts[2]) if len(parts) > 2 else 500
        d = int(parts[3]) if len(parts) > 3 else 2
        return toydata.gaussian_mixture_two(n, d, rng=seed)
    raise ConfigError(f"unknown toy dataset {spec!r}")


def _ground_truth(cfg: ExperimentConfig, data) -> np.ndarray:
    """Complete, whitened matrix the masks and metrics are defined against."""
    if data is None:
        if cfg.dataset.startswith("toy:"):
            data = _toy_matrix(cfg.dataset, cfg.base_seed)
        else:
            loaded, _, _ = load_dataset(cfg.dataset, cfg.data_dir)
            if loaded.missing_fraction > 0:
                raise ConfigError(
                    f"benchmarking needs complete ground truth; {cfg.dataset!r} has "
                    f"{loaded.missing_fraction:.1%} missing entries"
                )
            return np.asarray(loaded.values)
    data = np.asarray(data, dtype=np.float64)
    complete = IncompleteMatrix(data, np.ones(data.shape, dtype=np.uint8))
    std, _, _ = standardize(complete)
    return np.asarray(std.values)


def _method_mcar_default(cfg: ExperimentConfig) -> bool:
    return cfg.mechanism == "mcar"


def _run_method(method: str, X: IncompleteMatrix, rng, params: dict, mcar: bool):
    """Run one imputer on one masked dataset; returns (completed, diagnostics)."""
    if method == "mean":
        return impute_mean(X), {}
    if method == "ice":
        completed, _ = ice_fit(X, **params)
        return completed, {}
    if method == "softimpute":
        seed = int(rng.integers(2**63))
        return impute_softimpute(X, seed=seed, **params), {}
    if method == "sinkhorn_direct":
        dc = DirectConfig(**params)
        completed, diag = fit_direct(X, dc, rng)
        return completed, diag.summary()
    if method in ("linear_rr", "mlp_rr"):
        rc = RoundRobinConfig(**{"mcar": mcar, **params})
        kind = "linear" if method == "linear_rr" else "mlp"
        completed, _, diag = rr_fit(X, kind, rc, rng)
        return completed, diag.summary()
    raise ConfigError(f"unknown method {method!r}")


def _result_from_report(base: RunResult, report) -> RunResult:
    base.mae = report.mae
    base.rmse = report.rmse
    base.w2 = report.w2
    base.w2_skipped = report.w2_skipped
    base.m0 = report.m0
    base.m1 = report.m1
    return base


def run_experiment(cfg: ExperimentConfig, data=None, results_path=None):
    """Full-matrix protocol: per draw, mask the complete data and run every
    method on the identical masked matrix. Per-method failures become failed
    rows, not aborts."""
    cfg.validate()
    truth = _ground_truth(cfg, data)
    spec = cfg.mask_spec()
    writer = ResultWriter(results_path) if results_path else None
    results = []
    try:
        for draw in range(cfg.n_draws):
            mask_rng = np.random.default_rng(
                child_seed(cfg.base_seed, cfg.dataset, cfg.mechanism, draw, MASK_TAG)
            )
            mask = spec.generate(truth, mask_rng)
            X = IncompleteMatrix(truth, mask)
            for method in cfg.methods:
                seed = child_seed(cfg.base_seed, cfg.dataset, cfg.mechanism, draw, method)
                rng = np.random.default_rng(seed)
                params = cfg.method_params.get(method, {})
                res = RunResult(cfg.dataset, method, cfg.mechanism, draw, seed)
                t0 = time.perf_counter()
                try:
                    completed, diag = _run_method(
                        method, X, rng, params, _method_mcar_default(cfg)
                    )
                    report = evaluate(truth, completed, mask, cap=cfg.w2_cap)
                    _result_from_report(res, report)
                    res.diagnostics = diag
                except Exception as exc:  # failed runs are first-class rows
                    res.failed = True
                    res.error = f"{type(exc).__name__}: {exc}"
                res.seconds = time.perf_counter() - t0
                results.append(res)
                if writer:
                    writer.write(res)
    finally:
        if writer:
            writer.close()
    return results


def _fit_transform(method, X_train, rng, params, mcar):
    """Fit on training rows, return (train completion, frozen transform)."""
    if method == "mean":
        completed = impute_mean(X_train)
        from .data import observed_column_stats

        means, _ = observed_column_stats(X_train.values, X_train.mask)
        return completed, lambda X_new: np.where(
            X_new.mask == 1, X_new.values, means
        )
    if method == "ice":
        completed, model = ice_fit(X_train, **params)
        return completed, lambda X_new: ice_transform(model, X_new)
    if method in ("linear_rr", "mlp_rr"):
        rc = RoundRobinConfig(**{"mcar": mcar, **params})
        kind = "linear" if method == "linear_rr" else "mlp"
        completed, model, _ = rr_fit(X_train, kind, rc, rng)
        return completed, lambda X_new: rr_transform(model, X_new)
    raise ConfigError(f"method {method!r} cannot be used out of sample")


def run_oos_experiment(cfg: ExperimentConfig, data=None, results_path=None):
    """Out-of-sample protocol: mask the full matrix, split rows, fit on the
    training part, apply frozen models to the test part, and report both
    splits' metrics."""
    cfg.validate(oos=True)
    truth = _ground_truth(cfg, data)
    n = truth.shape[0]
    n_train = int(round(cfg.split_fraction * n))
    if not 2 <= n_train <= n - 1:
        raise ConfigError(f"split {cfg.split_fraction} leaves no usable test set")
    spec = cfg.mask_spec()
    writer = ResultWriter(results_path) if results_path else None
    results = []
    try:
        for draw in range(cfg.n_draws):
            mask_rng = np.random.default_rng(
                child_seed(cfg.base_seed, cfg.dataset, cfg.mechanism, draw, MASK_TAG)
            )
            mask = spec.generate(truth, mask_rng)
            perm = np.random.default_rng(
                child_seed(cfg.base_seed, cfg.dataset, cfg.mechanism, draw, SPLIT_TAG)
            ).permutation(n)
            tr, te = perm[:n_train], perm[n_train:]
            for method in cfg.methods:
                seed = child_seed(cfg.base_seed, cfg.dataset, cfg.mechanism, draw, method)
                rng = np.random.default_rng(seed)
                params = cfg.method_params.get(method, {})
                rows = [
                    RunResult(cfg.dataset, method, cfg.mechanism, draw, seed, split=s)
                    for s in ("train", "test")
                ]
                t0 = time.perf_counter()
                try:
                    X_train = IncompleteMatrix(truth[tr], mask[tr])
                    X_test = IncompleteMatrix(truth[te], mask[te])
                    fitted, transform = _fit_transform(
                        method, X_train, rng, params, _method_mcar_default(cfg)
                    )
                    _result_from_report(
                        rows[0], evaluate(truth[tr], fitted, mask[tr], cap=cfg.w2_cap)
                    )
                    completed_test = transform(X_test)
                    _result_from_report(
                        rows[1],
                        evaluate(truth[te], completed_test, mask[te], cap=cfg.w2_cap),
                    )
                except Exception as exc:
                    for row in rows:
                        row.failed = True
                        row.error = f"{type(exc).__name__}: {exc}"
                elapsed = time.perf_counter() - t0
                for row in rows:
                    row.seconds = elapsed
                    results.append(row)
                    if writer:
                        writer.write(row)
    finally:
        if writer:
            writer.close()
    return results


def read_results_csv(path):
    """Reload a long-format results CSV into RunResult objects."""
    import csv as _csv

    out = []
    with open(path, newline="") as fh:
        for row in _csv.DictReader(fh):
            out.append(
                RunResult(
                    dataset=row["dataset"],
                    method=row["method"],
                    mechanism=row["mechanism"],
                    draw=int(row["draw"]),
                    seed=int(row["seed"]),
                    split=row["split"],
                    mae=float(row["mae"]) if row["mae"] else None,
                    rmse=float(row["rmse"]) if row["rmse"] else None,
                    w2=float(row["w2"]) if row["w2"] else None,
                    w2_skipped=row["w2_skipped"] == "True",
                    m0=int(row["m0"] or 0),
                    m1=int(row["m1"] or 0),
                    seconds=float(row["seconds"] or 0.0),
                    failed=row["failed"] == "True",
                    error=row["error"] or None,
                    diagnostics=json.loads(row["diagnostics"] or "{}"),
                )
            )
    return out


def _mean_std(values):
    arr = np.array([v for v in values if v is not None], dtype=np.float64)
    if arr.size == 0:
        return None, None
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std


def export_results(results, out_dir):
    """Write the long per-run CSV plus a per-(dataset, method) summary.

    The summary holds mean/std over draws for each metric and a scaled-W2
    column: within each (dataset, mechanism, split) group, mean W2 is divided
    by the group's maximum over methods, so the worst method scores 1.0.
    """
    if not results:
        raise ValueError("no results to export")
    os.makedirs(out_dir, exist_ok=True)
    import csv as _csv

    long_path = os.path.join(out_dir, "results.csv")
    with open(long_path, "w", newline="") as fh:
        writer = _csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        writer.writeheader()
        for res in results:
            writer.writerow(res.to_row())

    groups = {}
    for res in results:
        if res.failed:
            continue
        key = (res.dataset, res.mechanism, res.split, res.method)
        groups.setdefault(key, []).append(res)

    summary_rows = []
    for (dataset, mechanism, split, method), runs in sorted(groups.items()):
        mae_m, mae_s = _mean_std([r.mae for r in runs])
        rmse_m, rmse_s = _mean_std([r.rmse for r in runs])
        w2_m, w2_s = _mean_std([r.w2 for r in runs])
        summary_rows.append(
            {
                "dataset": dataset,
                "mechanism": mechanism,
                "split": split,
                "method": method,
                "n_runs": len(runs),
                "mae_mean": mae_m,
                "mae_std": mae_s,
                "rmse_mean": rmse_m,
                "rmse_std": rmse_s,
                "w2_mean": w2_m,
                "w2_std": w2_s,
                "w2_scaled": None,
            }
        )
    scale_groups = {}
    for row in summary_rows:
        key = (row["dataset"], row["mechanism"], row["split"])
        if row["w2_mean"] is not None:
            scale_groups.setdefault(key, []).append(row["w2_mean"])
    for row in summary_rows:
        key = (row["dataset"], row["mechanism"], row["split"])
        if row["w2_mean"] is not None and key in scale_groups:
            peak = max(scale_groups[key])
            row["w2_scaled"] = row["w2_mean"] / peak if peak > 0 else 0.0

    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "w", newline="") as fh:
        writer = _csv.DictWriter(fh, fieldnames=list(summary_rows[0].keys()))
        writer.writeheader()
        for row in summary_rows:
            writer.writerow(row)
    return {"results": long_path, "summary": summary_path}
