"""Benchmark dataset registry and CSV loading.

Datasets are supplied by the user as numeric CSV files; the registry records
the expected (rows, columns) of each benchmark table so a mismatched file is
rejected instead of silently benchmarked.
"""

from __future__ import annotations

import os

from .data import IncompleteMatrix, read_csv, standardize
from .exceptions import RegistryMismatch

REGISTRY = {
    "airfoil_self_noise": (1503, 5),
    "blood_transfusion": (748, 4),
    "breast_cancer_diagnostic": (569, 30),
    "california": (20640, 8),
    "climate_model_crashes": (540, 18),
    "concrete_compression": (1030, 7),
    "concrete_slump": (103, 7),
    "connectionist_bench_sonar": (208, 60),
    "connectionist_bench_vowel": (990, 10),
    "ecoli": (336, 7),
    "glass": (214, 9),
    "ionosphere": (351, 34),
    "iris": (150, 4),
    "libras": (360, 90),
    "parkinsons": (195, 23),
    "planning_relax": (182, 12),
    "qsar_biodegradation": (1055, 41),
    "seeds": (210, 7),
    "wine": (178, 13),
    "wine_quality_red": (1599, 10),
    "wine_quality_white": (4898, 11),
    "yacht_hydrodynamics": (308, 6),
    "yeast": (1484, 8),
}


def registry_entry(name: str):
    return REGISTRY.get(name)


def validate_against_registry(name: str, n: int, d: int):
    expected = REGISTRY.get(name)
    if expected is not None and expected != (n, d):
        raise RegistryMismatch(name, expected, (n, d))


def load_dataset(name_or_path, data_dir=None, validate: bool = True):
    """Load a CSV dataset, standardize it, and validate registry shapes.

    `name_or_path` may be a bare registry name (resolved as
    `<data_dir>/<name>.csv`) or a path; when the file stem matches a registry
    entry, the parsed shape must agree with it.

    Returns (standardized IncompleteMatrix, means, stds).
    """
    if os.path.exists(name_or_path):
        path = name_or_path
        stem = os.path.splitext(os.path.basename(path))[0]
    elif name_or_path in REGISTRY:
        stem = name_or_path
        path = os.path.join(data_dir or ".", f"{name_or_path}.csv")
        if not os.path.exists(path):
            raise FileNotFoundError(
                f"registry dataset {name_or_path!r}: no file at {path}; pass a path "
                f"or set data_dir"
            )
    else:
        raise FileNotFoundError(f"{name_or_path!r} is neither a file nor a registry name")
    X = read_csv(path)
    if validate:
        validate_against_registry(stem, X.n, X.d)
    std, means, stds = standardize(X)
    return std, means, stds
