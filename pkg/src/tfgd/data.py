"""Breast Cancer Wisconsin (Diagnostic) ingestion, splitting and scaling.

Input is the UCI ``wdbc.data`` layout: ``id, diagnosis (M/B), 30 features``,
comma separated, no header.  A header row is tolerated and skipped.

Splits are reproducible across implementations.  The shuffle draws raw 64-bit
words from Philox4x64-10 (numpy's ``Philox(key=seed)``, counter starting at
zero).  Rows of each class, in ascending label order (benign, then malignant),
get an in-place Fisher-Yates pass: for ``i = n-1 .. 1``, swap ``i`` with
``word mod (i + 1)``.  The first ``ceil(f * n_class)`` shuffled rows of each
class form the test set.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

N_FEATURES = 30
DIAGNOSIS = {"M": 1, "B": 0}


class DataFormatError(ValueError):
    """Raised when an input row does not match the WDBC layout."""


@dataclass(frozen=True)
class Standardization:
    mean: np.ndarray
    std: np.ndarray
    #: columns whose training std was below 1e-12; centred but not scaled
    degenerate: tuple[int, ...] = ()


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    ids: tuple[str, ...]
    standardization: Standardization | None = None

    @property
    def standardized(self) -> bool:
        return self.standardization is not None

    def __len__(self) -> int:
        return self.labels.shape[0]

    def subset(self, rows) -> tuple[np.ndarray, np.ndarray]:
        rows = np.asarray(rows)
        return self.features[rows], self.labels[rows]


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray
    seed: int
    ratio: float


def _is_header(row: list[str]) -> bool:
    if len(row) < 3:
        return False
    try:
        float(row[2])
    except ValueError:
        return True
    return False


def load_wdbc(path) -> Dataset:
    """Read a WDBC file.  Labels: M -> 1, B -> 0."""
    ids: list[str] = []
    rows: list[list[float]] = []
    labels: list[int] = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and _is_header(row):
                continue
            if len(row) != N_FEATURES + 2:
                raise DataFormatError(
                    f"row {lineno}: expected {N_FEATURES + 2} fields, got {len(row)}"
                )
            diag = row[1].strip()
            if diag not in DIAGNOSIS:
                raise DataFormatError(f"row {lineno}, field 2: unknown diagnosis {diag!r}")
            values = []
            for col, cell in enumerate(row[2:], start=3):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataFormatError(
                        f"row {lineno}, field {col}: cannot parse {cell!r} as a number"
                    ) from None
                if not math.isfinite(v):
                    raise DataFormatError(f"row {lineno}, field {col}: non-finite value {cell!r}")
                values.append(v)
            ids.append(row[0].strip())
            labels.append(DIAGNOSIS[diag])
            rows.append(values)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return Dataset(np.array(rows), np.array(labels, dtype=np.int64), tuple(ids))


def shuffle_indices(indices, bitgen: np.random.Philox) -> np.ndarray:
    """Fisher-Yates shuffle driven by raw 64-bit Philox words."""
    out = np.array(indices, copy=True)
    n = out.shape[0]
    if n < 2:
        return out
    words = bitgen.random_raw(n - 1)
    for t, i in enumerate(range(n - 1, 0, -1)):
        j = int(words[t]) % (i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def _n_test(f: float, n: int) -> int:
    # guard against f * n landing a hair above an integer, e.g. 0.1 * 30
    return min(n, math.ceil(f * n - 1e-9))


def split(dataset: Dataset, seed: int = 42, test_fraction: float = 0.2) -> SplitIndices:
    """Seeded stratified train/test split; see the module docstring for the algorithm."""
    if not (0.0 < test_fraction < 1.0):
        raise ValueError(f"test fraction must lie in (0, 1), got {test_fraction}")
    if len(dataset) == 0:
        raise ValueError("cannot split an empty dataset")
    bitgen = np.random.Philox(key=int(seed) % 2**64)
    test: list[np.ndarray] = []
    for label in np.unique(dataset.labels):
        rows = np.flatnonzero(dataset.labels == label)
        shuffled = shuffle_indices(rows, bitgen)
        test.append(shuffled[: _n_test(test_fraction, rows.size)])
    test_idx = np.sort(np.concatenate(test))
    train_idx = np.setdiff1d(np.arange(len(dataset)), test_idx)
    return SplitIndices(train_idx, test_idx, int(seed), float(test_fraction))


def fit_standardization(features: np.ndarray) -> Standardization:
    mean = features.mean(axis=0)
    std = features.std(axis=0)  # population std (ddof = 0)
    degenerate = tuple(int(i) for i in np.flatnonzero(std < 1e-12))
    scale = std.copy()
    scale[list(degenerate)] = 1.0
    return Standardization(mean, scale, degenerate)


def standardize(dataset: Dataset, split_: SplitIndices) -> Dataset:
    """Scale all rows with mean/std fitted on the training rows only."""
    n = len(dataset)
    for name, idx in (("train", split_.train), ("test", split_.test)):
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise ValueError(f"{name} indices out of range for {n} rows")
    stats = fit_standardization(dataset.features[split_.train])
    scaled = (dataset.features - stats.mean) / stats.std
    return replace(dataset, features=scaled, standardization=stats)


def write_manifest(split_: SplitIndices, path) -> None:
    """Write ``index,role`` rows in index order."""
    role = {int(i): "test" for i in split_.test}
    role.update({int(i): "train" for i in split_.train})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "role"])
        for i in sorted(role):
            w.writerow([i, role[i]])


def read_manifest(path) -> SplitIndices:
    train, test = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["index", "role"]:
            raise DataFormatError(f"{path}: expected header index,role")
        for r in reader:
            if r["role"] not in ("train", "test"):
                raise DataFormatError(f"{path}: unknown role {r['role']!r}")
            (train if r["role"] == "train" else test).append(int(r["index"]))
    return SplitIndices(np.array(train), np.array(test), -1, len(test) / max(1, len(train) + len(test)))


def default_dataset_path() -> Path:
    """Location of the bundled WDBC file in a source checkout."""
    return Path(__file__).resolve().parents[2] / "data" / "wdbc.data"
