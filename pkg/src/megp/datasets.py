"""Dataset ingestion, splitting, and synthetic generation.

CSV ingestion parses features as float64, factorizes the label column to
dense 0-based codes in first-appearance order, and rejects rows with
unparsable cells (each rejection carries its line number). Splitting is
stratified 54/13/33 by default with largest-remainder rounding per class,
and feature standardization uses training-split statistics only.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, IngestionError
from .rng import make_rng


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    class_count: int
    feature_names: list
    source_path: str = ""
    label_map: list = field(default_factory=list)
    rejected_rows: list = field(default_factory=list)


@dataclass
class SplitSpec:
    train_frac: float = 0.54
    val_frac: float = 0.13
    test_frac: float = 0.33
    stratified: bool = True
    standardize: bool = True
    seed: int = 0

    def validate(self) -> None:
        total = self.train_frac + self.val_frac + self.test_frac
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"split fractions sum to {total}, expected 1")
        if min(self.train_frac, self.val_frac, self.test_frac) <= 0:
            raise ConfigError("split fractions must be positive")


@dataclass
class SplitDataset:
    """Train/validation/test matrices with one-hot labels."""

    X_train: np.ndarray
    Y_train: np.ndarray
    X_val: np.ndarray
    Y_val: np.ndarray
    X_test: np.ndarray
    Y_test: np.ndarray
    n_classes: int
    n_features: int
    train_idx: np.ndarray = None
    val_idx: np.ndarray = None
    test_idx: np.ndarray = None


def one_hot(y: np.ndarray, n_classes: int) -> np.ndarray:
    Y = np.zeros((len(y), n_classes))
    Y[np.arange(len(y)), y] = 1.0
    return Y


def load_csv_dataset(path: str, label_column, delimiter: str = ",",
                     header: bool = True) -> Dataset:
    """Parse a delimited text file into a Dataset.

    ``label_column`` is a header name (when header=True) or a 0-based
    column index. Rows with any unparsable feature cell are rejected and
    reported in ``rejected_rows`` as (line_number, message).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        rows = [(line_no, row) for line_no, row in enumerate(reader, start=1)
                if row and any(cell.strip() for cell in row)]
    if not rows:
        raise IngestionError(f"{path}: file is empty")

    if header:
        header_line, header_row = rows[0]
        rows = rows[1:]
        if not rows:
            raise IngestionError(f"{path}: no data rows after the header "
                                 f"(line {header_line})")
        names = [cell.strip() for cell in header_row]
    else:
        names = [f"f{i}" for i in range(len(rows[0][1]))]

    if isinstance(label_column, str):
        if not header:
            raise IngestionError("label column by name requires a header row")
        try:
            label_idx = names.index(label_column)
        except ValueError:
            raise IngestionError(
                f"{path}: label column {label_column!r} not in header "
                f"(line 1)") from None
    else:
        label_idx = int(label_column)
        if not 0 <= label_idx < len(names):
            raise IngestionError(f"{path}: label column index {label_idx} "
                                 f"out of range for {len(names)} columns")

    feature_names = [n for i, n in enumerate(names) if i != label_idx]
    codes: dict = {}
    labels: list = []
    features: list = []
    rejected: list = []
    width = len(names)
    for line_no, row in rows:
        if len(row) != width:
            rejected.append((line_no, f"expected {width} cells, got {len(row)}"))
            continue
        try:
            feats = [float(cell) for i, cell in enumerate(row) if i != label_idx]
        except ValueError as exc:
            rejected.append((line_no, str(exc)))
            continue
        if any(math.isnan(v) for v in feats):
            rejected.append((line_no, "NaN feature value"))
            continue
        label = row[label_idx].strip()
        if label not in codes:
            codes[label] = len(codes)
        labels.append(codes[label])
        features.append(feats)

    if not features:
        raise IngestionError(
            f"{path}: every data row was rejected "
            f"(first: line {rejected[0][0]}: {rejected[0][1]})")
    if len(codes) < 2:
        raise IngestionError(f"{path}: found {len(codes)} class, need >= 2")
    return Dataset(
        X=np.asarray(features, dtype=float),
        y=np.asarray(labels, dtype=int),
        class_count=len(codes),
        feature_names=feature_names,
        source_path=str(path),
        label_map=list(codes),
        rejected_rows=rejected,
    )


def save_csv(ds: Dataset, path: str) -> None:
    """Emit the canonical CSV form (header row, label column last)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ds.feature_names + ["label"])
        for row, label in zip(ds.X, ds.y):
            writer.writerow([repr(float(v)) for v in row] + [ds.label_map[label]])


def _largest_remainder(total: int, fracs) -> list:
    quotas = [total * f for f in fracs]
    counts = [int(math.floor(q)) for q in quotas]
    remainders = [q - c for q, c in zip(quotas, counts)]
    for idx in sorted(range(len(fracs)), key=lambda i: (-remainders[i], i)):
        if sum(counts) == total:
            break
        counts[idx] += 1
    return counts


def split_dataset(ds: Dataset, spec: SplitSpec) -> SplitDataset:
    """Stratified 54/13/33 split with per-class largest-remainder rounding.

    Per-class leftovers are steered toward whichever part still runs a
    global deficit so the overall sizes match the exact global quotas.
    Standardization (training statistics only) is applied here when the
    spec asks for it.
    """
    spec.validate()
    n = ds.X.shape[0]
    if n < 10:
        raise ContractError("need at least 10 instances to split")
    fracs = (spec.train_frac, spec.val_frac, spec.test_frac)
    rng = make_rng(spec.seed)

    parts = [[], [], []]
    if spec.stratified:
        targets = _largest_remainder(n, fracs)
        assigned = [0, 0, 0]
        for cls in range(ds.class_count):
            idx = np.flatnonzero(ds.y == cls)
            if idx.size < 3:
                raise ContractError(
                    f"class {cls} has {idx.size} instances; stratified "
                    f"splitting into 3 parts needs >= 3")
            idx = idx[rng.permutation(idx.size)]
            quotas = [idx.size * f for f in fracs]
            counts = [int(math.floor(q)) for q in quotas]
            remainders = [q - c for q, c in zip(quotas, counts)]
            leftover = idx.size - sum(counts)
            for part in sorted(range(3), key=lambda i: (-remainders[i], i)):
                while leftover > 0 and assigned[part] + counts[part] < targets[part]:
                    counts[part] += 1
                    leftover -= 1
            for part in range(3):  # residue if every preferred part hit target
                while leftover > 0 and counts[part] < idx.size:
                    counts[part] += 1
                    leftover -= 1
            start = 0
            for part in range(3):
                parts[part].extend(int(i) for i in idx[start:start + counts[part]])
                assigned[part] += counts[part]
                start += counts[part]
    else:
        order = rng.permutation(n)
        counts = _largest_remainder(n, fracs)
        start = 0
        for part in range(3):
            parts[part].extend(int(i) for i in order[start:start + counts[part]])
            start += counts[part]

    train_idx, val_idx, test_idx = (np.asarray(sorted(p), dtype=int) for p in parts)
    X_train = ds.X[train_idx].copy()
    X_val = ds.X[val_idx].copy()
    X_test = ds.X[test_idx].copy()
    if spec.standardize:
        mean = X_train.mean(axis=0)
        std = X_train.std(axis=0)
        std[std == 0.0] = 1.0
        X_train = (X_train - mean) / std
        X_val = (X_val - mean) / std
        X_test = (X_test - mean) / std
    return SplitDataset(
        X_train=X_train, Y_train=one_hot(ds.y[train_idx], ds.class_count),
        X_val=X_val, Y_val=one_hot(ds.y[val_idx], ds.class_count),
        X_test=X_test, Y_test=one_hot(ds.y[test_idx], ds.class_count),
        n_classes=ds.class_count, n_features=ds.X.shape[1],
        train_idx=train_idx, val_idx=val_idx, test_idx=test_idx,
    )


def generate_synthetic(n: int, f: int, classes: int, noise: float,
                       seed: int) -> Dataset:
    """Gaussian class-conditional blobs with round-robin labels."""
    if n < 10 * classes:
        raise ConfigError("synthetic data needs n >= 10 * classes")
    rng = make_rng(seed)
    centers = rng.normal(size=(classes, f))
    y = np.arange(n) % classes
    X = centers[y] + noise * rng.normal(size=(n, f))
    return Dataset(
        X=X, y=y, class_count=classes,
        feature_names=[f"f{i}" for i in range(f)],
        source_path=f"synthetic(n={n},f={f},classes={classes},"
                    f"noise={noise},seed={seed})",
        label_map=[str(c) for c in range(classes)],
    )
