"""Datasets: the heteroscedastic 1-D synthetic benchmark, CSV tables, z-scoring."""

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

DENSE, SPARSE = "dense", "sparse"
SPARSE_START = 6.0

N_DENSE_POOL, N_SPARSE_POOL = 1950, 50
N_DENSE_TRAIN, N_SPARSE_TRAIN = 900, 20


class DataError(ValueError):
    """Raised for unreadable or malformed input data."""


@dataclass(frozen=True)
class Normalization:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    def as_meta(self):
        return {
            "x_mean": ",".join(repr(float(v)) for v in self.x_mean),
            "x_std": ",".join(repr(float(v)) for v in self.x_std),
            "y_mean": repr(float(self.y_mean)),
            "y_std": repr(float(self.y_std)),
        }

    @classmethod
    def from_meta(cls, meta):
        return cls(
            x_mean=np.array([float(v) for v in meta["x_mean"].split(",")]),
            x_std=np.array([float(v) for v in meta["x_std"].split(",")]),
            y_mean=float(meta["y_mean"]),
            y_std=float(meta["y_std"]),
        )

    def apply_inputs(self, x):
        return (np.asarray(x, dtype=float) - self.x_mean) / self.x_std

    def apply_targets(self, y):
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_std

    def denormalize_targets(self, y):
        return np.asarray(y, dtype=float) * self.y_std + self.y_mean


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray                       # (N, d)
    targets: np.ndarray                      # (N,)
    region_tags: np.ndarray | None = None    # (N,) of DENSE / SPARSE
    normalization: Normalization | None = None

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs[:, None]
        targets = np.asarray(self.targets, dtype=float).ravel()
        if inputs.shape[0] != targets.shape[0]:
            raise ValueError("inputs and targets differ in length")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)
        if self.region_tags is not None:
            tags = np.asarray(self.region_tags, dtype=object)
            if tags.shape != targets.shape:
                raise ValueError("region_tags length mismatch")
            object.__setattr__(self, "region_tags", tags)
        if self.normalization is not None:
            if np.any(self.normalization.x_std <= 0) or self.normalization.y_std <= 0:
                raise ValueError("normalization std entries must be positive")

    def __len__(self):
        return self.targets.shape[0]

    def subset(self, idx):
        return Dataset(
            self.inputs[idx],
            self.targets[idx],
            None if self.region_tags is None else self.region_tags[idx],
            self.normalization,
        )


def region_of(x):
    x = np.asarray(x, dtype=float)
    return np.where(x <= SPARSE_START, DENSE, SPARSE).astype(object)


def synthetic_target(x, eps, u):
    """``sin(4x)^3 + x^2/10 + 2 eps + 0.1 u``."""
    x = np.asarray(x, dtype=float)
    return np.sin(4.0 * x) ** 3 + x * x / 10.0 + 2.0 * eps + 0.1 * u


def gen_synthetic(seed=0):
    """Generate the imbalanced 1-D benchmark and split it.

    1950 points are uniform on [-3, 6] and 50 on [6, 10]; noise ``eps`` is
    Gaussian with standard deviation ``0.05 |7 - |x||`` and ``u`` is uniform
    on [-1, 1]. Training takes 900 dense and 20 sparse points; everything
    else is test. Returns ``(train, test)`` in raw units.
    """
    rng = np.random.default_rng(seed)
    x = np.concatenate([
        rng.uniform(-3.0, SPARSE_START, N_DENSE_POOL),
        rng.uniform(SPARSE_START, 10.0, N_SPARSE_POOL),
    ])
    eps = rng.normal(0.0, 1.0, x.size) * 0.05 * np.abs(7.0 - np.abs(x))
    u = rng.uniform(-1.0, 1.0, x.size)
    y = synthetic_target(x, eps, u)

    dense_idx = np.arange(N_DENSE_POOL)
    sparse_idx = np.arange(N_DENSE_POOL, x.size)
    train_idx = np.sort(np.concatenate([
        rng.choice(dense_idx, N_DENSE_TRAIN, replace=False),
        rng.choice(sparse_idx, N_SPARSE_TRAIN, replace=False),
    ]))
    test_mask = np.ones(x.size, dtype=bool)
    test_mask[train_idx] = False
    test_idx = np.flatnonzero(test_mask)

    full = Dataset(x[:, None], y, region_of(x))
    return full.subset(train_idx), full.subset(test_idx)


def make_ood_inputs(seed, n):
    """``n`` 1-D inputs uniform on [-8, -5] U [12, 15], outside the training support."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    left = rng.random(n) < 0.5
    x = np.where(left, rng.uniform(-8.0, -5.0, n), rng.uniform(12.0, 15.0, n))
    return x[:, None]


def zscore_fit_apply(train: Dataset, *others: Dataset):
    """Fit z-score statistics on ``train`` and apply them to every split.

    Returns the list of normalized datasets (``train`` first); each carries
    the fitted :class:`Normalization` for later de-normalization.
    """
    if len(train) == 0:
        raise DataError("cannot fit normalization on an empty dataset")
    x_mean = train.inputs.mean(axis=0)
    x_std = train.inputs.std(axis=0)
    y_mean = float(train.targets.mean())
    y_std = float(train.targets.std())
    if np.any(x_std == 0):
        bad = np.flatnonzero(x_std == 0).tolist()
        raise DataError(f"zero-variance input feature(s) at column index {bad}")
    if y_std == 0:
        raise DataError("zero-variance target")
    norm = Normalization(x_mean, x_std, y_mean, y_std)
    return [
        replace(ds, inputs=norm.apply_inputs(ds.inputs),
                targets=norm.apply_targets(ds.targets), normalization=norm)
        for ds in (train, *others)
    ]


def load_csv(path, target_column):
    """Read a numeric CSV with a header row into a :class:`Dataset`.

    A column named ``region`` is taken as region tags rather than a feature.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if target_column not in header:
            raise DataError(f"{path}: target column {target_column!r} not in header {header}")
        t_col = header.index(target_column)
        r_col = header.index("region") if "region" in header else None
        feature_cols = [i for i in range(len(header)) if i not in (t_col, r_col)]
        rows, targets, tags = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            values = {}
            for i in (t_col, *feature_cols):
                try:
                    values[i] = float(row[i])
                except ValueError:
                    raise DataError(
                        f"{path}: row {lineno}, column {header[i]!r}: non-numeric value {row[i]!r}"
                    ) from None
            rows.append([values[i] for i in feature_cols])
            targets.append(values[t_col])
            if r_col is not None:
                tags.append(row[r_col].strip())
    if not targets:
        raise DataError(f"{path}: no data rows")
    inputs = np.array(rows, dtype=float).reshape(len(targets), len(feature_cols))
    return Dataset(inputs, np.array(targets), np.array(tags, dtype=object) if tags else None)


def write_csv(path, dataset: Dataset):
    """Write ``x`` (or ``x0..x{d-1}``), ``y`` and, when tagged, ``region`` columns."""
    d = dataset.inputs.shape[1]
    names = ["x"] if d == 1 else [f"x{i}" for i in range(d)]
    header = names + ["y"] + (["region"] if dataset.region_tags is not None else [])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(dataset)):
            row = [repr(float(v)) for v in dataset.inputs[i]] + [repr(float(dataset.targets[i]))]
            if dataset.region_tags is not None:
                row.append(dataset.region_tags[i])
            writer.writerow(row)
