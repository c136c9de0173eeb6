"""Synthetic generators, CSV ingestion, seeded permutation, standardization.

All randomness flows through the counter-based generator in ``rng`` so
datasets and stream orders are bit-identical across reruns.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, DomainError
from .losses import DataExample
from .rng import CounterRng

CLASSIFICATION = "classification"
REGRESSION = "regression"

#: Published (rows, features) per dataset; loads are audited against this
#: table when the dataset name matches (normalized to lowercase words).
KNOWN_SHAPES = {
    "toy classification": (10000, 2),
    "breast cancer": (569, 30),
    "pima indians": (768, 8),
    "cover type": (581012, 54),
    "boston housing": (506, 13),
    "california housing": (20640, 9),
}

#: Desk-scale default cap for the one oversized dataset (Cover Type).
DEFAULT_SUBSAMPLE_CAP = 50000


def _normalize_name(name: str) -> str:
    return " ".join(name.lower().replace("-", " ").replace("_", " ").split())


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray  # (T, d)
    targets: np.ndarray   # (T,)
    task: str
    name: str
    note: str = ""

    def __post_init__(self):
        features = np.array(self.features, dtype=float)
        targets = np.array(self.targets, dtype=float).reshape(-1)
        if features.ndim != 2 or features.shape[0] < 1:
            raise DataError("features must be a nonempty (T, d) matrix")
        if targets.size != features.shape[0]:
            raise DataError("targets length must equal the number of rows")
        if not (np.all(np.isfinite(features)) and np.all(np.isfinite(targets))):
            raise DataError("dataset contains NaN or infinite entries")
        if self.task == CLASSIFICATION:
            if not np.all(np.isin(targets, (-1.0, 1.0))):
                raise DataError("classification targets must be exactly +/-1")
        elif self.task != REGRESSION:
            raise DataError(f"unknown task {self.task!r}")
        features.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "targets", targets)

    @property
    def T(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def examples(self) -> list[DataExample]:
        return [DataExample(self.features[i], self.targets[i]) for i in range(self.T)]

    def head(self, n: int) -> "Dataset":
        n = min(n, self.T)
        return replace(self, features=self.features[:n], targets=self.targets[:n])


@dataclass(frozen=True)
class StreamConfig:
    seed: int = 0
    permute: bool = True
    standardize: bool = False
    subsample: int | None = None


def gen_toy_classification(n: int, seed: int) -> Dataset:
    """The 2-d toy stream: labels +1 with probability 2/3, and

        x | y=+1 ~ N((1, 1),  [[1, 1], [1, 3]])
        x | y=-1 ~ N((-1, -1), I2)

    sampled via the Cholesky factor of each covariance.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    rng = CounterRng(seed, "toy-classification")
    labels = np.where(rng.uniforms(n) < 2.0 / 3.0, 1.0, -1.0)
    z = rng.normals(2 * n).reshape(n, 2)
    chol_pos = np.array([[1.0, 0.0], [1.0, np.sqrt(2.0)]])  # L L^T = [[1,1],[1,3]]
    x_pos = np.array([1.0, 1.0]) + z @ chol_pos.T
    x_neg = np.array([-1.0, -1.0]) + z
    features = np.where(labels[:, None] > 0.0, x_pos, x_neg)
    return Dataset(features, labels, CLASSIFICATION, "toy-classification",
                   note=f"generated, seed={seed}")


def gen_iid_regression(n: int, theta_star, noise_sd: float, seed: int) -> Dataset:
    """i.i.d. regression stream: x ~ N(0, I_d), y = <theta*, x> + eps with
    eps ~ N(0, noise_sd^2)."""
    if n < 1:
        raise DomainError("n must be >= 1")
    if noise_sd < 0:
        raise DomainError("noise_sd must be >= 0")
    theta_star = np.asarray(theta_star, dtype=float).reshape(-1)
    d = theta_star.size
    rng = CounterRng(seed, "iid-regression")
    features = rng.normals(n * d).reshape(n, d)
    noise = noise_sd * rng.normals(n) if noise_sd > 0 else np.zeros(n)
    targets = features @ theta_star + noise
    return Dataset(features, targets, REGRESSION, "iid-regression",
                   note=f"generated, seed={seed}, noise_sd={noise_sd}")


@dataclass(frozen=True)
class CsvSchema:
    """How to read a CSV: which column is the label, what counts as the
    positive class (classification only), delimiter, and header presence."""

    label: str | int
    positive_label: str | None = None
    delimiter: str = ","
    has_header: bool = True


def load_csv(path, schema: CsvSchema, name: str | None = None) -> Dataset:
    """RFC-4180-style reader; '.' decimal separator.

    Features are all non-label columns in file order.  With a
    ``positive_label`` the task is classification and labels map to +1 on
    an exact string match, -1 otherwise; without one the label column must
    parse as floats (regression).  Unparseable or missing cells are hard
    errors with their row and column; no imputation.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter=schema.delimiter))
    rows = [row for row in rows if row]
    if not rows:
        raise DataError(f"{path}: empty file")

    header: list[str] | None = None
    if schema.has_header:
        header, rows = rows[0], rows[1:]
        if not rows:
            raise DataError(f"{path}: no data rows after header")

    if isinstance(schema.label, int):
        label_idx = schema.label
        if not (0 <= label_idx < len(rows[0])):
            raise DataError(f"{path}: label column index {label_idx} out of range")
    else:
        if header is None:
            raise DataError("label column by name requires a header")
        try:
            label_idx = header.index(schema.label)
        except ValueError:
            raise DataError(f"{path}: no column named {schema.label!r}") from None

    width = len(rows[0])
    features = np.empty((len(rows), width - 1))
    targets = np.empty(len(rows))
    offset = 1 if schema.has_header else 0
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {i + offset + 1} has {len(row)} cells, expected {width}")
        col_out = 0
        for j, cell in enumerate(row):
            text = cell.strip()
            if text == "":
                raise DataError(f"{path}: missing value at row {i + offset + 1}, column {j + 1}")
            if j == label_idx:
                if schema.positive_label is not None:
                    targets[i] = 1.0 if text == schema.positive_label else -1.0
                else:
                    try:
                        targets[i] = float(text)
                    except ValueError:
                        raise DataError(
                            f"{path}: unparseable label at row {i + offset + 1}, "
                            f"column {j + 1}: {text!r}") from None
            else:
                try:
                    features[i, col_out] = float(text)
                except ValueError:
                    raise DataError(
                        f"{path}: unparseable cell at row {i + offset + 1}, "
                        f"column {j + 1}: {text!r}") from None
                col_out += 1

    task = CLASSIFICATION if schema.positive_label is not None else REGRESSION
    ds_name = name if name is not None else str(path)
    ds = Dataset(features, targets, task, ds_name, note=f"loaded from {path}")
    normalized = _normalize_name(ds_name)
    if normalized in KNOWN_SHAPES:
        expected = KNOWN_SHAPES[normalized]
        if (ds.T, ds.d) != expected:
            raise DataError(
                f"{ds_name}: shape ({ds.T}, {ds.d}) does not match the published "
                f"table entry {expected}")
    return ds


def prepare_stream(ds: Dataset, cfg: StreamConfig) -> Dataset:
    """Permute (seeded Fisher-Yates), then optionally keep the first
    ``subsample`` rows, then optionally z-score each feature with
    statistics of the resulting dataset (computed before streaming;
    zero-variance features are centered only)."""
    features, targets = ds.features, ds.targets
    note = ds.note
    if cfg.permute:
        perm = CounterRng(cfg.seed, "stream-permutation").permutation(ds.T)
        features, targets = features[perm], targets[perm]
        note += f"; permuted seed={cfg.seed}"
    if cfg.subsample is not None:
        if cfg.subsample < 1 or cfg.subsample > ds.T:
            raise DomainError(f"subsample must be in [1, {ds.T}]")
        features, targets = features[: cfg.subsample], targets[: cfg.subsample]
        note += f"; subsampled to {cfg.subsample}"
    if cfg.standardize:
        mean = features.mean(axis=0)
        sd = features.std(axis=0)
        scale = np.where(sd > 0.0, sd, 1.0)
        features = (features - mean) / scale
        note += "; standardized"
    return Dataset(features, targets, ds.task, ds.name, note=note)
