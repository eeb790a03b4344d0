"""Dataset loaders, preprocessing and the synthetic nearest-centre dataset.

Every emitted feature lies in [0, 1]. Bundled copies of the datasets live in
``magnonrc/datasets`` and are located with :func:`dataset_path`.
"""

from __future__ import annotations

import csv
import datetime as _dt
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.targets = np.asarray(self.targets, dtype=int)
        if len(self.features) != len(self.targets):
            raise DataError("feature and target counts differ")
        if not np.all(np.isfinite(self.features)):
            raise DataError("non-finite features")

    def __len__(self):
        return len(self.targets)

    @property
    def n_classes(self):
        return int(self.targets.max()) + 1 if len(self) else 0

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# {self.meta}\n")
            w = csv.writer(fh)
            w.writerow([f"f{k}" for k in range(self.features.shape[1])] + ["target"])
            for x, y in zip(self.features, self.targets):
                w.writerow([repr(float(v)) for v in x] + [int(y)])


@dataclass
class SequentialDataset:
    """Per-sample ordered inputs: ``sequences[n, k]`` is the value (or pair) fed in interval ``k``."""

    sequences: np.ndarray
    targets: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sequences = np.asarray(self.sequences, dtype=float)
        self.targets = np.asarray(self.targets, dtype=int)
        if len(self.sequences) != len(self.targets):
            raise DataError("sequence and target counts differ")

    def __len__(self):
        return len(self.targets)

    @property
    def flat(self) -> np.ndarray:
        return self.sequences.reshape(len(self), -1)

    def as_dataset(self) -> Dataset:
        return Dataset(self.flat, self.targets, dict(self.meta))


def dataset_path(name: str) -> Path:
    return Path(str(resources.files("magnonrc") / "datasets" / name))


def _read_rows(path, header, delimiter=","):
    with open(path, newline="") as fh:
        if delimiter is None:
            rows = [line.split() for line in fh if line.strip()]
        else:
            rows = [r for r in csv.reader(fh, delimiter=delimiter) if r and any(c.strip() for c in r)]
    if header is None:
        # auto-detect: a header row has a non-numeric field where data rows are numeric
        header = bool(rows) and not _is_number(rows[0][-1]) and len(rows) > 1 and _is_number(rows[1][-1])
    return rows[1:] if header else rows


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def minmax(x) -> np.ndarray:
    """Rescale to [0, 1]; a degenerate range maps to 0.5."""
    x = np.asarray(x, dtype=float)
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.full_like(x, 0.5)
    return (x - lo) / (hi - lo)


def scale_to_max(x, axis=0) -> np.ndarray:
    """Divide by the maximum along ``axis`` (columns whose max is 0 are left at 0)."""
    x = np.asarray(x, dtype=float)
    mx = x.max(axis=axis, keepdims=True)
    return np.divide(x, mx, out=np.zeros_like(x), where=mx != 0)


# ---------------------------------------------------------------------------
# Stock closes
# ---------------------------------------------------------------------------

def _parse_date(s):
    s = s.strip()
    for fmt in ("%Y-%m-%d", "%m/%d/%Y", "%Y/%m/%d", "%d.%m.%Y"):
        try:
            return _dt.datetime.strptime(s, fmt).date()
        except ValueError:
            pass
    raise DataError(f"unparseable date {s!r}")


def stock_from_closes(closes, dates=None) -> SequentialDataset:
    closes = np.asarray(closes, dtype=float)
    if len(closes) < 3:
        raise DataError("need at least 3 closes")
    if np.any(closes <= 0) or not np.all(np.isfinite(closes)):
        raise DataError("closes must be positive")
    if dates is not None and any(b <= a for a, b in zip(dates, dates[1:])):
        raise DataError("dates must be strictly increasing")
    pct = np.diff(closes) / closes[:-1]
    scaled = minmax(pct)
    # target for day i is the sign of the move on day i+1; the last day has none
    targets = (pct[1:] > 0).astype(int)
    return SequentialDataset(scaled[:-1, None], targets,
                             {"source": "stock", "pct": pct[:-1], "n_closes": len(closes)})


def load_stock(path, header=None, date_col=0, close_col=-1) -> SequentialDataset:
    """Daily closes CSV (date, ..., close) -> one scaled percentage move per day.

    Rows are consecutive days and are meant to be fed to a reservoir in order.
    """
    rows = _read_rows(path, header)
    dates = [_parse_date(r[date_col]) for r in rows]
    try:
        closes = [float(r[close_col]) for r in rows]
    except ValueError as err:
        raise DataError(f"bad close value: {err}") from None
    ds = stock_from_closes(closes, dates)
    ds.meta.update(path=str(path), first=str(dates[0]), last=str(dates[-1]))
    return ds


# ---------------------------------------------------------------------------
# Iris
# ---------------------------------------------------------------------------

IRIS_FEATURES = ("sepal_length", "sepal_width", "petal_length", "petal_width")
IRIS_CLASSES = ("setosa", "versicolor", "virginica")
_CLASS_ALIASES = {"veriscolor": "versicolor", "viginica": "virginica"}
IRIS_SUBSETS = {
    "setosa/versicolor": ("setosa", "versicolor"),
    "versicolor/virginica": ("versicolor", "virginica"),
    "all": IRIS_CLASSES,
}


def _iris_class(name):
    n = name.strip().lower().removeprefix("iris-")
    n = _CLASS_ALIASES.get(n, n)
    if n not in IRIS_CLASSES:
        raise DataError(f"unknown iris class {name!r}")
    return n


def load_iris(path=None, classes="setosa/versicolor", feature_pair=("petal_length", "petal_width"),
              header=None) -> Dataset:
    """UCI iris table -> (length, 1 - width) pairs for the two input channels.

    Features are scaled by their maximum over the whole table before the class
    subset is taken; any feature whose name contains ``width`` is inverted.
    """
    path = dataset_path("iris.data") if path is None else path
    rows = _read_rows(path, header)
    if isinstance(classes, str):
        if classes not in IRIS_SUBSETS:
            raise DataError(f"unknown class subset {classes!r}")
        wanted = IRIS_SUBSETS[classes]
    else:
        wanted = tuple(_iris_class(c) for c in classes)
    cols = []
    for f in feature_pair:
        if f not in IRIS_FEATURES:
            raise DataError(f"unknown iris feature {f!r}")
        cols.append(IRIS_FEATURES.index(f))
    X = np.array([[float(v) for v in r[:4]] for r in rows])
    labels = [_iris_class(r[4]) for r in rows]
    X = scale_to_max(X)[:, cols]
    for k, f in enumerate(feature_pair):
        if "width" in f:
            X[:, k] = 1.0 - X[:, k]
    keep = np.array([lab in wanted for lab in labels])
    y = np.array([wanted.index(lab) for lab in labels if lab in wanted])
    return Dataset(X[keep], y, {"source": "iris", "classes": list(wanted), "features": list(feature_pair)})


# ---------------------------------------------------------------------------
# Statlog German credit
# ---------------------------------------------------------------------------

def load_statlog(path=None, header=False, min_distinct=3, expected=12, max_samples=None) -> SequentialDataset:
    """24 numeric attributes + label (1 good, 2 bad) -> six (a, b) pairs per applicant.

    Attribute columns with at least ``min_distinct`` distinct values are kept
    in file order, scaled by their maximum and paired (1,2), (3,4), ...
    """
    path = dataset_path("german.data-numeric") if path is None else path
    rows = _read_rows(path, header, delimiter=None)
    table = np.array([[float(v) for v in r] for r in rows])
    if table.shape[1] != 25:
        raise DataError(f"expected 25 columns, found {table.shape[1]}")
    attrs, label = table[:, :24], table[:, 24].astype(int)
    if not set(np.unique(label)) <= {1, 2}:
        raise DataError("labels must be 1 (good) or 2 (bad)")
    keep = [k for k in range(24) if len(np.unique(attrs[:, k])) >= min_distinct]
    if len(keep) != expected:
        raise DataError(f"numeric-column rule selected {len(keep)} columns, expected {expected}")
    X = scale_to_max(attrs[:, keep])
    if max_samples is not None:
        X, label = X[:max_samples], label[:max_samples]
    seq = X.reshape(len(X), expected // 2, 2)
    return SequentialDataset(seq, label - 1, {"source": "statlog", "columns": [k + 1 for k in keep]})


# Integer codes for the qualitative attributes of the original table (A11 -> 1, ...).
_STATLOG_ORDINAL = [1, 2, 3, 5, 6, 7, 8, 9, 10, 11, 12, 13]


def statlog_numeric_from_original(src, dst):
    """Write a 25-column all-numeric table derived from the original 21-column file.

    Columns 1-12 are the ordinal/numeric attributes 1, 2, 3, 5-13 of the
    original (qualitative codes ``Axy`` become the integer ``y``, credit history
    keeps its 0-based code). Columns 13-24 are 0/1 indicators: more than one
    existing credit, two dependants, telephone, foreign worker, no other
    instalment plans, owns housing, rents housing, skilled job, unskilled or
    unemployed, purpose new car, purpose used car, purpose radio/television.
    Column 25 is the label (1 good, 2 bad).
    """
    out = []
    with open(src) as fh:
        for line in fh:
            r = line.split()
            if not r:
                continue
            if len(r) != 21:
                raise DataError(f"expected 21 fields in original Statlog row, got {len(r)}")
            vals = [int(v[-1]) if v.startswith("A") else int(v) for v in (r[a - 1] for a in _STATLOG_ORDINAL)]
            flags = [
                int(r[15]) > 1,
                int(r[17]) == 2,
                r[18] == "A192",
                r[19] == "A201",
                r[13] == "A143",
                r[14] == "A152",
                r[14] == "A151",
                r[16] == "A173",
                r[16] in ("A171", "A172"),
                r[3] == "A40",
                r[3] == "A41",
                r[3] == "A43",
            ]
            out.append(vals + [int(f) for f in flags] + [int(r[20])])
    with open(dst, "w") as fh:
        for row in out:
            fh.write(" ".join(f"{v:4d}" for v in row) + "\n")
    return len(out)


# ---------------------------------------------------------------------------
# Synthetic nearest-centre data
# ---------------------------------------------------------------------------

def nearest_center(points, centers) -> np.ndarray:
    d = np.linalg.norm(np.asarray(points)[:, None, :] - np.asarray(centers)[None, :, :], axis=-1)
    return np.argmin(d, axis=1)  # ties resolve to the lowest index


def gen_dimred(seed=0, n_samples=150, n_classes=3, n_features=4, min_center_distance=0.3) -> Dataset:
    if n_samples < n_classes:
        raise DataError("need at least one sample per class")
    rng = np.random.default_rng(seed)
    while True:
        centers = rng.uniform(0, 1, (n_classes, n_features))
        d = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
        if d[np.triu_indices(n_classes, 1)].min() >= min_center_distance:
            break
    X = rng.uniform(0, 1, (n_samples, n_features))
    return Dataset(X, nearest_center(X, centers),
                   {"source": "dimred", "seed": seed, "centers": centers.tolist()})


def pairs(features: np.ndarray) -> np.ndarray:
    """(n, 2k) -> (n, k, 2) consecutive feature pairs."""
    f = np.asarray(features)
    if f.shape[1] % 2:
        raise DataError("feature count must be even to pair")
    return f.reshape(len(f), -1, 2)


def stratified_subset(targets: Sequence[int], n: int, seed: int = 0) -> np.ndarray:
    """Sorted indices of a class-proportional random subset of size about ``n``."""
    targets = np.asarray(targets)
    rng = np.random.default_rng(seed)
    idx = []
    for c in np.unique(targets):
        members = np.flatnonzero(targets == c)
        k = int(round(n * len(members) / len(targets)))
        idx.append(rng.choice(members, size=min(k, len(members)), replace=False))
    return np.sort(np.concatenate(idx))
