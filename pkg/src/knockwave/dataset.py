"""
Spectra, labels, fold plans and column scaling.

The on-disk layout is one spectrum per CSV row, ``label,v1,...,vm``.  For
the bacterial Raman data the label column holds the isolate id (0-29); the
8-class and 2-class tasks are derived through an isolate grouping, which
can be overridden with ``label_map``.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

WAVENUMBER_RANGE = (381.98, 1792.4)

TASKS = {"isolate-30": 30, "antibiotic-8": 8, "resistance-2": 2}

# Isolate id -> empiric treatment group.  This is a best-effort default for
# the public bacteria-ID release and is not checked against it here; pass
# ``label_map`` built from the release's own grouping table when reproducing.
ISOLATE_TO_ANTIBIOTIC = {
    0: 7, 1: 7, 2: 0, 3: 0, 4: 0, 5: 6, 6: 5, 7: 5, 8: 0, 9: 0,
    10: 0, 11: 0, 12: 2, 13: 2, 14: 3, 15: 3, 16: 1, 17: 1, 18: 3, 19: 0,
    20: 3, 21: 3, 22: 0, 23: 4, 24: 4, 25: 5, 26: 5, 27: 5, 28: 5, 29: 5,
}
ANTIBIOTIC_NAMES = [f"treatment-{c}" for c in range(8)]

# S. aureus isolates only: MSSA -> 0, MRSA -> 1; every other isolate is dropped.
ISOLATE_TO_RESISTANCE = {14: 0, 15: 0, 18: 0, 16: 1, 17: 1}
RESISTANCE_NAMES = ["MSSA", "MRSA"]


def default_label_map(task):
    if task == "isolate-30":
        return {i: i for i in range(30)}
    if task == "antibiotic-8":
        return dict(ISOLATE_TO_ANTIBIOTIC)
    if task == "resistance-2":
        return dict(ISOLATE_TO_RESISTANCE)
    raise ValueError(f"unknown task {task!r}; expected one of {sorted(TASKS)}")


def default_axis(m):
    """Evenly spaced wavenumber grid (cm^-1) for an m-point spectrum."""
    return np.linspace(WAVENUMBER_RANGE[0], WAVENUMBER_RANGE[1], m)


@dataclass
class SignalMatrix:
    values: np.ndarray
    axis: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] < 2:
            raise ValueError(f"signal matrix must be n x m with m >= 2, got {self.values.shape}")
        if self.axis is None:
            self.axis = default_axis(self.values.shape[1])
        self.axis = np.asarray(self.axis, dtype=float)
        if self.axis.shape != (self.values.shape[1],):
            raise ValueError("axis length does not match the number of samples per spectrum")
        if np.any(np.diff(self.axis) <= 0):
            raise ValueError("axis must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("signal matrix contains non-finite values")

    @property
    def shape(self):
        return self.values.shape


@dataclass
class LabelSet:
    task: str
    labels: np.ndarray
    class_names: list = field(default_factory=list)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        C = len(self.class_names) if self.class_names else int(self.labels.max()) + 1
        if not self.class_names:
            self.class_names = [str(c) for c in range(C)]
        if self.labels.min() < 0 or self.labels.max() >= C:
            raise ValueError(f"labels must lie in 0..{C - 1}")
        missing = np.setdiff1d(np.arange(C), self.labels)
        if missing.size:
            raise ValueError(f"classes {missing.tolist()} have no rows")

    @property
    def n_classes(self):
        return len(self.class_names)


@dataclass
class FoldPlan:
    """``folds[i]`` is the test fold of sample ``i``."""

    folds: np.ndarray
    k: int
    seed: int

    def test_index(self, f):
        return np.flatnonzero(self.folds == f)

    def train_index(self, f):
        return np.flatnonzero(self.folds != f)

    def split(self):
        for f in range(self.k):
            yield self.train_index(f), self.test_index(f)

    def to_csv(self, path):
        write_rows_atomic(path, ["index", "fold"],
                          ([i, int(f)] for i, f in enumerate(self.folds)))

    @classmethod
    def from_csv(cls, path, seed=-1):
        data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=int, ndmin=2)
        folds = np.empty(data.shape[0], dtype=int)
        folds[data[:, 0]] = data[:, 1]
        return cls(folds, int(folds.max()) + 1, seed)


@dataclass
class ScalingStats:
    mean: np.ndarray
    std: np.ndarray
    flagged: np.ndarray

    @property
    def dim(self):
        return self.mean.size


def _class_names(task, n_classes):
    if task == "antibiotic-8":
        return list(ANTIBIOTIC_NAMES)
    if task == "resistance-2":
        return list(RESISTANCE_NAMES)
    return [str(c) for c in range(n_classes)]


def _read_csv(path, header):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if header:
            next(reader, None)
        for lineno, row in enumerate(reader, start=2 if header else 1):
            if not row or all(not c.strip() for c in row):
                continue
            rows.append((lineno, row))
    return rows


def load_dataset(path, task="isolate-30", *, header=False, labels_path=None, label_map=None,
                 axis=None):
    """Read spectra and derive the labels for one classification task.

    Parameters
    ----------
    path : str
        CSV with one spectrum per row, ``label,v1,...,vm``.  When
        ``labels_path`` is given the CSV holds intensities only and labels
        are read one integer per line from the sidecar file.  ``.npz`` files
        with ``values`` and ``labels`` arrays are also accepted.
    task : {"isolate-30", "antibiotic-8", "resistance-2"}
    label_map : dict, optional
        Source label -> task class.  Sources absent from the map are
        dropped and the class count becomes ``max(class) + 1``.  Defaults
        to the isolate groupings of the Raman data.

    Returns
    -------
    (SignalMatrix, LabelSet)
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {sorted(TASKS)}")
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such data file: {path}")

    if str(path).endswith(".npz"):
        with np.load(path) as z:
            values = np.asarray(z["values"], dtype=float)
            raw_labels = np.asarray(z["labels"]).astype(int)
            if axis is None and "axis" in z:
                axis = z["axis"]
    else:
        rows = _read_csv(path, header)
        if not rows:
            raise ValueError(f"{path}: no rows")
        width = len(rows[0][1])
        for lineno, row in rows:
            if len(row) != width:
                raise ValueError(f"{path}:{lineno}: ragged row ({len(row)} columns, expected {width})")
        try:
            table = np.array([[float(c) for c in row] for _, row in rows])
        except ValueError as exc:
            raise ValueError(f"{path}: unparsable value ({exc})") from None
        if labels_path is not None:
            values = table
            raw_labels = np.loadtxt(labels_path, dtype=float, ndmin=1)
            if raw_labels.size != values.shape[0]:
                raise ValueError(f"{labels_path}: {raw_labels.size} labels for {values.shape[0]} rows")
        else:
            raw_labels, values = table[:, 0], table[:, 1:]
        if not np.all(np.isfinite(raw_labels)) or np.any(raw_labels != np.round(raw_labels)):
            raise ValueError(f"{path}: labels must be integers")
        raw_labels = raw_labels.astype(int)

    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise ValueError(f"{path}: non-finite value at row {bad[0]}, column {bad[1]}")

    mapping = default_label_map(task) if label_map is None else {int(k): v for k, v in label_map.items()}
    unknown = np.setdiff1d(np.unique(raw_labels), list(mapping))
    if task == "isolate-30" and label_map is None and unknown.size:
        raise ValueError(f"{path}: labels {unknown.tolist()} outside task range 0..29")
    keep = np.array([lab in mapping and mapping[lab] is not None for lab in raw_labels])
    if not keep.any():
        raise ValueError(f"{path}: no rows belong to task {task}")
    labels = np.array([mapping[lab] for lab in raw_labels[keep]], dtype=int)
    if label_map is None:
        C = TASKS[task]
        names = _class_names(task, C)
    else:
        C = int(labels.max()) + 1
        names = [str(c) for c in range(C)]
    if labels.min() < 0 or labels.max() >= C:
        raise ValueError(f"label map produces classes outside 0..{C - 1}")
    signals = SignalMatrix(values[keep], axis)
    return signals, LabelSet(task, labels, names)


def make_folds(n, k=5, seed=0):
    """Random partition of ``range(n)`` into ``k`` folds whose sizes differ by at most one."""
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    if k > n:
        raise ValueError(f"cannot split {n} samples into {k} folds")
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=int)
    folds[rng.permutation(n)] = np.arange(n) % k
    return FoldPlan(folds, k, seed)


def stratified_folds(y, k, seed=0):
    """Fold ids with each class spread as evenly as possible across folds."""
    y = np.asarray(y)
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    if k > y.size:
        raise ValueError(f"cannot split {y.size} samples into {k} folds")
    rng = np.random.default_rng(seed)
    folds = np.empty(y.size, dtype=int)
    offset = 0
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        # continue the round-robin across classes so fold sizes stay balanced
        folds[idx] = (offset + np.arange(idx.size)) % k
        offset += idx.size
    return folds


def standardize(features, stats=None):
    """Centre and scale columns to unit sample variance.

    With ``stats=None`` the statistics are estimated from ``features``;
    otherwise the supplied (training) statistics are applied unchanged.
    Columns with standard deviation below 1e-12 are centred only.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    if stats is None:
        if X.shape[0] < 2:
            raise ValueError("need at least two rows to estimate scaling statistics")
        mean = X.mean(axis=0)
        std = X.std(axis=0, ddof=1)
        stats = ScalingStats(mean, std, std < 1e-12)
    elif stats.dim != X.shape[1]:
        raise ValueError(f"scaling stats have dimension {stats.dim}, matrix has {X.shape[1]} columns")
    scale = np.where(stats.flagged, 1.0, stats.std)
    return (X - stats.mean) / scale, stats


def write_rows_atomic(path, header, rows):
    """Write CSV rows via a temporary file and rename."""
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow(header)
        w.writerows(rows)
    os.replace(tmp, path)


def save_signal_csv(path, values, labels=None, fmt="%.17g"):
    """Write ``label,v1,...`` rows (label column omitted when ``labels`` is None)."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[None, :]

    def rows():
        for i, row in enumerate(values):
            cells = [fmt % v for v in row]
            yield cells if labels is None else [str(int(labels[i]))] + cells

    write_rows_atomic(path, None, rows())


def read_matrix_csv(path, with_labels=True):
    """Read a ``label,v1,...`` (or bare) numeric CSV; returns ``(values, labels|None)``."""
    table = np.loadtxt(path, delimiter=",", ndmin=2)
    if table.size == 0:
        raise ValueError(f"{path}: no rows")
    if with_labels:
        return table[:, 1:], table[:, 0].astype(int)
    return table, None
