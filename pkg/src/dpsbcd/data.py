"""Synthetic clustered classification data, normalization, and CSV persistence.

The generator produces a Madelon-style problem: per class, a small number of
Gaussian clusters centered at scaled hypercube vertices, a block of redundant
features built as random linear combinations of the informative ones, and
the remainder filled with noise. Rows are then normalized to a common
Euclidean norm, which makes the squared-norm bound on network inputs exact
rather than merely observed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.datasets import make_classification

from .numerics import RngState, derive_seed

__all__ = [
    "Dataset",
    "Batches",
    "generate",
    "split_and_batch",
    "one_hot",
    "save_csv",
    "load_csv",
]


@dataclass
class Dataset:
    features: np.ndarray  # (n, dims) float64 rows
    labels: np.ndarray  # (n,) integer class ids
    split: np.ndarray  # (n,) "train" / "test"
    x_bound: float = 1.0  # enforced bound on squared row norms

    def __post_init__(self):
        n = self.features.shape[0]
        if self.labels.shape != (n,) or self.split.shape != (n,):
            raise ValueError("features, labels and split must agree on row count")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dims(self) -> int:
        return self.features.shape[1]

    @property
    def classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def columns(self, idx) -> np.ndarray:
        """Feature columns (dims x batch) for the given row indices."""
        return self.features[idx].T.copy()


def generate(
    n: int = 6000,
    dims: int = 20,
    classes: int = 5,
    seed: int = 0,
    train_frac: float = 0.8,
    class_sep: float = 2.0,
    informative: int | None = None,
    redundant: int | None = None,
    feature_scale: float = 1.0,
) -> Dataset:
    """Balanced synthetic classification dataset with norm-bounded rows.

    Exactly n / classes rows per class; two clusters per class at scaled
    hypercube vertices, a fixed fraction of redundant linear-combination
    features, and no label noise (label noise would unbalance the classes).

    Rows are normalized to Euclidean norm feature_scale, so the squared-norm
    input bound is exactly feature_scale**2 (recorded in x_bound). The
    default 1.0 gives unit-norm rows; the benchmark feature ranges that this
    generator stands in for are hundred-scale, so end-to-end noisy-training
    studies use a larger scale to land in a comparable signal regime.
    """
    if n % classes != 0:
        raise ValueError(f"n={n} must be divisible by classes={classes}")
    if not 0 < train_frac < 1:
        raise ValueError("train_frac must be in (0, 1)")
    if dims < 3:
        raise ValueError("dims must be >= 3")
    # Two clusters per class need 2 * classes distinct hypercube vertices.
    min_informative = int(np.ceil(np.log2(2 * classes)))
    if informative is None:
        informative = max(dims // 2, min_informative)
    if redundant is None:
        redundant = min(dims // 4, dims - informative)
    if informative < min_informative or informative + redundant > dims:
        raise ValueError(
            f"degenerate feature split: informative={informative}, "
            f"redundant={redundant}, dims={dims}, classes={classes}"
        )
    features, labels = make_classification(
        n_samples=n,
        n_features=dims,
        n_informative=informative,
        n_redundant=redundant,
        n_classes=classes,
        n_clusters_per_class=2,
        class_sep=class_sep,
        flip_y=0.0,
        shuffle=True,
        random_state=derive_seed(seed, "features") % (2**32),
    )
    if feature_scale <= 0:
        raise ValueError("feature_scale must be > 0")
    norms = np.linalg.norm(features, axis=1)
    norms[norms == 0] = 1.0
    features = feature_scale * features / norms[:, None]

    rng = RngState(derive_seed(seed, "split"))
    order = rng.permutation(n)
    n_train = int(round(train_frac * n))
    split = np.full(n, "test", dtype="<U5")
    split[order[:n_train]] = "train"
    return Dataset(features, labels.astype(np.int64), split, x_bound=feature_scale**2)


@dataclass
class Batches:
    """Fixed batch partition of the train rows, identical across epochs."""

    train_batches: list  # list of index arrays into the dataset rows
    test_idx: np.ndarray

    @property
    def batch_count(self) -> int:
        return len(self.train_batches)

    @property
    def train_idx(self) -> np.ndarray:
        return np.concatenate(self.train_batches)


def split_and_batch(ds: Dataset, b: int, seed: int, train_frac: float = 0.8) -> Batches:
    """One seeded shuffle of the train rows, then contiguous slices of size b.

    Rows tagged in ds.split are honored; train_frac is only used to tag a
    dataset without tags. The batch membership of every row is fixed for the
    whole run, so the partition can be replayed from (dataset, b, seed).
    """
    if ds.split.size and set(np.unique(ds.split)) <= {"train", "test"} and (ds.split == "train").any():
        train_rows = np.flatnonzero(ds.split == "train")
        test_rows = np.flatnonzero(ds.split == "test")
    else:
        rng0 = RngState(derive_seed(seed, "split"))
        order = rng0.permutation(ds.n)
        n_train = int(round(train_frac * ds.n))
        train_rows, test_rows = order[:n_train], order[n_train:]
    if b < 1 or len(train_rows) % b != 0:
        raise ValueError(
            f"batch size {b} must divide the {len(train_rows)} train rows "
            f"(remainder {len(train_rows) % b if b >= 1 else len(train_rows)})"
        )
    rng = RngState(derive_seed(seed, "batches"))
    shuffled = train_rows[rng.permutation(len(train_rows))]
    batches = [shuffled[i : i + b] for i in range(0, len(shuffled), b)]
    return Batches(batches, np.sort(test_rows))


def one_hot(labels, classes: int) -> np.ndarray:
    """One-hot target columns (classes x n) for squared-loss training."""
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((classes, labels.size))
    out[labels, np.arange(labels.size)] = 1.0
    return out


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------


def save_csv(ds: Dataset, path, manifest_comment: str | None = None) -> None:
    """Write `f0,...,fD,label,split` rows at full float precision."""
    header = ",".join([f"f{i}" for i in range(ds.dims)] + ["label", "split"])
    lines = [header]
    for row, label, split in zip(ds.features, ds.labels, ds.split):
        lines.append(",".join([repr(float(v)) for v in row] + [str(int(label)), str(split)]))
    if manifest_comment:
        lines.append(manifest_comment)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_csv(path) -> Dataset:
    """Read a dataset CSV, reporting schema problems by line number."""
    with open(path) as fh:
        raw = [line.rstrip("\n") for line in fh]
    lines = [(i + 1, line) for i, line in enumerate(raw) if line and not line.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    _, header = lines[0]
    columns = header.split(",")
    if columns[-2:] != ["label", "split"]:
        missing = [c for c in ("label", "split") if c not in columns]
        raise ValueError(f"{path}: header missing column(s) {missing or columns[-2:]}")
    dims = len(columns) - 2
    expected = [f"f{i}" for i in range(dims)]
    if columns[:dims] != expected:
        bad = next(c for c, e in zip(columns, expected) if c != e)
        raise ValueError(f"{path}: unexpected feature column {bad!r}")
    features, labels, split = [], [], []
    for lineno, line in lines[1:]:
        parts = line.split(",")
        if len(parts) != dims + 2:
            raise ValueError(f"{path}:{lineno}: expected {dims + 2} fields, got {len(parts)}")
        try:
            features.append([float(v) for v in parts[:dims]])
            labels.append(int(parts[dims]))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: malformed value ({exc})") from exc
        if parts[dims + 1] not in ("train", "test"):
            raise ValueError(f"{path}:{lineno}: split must be train or test, got {parts[dims + 1]!r}")
        split.append(parts[dims + 1])
    return Dataset(
        np.asarray(features, dtype=np.float64),
        np.asarray(labels, dtype=np.int64),
        np.asarray(split, dtype="<U5"),
    )
