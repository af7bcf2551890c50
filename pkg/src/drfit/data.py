"""Dataset construction: IDX ingestion, 1-vs-7 preparation, synthetic
Gaussian pairs, seeded label-noise injection, and per-class weight budgets.

The weight budget rho_c = p(c) / (1 - q(c)) uses p(c), the proportion of
examples labelled c that really are class c, and q(c), the rate at which
true class-c labels were flipped away. Both can come from known
simulation rates or be estimated from a clean validation table.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


class DataError(ValueError):
    """Invalid dataset input or construction request."""


class IdxError(DataError):
    """Malformed IDX file."""


class IdxMagicError(IdxError):
    """Unknown magic number."""


class IdxTruncatedError(IdxError):
    """File shorter (or longer) than its header promises."""


class IdxCountMismatchError(IdxError):
    """Image and label files disagree on the number of records."""


_IMAGE_MAGIC = 2051
_LABEL_MAGIC = 2049


@dataclass
class LabeledDataset:
    """Feature matrix with labels and, once noise is injected, the clean
    labels and the flip mask."""

    features: np.ndarray
    labels: np.ndarray
    true_labels: np.ndarray | None = None
    mislabel_mask: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise DataError("features must be (n, d) with one label per row")
        if self.true_labels is not None:
            self.true_labels = np.asarray(self.true_labels, dtype=int)
            if self.true_labels.shape != self.labels.shape:
                raise DataError("true_labels length mismatch")
        if self.mislabel_mask is not None:
            self.mislabel_mask = np.asarray(self.mislabel_mask, dtype=bool)
            if self.mislabel_mask.shape != self.labels.shape:
                raise DataError("mislabel_mask length mismatch")
            if self.true_labels is not None and not np.array_equal(
                self.mislabel_mask, self.labels != self.true_labels
            ):
                raise DataError("mask inconsistent with labels vs true_labels")

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.n else 0

    def class_counts(self, n_classes: int | None = None) -> np.ndarray:
        return np.bincount(self.labels, minlength=n_classes or self.n_classes)

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(
            self.features[idx],
            self.labels[idx],
            None if self.true_labels is None else self.true_labels[idx],
            None if self.mislabel_mask is None else self.mislabel_mask[idx],
        )


@dataclass(frozen=True)
class NoiseSpec:
    """Per-class flip rates; binary datasets flip to the other class,
    multiclass ones pick a wrong class uniformly."""

    rates: tuple[float, ...]
    seed: int = 0

    def __post_init__(self):
        if not self.rates:
            raise DataError("need at least one flip rate")
        if any(not (0.0 <= q < 0.5) for q in self.rates):
            raise DataError("flip rates must lie in [0, 0.5)")


# ---------------------------------------------------------------------------
# IDX ingestion

def _read_exact(buf: bytes, offset: int, count: int, what: str) -> bytes:
    chunk = buf[offset:offset + count]
    if len(chunk) < count:
        raise IdxTruncatedError(f"{what}: expected {count} bytes, found {len(chunk)}")
    return chunk


def _parse_idx(path, magic: int, n_dims: int) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    got = int.from_bytes(_read_exact(buf, 0, 4, "magic"), "big")
    if got != magic:
        raise IdxMagicError(f"unknown magic {got}, expected {magic}")
    dims = [
        int.from_bytes(_read_exact(buf, 4 + 4 * i, 4, f"dimension {i}"), "big")
        for i in range(n_dims)
    ]
    payload = buf[4 + 4 * n_dims:]
    size = int(np.prod(dims))
    if len(payload) != size:
        raise IdxTruncatedError(f"payload: expected {size} bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_mnist_idx(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """Parse an IDX image/label file pair. Returns (images, labels) with
    pixel values scaled to [0, 1] as (n, rows, cols) floats."""
    images = _parse_idx(images_path, _IMAGE_MAGIC, 3)
    labels = _parse_idx(labels_path, _LABEL_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise IdxCountMismatchError(
            f"{images.shape[0]} images vs {labels.shape[0]} labels"
        )
    return images.astype(float) / 255.0, labels.astype(int)


def write_idx_images(path, images: np.ndarray) -> None:
    """Inverse of the image half of load_mnist_idx (expects uint8 data)."""
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        for v in (_IMAGE_MAGIC, n, rows, cols):
            fh.write(int(v).to_bytes(4, "big"))
        fh.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        for v in (_LABEL_MAGIC, labels.shape[0]):
            fh.write(int(v).to_bytes(4, "big"))
        fh.write(labels.tobytes())


def pool2x2(images: np.ndarray) -> np.ndarray:
    """Downsample (n, 2r, 2c) images to (n, r, c) by 2x2 mean pooling."""
    n, rows, cols = images.shape
    if rows % 2 or cols % 2:
        raise DataError("pooling needs even image dimensions")
    return images.reshape(n, rows // 2, 2, cols // 2, 2).mean(axis=(2, 4))


def prepare_ones_vs_sevens(images: np.ndarray, labels: np.ndarray) -> LabeledDataset:
    """Filter digits 1 and 7, pool 28x28 down to 14x14, and relabel
    (1 -> class 0, 7 -> class 1)."""
    keep = (labels == 1) | (labels == 7)
    if not np.any(labels == 1) or not np.any(labels == 7):
        raise DataError("dataset must contain both digits 1 and 7")
    pooled = pool2x2(np.asarray(images, dtype=float)[keep])
    feats = pooled.reshape(pooled.shape[0], -1)
    y = (labels[keep] == 7).astype(int)
    return LabeledDataset(feats, y)


# ---------------------------------------------------------------------------
# label noise

def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def inject_label_noise(ds: LabeledDataset, spec: NoiseSpec) -> LabeledDataset:
    """Flip exactly round(q(c) * |class c|) labels per class, chosen
    uniformly without replacement under the spec seed."""
    n_classes = max(ds.n_classes, len(spec.rates))
    if len(spec.rates) != n_classes:
        raise DataError("one flip rate per class is required")
    rng = np.random.default_rng(spec.seed)
    labels = ds.labels.copy()
    true_labels = ds.labels.copy()
    mask = np.zeros(ds.n, dtype=bool)
    for c, q in enumerate(spec.rates):
        members = np.flatnonzero(true_labels == c)
        k = _round_half_up(q * members.size)
        if k == 0:
            continue
        chosen = rng.choice(members, size=k, replace=False)
        if n_classes == 2:
            labels[chosen] = 1 - c
        else:
            others = np.array([t for t in range(n_classes) if t != c])
            labels[chosen] = rng.choice(others, size=k, replace=True)
        mask[chosen] = True
    return LabeledDataset(ds.features.copy(), labels, true_labels, mask)


# ---------------------------------------------------------------------------
# rho estimation

def rho_from_rates(class_sizes, flip_rates) -> np.ndarray:
    """rho_c = p(c) / (1 - q(c)) computed from known flip rates, with
    p(c) the expected fraction of label-c examples that are truly c."""
    sizes = np.asarray(class_sizes, dtype=float)
    rates = np.asarray(flip_rates, dtype=float)
    if sizes.shape != rates.shape:
        raise DataError("class sizes and flip rates must align")
    if np.any(rates >= 1.0):
        raise ZeroDivisionError("flip rate of 1 leaves no correct labels")
    k = sizes.size
    stay = sizes * (1.0 - rates)
    labelled = stay.copy()
    for c in range(k):
        out = sizes[c] * rates[c]
        for t in range(k):
            if t != c:
                labelled[t] += out / (k - 1)
    if np.any(labelled == 0):
        raise ZeroDivisionError("a class receives no labels at these rates")
    p = stay / labelled
    return p / (1.0 - rates)


def rho_from_validation(confusion) -> np.ndarray:
    """rho_c from a clean validation contingency table; confusion[t, o]
    counts examples with true class t observed as o."""
    table = np.asarray(confusion, dtype=float)
    if table.ndim != 2 or table.shape[0] != table.shape[1]:
        raise DataError("confusion table must be square")
    observed = table.sum(axis=0)
    per_true = table.sum(axis=1)
    if np.any(observed == 0) or np.any(per_true == 0):
        raise DataError("every class must appear as both true and observed")
    diag = np.diag(table)
    p = diag / observed
    q = 1.0 - diag / per_true
    if np.any(q >= 1.0):
        raise ZeroDivisionError("flip rate of 1 leaves no correct labels")
    return p / (1.0 - q)


def estimate_rho(
    class_sizes=None,
    flip_rates=None,
    confusion=None,
    appendix_mode: bool = False,
) -> np.ndarray:
    """Per-class weight budgets. Pass class_sizes + flip_rates (known
    simulation rates), or a confusion table from clean validation data.
    appendix_mode forces rho identically 1."""
    if appendix_mode:
        if class_sizes is not None:
            return np.ones(len(class_sizes))
        if confusion is not None:
            return np.ones(np.asarray(confusion).shape[0])
        raise DataError("appendix mode still needs the number of classes")
    if confusion is not None:
        if class_sizes is not None or flip_rates is not None:
            raise DataError("give either rates or a validation table, not both")
        return rho_from_validation(confusion)
    if class_sizes is None or flip_rates is None:
        raise DataError("need class sizes plus flip rates, or a validation table")
    return rho_from_rates(class_sizes, flip_rates)


# ---------------------------------------------------------------------------
# synthetic data

def synthetic_gaussian_2class(n: int, mu, cov, seed: int = 0) -> LabeledDataset:
    """n/2 draws from N(mu, cov) labelled 1 and n/2 from N(-mu, cov)
    labelled 0, the class-0 half generated as the negation of an
    independent N(mu, cov) sample."""
    if n <= 0 or n % 2:
        raise DataError("n must be a positive even number")
    mu = np.asarray(mu, dtype=float)
    cov = np.asarray(cov, dtype=float)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise DataError("covariance must be positive definite") from None
    rng = np.random.default_rng(seed)
    half = n // 2
    x1 = mu + rng.standard_normal((half, mu.size)) @ chol.T
    x0 = -(mu + rng.standard_normal((half, mu.size)) @ chol.T)
    feats = np.vstack([x1, x0])
    labels = np.concatenate([np.ones(half, dtype=int), np.zeros(half, dtype=int)])
    order = rng.permutation(n)
    return LabeledDataset(feats[order], labels[order])


def stratified_split(ds: LabeledDataset, fractions, seed: int = 0) -> list[LabeledDataset]:
    """Split into len(fractions) parts, preserving class proportions.
    Fractions must sum to 1; remainders go to the last part."""
    fr = np.asarray(fractions, dtype=float)
    if np.any(fr <= 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise DataError("fractions must be positive and sum to 1")
    rng = np.random.default_rng(seed)
    parts: list[list[np.ndarray]] = [[] for _ in fr]
    for c in range(ds.n_classes):
        members = rng.permutation(np.flatnonzero(ds.labels == c))
        edges = np.floor(np.cumsum(fr) * members.size + 0.5).astype(int)
        start = 0
        for j, stop in enumerate(edges):
            parts[j].append(members[start:stop])
            start = stop
    return [ds.subset(np.sort(np.concatenate(p))) for p in parts]


# ---------------------------------------------------------------------------
# CSV snapshots

def save_dataset_csv(ds: LabeledDataset, path) -> None:
    """Columnar snapshot: f0..f{d-1} as floats, then label and, when
    present, true_label and mislabel as integers."""
    cols = [f"f{j}" for j in range(ds.n_features)] + ["label"]
    if ds.true_labels is not None:
        cols.append("true_label")
    if ds.mislabel_mask is not None:
        cols.append("mislabel")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.features[i]]
            row.append(int(ds.labels[i]))
            if ds.true_labels is not None:
                row.append(int(ds.true_labels[i]))
            if ds.mislabel_mask is not None:
                row.append(int(ds.mislabel_mask[i]))
            writer.writerow(row)


def load_dataset_csv(path) -> LabeledDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if "label" not in header:
        raise DataError("snapshot is missing the label column")
    d = header.index("label")
    has_true = "true_label" in header
    has_mask = "mislabel" in header
    feats = np.array([[float(v) for v in r[:d]] for r in rows])
    labels = np.array([int(r[d]) for r in rows])
    true_labels = (
        np.array([int(r[header.index("true_label")]) for r in rows]) if has_true else None
    )
    mask = (
        np.array([bool(int(r[header.index("mislabel")])) for r in rows]).astype(bool)
        if has_mask
        else None
    )
    return LabeledDataset(feats, labels, true_labels, mask)
