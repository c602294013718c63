"""Dataset ingestion: the CIFAR-10 binary batch format plus deterministic
synthetic blob datasets for desk-scale runs and tests.

Normalization is pixels/255 followed by per-feature centering with the
train-split mean only; validation reuses the train statistics (no leakage).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

RECORD_BYTES = 3073  # 1 label byte + 32*32*3 pixels
IMAGE_BYTES = 3072
STANDARD_BATCH_BYTES = 30_730_000  # 10000 records
TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
TEST_FILE = "test_batch.bin"
CIFAR_CLASSES = 10


class DataFormatError(ValueError):
    pass


@dataclass
class Dataset:
    train_x: np.ndarray  # (N, features) float64
    train_y: np.ndarray  # (N, classes) one-hot float64
    val_x: np.ndarray
    val_y: np.ndarray
    feature_mean: np.ndarray  # per-feature center subtracted from x
    feature_scale: float | np.ndarray  # divisor applied to raw values before centering
    class_count: int
    feature_count: int

    def __post_init__(self):
        for name in ("train_x", "train_y", "val_x", "val_y"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                raise DataFormatError(f"{name} contains non-finite values")
        for name in ("train_y", "val_y"):
            y = getattr(self, name)
            if y.size and not np.all(y.sum(axis=1) == 1.0):
                raise DataFormatError(f"{name} rows must be one-hot")

    @property
    def n_train(self) -> int:
        return len(self.train_x)

    @property
    def n_val(self) -> int:
        return len(self.val_x)


def one_hot(labels: np.ndarray, classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise DataFormatError(f"label out of range [0, {classes})")
    out = np.zeros((len(labels), classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _read_batch_file(path: Path) -> tuple[np.ndarray, np.ndarray]:
    if not path.is_file():
        raise DataFormatError(f"missing batch file: {path}")
    buf = path.read_bytes()
    if len(buf) == 0 or len(buf) % RECORD_BYTES != 0:
        raise DataFormatError(
            f"truncated batch file {path}: {len(buf)} bytes is not a multiple of "
            f"{RECORD_BYTES} (a standard batch is {STANDARD_BATCH_BYTES:,} bytes)"
        )
    records = np.frombuffer(buf, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    labels = records[:, 0]
    if labels.max(initial=0) >= CIFAR_CLASSES:
        raise DataFormatError(
            f"{path}: label byte {labels.max()} exceeds class count {CIFAR_CLASSES}"
        )
    return records[:, 1:].copy(), labels.astype(np.int64)


def load_cifar10(dir_path) -> Dataset:
    """Load the binary CIFAR-10 layout: 5 train batches plus one test batch,
    each record one label byte followed by 3072 pixel bytes. The test batch
    serves as the validation split."""
    root = Path(dir_path)
    train_parts = [_read_batch_file(root / name) for name in TRAIN_FILES]
    val_pixels, val_labels = _read_batch_file(root / TEST_FILE)
    train_pixels = np.concatenate([p for p, _ in train_parts])
    train_labels = np.concatenate([l for _, l in train_parts])

    scale = 255.0
    train_x = train_pixels.astype(np.float64) / scale
    val_x = val_pixels.astype(np.float64) / scale
    mean = train_x.mean(axis=0)  # train split only
    train_x -= mean
    val_x -= mean
    return Dataset(
        train_x=train_x,
        train_y=one_hot(train_labels, CIFAR_CLASSES),
        val_x=val_x,
        val_y=one_hot(val_labels, CIFAR_CLASSES),
        feature_mean=mean,
        feature_scale=scale,
        class_count=CIFAR_CLASSES,
        feature_count=IMAGE_BYTES,
    )


def write_cifar10_batches(dir_path, train_images, train_labels, val_images, val_labels):
    """Persist raw uint8 images + integer labels in the binary CIFAR-10 layout
    (train split spread over the 5 standard batch files)."""
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)

    def _write(path: Path, images: np.ndarray, labels: np.ndarray):
        images = np.asarray(images, dtype=np.uint8).reshape(-1, IMAGE_BYTES)
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= CIFAR_CLASSES):
            raise DataFormatError("labels must be in [0, 10) for CIFAR layout")
        records = np.empty((len(images), RECORD_BYTES), dtype=np.uint8)
        records[:, 0] = labels
        records[:, 1:] = images
        path.write_bytes(records.tobytes())

    for name, img, lab in zip(
        TRAIN_FILES,
        np.array_split(np.asarray(train_images), len(TRAIN_FILES)),
        np.array_split(np.asarray(train_labels), len(TRAIN_FILES)),
    ):
        _write(root / name, img, lab)
    _write(root / TEST_FILE, val_images, val_labels)


def save_cifar10(dataset: Dataset, dir_path) -> None:
    """Write a dataset back to the CIFAR binary layout by undoing its
    normalization. Reloading reproduces the tensors exactly."""

    def _to_bytes(x):
        raw = np.rint((x + dataset.feature_mean) * dataset.feature_scale)
        return np.clip(raw, 0, 255).astype(np.uint8)

    write_cifar10_batches(
        dir_path,
        _to_bytes(dataset.train_x),
        np.argmax(dataset.train_y, axis=1),
        _to_bytes(dataset.val_x),
        np.argmax(dataset.val_y, axis=1),
    )


def standardize(dataset: Dataset) -> Dataset:
    """Per-feature standardization with train-split statistics only.

    Composes with any normalization already recorded in the metadata, so
    undoing (as the CIFAR writer does) still reproduces the raw values.
    Zero-variance features are left unscaled.
    """
    mean = dataset.train_x.mean(axis=0)
    std = dataset.train_x.std(axis=0)
    scale = np.where(std > 1e-12, std, 1.0)
    return Dataset(
        train_x=(dataset.train_x - mean) / scale,
        train_y=dataset.train_y,
        val_x=(dataset.val_x - mean) / scale,
        val_y=dataset.val_y,
        feature_mean=(dataset.feature_mean + mean) / scale,
        feature_scale=dataset.feature_scale * scale,
        class_count=dataset.class_count,
        feature_count=dataset.feature_count,
    )


def subset(dataset: Dataset, n_train: int, n_val: int) -> Dataset:
    """First-n deterministic subset of both splits (normalization metadata kept)."""
    if n_train > dataset.n_train or n_val > dataset.n_val:
        raise ValueError(
            f"subset ({n_train}, {n_val}) exceeds dataset "
            f"({dataset.n_train}, {dataset.n_val})"
        )
    return Dataset(
        train_x=dataset.train_x[:n_train],
        train_y=dataset.train_y[:n_train],
        val_x=dataset.val_x[:n_val],
        val_y=dataset.val_y[:n_val],
        feature_mean=dataset.feature_mean,
        feature_scale=dataset.feature_scale,
        class_count=dataset.class_count,
        feature_count=dataset.feature_count,
    )


def make_synthetic(
    classes: int,
    features: int,
    n_per_class: int,
    separation: float,
    seed: int,
) -> Dataset:
    """Gaussian blobs, one unit-variance cluster per class, pairwise mean
    distance equal to ``separation``; 80/20 train/val split per class.
    Deterministic for a fixed seed."""
    if classes < 1 or features < 1 or n_per_class < 1:
        raise ValueError("classes, features and n_per_class must be >= 1")
    if classes > features:
        raise ValueError(
            f"blob construction needs classes <= features, got {classes} > {features}"
        )
    rng = np.random.default_rng(seed)
    # means on scaled standard basis vectors: all pairs exactly `separation` apart
    means = np.zeros((classes, features))
    means[np.arange(classes), np.arange(classes)] = separation / np.sqrt(2.0)

    n_tr = max(1, int(round(0.8 * n_per_class)))
    train_parts, val_parts, train_labels, val_labels = [], [], [], []
    for c in range(classes):
        samples = means[c] + rng.standard_normal((n_per_class, features))
        train_parts.append(samples[:n_tr])
        val_parts.append(samples[n_tr:])
        train_labels.append(np.full(n_tr, c))
        val_labels.append(np.full(n_per_class - n_tr, c))

    return Dataset(
        train_x=np.concatenate(train_parts),
        train_y=one_hot(np.concatenate(train_labels), classes),
        val_x=np.concatenate(val_parts),
        val_y=one_hot(np.concatenate(val_labels), classes),
        feature_mean=np.zeros(features),
        feature_scale=1.0,
        class_count=classes,
        feature_count=features,
    )


def load_dataset_spec(spec: str) -> Dataset:
    """Parse a dataset spec string.

    ``cifar10:<dir>`` loads the binary batches from a directory;
    ``synthetic:classes=2,features=16,per_class=100,separation=6,seed=0``
    builds a blob dataset (all keys optional, shown with their defaults).
    """
    kind, _, rest = spec.partition(":")
    if kind == "cifar10":
        if not rest:
            raise ValueError("cifar10 spec needs a directory: cifar10:<dir>")
        return load_cifar10(rest)
    if kind == "synthetic":
        params = {"classes": 2, "features": 16, "per_class": 100, "separation": 6.0, "seed": 0}
        if rest:
            for item in rest.split(","):
                key, _, value = item.partition("=")
                key = key.strip()
                if key not in params:
                    raise ValueError(f"unknown synthetic dataset key {key!r}")
                params[key] = float(value) if key == "separation" else int(value)
        return make_synthetic(
            classes=params["classes"],
            features=params["features"],
            n_per_class=params["per_class"],
            separation=params["separation"],
            seed=params["seed"],
        )
    raise ValueError(f"unknown dataset spec {spec!r} (use cifar10:<dir> or synthetic:...)")
