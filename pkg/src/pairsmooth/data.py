"""Datasets, IDX files, splits and seeded mini-batch iteration."""

import struct
import zlib
from dataclasses import dataclass

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class ConfigError(ValueError):
    pass


class IdxFormatError(ValueError):
    pass


class IdxConsistencyError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray  # N x D, float64
    labels: np.ndarray  # N, int64 in [0, num_classes)
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        if self.inputs.ndim != 2:
            raise ValueError(f"inputs must be 2-D, got shape {self.inputs.shape}")
        if len(self.labels) != self.inputs.shape[0]:
            raise ValueError(
                f"{len(self.labels)} labels for {self.inputs.shape[0]} input rows"
            )
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def dim(self):
        return self.inputs.shape[1]

    def subset(self, index, name=None):
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.inputs[index], self.labels[index], self.num_classes,
                       name or self.name)


@dataclass(frozen=True)
class Batch:
    inputs: np.ndarray  # B x D
    onehot: np.ndarray  # B x K, exact one-hot rows

    @property
    def labels(self):
        return self.onehot.argmax(axis=1)


def one_hot(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def substream(seed, name, *extra):
    """Independent generator for a named consumer of the experiment seed."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode()), *map(int, extra)])


def gen_blobs(seed, num_classes, per_class, dim, center_spread=1.0, noise_sigma=1.0,
              name="blobs"):
    """Isotropic Gaussian clusters, one per class, with seeded centers.

    Rows are grouped by class; use :func:`split` or :func:`batches` to shuffle.
    """
    if num_classes < 2 or per_class < 1 or dim < 1:
        raise ConfigError(
            f"need num_classes >= 2, per_class >= 1, dim >= 1; got "
            f"{num_classes}, {per_class}, {dim}"
        )
    if center_spread < 0 or noise_sigma < 0:
        raise ConfigError("center_spread and noise_sigma must be non-negative")
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, center_spread, size=(num_classes, dim))
    labels = np.repeat(np.arange(num_classes), per_class)
    noise = rng.normal(0.0, 1.0, size=(len(labels), dim))
    inputs = centers[labels] + noise_sigma * noise
    return Dataset(inputs, labels, num_classes, name)


def uniform_noise(seed, n, dim, num_classes, low=0.0, high=1.0, name="noise"):
    """Unlabelled uniform noise (labels are all zero); for confidence-only reports."""
    rng = np.random.default_rng(seed)
    inputs = rng.uniform(low, high, size=(n, dim))
    return Dataset(inputs, np.zeros(n, dtype=np.int64), num_classes, name)


def load_digits(name="digits"):
    """The 1797 8x8 handwritten digits bundled with scikit-learn, scaled to [0, 1]."""
    from sklearn.datasets import load_digits as _load

    bunch = _load()
    inputs = bunch.data.astype(np.float64) / 16.0
    return Dataset(inputs, bunch.target.astype(np.int64), 10, name)


def write_idx(images_path, labels_path, images, labels):
    """Write uint8 images (N x rows x cols) and labels (N,) as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError(f"images must be N x rows x cols, got shape {images.shape}")
    n, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        f.write(labels.tobytes())


def _read_exact(f, size, path):
    buf = f.read(size)
    if len(buf) != size:
        raise IOError(f"{path}: truncated, expected {size} bytes, got {len(buf)}")
    return buf


def load_idx(images_path, labels_path, num_classes=10, name="idx", limit=None):
    """Load an MNIST-style IDX image/label pair.

    Pixels are scaled from [0, 255] to [0, 1] and each image is flattened
    row-major. ``limit`` keeps only the first ``limit`` samples.
    """
    with open(images_path, "rb") as f:
        (magic,) = struct.unpack(">I", _read_exact(f, 4, images_path))
        if magic != IDX_IMAGES_MAGIC:
            raise IdxFormatError(f"{images_path}: bad image magic 0x{magic:08x}")
        n_img, rows, cols = struct.unpack(">III", _read_exact(f, 12, images_path))
        pixels = _read_exact(f, n_img * rows * cols, images_path)
    with open(labels_path, "rb") as f:
        (magic,) = struct.unpack(">I", _read_exact(f, 4, labels_path))
        if magic != IDX_LABELS_MAGIC:
            raise IdxFormatError(f"{labels_path}: bad label magic 0x{magic:08x}")
        (n_lab,) = struct.unpack(">I", _read_exact(f, 4, labels_path))
        raw_labels = _read_exact(f, n_lab, labels_path)
    if n_img != n_lab:
        raise IdxConsistencyError(f"{n_img} images but {n_lab} labels")

    inputs = np.frombuffer(pixels, dtype=np.uint8).reshape(n_img, rows * cols)
    labels = np.frombuffer(raw_labels, dtype=np.uint8).astype(np.int64)
    if limit is not None:
        inputs, labels = inputs[:limit], labels[:limit]
    return Dataset(inputs.astype(np.float64) / 255.0, labels, num_classes, name)


def split(dataset, fractions, seed):
    """Shuffle once with ``seed`` and cut into consecutive parts by ``fractions``."""
    fractions = [float(f) for f in fractions]
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be non-negative and sum to 1, got {fractions}")
    n = len(dataset)
    order = np.random.default_rng(seed).permutation(n)
    bounds = np.rint(np.cumsum(fractions) * n).astype(int)
    bounds[-1] = n
    parts, start = [], 0
    for stop in bounds:
        parts.append(dataset.subset(order[start:stop]))
        start = stop
    return tuple(parts)


def standardize(train, *others):
    """Zero-mean / unit-variance per feature using ``train`` statistics only."""
    mean = train.inputs.mean(axis=0)
    std = train.inputs.std(axis=0)
    std[std == 0] = 1.0
    return tuple(
        Dataset((d.inputs - mean) / std, d.labels, d.num_classes, d.name)
        for d in (train, *others)
    )


def batches(dataset, batch_size, seed, epoch):
    """Yield shuffled mini-batches; the order depends only on ``(seed, epoch)``.

    Every row appears exactly once per epoch and the final short batch is kept.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be positive, got {batch_size}")
    order = np.random.default_rng([int(seed), int(epoch)]).permutation(len(dataset))
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        yield Batch(dataset.inputs[idx], one_hot(dataset.labels[idx], dataset.num_classes))
