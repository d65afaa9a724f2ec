"""Dataset ingestion and deterministic splitting.

Sources: IDX image/label files (MNIST family) and synthetic Gaussian blobs.
The base training set is halved into a victim-train part and a query pool;
the test set is kept separate and identical across experiment arms.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class LabeledDataset:
    inputs: np.ndarray  # [n, ...] float64
    labels: np.ndarray  # [n] int class ids
    name: str = "dataset"
    indices: tuple = None  # provenance into the parent dataset, if any

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise FormatError(f"{len(self.inputs)} inputs vs {len(self.labels)} labels")
        if self.indices is None:
            object.__setattr__(self, "indices", tuple(range(len(self.labels))))

    def __len__(self):
        return len(self.labels)

    @property
    def class_count(self):
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def subset(self, idx, name=None):
        idx = np.asarray(idx, dtype=np.intp)
        return LabeledDataset(
            self.inputs[idx],
            self.labels[idx],
            name or self.name,
            tuple(self.indices[i] for i in idx),
        )


@dataclass(frozen=True)
class DatasetBundle:
    victim_train: LabeledDataset
    query_pool: LabeledDataset
    test: LabeledDataset
    split_seed: int


@dataclass(frozen=True)
class ClientShards:
    shards: tuple  # of LabeledDataset
    client_count: int


def _read_be32(f, what):
    raw = f.read(4)
    if len(raw) != 4:
        raise FormatError(f"truncated IDX file while reading {what}")
    return struct.unpack(">I", raw)[0]


def load_idx(images_path, labels_path, name="idx"):
    """Parse big-endian IDX image/label files; pixels scaled to [0,1]."""
    with open(images_path, "rb") as f:
        magic = _read_be32(f, "image magic")
        if magic != IDX_IMAGE_MAGIC:
            raise FormatError(f"bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}")
        count = _read_be32(f, "image count")
        rows = _read_be32(f, "row count")
        cols = _read_be32(f, "column count")
        payload = f.read()
        if len(payload) < count * rows * cols:
            raise FormatError(f"truncated image payload: {len(payload)} bytes for {count}x{rows}x{cols}")
        images = np.frombuffer(payload[: count * rows * cols], dtype=np.uint8)
        images = images.reshape(count, 1, rows, cols).astype(np.float64) / 255.0
    with open(labels_path, "rb") as f:
        magic = _read_be32(f, "label magic")
        if magic != IDX_LABEL_MAGIC:
            raise FormatError(f"bad label magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}")
        lcount = _read_be32(f, "label count")
        payload = f.read()
        if len(payload) < lcount:
            raise FormatError("truncated label payload")
        labels = np.frombuffer(payload[:lcount], dtype=np.uint8).astype(np.int64)
    if count != lcount:
        raise FormatError(f"image count {count} != label count {lcount}")
    return LabeledDataset(images, labels, name)


def blob_centers(class_count, dim, separation):
    """Mutually equidistant class centers (pairwise distance == separation)."""
    if class_count > dim:
        raise ConfigError(f"need dim >= class_count, got dim={dim} classes={class_count}")
    centers = np.zeros((class_count, dim))
    for c in range(class_count):
        centers[c, c] = separation / np.sqrt(2.0)
    return centers


def synth_blobs(class_count, per_class, dim, separation, seed, name="blobs"):
    """Unit-variance Gaussian clusters at mutually distant centers."""
    if per_class < 1:
        raise ConfigError("per_class must be >= 1")
    if separation <= 0:
        raise ConfigError("separation must be positive")
    centers = blob_centers(class_count, dim, separation)
    rng = np.random.default_rng(np.random.PCG64(seed))
    inputs = np.empty((class_count * per_class, dim))
    labels = np.empty(class_count * per_class, dtype=np.int64)
    for c in range(class_count):
        sl = slice(c * per_class, (c + 1) * per_class)
        inputs[sl] = centers[c] + rng.standard_normal((per_class, dim))
        labels[sl] = c
    return LabeledDataset(inputs, labels, name)


def nearest_center_labels(inputs, class_count, dim, separation):
    """Brute-force nearest-center rule; the independent oracle for blob accuracy."""
    centers = blob_centers(class_count, dim, separation)
    d2 = ((inputs[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def split(dataset, split_seed, test=None):
    """Permute by seed, halve into victim-train / query-pool (victim gets the odd item)."""
    n = len(dataset)
    if n < 2:
        raise ConfigError("need at least 2 items to split")
    perm = np.random.default_rng(np.random.PCG64(split_seed)).permutation(n)
    cut = (n + 1) // 2
    victim = dataset.subset(perm[:cut], f"{dataset.name}/victim_train")
    pool = dataset.subset(perm[cut:], f"{dataset.name}/query_pool")
    if test is None:
        test = LabeledDataset(dataset.inputs[:0], dataset.labels[:0], f"{dataset.name}/test")
    return DatasetBundle(victim, pool, test, split_seed)


def shard(victim_train, client_count, seed):
    """Seeded shuffle then round-robin into client_count IID shards."""
    n = len(victim_train)
    if client_count < 1 or client_count > n:
        raise ConfigError(f"client_count {client_count} out of range for {n} samples")
    if client_count == 1:
        # keep the original order so single-client federation matches centralized training
        return ClientShards((victim_train,), 1)
    perm = np.random.default_rng(np.random.PCG64(seed)).permutation(n)
    shards = tuple(
        victim_train.subset(perm[c::client_count], f"{victim_train.name}/client{c}")
        for c in range(client_count)
    )
    return ClientShards(shards, client_count)


def one_hot(labels, class_count):
    out = np.zeros((len(labels), class_count))
    out[np.arange(len(labels)), labels] = 1.0
    return out
