"""Labeled datasets: IDX ingestion, a two-Gaussian generator and seeded splits."""
import gzip
import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConsistencyError, DimensionError, FormatError, ValidationError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class LabeledDataset:
    """Inputs (n x d, float64) with integer class labels or real targets.

    ``class_count`` is None for regression targets.
    """

    inputs: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    class_count: int | None = 2
    meta: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim == 1:
            self.inputs = self.inputs.reshape(-1, 1)
        if self.inputs.ndim != 2:
            raise DimensionError(f"inputs must be n x d, got shape {self.inputs.shape}")
        self.labels = np.asarray(self.labels)
        if self.labels.shape != (self.inputs.shape[0],):
            raise DimensionError(
                f"{self.labels.size} labels for {self.inputs.shape[0]} inputs"
            )
        if self.class_count is None:
            self.labels = self.labels.astype(np.float64)
        else:
            if self.class_count < 1:
                raise ValidationError("class_count must be positive")
            if self.labels.size and not np.all(self.labels == np.round(self.labels)):
                raise ValidationError("class labels must be integers")
            self.labels = self.labels.astype(np.int64)
            if np.any((self.labels < 0) | (self.labels >= self.class_count)):
                raise ValidationError(f"labels must lie in [0, {self.class_count})")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def dim(self):
        return self.inputs.shape[1]

    @property
    def is_classification(self):
        return self.class_count is not None

    def subset(self, index, name=None):
        index = np.asarray(index)
        if index.size == 0:
            index = index.astype(np.int64)
        return LabeledDataset(
            self.inputs[index], self.labels[index], name or self.name, self.class_count, dict(self.meta)
        )

    def with_inputs(self, inputs, name=None):
        return LabeledDataset(inputs, self.labels.copy(), name or self.name, self.class_count, dict(self.meta))


def _open(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx(path, expected_magic=None):
    """Parse an IDX file into a uint8 array of the declared shape."""
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated header at offset 0")
    (magic,) = struct.unpack(">I", raw[:4])
    if expected_magic is not None and magic != expected_magic:
        raise FormatError(
            f"{path}: bad magic 0x{magic:08x} at offset 0, expected 0x{expected_magic:08x}"
        )
    if magic >> 8 != 0x08:
        raise FormatError(f"{path}: unsupported IDX type 0x{magic:08x} at offset 0 (only unsigned bytes)")
    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise FormatError(f"{path}: truncated dimension header at offset 4")
    shape = struct.unpack(f">{ndim}I", raw[4:header_end])
    count = int(np.prod(shape))
    if len(raw) - header_end != count:
        raise FormatError(
            f"{path}: payload at offset {header_end} holds {len(raw) - header_end} bytes, header declares {count}"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header_end).reshape(shape)


def write_idx(path, array):
    """Write a uint8 array as IDX (gzipped if ``path`` ends in .gz)."""
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise ValidationError("IDX writer only supports uint8 arrays")
    header = struct.pack(">I", 0x00000800 | array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    payload = header + np.ascontiguousarray(array).tobytes()
    path = Path(path)
    if path.suffix == ".gz":
        # fixed mtime keeps the archive byte-identical across rebuilds
        with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as fh:
            fh.write(payload)
    else:
        path.write_bytes(payload)


def load_idx(images_path, labels_path, name=None, class_count=10):
    """Load an IDX image/label pair, scaling pixels to [0, 1]."""
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    inputs = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return LabeledDataset(inputs, labels.astype(np.int64), name or Path(images_path).name, class_count)


def load_mnist01(limit=None):
    """The bundled MNIST subset of digits 0 and 1 (2128 images, 28x28)."""
    root = resources.files("residual_error") / "data"
    with resources.as_file(root / "mnist01-images-idx3-ubyte.gz") as img, \
            resources.as_file(root / "mnist01-labels-idx1-ubyte.gz") as lab:
        ds = load_idx(img, lab, name="mnist01", class_count=2)
    if limit is not None:
        ds = ds.subset(np.arange(min(limit, len(ds))))
    return ds


def make_two_gaussians(n_per_class, separation, dimension=2, seed=0):
    """Two isotropic unit-variance Gaussians at +-separation/2 on the first axis.

    The whole cloud is mapped into [0, 1]^d by one shared affine map (centre at
    0.5, a single scale for every axis so the classes stay isotropic), then
    clipped. Labels alternate 0, 1, 0, 1, ... ``meta["sigma"]`` holds one
    standard deviation in normalized units.
    """
    if n_per_class < 1:
        raise ValidationError("n_per_class must be >= 1")
    if separation <= 0:
        raise ValidationError("separation must be positive")
    if dimension < 1:
        raise ValidationError("dimension must be >= 1")
    rng = np.random.default_rng(seed)
    n = 2 * n_per_class
    labels = np.tile([0, 1], n_per_class)
    x = rng.standard_normal((n, dimension))
    x[:, 0] += np.where(labels == 1, separation / 2.0, -separation / 2.0)
    scale = 2.0 * np.abs(x).max() * 1.05
    inputs = np.clip(x / scale + 0.5, 0.0, 1.0)
    return LabeledDataset(
        inputs, labels, name=f"two_gaussians_sep{separation:g}_d{dimension}", class_count=2,
        meta={"sigma": 1.0 / scale},
    )


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        if len(self.fractions) != 3 or any(f <= 0 for f in self.fractions):
            raise ValidationError("split needs three positive fractions")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValidationError(f"split fractions sum to {sum(self.fractions)}, not 1")


def split_indices(n, spec):
    if n < 3:
        raise ValidationError("need at least 3 samples to split")
    perm = np.random.default_rng(spec.seed).permutation(n)
    n_train = int(np.floor(spec.fractions[0] * n + 1e-9))
    n_valid = int(np.floor(spec.fractions[1] * n + 1e-9))
    parts = perm[:n_train], perm[n_train:n_train + n_valid], perm[n_train + n_valid:]
    if any(len(p) == 0 for p in parts):
        raise ValidationError(f"split of {n} samples by {spec.fractions} leaves an empty part")
    return parts


def split(dataset, spec=SplitSpec()):
    """Seeded shuffle, then contiguous train/validation/test slices."""
    train_idx, valid_idx, test_idx = split_indices(len(dataset), spec)
    return (
        dataset.subset(train_idx, f"{dataset.name}/train"),
        dataset.subset(valid_idx, f"{dataset.name}/valid"),
        dataset.subset(test_idx, f"{dataset.name}/test"),
    )


def save_dataset_csv(path, dataset):
    """Write ``label,x_0..x_{d-1}`` rows at round-trip precision."""
    d = dataset.dim
    with open(path, "w") as fh:
        fh.write("label," + ",".join(f"x_{j}" for j in range(d)) + "\n")
        for y, row in zip(dataset.labels, dataset.inputs):
            fh.write(repr(y.item()) + "," + ",".join(repr(float(v)) for v in row) + "\n")


def load_dataset_csv(path, name=None, class_count=2):
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        if not header or header[0] != "label":
            raise FormatError(f"{path}: expected a 'label,x_0,...' header")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    d = len(header) - 1
    if not rows:
        return LabeledDataset(np.zeros((0, d)), np.zeros(0), name or Path(path).stem, class_count)
    labels = np.array([float(r[0]) for r in rows])
    inputs = np.array([[float(v) for v in r[1:]] for r in rows])
    return LabeledDataset(inputs, labels, name or Path(path).stem, class_count)
