"""Task streams: IDX ingestion, class-incremental task splits, synthetic fixtures."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Base class for malformed IDX files."""


class BadMagicError(IdxFormatError):
    pass


class TruncatedPayloadError(IdxFormatError):
    pass


class CountMismatchError(IdxFormatError):
    pass


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """A batch of labeled samples stored as a feature matrix and a label vector.

    Iterating yields :class:`Sample` records, so a ``Dataset`` can stand in
    wherever a sequence of samples is expected.
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2:
            X = X.reshape(len(y), -1)
        if len(X) != len(y):
            raise ValueError(f"{len(X)} feature rows but {len(y)} labels")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.y)

    def __getitem__(self, i: int) -> Sample:
        return Sample(self.X[i], int(self.y[i]))

    def __iter__(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield self[i]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, index) -> "Dataset":
        return Dataset(self.X[index], self.y[index])

    @classmethod
    def empty(cls, dim: int) -> "Dataset":
        return cls(np.zeros((0, dim)), np.zeros(0, dtype=np.int64))

    @classmethod
    def concat(cls, parts: Sequence["Dataset"]) -> "Dataset":
        parts = list(parts)
        return cls(np.concatenate([p.X for p in parts]), np.concatenate([p.y for p in parts]))


@dataclass(frozen=True, eq=False)
class TaskSpec:
    task_id: int
    class_ids: tuple[int, ...]
    train_set: Dataset
    test_set: Dataset

    def __post_init__(self):
        if self.task_id < 1:
            raise ValueError("task_id must be >= 1")
        if len(self.train_set) == 0 or len(self.test_set) == 0:
            raise ValueError(f"task {self.task_id} has an empty train or test set")
        allowed = set(self.class_ids)
        for part in (self.train_set, self.test_set):
            if not set(np.unique(part.y).tolist()) <= allowed:
                raise ValueError(f"task {self.task_id} holds labels outside {self.class_ids}")

    def class_pools(self) -> dict[int, Dataset]:
        """Training samples of this task grouped by class id."""
        return {c: self.train_set.subset(self.train_set.y == c) for c in self.class_ids}


@dataclass(frozen=True, eq=False)
class TaskStream:
    tasks: tuple[TaskSpec, ...]
    input_dim: int
    total_classes: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [t.task_id for t in self.tasks]
        if ids != list(range(1, len(ids) + 1)):
            raise ValueError(f"task ids must be 1..N consecutive, got {ids}")
        seen: set[int] = set()
        for t in self.tasks:
            if seen & set(t.class_ids):
                raise ValueError(f"task {t.task_id} shares classes with an earlier task")
            seen |= set(t.class_ids)
        if seen != set(range(self.total_classes)):
            raise ValueError("task class sets do not cover 0..total_classes-1")

    def __len__(self) -> int:
        return len(self.tasks)

    def task(self, task_id: int) -> TaskSpec:
        return self.tasks[task_id - 1]


def _open(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path, magic: int, ndim: int, what: str):
    with _open(path) as fh:
        raw = fh.read()
    header_len = 4 + 4 * ndim
    if len(raw) < 4:
        raise TruncatedPayloadError(f"{path}: truncated header ({len(raw)} bytes)")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise BadMagicError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x} for {what}")
    if len(raw) < header_len:
        raise TruncatedPayloadError(f"{path}: truncated header ({len(raw)} bytes)")
    dims = struct.unpack(f">{ndim}I", raw[4:header_len])
    expected = int(np.prod(dims, dtype=np.int64))
    payload = raw[header_len:]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{path}: truncated payload, header declares {expected} bytes but {len(payload)} present"
        )
    data = np.frombuffer(payload, dtype=np.uint8, count=expected)
    return dims, data


def load_idx(images_path, labels_path) -> Dataset:
    """Read an IDX image/label file pair (optionally gzipped).

    Pixels are scaled to [0, 1] by dividing by 255; images are flattened
    row-major.
    """
    (n_img, rows, cols), pixels = _read_idx(images_path, IMAGE_MAGIC, 3, "images")
    (n_lab,), labels = _read_idx(labels_path, LABEL_MAGIC, 1, "labels")
    if n_img != n_lab:
        raise CountMismatchError(f"count mismatch: {n_img} images vs {n_lab} labels")
    X = pixels.reshape(n_img, rows * cols).astype(np.float64) / 255.0
    return Dataset(X, labels.astype(np.int64))


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write uint8 images of shape (n, rows, cols) and labels as an IDX pair."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    if images.ndim != 3:
        raise ValueError("images must have shape (n, rows, cols)")
    if len(images) != len(labels):
        raise CountMismatchError(f"count mismatch: {len(images)} images vs {len(labels)} labels")
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">4I", IMAGE_MAGIC, *images.shape))
        fh.write(images.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">2I", LABEL_MAGIC, len(labels)))
        fh.write(labels.astype(np.uint8).tobytes())


def split_into_tasks(train: Dataset, test: Dataset, num_tasks: int) -> TaskStream:
    """Partition classes, sorted ascending, into ``num_tasks`` contiguous groups."""
    classes = np.unique(np.concatenate([train.y, test.y]))
    total = len(classes)
    if num_tasks < 1 or total % num_tasks:
        raise ValueError(f"{total} classes are not divisible into {num_tasks} tasks")
    if not np.array_equal(classes, np.arange(total)):
        raise ValueError(f"labels must be 0..{total - 1}, got {classes.tolist()}")
    per_task = total // num_tasks
    tasks = []
    for k in range(num_tasks):
        cls = tuple(int(c) for c in classes[k * per_task:(k + 1) * per_task])
        tasks.append(TaskSpec(
            task_id=k + 1,
            class_ids=cls,
            train_set=train.subset(np.isin(train.y, cls)),
            test_set=test.subset(np.isin(test.y, cls)),
        ))
    return TaskStream(tuple(tasks), input_dim=train.dim, total_classes=total)


def make_synthetic_stream(num_tasks: int, classes_per_task: int, dim: int,
                          samples_per_class: int, seed: int,
                          spread: float = 0.1) -> TaskStream:
    """Gaussian-blob classification stream.

    Class means sit on distinct points of the lattice {0.25, 0.5, 0.75}^dim
    chosen by a generator seeded with ``seed``; samples are clipped to [0, 1]
    and split 80/20 into train/test per class.
    """
    if min(num_tasks, classes_per_task, dim) < 1:
        raise ValueError("num_tasks, classes_per_task and dim must be >= 1")
    if samples_per_class < 2:
        raise ValueError("samples_per_class must be >= 2 to populate both splits")
    total = num_tasks * classes_per_task
    if dim < 21 and total > 3 ** dim:
        raise ValueError(f"dim={dim} lattice has fewer than {total} distinct points")

    rng = np.random.default_rng(seed)
    codes: list[tuple[int, ...]] = []
    while len(codes) < total:
        code = tuple(rng.integers(0, 3, size=dim).tolist())
        if code not in codes:
            codes.append(code)
    means = 0.25 + 0.25 * np.asarray(codes, dtype=np.float64)

    n_test = max(1, samples_per_class // 5)
    n_train = samples_per_class - n_test
    Xtr, ytr, Xte, yte = [], [], [], []
    for c in range(total):
        pts = np.clip(means[c] + spread * rng.standard_normal((samples_per_class, dim)), 0.0, 1.0)
        Xtr.append(pts[:n_train])
        Xte.append(pts[n_train:])
        ytr.append(np.full(n_train, c))
        yte.append(np.full(n_test, c))
    train = Dataset(np.concatenate(Xtr), np.concatenate(ytr))
    test = Dataset(np.concatenate(Xte), np.concatenate(yte))
    return split_into_tasks(train, test, num_tasks)
