"""MNIST ingestion, 16x16 rescale, rate coding, and the sequential task stream.

Images load from canonical IDX files (plain or gzipped), are box-filtered
down to 16x16, and are rate-coded into per-timestep spike vectors.  The
benchmark stream presents five two-digit tasks strictly one after another
with shared position-in-pair labels {0, 1}; nothing in a sample reveals
which task it belongs to.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

TASK_PAIRS = ((0, 1), (2, 3), (4, 5), (6, 7), (8, 9))

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"


class DataFormatError(ValueError):
    """Malformed dataset file; message names the offending field."""


def _read_bytes(path: Path) -> bytes:
    data = path.read_bytes()
    if data[:2] == b"\x1f\x8b":
        return gzip.decompress(data)
    return data


def _find_file(directory: Path, stem: str) -> Path:
    for candidate in (directory / stem, directory / f"{stem}.gz"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"missing dataset file {stem}[.gz] in {directory}")


def load_idx_images(path: str | Path) -> np.ndarray:
    """Parse an IDX image file into (n, rows, cols) uint8."""
    data = _read_bytes(Path(path))
    if len(data) < 16:
        raise DataFormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, n, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IMAGE_MAGIC:
        raise DataFormatError(
            f"{path}: bad image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}")
    expected = 16 + n * rows * cols
    if len(data) != expected:
        raise DataFormatError(
            f"{path}: pixel payload is {len(data) - 16} bytes, "
            f"header promises {n * rows * cols}")
    return np.frombuffer(data, dtype=np.uint8, offset=16).reshape(n, rows, cols)


def load_idx_labels(path: str | Path) -> np.ndarray:
    """Parse an IDX label file into (n,) uint8."""
    data = _read_bytes(Path(path))
    if len(data) < 8:
        raise DataFormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, n = struct.unpack(">II", data[:8])
    if magic != LABEL_MAGIC:
        raise DataFormatError(
            f"{path}: bad label magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}")
    if len(data) != 8 + n:
        raise DataFormatError(
            f"{path}: label payload is {len(data) - 8} bytes, header promises {n}")
    return np.frombuffer(data, dtype=np.uint8, offset=8)


def load_mnist(directory: str | Path):
    """Load the four canonical files; image/label counts must agree."""
    directory = Path(directory)
    train_x = load_idx_images(_find_file(directory, TRAIN_IMAGES))
    train_y = load_idx_labels(_find_file(directory, TRAIN_LABELS))
    test_x = load_idx_images(_find_file(directory, TEST_IMAGES))
    test_y = load_idx_labels(_find_file(directory, TEST_LABELS))
    if len(train_x) != len(train_y):
        raise DataFormatError(
            f"count mismatch: {len(train_x)} train images vs {len(train_y)} labels")
    if len(test_x) != len(test_y):
        raise DataFormatError(
            f"count mismatch: {len(test_x)} test images vs {len(test_y)} labels")
    return train_x, train_y, test_x, test_y


# -- rescaling ----------------------------------------------------------

def _overlap_quarters(src: int, dst: int) -> np.ndarray:
    """Box-filter row overlaps from src to dst samples, in units of 1/4.

    For 28 -> 16 the source/destination ratio is 7/4, so every overlap is
    an exact multiple of a quarter pixel and the filter is integer-exact.
    """
    num, den = src // np.gcd(src, dst), dst // np.gcd(src, dst)
    out = np.zeros((dst, src), dtype=np.int64)
    for i in range(dst):
        lo, hi = i * num, (i + 1) * num  # edges in units of 1/den
        for j in range(lo // den, -(-hi // den)):
            out[i, j] = min(hi, (j + 1) * den) - max(lo, j * den)
    return out


_O16 = _overlap_quarters(28, 16)          # row sums are all 7
_O16_NORM = float(_O16[0].sum()) ** 2     # 49: normalizer for both axes


def rescale_16(image: np.ndarray) -> np.ndarray:
    """Area-weighted 28x28 -> 16x16 downscale; accepts a stack too.

    Computed as an integer bilinear form divided by the exact area, so the
    result is identical on every platform.
    """
    img = np.asarray(image, dtype=np.int64)
    if img.ndim == 2:
        acc = _O16 @ img @ _O16.T
    else:
        acc = np.matmul(_O16, img @ _O16.T)  # broadcasts over the stack
    out = np.rint(acc / _O16_NORM)
    return np.clip(out, 0, 255).astype(np.uint8)


# -- spike encoding ------------------------------------------------------

def sample_rng(seed: int, domain: int, *key: int) -> np.random.Generator:
    """Deterministic per-sample generator keyed by (seed, domain, key...)."""
    return np.random.default_rng([seed, domain, *key])


def encode_poisson(image16: np.ndarray, timesteps: int, rate_max: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Rate-code a 16x16 image into (T, 256) spike bits.

    Each pixel spikes i.i.d. per step with probability intensity/255 *
    rate_max; fully determined by the generator passed in.
    """
    if not (0.0 < rate_max <= 1.0):
        raise ValueError(f"rate_max must be in (0, 1], got {rate_max}")
    p = image16.astype(np.float64).reshape(-1) / 255.0 * rate_max
    return (rng.random((timesteps, p.size)) < p).astype(np.uint8)


# -- task stream ----------------------------------------------------------

@dataclass
class Task:
    index: int
    classes: tuple[int, int]
    train_indices: np.ndarray = field(repr=False)
    test_indices: np.ndarray = field(repr=False)


class TaskStream:
    """Five sequential two-digit tasks with shared {0, 1} labels.

    Per task, a class-balanced subsample of the official train/test splits
    is drawn from the stream seed; training order within a task is a
    seeded shuffle.  Labels are the digit's position within its pair, so
    no task identity ever reaches the learner.
    """

    def __init__(self, dataset_dir: str | Path, seed: int,
                 n_train: int = 10000, n_test: int = 2500):
        self.seed = seed
        self.n_train = n_train
        self.n_test = n_test
        train_x, train_y, test_x, test_y = load_mnist(dataset_dir)

        per_class_train = n_train // len(TASK_PAIRS) // 2
        per_class_test = n_test // len(TASK_PAIRS) // 2
        rng = np.random.default_rng([seed, 0xDA7A])
        self.tasks: list[Task] = []
        self._train16: list[np.ndarray] = []
        self._train_lbl: list[np.ndarray] = []
        self._test16: list[np.ndarray] = []
        self._test_lbl: list[np.ndarray] = []
        for idx, pair in enumerate(TASK_PAIRS):
            tr = self._pick(train_y, pair, per_class_train, rng, "train")
            te = self._pick(test_y, pair, per_class_test, rng, "test")
            rng.shuffle(tr)
            task = Task(idx, pair, tr, te)
            self.tasks.append(task)
            self._train16.append(rescale_16(train_x[tr]))
            self._train_lbl.append(np.array(
                [self.pair_label(task, l) for l in train_y[tr]], dtype=np.int64))
            self._test16.append(rescale_16(test_x[te]))
            self._test_lbl.append(np.array(
                [self.pair_label(task, l) for l in test_y[te]], dtype=np.int64))

    @staticmethod
    def _pick(labels, pair, per_class, rng, split) -> np.ndarray:
        chosen = []
        for cls in pair:
            pool = np.flatnonzero(labels == cls)
            if len(pool) < per_class:
                raise ValueError(
                    f"not enough {split} samples of digit {cls}: "
                    f"need {per_class}, have {len(pool)}")
            chosen.append(rng.choice(pool, size=per_class, replace=False))
        return np.concatenate(chosen)

    def pair_label(self, task: Task, dataset_label: int) -> int:
        return task.classes.index(int(dataset_label))

    def training_sequence(self):
        """Yield (global_position, task_index, image16, label01) strictly
        task by task."""
        pos = 0
        for task in self.tasks:
            for img, lbl in zip(self._train16[task.index],
                                self._train_lbl[task.index]):
                yield pos, task.index, img, int(lbl)
                pos += 1

    def test_set(self, task_index: int):
        """(images16, labels01) for one task's held-out samples."""
        return self._test16[task_index], self._test_lbl[task_index]

    def encode_training_sample(self, position: int, image16: np.ndarray,
                               timesteps: int, rate_max: float) -> np.ndarray:
        return encode_poisson(image16, timesteps, rate_max,
                              sample_rng(self.seed, 0, position))

    def encode_test_sample(self, task_index: int, position: int,
                           image16: np.ndarray, timesteps: int,
                           rate_max: float) -> np.ndarray:
        return encode_poisson(image16, timesteps, rate_max,
                              sample_rng(self.seed, 1, task_index, position))
