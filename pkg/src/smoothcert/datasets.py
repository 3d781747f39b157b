"""Labeled inputs in [-1, 1]: synthetic rasters, MNIST IDX files, split files.

Synthetic classes are fixed ``side x side`` templates. Pixels are
``contrast * (+1 on the pattern, -1 off it)``. Class ``c`` is pattern
``c`` of:

    0 horizontal bar   1 vertical bar   2 main-diagonal bar   3 anti-diagonal bar
    4 filled disc      5 plus sign      6 ring                7 X (both diagonals)

Bars have half-width ``max(1, side // 8)`` and the plus sign uses half of
that. The disc radius is ``side / 3``. The ring spans radii ``side / 4`` to
``side / 2.5``.
"""
from dataclasses import dataclass
import struct

import numpy as np

from .numerics.nets import FormatError
from .numerics.rng import Stream, context_id, gaussian_rows

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
SCD_MAGIC = b"SCD1"


@dataclass
class LabeledDataset:
    inputs: np.ndarray  # (N, d), float64 in [-1, 1]
    labels: np.ndarray  # (N,), int64 in [0, num_classes)
    num_classes: int
    side: int = 0

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("inputs must be (N, d) with one label per row")
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if len(self.inputs) and (np.abs(self.inputs).max() > 1.0 or not np.isfinite(self.inputs).all()):
            raise ValueError("inputs must be finite and lie in [-1, 1]")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.inputs.shape[1]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.inputs[indices], self.labels[indices], self.num_classes, self.side)

    def covers_all_classes(self):
        return len(np.unique(self.labels)) == self.num_classes


def template_mask(label, side):
    """Boolean pattern for class ``label`` on a ``side x side`` grid."""
    i, j = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    c = (side - 1) / 2.0
    w = max(1, side // 8)
    r = np.hypot(i - c, j - c)
    diag = np.abs(i - j) <= w
    anti = np.abs(i + j - (side - 1)) <= w
    patterns = {
        0: np.abs(i - c) <= w,
        1: np.abs(j - c) <= w,
        2: diag,
        3: anti,
        4: r <= side / 3.0,
        5: (np.abs(i - c) <= w / 2.0) | (np.abs(j - c) <= w / 2.0),
        6: (r >= side / 4.0) & (r <= side / 2.5),
        7: (np.abs(i - j) <= w / 2.0) | (np.abs(i + j - (side - 1)) <= w / 2.0),
    }
    return patterns[int(label)]


def class_templates(num_classes, side, contrast=1.0):
    return np.stack([contrast * (2.0 * template_mask(c, side).ravel() - 1.0) for c in range(num_classes)])


def gen_synthetic(n_per_class, num_classes=2, side=12, seed=0, jitter=0.1, contrast=1.0):
    """Template rasters plus Gaussian pixel jitter, clamped to [-1, 1]."""
    if not 2 <= num_classes <= 8:
        raise ValueError("num_classes must be in 2..8")
    if not 8 <= side <= 16:
        raise ValueError("side must be in 8..16")
    if n_per_class < 1 or not 0.0 < contrast <= 1.0 or jitter < 0:
        raise ValueError("need n_per_class >= 1, 0 < contrast <= 1, jitter >= 0")
    templates = class_templates(num_classes, side, contrast)
    labels = np.repeat(np.arange(num_classes), n_per_class)
    noise = gaussian_rows(seed, context_id(Stream.SYNTH), np.arange(len(labels)), side * side)
    inputs = np.clip(templates[labels] + jitter * noise, -1.0, 1.0)
    return LabeledDataset(inputs, labels, num_classes, side)


def _read_header(data, fmt, what):
    size = struct.calcsize(fmt)
    if len(data) < size:
        raise FormatError(f"{what}: truncated header ({len(data)} bytes)")
    return struct.unpack_from(fmt, data, 0)


def load_idx(images_path, labels_path, max_items=None, num_classes=10):
    """Read an MNIST-style IDX image/label pair, mapping pixels to [-1, 1]."""
    with open(images_path, "rb") as f:
        img = f.read()
    with open(labels_path, "rb") as f:
        lab = f.read()
    magic, count, rows, cols = _read_header(img, ">IIII", "images")
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"images: magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")
    lmagic, lcount = _read_header(lab, ">II", "labels")
    if lmagic != IDX_LABELS_MAGIC:
        raise FormatError(f"labels: magic {lmagic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")
    if count != lcount:
        raise FormatError(f"item count: images file has {count}, labels file has {lcount}")
    d = rows * cols
    if len(img) < 16 + count * d:
        raise FormatError(f"images: pixel payload truncated (need {count * d} bytes, have {len(img) - 16})")
    if len(lab) < 8 + count:
        raise FormatError(f"labels: payload truncated (need {count} bytes, have {len(lab) - 8})")
    n = count if max_items is None else min(count, int(max_items))
    pixels = np.frombuffer(img, dtype=np.uint8, count=n * d, offset=16).reshape(n, d)
    labels = np.frombuffer(lab, dtype=np.uint8, count=n, offset=8).astype(np.int64)
    side = rows if rows == cols else 0
    return LabeledDataset(pixels / 127.5 - 1.0, labels, num_classes, side)


def save_split(dataset, path):
    header = SCD_MAGIC + struct.pack("<III", len(dataset), dataset.dim, dataset.num_classes)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(dataset.inputs, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(dataset.labels, dtype="<u2").tobytes())


def load_split(path):
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != SCD_MAGIC:
        raise FormatError(f"split file: bad magic {data[:4]!r}")
    if len(data) < 16:
        raise FormatError("split file: truncated header")
    count, dim, classes = struct.unpack_from("<III", data, 4)
    need = 16 + count * dim * 8 + count * 2
    if len(data) != need:
        raise FormatError(f"split file: expected {need} bytes, found {len(data)}")
    inputs = np.frombuffer(data, dtype="<f8", count=count * dim, offset=16).reshape(count, dim)
    labels = np.frombuffer(data, dtype="<u2", count=count, offset=16 + count * dim * 8)
    side = int(round(np.sqrt(dim)))
    return LabeledDataset(inputs.astype(np.float64), labels.astype(np.int64), classes, side if side * side == dim else 0)
