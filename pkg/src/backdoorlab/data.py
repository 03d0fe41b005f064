"""Dataset ingestion, class-restricted splits, and attacker-side data construction.

Supported sources: IDX image/label file pairs (the classic handwritten-digit
archive format, gzipped or raw) and ``root/<class_name>/<images>`` directory
trees. A deterministic synthetic digit corpus can be generated in IDX format
for desk-scale experiments when the real archive is not on disk.
"""

import gzip
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageDraw

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".pgm"}


class DatasetError(ValueError):
    """Raised for missing paths, corrupt records or out-of-range labels."""


@dataclass
class LabeledDataset:
    """Ordered image/label pairs with pixel values in [0, 1].

    ``images`` is (N, H, W, C) float32, ``labels`` (N,) int64. Instances are
    treated as immutable values; all split operations return new datasets.
    """

    images: np.ndarray
    labels: np.ndarray
    class_count: int
    name: str = "dataset"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim == 3:  # allow (N, H, W) grayscale shorthand
            self.images = self.images[..., None]

    def __len__(self):
        return int(self.images.shape[0])

    @property
    def image_shape(self):
        return tuple(self.images.shape[1:])

    def validate(self):
        """Check the structural invariants, raising DatasetError on violation."""
        if self.images.ndim != 4:
            raise DatasetError(f"images must be (N, H, W, C), got shape "
                               f"{self.images.shape}")
        if self.labels.shape != (len(self),):
            raise DatasetError("labels must be one integer per sample")
        if len(self) and (self.labels.min() < 0
                          or self.labels.max() >= self.class_count):
            raise DatasetError(f"label outside [0, {self.class_count})")
        if len(self) and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise DatasetError("pixel values must lie in [0, 1]")
        return self

    def subset(self, indices, name=None):
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.images[indices], self.labels[indices],
                              self.class_count, name or self.name)


@dataclass
class SplitSpec:
    """How a raw dataset is carved up for pretraining and injection."""

    keep_classes: int
    malicious_fraction: float = 0.8

    def validate(self, class_count):
        if not 0 < self.keep_classes <= class_count:
            raise DatasetError(f"keep_classes={self.keep_classes} outside "
                               f"(0, {class_count}]")
        if not 0.0 < self.malicious_fraction <= 1.0:
            raise DatasetError(f"malicious_fraction={self.malicious_fraction} "
                               f"outside (0, 1]")
        return self


# ---------------------------------------------------------------------------
#   IDX archive format
# ---------------------------------------------------------------------------

def _open_maybe_gzip(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path, magic_expected, ndim):
    with _open_maybe_gzip(path) as fh:
        header = fh.read(4 + 4 * ndim)
        if len(header) < 4 + 4 * ndim:
            raise DatasetError(f"corrupt IDX header in {path}")
        magic = struct.unpack(">I", header[:4])[0]
        if magic != magic_expected:
            raise DatasetError(f"unexpected IDX magic 0x{magic:08x} in {path}")
        dims = struct.unpack(f">{ndim}I", header[4:])
        count = int(np.prod(dims, dtype=np.int64))
        body = fh.read(count)
        if len(body) != count:
            raise DatasetError(f"truncated IDX payload in {path}")
        return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def _labels_path_for(images_path):
    base = os.path.basename(images_path)
    candidate = base.replace("images", "labels").replace("idx3", "idx1")
    if candidate == base:
        raise DatasetError(f"cannot infer labels file for {images_path}")
    return os.path.join(os.path.dirname(images_path), candidate)


def load_idx_dataset(images_path, name="idx"):
    """Load one IDX image/label pair; pixels scaled to [0, 1], native order."""
    if not os.path.exists(images_path):
        raise DatasetError(f"path does not exist: {images_path}")
    labels_path = _labels_path_for(images_path)
    if not os.path.exists(labels_path):
        raise DatasetError(f"labels file not found: {labels_path}")
    images = _read_idx(images_path, 0x00000803, 3)
    labels = _read_idx(labels_path, 0x00000801, 1)
    if images.shape[0] != labels.shape[0]:
        raise DatasetError(f"image/label count mismatch: {images.shape[0]} "
                           f"vs {labels.shape[0]}")
    scaled = images.astype(np.float32)[..., None] / 255.0
    class_count = int(labels.max()) + 1 if len(labels) else 0
    return LabeledDataset(scaled, labels.astype(np.int64), class_count,
                          name).validate()


def write_idx_pair(dataset: LabeledDataset, out_dir, prefix="train"):
    """Write a dataset as a gzip-free IDX pair (uint8 pixels). Returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    if dataset.image_shape[2] != 1:
        raise DatasetError("IDX export supports single-channel images only")
    n, h, w, _ = dataset.images.shape
    images_path = os.path.join(out_dir, f"{prefix}-images-idx3-ubyte")
    labels_path = os.path.join(out_dir, f"{prefix}-labels-idx1-ubyte")
    pixels = np.round(dataset.images[..., 0] * 255.0).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, n, h, w))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, n))
        fh.write(dataset.labels.astype(np.uint8).tobytes())
    return images_path, labels_path


# ---------------------------------------------------------------------------
#   Directory-tree datasets (one folder per class)
# ---------------------------------------------------------------------------

def load_folder_dataset(root, name=None, image_size=None, class_order="count"):
    """Load ``root/<class_name>/<image files>``.

    Class ids are assigned by descending per-class image count
    (``class_order="count"``, ties broken by name) or lexicographically by
    folder name (``class_order="name"``). Within a class, files are read in
    lexicographic order. ``image_size`` resizes every image to a square; it
    is required when source images disagree on size.
    """
    if not os.path.isdir(root):
        raise DatasetError(f"path does not exist: {root}")
    class_dirs = sorted(d for d in os.listdir(root)
                        if os.path.isdir(os.path.join(root, d)))
    files_per_class = {}
    for d in class_dirs:
        files = sorted(f for f in os.listdir(os.path.join(root, d))
                       if os.path.splitext(f)[1].lower() in IMAGE_EXTENSIONS)
        if files:
            files_per_class[d] = files
    if not files_per_class:
        raise DatasetError(f"no records found under {root}")
    if class_order == "count":
        ordered = sorted(files_per_class, key=lambda d: (-len(files_per_class[d]), d))
    elif class_order == "name":
        ordered = sorted(files_per_class)
    else:
        raise DatasetError(f"unknown class_order {class_order!r}")

    images, labels = [], []
    channels = None
    for label, class_name in enumerate(ordered):
        for fname in files_per_class[class_name]:
            path = os.path.join(root, class_name, fname)
            try:
                with Image.open(path) as img:
                    if channels is None:
                        channels = 1 if img.mode in ("1", "L", "I;16") else 3
                    img = img.convert("L" if channels == 1 else "RGB")
                    if image_size is not None:
                        img = img.resize((image_size, image_size),
                                         Image.Resampling.BILINEAR)
                    arr = np.asarray(img, dtype=np.float32) / 255.0
            except (OSError, SyntaxError) as exc:
                raise DatasetError(f"corrupt record {path}: {exc}") from exc
            if arr.ndim == 2:
                arr = arr[..., None]
            images.append(arr)
            labels.append(label)
    shapes = {im.shape for im in images}
    if len(shapes) > 1:
        raise DatasetError(f"images disagree on shape {sorted(shapes)}; "
                           f"pass image_size to resize")
    return LabeledDataset(np.stack(images), np.asarray(labels),
                          len(ordered), name or os.path.basename(root)).validate()


def load_dataset(source_path, name="dataset", **kwargs):
    """Load a dataset from an IDX pair or a class-per-folder tree."""
    if not os.path.exists(source_path):
        raise DatasetError(f"path does not exist: {source_path}")
    if os.path.isfile(source_path):
        return load_idx_dataset(source_path, name=name)
    entries = os.listdir(source_path)
    idx_images = sorted(e for e in entries if "images-idx3" in e)
    if idx_images:
        if len(idx_images) > 1:
            raise DatasetError(f"multiple IDX image files under {source_path}; "
                               f"point at one of {idx_images}")
        return load_idx_dataset(os.path.join(source_path, idx_images[0]),
                                name=name)
    if any(os.path.isdir(os.path.join(source_path, e)) for e in entries):
        return load_folder_dataset(source_path, name=name, **kwargs)
    raise DatasetError(f"no records found under {source_path}")


# ---------------------------------------------------------------------------
#   Splits
# ---------------------------------------------------------------------------

def split_by_class(d: LabeledDataset, keep_classes: int):
    """Partition into (labels < keep_classes, the rest), both in input order."""
    if not 0 < keep_classes <= d.class_count:
        raise DatasetError(f"keep_classes={keep_classes} outside "
                           f"(0, {d.class_count}]")
    mask = d.labels < keep_classes
    pretrain = LabeledDataset(d.images[mask], d.labels[mask], keep_classes,
                              f"{d.name}-first{keep_classes}")
    held_out = LabeledDataset(d.images[~mask], d.labels[~mask], d.class_count,
                              f"{d.name}-heldout")
    return pretrain, held_out


def select_class(d: LabeledDataset, label: int):
    """All samples with the given original label, order preserved."""
    if not 0 <= label < d.class_count:
        raise DatasetError(f"label {label} outside [0, {d.class_count})")
    return d.subset(np.flatnonzero(d.labels == label),
                    name=f"{d.name}-class{label}")


def make_malicious_split(d: LabeledDataset, fraction: float, seed: int):
    """Seeded disjoint split of the attacker's samples.

    The first floor(fraction * n) samples of a seeded shuffle form the
    injection set, the remainder the held-out evaluation set.
    """
    n = len(d)
    if n < 2:
        raise DatasetError(f"need at least 2 samples to split, got {n}")
    if not 0.0 < fraction < 1.0:
        raise DatasetError(f"fraction={fraction} outside (0, 1)")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(n)
    cut = int(np.floor(fraction * n))
    inject = d.subset(order[:cut], name=f"{d.name}-inject")
    eval_set = d.subset(order[cut:], name=f"{d.name}-eval")
    return inject, eval_set


def write_manifest(out_dir, dataset: LabeledDataset, provenance: dict):
    """Record name, shape and split provenance next to a derived dataset."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "name": dataset.name,
        "class_count": dataset.class_count,
        "sample_count": len(dataset),
        "image_shape": list(dataset.image_shape),
        "provenance": provenance,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


# ---------------------------------------------------------------------------
#   Synthetic digit corpus
# ---------------------------------------------------------------------------
# Each digit is a set of strokes (polylines in a unit box). Per-sample random
# affine jitter, stroke width and pixel noise give intra-class variation.

def _arc(cx, cy, rx, ry, a0, a1, steps=24):
    t = np.linspace(a0, a1, steps)
    return list(zip(cx + rx * np.cos(t), cy + ry * np.sin(t)))


_DIGIT_STROKES = {
    0: [_arc(0.5, 0.5, 0.26, 0.38, 0.0, 2.0 * np.pi, 40)],
    1: [[(0.34, 0.3), (0.54, 0.1), (0.54, 0.9)]],
    2: [_arc(0.5, 0.32, 0.24, 0.2, np.pi, 2.35 * np.pi)
        + [(0.27, 0.88), (0.76, 0.88)]],
    3: [_arc(0.47, 0.3, 0.22, 0.19, 1.2 * np.pi, 2.5 * np.pi)
        + _arc(0.47, 0.69, 0.25, 0.21, 1.5 * np.pi, 2.85 * np.pi)],
    4: [[(0.62, 0.1), (0.24, 0.62), (0.82, 0.62)], [(0.62, 0.3), (0.62, 0.92)]],
    5: [[(0.74, 0.1), (0.31, 0.1), (0.29, 0.45)],
        _arc(0.47, 0.65, 0.24, 0.22, 1.4 * np.pi, 2.8 * np.pi)],
    6: [[(0.62, 0.08), (0.4, 0.38), (0.31, 0.62)],
        _arc(0.5, 0.67, 0.2, 0.21, 0.0, 2.0 * np.pi, 32)],
    7: [[(0.25, 0.12), (0.75, 0.12), (0.42, 0.9)]],
    8: [_arc(0.5, 0.3, 0.19, 0.18, 0.0, 2.0 * np.pi, 28),
        _arc(0.5, 0.68, 0.23, 0.21, 0.0, 2.0 * np.pi, 28)],
    9: [_arc(0.5, 0.32, 0.21, 0.2, 0.0, 2.0 * np.pi, 32),
        [(0.7, 0.4), (0.62, 0.9)]],
}

_SUPERSAMPLE = 4


def _render_digit(digit, rng, image_size):
    canvas = image_size * _SUPERSAMPLE
    angle = rng.uniform(-0.22, 0.22)
    scale = rng.uniform(0.78, 1.02)
    shear = rng.uniform(-0.18, 0.18)
    dx, dy = rng.uniform(-0.07, 0.07, size=2)
    width = rng.uniform(1.3, 2.4) * _SUPERSAMPLE
    cos_a, sin_a = np.cos(angle), np.sin(angle)

    img = Image.new("L", (canvas, canvas), 0)
    draw = ImageDraw.Draw(img)
    for stroke in _DIGIT_STROKES[digit]:
        pts = np.asarray(stroke, dtype=np.float64) - 0.5
        x = scale * (pts[:, 0] + shear * pts[:, 1])
        y = scale * pts[:, 1]
        xr = cos_a * x - sin_a * y + 0.5 + dx
        yr = sin_a * x + cos_a * y + 0.5 + dy
        coords = [(float(px) * canvas, float(py) * canvas)
                  for px, py in zip(xr, yr)]
        draw.line(coords, fill=255, width=int(round(width)), joint="curve")
    small = img.resize((image_size, image_size), Image.Resampling.LANCZOS)
    arr = np.asarray(small, dtype=np.float32) / 255.0
    arr += rng.normal(0.0, rng.uniform(0.01, 0.035), size=arr.shape)
    return np.clip(arr, 0.0, 1.0)[..., None]


def synthesize_digits(n_per_class, seed, image_size=28, name="digits-synth"):
    """Deterministic 10-class handwritten-digit stand-in corpus.

    Per-sample RNG streams are derived from (seed, class, index), so the
    result is independent of generation order.
    """
    images, labels = [], []
    for digit in range(10):
        for idx in range(n_per_class):
            rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence(entropy=seed,
                                       spawn_key=(digit, idx))))
            images.append(_render_digit(digit, rng, image_size))
            labels.append(digit)
    return LabeledDataset(np.stack(images), np.asarray(labels), 10,
                          name).validate()
