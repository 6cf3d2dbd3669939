"""CIFAR-100 binary ingestion, synthetic blob datasets, normalization and two-view batches."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

RECORD_BYTES = 3074
IMAGE_SHAPE = (3, 32, 32)
PIXEL_BYTES = 3072
CIFAR100_SPLIT_SIZES = {"train": 50_000, "test": 10_000}
CIFAR100_CLASSES = 100


class DataFormatError(ValueError):
    pass


@dataclass
class Sample:
    image: np.ndarray  # C x H x W raw pixel values in [0, 255]
    fine_label: int
    coarse_label: int = 0


@dataclass(frozen=True)
class DatasetMeta:
    name: str
    num_classes: int
    channel_means: tuple[float, ...]
    channel_stds: tuple[float, ...]
    split_sizes: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.channel_means) != len(self.channel_stds):
            raise ValueError("channel_means and channel_stds differ in length")
        if any(not s > 0 for s in self.channel_stds):
            raise ValueError(f"channel stds must be strictly positive, got {self.channel_stds}")

    def _stats(self, ndim: int) -> tuple[np.ndarray, np.ndarray]:
        if ndim not in (3, 4):
            raise ValueError(f"expected a C x H x W image or a batch of them, got {ndim} dims")
        shape = (-1, 1, 1) if ndim == 3 else (1, -1, 1, 1)
        return np.asarray(self.channel_means).reshape(shape), np.asarray(self.channel_stds).reshape(shape)

    def normalize(self, pixels: np.ndarray) -> np.ndarray:
        """``(pixel / 255 - mean_c) / std_c`` for a C x H x W image or a B x C x H x W batch."""
        pixels = np.asarray(pixels, dtype=np.float64)
        mean, std = self._stats(pixels.ndim)
        return (pixels / 255.0 - mean) / std

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        mean, std = self._stats(values.ndim)
        return (values * std + mean) * 255.0

    def domain(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-channel normalized images of raw 0 and raw 255, shaped (C, 1, 1)."""
        mean = np.asarray(self.channel_means).reshape(-1, 1, 1)
        std = np.asarray(self.channel_stds).reshape(-1, 1, 1)
        return (0.0 - mean) / std, (1.0 - mean) / std


def normalize(img: np.ndarray, meta: DatasetMeta) -> np.ndarray:
    return meta.normalize(img)


def denormalize(img: np.ndarray, meta: DatasetMeta) -> np.ndarray:
    return meta.denormalize(img)


# ---------------------------------------------------------------------------
# CIFAR-100 binary format
# ---------------------------------------------------------------------------

def load_cifar100(path: str | os.PathLike, split: str, expected_records: int | None = None) -> list[Sample]:
    """Parse a CIFAR-100 ``train.bin``/``test.bin`` file.

    Each 3074-byte record is one coarse label byte, one fine label byte and
    3072 pixel bytes (1024 R, 1024 G, 1024 B, row-major within a channel).
    ``expected_records`` defaults to nothing; pass
    ``CIFAR100_SPLIT_SIZES[split]`` to insist on the official split size.
    """
    if split not in CIFAR100_SPLIT_SIZES:
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    size = os.path.getsize(path)
    if size == 0 or size % RECORD_BYTES:
        raise DataFormatError(
            f"{path}: expected a positive multiple of {RECORD_BYTES} bytes, got {size} "
            f"({size % RECORD_BYTES} trailing bytes)"
        )
    count = size // RECORD_BYTES
    if expected_records is not None and count != expected_records:
        raise DataFormatError(
            f"{path}: expected {expected_records * RECORD_BYTES} bytes ({expected_records} records), "
            f"got {size} bytes ({count} records)"
        )
    raw = np.fromfile(path, dtype=np.uint8).reshape(count, RECORD_BYTES)
    bad = np.flatnonzero(raw[:, 1] >= CIFAR100_CLASSES)
    if bad.size:
        raise DataFormatError(f"{path}: corrupt record {bad[0]} has fine label {raw[bad[0], 1]}")
    images = raw[:, 2:].reshape((count,) + IMAGE_SHAPE)
    return [Sample(images[i], int(raw[i, 1]), int(raw[i, 0])) for i in range(count)]


def write_cifar100(path: str | os.PathLike, samples: Sequence[Sample]) -> None:
    """Write samples in the CIFAR-100 binary layout; pixels are rounded to uint8."""
    records = np.empty((len(samples), RECORD_BYTES), dtype=np.uint8)
    for i, s in enumerate(samples):
        if s.image.shape != IMAGE_SHAPE:
            raise ValueError(f"CIFAR records hold {IMAGE_SHAPE} images, got {s.image.shape}")
        if not 0 <= s.fine_label < CIFAR100_CLASSES:
            raise ValueError(f"fine label {s.fine_label} out of range")
        records[i, 0] = s.coarse_label
        records[i, 1] = s.fine_label
        records[i, 2:] = np.clip(np.rint(s.image), 0, 255).astype(np.uint8).reshape(-1)
    records.tofile(path)


# ---------------------------------------------------------------------------
# synthetic blobs
# ---------------------------------------------------------------------------

def blob_templates(num_classes: int, image_size: int, noise_sigma: float, seed: int,
                   channels: int = 3, max_tries: int = 100) -> np.ndarray:
    """Binary class templates in unit intensity, pairwise L2 >= 10 * sigma * sqrt(pixels)."""
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    pixels = channels * image_size * image_size
    required = 10.0 * noise_sigma * np.sqrt(pixels)
    # Binary templates are at most sqrt(pixels) apart.
    if required > np.sqrt(pixels):
        raise ValueError(f"separation {required:.3g} unsatisfiable for sigma={noise_sigma} (max {np.sqrt(pixels):.3g})")
    rng = np.random.default_rng([seed, 0])
    for _ in range(max_tries):
        templates = rng.integers(0, 2, size=(num_classes, channels, image_size, image_size)).astype(np.float64)
        flat = templates.reshape(num_classes, -1)
        dist = np.sqrt(((flat[:, None, :] - flat[None, :, :]) ** 2).sum(-1))
        off = dist[~np.eye(num_classes, dtype=bool)]
        if off.min() >= required:
            return templates
    raise ValueError(f"could not draw {num_classes} templates separated by {required:.3g} in {max_tries} tries")


def synthesize_blobs(num_classes: int, per_class: int, image_size: int, noise_sigma: float, seed: int,
                     channels: int = 3, stream: int = 0) -> list[Sample]:
    """Class template plus Gaussian pixel noise, as raw pixels in [0, 255].

    Templates depend only on ``seed``; ``stream`` selects an independent noise
    draw so train and test splits share templates.
    """
    templates = blob_templates(num_classes, image_size, noise_sigma, seed, channels)
    rng = np.random.default_rng([seed, 1, stream])
    samples = []
    for k in range(num_classes):
        noise = rng.normal(0.0, noise_sigma, size=(per_class,) + templates[k].shape)
        images = np.clip(templates[k] + noise, 0.0, 1.0) * 255.0
        samples.extend(Sample(images[i], k, 0) for i in range(per_class))
    return samples


# ---------------------------------------------------------------------------
# array datasets
# ---------------------------------------------------------------------------

def channel_stats(images: np.ndarray) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Per-channel mean and population std of ``images / 255`` over (N, H, W)."""
    unit = np.asarray(images, dtype=np.float64) / 255.0
    return tuple(unit.mean(axis=(0, 2, 3)).tolist()), tuple(unit.std(axis=(0, 2, 3)).tolist())


@dataclass
class ArrayDataset:
    """Raw pixel images (N, C, H, W) with labels; normalized on access."""

    images: np.ndarray
    labels: np.ndarray
    meta: DatasetMeta

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or len(self.images) != len(self.labels):
            raise ValueError(f"images {self.images.shape} do not match {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def normalized(self, index=slice(None)) -> np.ndarray:
        return self.meta.normalize(self.images[index])

    def subset(self, index) -> "ArrayDataset":
        return ArrayDataset(self.images[index], self.labels[index], self.meta)


def stack_samples(samples: Sequence[Sample], meta: DatasetMeta) -> ArrayDataset:
    if not samples:
        raise ValueError("no samples")
    images = np.stack([s.image for s in samples])
    return ArrayDataset(images, np.array([s.fine_label for s in samples]), meta)


def derive_meta(name: str, num_classes: int, train: Sequence[Sample], test_size: int = 0) -> DatasetMeta:
    means, stds = channel_stats(np.stack([s.image for s in train]))
    return DatasetMeta(name, num_classes, means, stds, {"train": len(train), "test": test_size})


def make_datasets(name: str, num_classes: int, train: Sequence[Sample],
                  test: Sequence[Sample]) -> tuple[ArrayDataset, ArrayDataset]:
    meta = derive_meta(name, num_classes, train, len(test))
    return stack_samples(train, meta), stack_samples(test, meta)


# ---------------------------------------------------------------------------
# augmentation and two-view batches
# ---------------------------------------------------------------------------

def crop_flip(img: np.ndarray, top: int, left: int, flip: bool, pad: int = 4) -> np.ndarray:
    """Zero-pad by ``pad``, crop back to size at (top, left), then optionally mirror."""
    _, H, W = img.shape
    padded = np.pad(img, ((0, 0), (pad, pad), (pad, pad)))
    out = padded[:, top:top + H, left:left + W]
    return out[:, :, ::-1].copy() if flip else out.copy()


def augment(img: np.ndarray, rng: np.random.Generator, pad: int = 4) -> np.ndarray:
    if img.ndim != 3 or img.shape[1] != img.shape[2]:
        raise ValueError(f"augment expects a square C x H x W image, got {img.shape}")
    top, left = rng.integers(0, 2 * pad + 1, size=2)
    flip = rng.random() < 0.5
    return crop_flip(img, int(top), int(left), bool(flip), pad)


def make_two_view_batch(images: np.ndarray, labels: Sequence[int], rng: np.random.Generator,
                        augment_enabled: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Two views of the same raw images; per sample, view A draws before view B.

    Returns raw-pixel views; callers normalize. With augmentation off both
    views are bitwise copies.
    """
    images = np.asarray(images)
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) == 0:
        raise ValueError("cannot build a batch from no samples")
    if not augment_enabled:
        view = np.asarray(images, dtype=np.float64)
        return view, view.copy(), labels
    view_a = np.empty(images.shape)
    view_b = np.empty(images.shape)
    for i, img in enumerate(images):
        view_a[i] = augment(img, rng)
        view_b[i] = augment(img, rng)
    return view_a, view_b, labels


def augment_batch(images: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return np.stack([augment(img, rng) for img in images])
