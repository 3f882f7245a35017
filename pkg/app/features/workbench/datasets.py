"""Workbench Feature - Dataset ingestion (IDX files and synthetic blobs)"""
import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from app.features.workbench.models import Dataset, DatasetSection
from app.shared.exceptions import DatasetFormatError, ValidationError


logger = logging.getLogger("macam_workbench")

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

PathLike = Union[str, Path]


def _read_idx(path: PathLike, magic: int, dims: int) -> Tuple[Tuple[int, ...], np.ndarray]:
    """Header sizes and uint8 payload of one IDX file"""
    path = Path(path)
    if not path.is_file():
        raise DatasetFormatError(f"IDX file not found: {path}")
    raw = path.read_bytes()
    header_size = 4 * (1 + dims)
    if len(raw) < header_size:
        raise DatasetFormatError(f"{path.name}: truncated header ({len(raw)} bytes)")

    header = np.frombuffer(raw, dtype=">u4", count=1 + dims)
    observed = int(header[0])
    if observed != magic:
        raise DatasetFormatError(f"{path.name}: bad magic 0x{observed:08X}, expected 0x{magic:08X}")

    sizes = tuple(int(s) for s in header[1:])
    expected = int(np.prod(sizes))
    payload = np.frombuffer(raw, dtype=np.uint8, offset=header_size)
    if payload.size < expected:
        raise DatasetFormatError(f"{path.name}: truncated payload ({payload.size} of {expected} bytes)")
    return sizes, payload[:expected]


def load_idx_dataset(
    images_path: PathLike,
    labels_path: PathLike,
    num_classes: Optional[int] = None,
) -> Dataset:
    """
    Read an IDX image/label pair.

    Args:
        images_path: IDX3 image file (magic 0x00000803)
        labels_path: IDX1 label file (magic 0x00000801)
        num_classes: Class count; inferred from the labels when omitted

    Returns:
        Dataset with pixels scaled to [0, 1] and shape (N, 1, H, W)

    Raises:
        DatasetFormatError: On bad magic, truncated payload or count mismatch
    """
    (count, rows, cols), pixels = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    (label_count,), labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if count != label_count:
        raise DatasetFormatError(f"{count} images but {label_count} labels")
    if rows != cols:
        raise DatasetFormatError(f"Images must be square, got {rows}x{cols}")

    images = (pixels.reshape(count, 1, rows, cols).astype(np.float32) / 255.0)
    labels = labels.astype(np.int64)
    classes = num_classes if num_classes is not None else (int(labels.max()) + 1 if count else 1)
    if count and labels.max() >= classes:
        raise DatasetFormatError(f"Label {int(labels.max())} outside [0, {classes})")
    logger.info(f"Loaded {count} IDX samples ({rows}x{cols}, {classes} classes) from {images_path}")
    return Dataset(images=images, labels=labels, num_classes=classes)


def write_idx_images(path: PathLike, images: np.ndarray) -> None:
    """Write (N, H, W) uint8 images as an IDX3 file"""
    images = np.asarray(images, dtype=np.uint8)
    header = np.array([IDX_IMAGES_MAGIC, *images.shape], dtype=">u4")
    Path(path).write_bytes(header.tobytes() + images.tobytes())


def write_idx_labels(path: PathLike, labels: np.ndarray) -> None:
    """Write (N,) uint8 labels as an IDX1 file"""
    labels = np.asarray(labels, dtype=np.uint8)
    header = np.array([IDX_LABELS_MAGIC, labels.shape[0]], dtype=">u4")
    Path(path).write_bytes(header.tobytes() + labels.tobytes())


def synth_dataset(
    classes: int,
    samples_per_class: int,
    image_size: int,
    seed: int,
    noise: float = 0.3,
) -> Dataset:
    """
    Class-conditional Gaussian-blob images.

    Every class owns one blob centred on a distinct pixel; samples add
    i.i.d. pixel noise and are clipped to [0, 1]. The result is
    deterministic in `seed` and linearly separable as noise goes to 0.
    """
    if classes < 1 or samples_per_class < 1 or image_size < 1:
        raise ValidationError("classes, samples_per_class and image_size must be positive")
    if classes > image_size * image_size:
        raise ValidationError(f"Cannot place {classes} distinct blobs on a {image_size}x{image_size} grid")
    if noise < 0:
        raise ValidationError(f"noise must be >= 0, got {noise}")

    rng = np.random.default_rng(seed)
    centres = rng.choice(image_size * image_size, size=classes, replace=False)
    yy, xx = np.mgrid[0:image_size, 0:image_size].astype(np.float64)
    width = max(image_size / 6.0, 0.5)
    prototypes = np.stack([
        np.exp(-((yy - c // image_size) ** 2 + (xx - c % image_size) ** 2) / (2 * width ** 2))
        for c in centres
    ])

    labels = np.repeat(np.arange(classes, dtype=np.int64), samples_per_class)
    images = prototypes[labels] + noise * rng.standard_normal((labels.size, image_size, image_size))
    order = rng.permutation(labels.size)
    images = np.clip(images[order], 0.0, 1.0).astype(np.float32)[:, None, :, :]
    return Dataset(images=images, labels=labels[order], num_classes=classes)


def split_dataset(data: Dataset, test_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Random train/test split"""
    if not 0 < test_fraction < 1:
        raise ValidationError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if len(data) < 2:
        raise ValidationError(f"Cannot split {len(data)} sample(s) into non-empty train and test sets")
    order = np.random.default_rng(seed).permutation(len(data))
    n_test = min(len(data) - 1, max(1, int(round(len(data) * test_fraction))))
    return data.subset(order[n_test:]), data.subset(order[:n_test])


def load_datasets(section: DatasetSection, seed: int) -> Tuple[Dataset, Dataset]:
    """Train and test sets described by the [dataset] section"""
    if section.kind == "synthetic":
        data = synth_dataset(section.classes, section.samples_per_class, section.image_size, seed, section.noise)
        return split_dataset(data, section.test_fraction, seed)

    train = load_idx_dataset(section.train_images, section.train_labels, section.classes)
    if section.test_images is None:
        return split_dataset(train, section.test_fraction, seed)
    return train, load_idx_dataset(section.test_images, section.test_labels, section.classes)
