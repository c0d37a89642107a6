"""Labeled images and immutable datasets."""
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Sequence

import numpy as np

from src.config import PIXEL_LEVELS
from src.errors import DataError, ShapeError
from src.schemas import Domain


def quantize_to_8bit(image: np.ndarray) -> np.ndarray:
    """Snap [0,1] values onto the v/255 grid used by the PNG format.

    Args:
        image: Array of reals

    Returns:
        float32 array whose values are exactly k/255
    """
    levels = np.round(np.clip(image, 0.0, 1.0) * PIXEL_LEVELS)
    return (levels / PIXEL_LEVELS).astype(np.float32)


@dataclass(frozen=True)
class LabeledSample:
    """An RGB image with its class-label map.

    Attributes:
        image: H x W x 3 float32 array in [0, 1]
        labels: H x W uint8 array of class ids (0 = background)
        domain: Domain tag
        id: Sample identifier
    """
    image: np.ndarray
    labels: np.ndarray
    domain: Domain
    id: str

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ShapeError(f"Sample {self.id}: image must be H x W x 3, got {self.image.shape}")
        if self.labels.shape != self.image.shape[:2]:
            raise ShapeError(
                f"Sample {self.id}: labels shape {self.labels.shape} != image shape {self.image.shape[:2]}"
            )
        if self.image.size and (self.image.min() < 0.0 or self.image.max() > 1.0):
            raise DataError(f"Sample {self.id}: image values outside [0, 1]")

    @property
    def size(self) -> tuple[int, int]:
        return self.image.shape[0], self.image.shape[1]


@dataclass(frozen=True)
class LabeledDataset:
    """Immutable collection of samples sharing one class count.

    Safe for concurrent reads once constructed.
    """
    name: str
    num_classes: int
    samples: tuple[LabeledSample, ...]
    class_names: tuple[str, ...] = field(default=())
    config_hash: Optional[str] = None

    def __post_init__(self):
        if not self.class_names:
            object.__setattr__(self, "class_names", default_class_names(self.num_classes))
        if len(self.class_names) != self.num_classes:
            raise DataError(
                f"Dataset {self.name}: {len(self.class_names)} class names for {self.num_classes} classes"
            )
        for sample in self.samples:
            if sample.labels.size and int(sample.labels.max()) >= self.num_classes:
                raise DataError(
                    f"Dataset {self.name}: sample {sample.id} has class id "
                    f"{int(sample.labels.max())} >= {self.num_classes}"
                )

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, index: int) -> LabeledSample:
        return self.samples[index]

    def __iter__(self) -> Iterator[LabeledSample]:
        return iter(self.samples)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def by_id(self) -> dict[str, LabeledSample]:
        return {s.id: s for s in self.samples}

    def subset(self, ids: Sequence[str], name: Optional[str] = None) -> "LabeledDataset":
        """Return the samples with the given ids, in that order."""
        lookup = self.by_id()
        missing = [i for i in ids if i not in lookup]
        if missing:
            raise DataError(f"Dataset {self.name}: unknown ids {missing[:5]}")
        return replace(self, name=name or self.name, samples=tuple(lookup[i] for i in ids))


def default_class_names(num_classes: int) -> tuple[str, ...]:
    return ("background",) + tuple(f"class_{k}" for k in range(1, num_classes))
