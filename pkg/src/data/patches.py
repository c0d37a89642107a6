"""Patch cropping and resampling for translation training."""
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from src.data.samples import LabeledSample
from src.errors import PatchSizeError
from src.schemas import PatchSpec

MIN_RESIZE_TARGET = 4


def bicubic_resize(img: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Resample an H x W x 3 image with bicubic interpolation.

    Args:
        img: Image in [0, 1]
        target: (H, W) output size

    Returns:
        Resized float32 image clamped to [0, 1]; the input itself when
        the size already matches

    Raises:
        PatchSizeError: If a target dimension is below 4
    """
    th, tw = target
    if th < MIN_RESIZE_TARGET or tw < MIN_RESIZE_TARGET:
        raise PatchSizeError(f"resize target must be at least {MIN_RESIZE_TARGET}x{MIN_RESIZE_TARGET}, got {target}")
    if img.shape[:2] == (th, tw):
        return img

    tensor = torch.from_numpy(np.ascontiguousarray(img, dtype=np.float64)).permute(2, 0, 1)[None]
    resized = F.interpolate(tensor, size=(th, tw), mode="bicubic", align_corners=False)
    return resized[0].permute(1, 2, 0).clamp(0.0, 1.0).numpy().astype(np.float32)


def nearest_resize_labels(labels: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Resize a label map without mixing class ids."""
    th, tw = target
    h, w = labels.shape
    rows = np.minimum((np.arange(th) + 0.5) * h / th, h - 1).astype(int)
    cols = np.minimum((np.arange(tw) + 0.5) * w / tw, w - 1).astype(int)
    return labels[rows][:, cols]


def sample_corner(image_hw: tuple[int, int], size: int, rng: np.random.Generator) -> tuple[int, int]:
    """Draw a uniformly random valid top-left corner for a size x size crop."""
    h, w = image_hw
    if size > h or size > w:
        raise PatchSizeError(f"patch {size} does not fit image of size {h}x{w}")
    return int(rng.integers(0, h - size + 1)), int(rng.integers(0, w - size + 1))


def crop_at(sample: LabeledSample, top: int, left: int, spec: PatchSpec) -> LabeledSample:
    """Cut the patch at a given corner, rescaling in legacy mode."""
    size = spec.crop_size
    image = sample.image[top:top + size, left:left + size]
    labels = sample.labels[top:top + size, left:left + size]
    if size != spec.effective_size:
        target = (spec.effective_size, spec.effective_size)
        image = bicubic_resize(image, target)
        labels = nearest_resize_labels(labels, target)
    return LabeledSample(image=image, labels=labels, domain=sample.domain, id=sample.id)


def random_crop(
    sample: LabeledSample,
    spec: PatchSpec,
    rng: np.random.Generator,
    corner: Optional[tuple[int, int]] = None
) -> LabeledSample:
    """Crop an effective_size x effective_size patch at a random corner.

    Args:
        sample: Source sample
        spec: Patch specification
        rng: Random state used for the corner
        corner: Optional fixed (top, left), skipping the draw

    Returns:
        Cropped sample with the same domain and id

    Raises:
        PatchSizeError: If the patch does not fit the sample
    """
    spec.check(sample.size)
    top, left = corner if corner is not None else sample_corner(sample.size, spec.crop_size, rng)
    return crop_at(sample, top, left, spec)
