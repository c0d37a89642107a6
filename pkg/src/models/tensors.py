"""Conversion between HWC numpy images and NCHW tensors."""
from typing import Sequence, Union

import numpy as np
import torch

from src.errors import ShapeError


def images_to_tensor(
    images: Union[np.ndarray, Sequence[np.ndarray]],
    device: Union[str, torch.device] = "cpu",
    dtype: torch.dtype = torch.float32
) -> torch.Tensor:
    """Stack H x W x 3 images (or an N x H x W x 3 array) into N x 3 x H x W."""
    array = np.stack(images) if not isinstance(images, np.ndarray) else images
    if array.ndim == 3:
        array = array[None]
    if array.ndim != 4 or array.shape[-1] != 3:
        raise ShapeError(f"Expected N x H x W x 3 images, got {array.shape}")
    return torch.from_numpy(np.ascontiguousarray(array)).to(device=device, dtype=dtype).permute(0, 3, 1, 2).contiguous()


def tensor_to_images(batch: torch.Tensor) -> np.ndarray:
    """N x 3 x H x W tensor to an N x H x W x 3 float32 array."""
    return batch.detach().permute(0, 2, 3, 1).to("cpu", torch.float32).numpy()


def labels_to_tensor(labels: Union[np.ndarray, Sequence[np.ndarray]], device: Union[str, torch.device] = "cpu") -> torch.Tensor:
    array = np.stack(labels) if not isinstance(labels, np.ndarray) else labels
    return torch.from_numpy(np.ascontiguousarray(array)).to(device=device, dtype=torch.long)
