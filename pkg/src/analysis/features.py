"""Masked, pooled segmenter features and feature-space gap metrics."""
from dataclasses import dataclass
from typing import Any, Sequence, Union

import numpy as np
import torch
import torch.nn.functional as F

from src.data.samples import LabeledSample
from src.errors import DataError, ShapeError
from src.models.segmenter import Segmenter
from src.models.tensors import images_to_tensor
from src.schemas import Domain

BACKGROUND_CLASS = 0


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    source_id: str
    domain: Domain


def mask_background(sample: LabeledSample) -> np.ndarray:
    """Zero every pixel labeled as background.

    Raises:
        ShapeError: Labels not aligned with the image
    """
    if sample.labels.shape != sample.image.shape[:2]:
        raise ShapeError(f"Sample {sample.id}: labels {sample.labels.shape} vs image {sample.image.shape[:2]}")
    keep = (sample.labels != BACKGROUND_CLASS)[..., None]
    return np.where(keep, sample.image, 0.0).astype(sample.image.dtype)


def adaptive_pool_vector(feature_map: torch.Tensor) -> np.ndarray:
    """Spatial mean per channel of a C x H x W (or 1 x C x H x W) map."""
    if feature_map.dim() == 3:
        feature_map = feature_map[None]
    pooled = F.adaptive_avg_pool2d(feature_map, 1)
    return pooled.flatten().detach().to("cpu", torch.float64).numpy()


def pooled_features(
    model: Segmenter,
    img: np.ndarray,
    layer_id: str,
    device: Union[str, torch.device] = "cpu"
) -> np.ndarray:
    """Average-pooled activations of one segmenter layer.

    Args:
        model: Segmenter
        img: H x W x 3 image in [0, 1]
        layer_id: Named layer (see ``Segmenter.LAYER_IDS``)
        device: Torch device

    Returns:
        Vector with one entry per channel of the layer

    Raises:
        ConfigurationError: Unknown layer id
    """
    model.eval()
    with torch.no_grad():
        feature_map = model.features(images_to_tensor(img, device), layer_id)
    return adaptive_pool_vector(feature_map)


def stack_vectors(vectors: Sequence[Union[FeatureVector, np.ndarray]]) -> np.ndarray:
    """n x d float64 matrix from feature vectors.

    Raises:
        DataError: Inconsistent lengths or non-finite values
    """
    rows = [v.values if isinstance(v, FeatureVector) else np.asarray(v) for v in vectors]
    if len({r.shape for r in rows}) > 1:
        raise DataError("Feature vectors have inconsistent lengths")
    matrix = np.asarray(rows, dtype=np.float64)
    if matrix.size and not np.all(np.isfinite(matrix)):
        raise DataError("Feature vectors contain non-finite values")
    return matrix


def nearest_real_distance(vectors: np.ndarray, real: np.ndarray) -> float:
    """Mean Euclidean distance from each vector to its nearest real vector."""
    d2 = (vectors ** 2).sum(1)[:, None] + (real ** 2).sum(1)[None, :] - 2.0 * vectors @ real.T
    return float(np.sqrt(np.maximum(d2, 0.0)).min(axis=1).mean())


def cluster_statistics(points: np.ndarray, domains: Sequence[Domain]) -> dict[str, dict[str, Any]]:
    """Centroid and spread of each domain's point cloud.

    Spread is the mean distance to the domain centroid.
    """
    labels = np.asarray([d.value for d in domains])
    stats = {}
    for name in sorted(set(labels)):
        group = points[labels == name]
        centroid = group.mean(axis=0)
        spread = float(np.linalg.norm(group - centroid, axis=1).mean())
        stats[name] = {"count": int(len(group)), "centroid": centroid.tolist(), "spread": spread}
    return stats
