"""Feature-space analysis of the domain gap."""
from src.analysis.features import (
    FeatureVector,
    cluster_statistics,
    mask_background,
    nearest_real_distance,
    pooled_features,
)
from src.analysis.plotting import plot_embedding, plot_iou_distributions
from src.analysis.tsne import TsneResult, tsne_embed

__all__ = [
    "FeatureVector",
    "TsneResult",
    "cluster_statistics",
    "mask_background",
    "nearest_real_distance",
    "plot_embedding",
    "plot_iou_distributions",
    "pooled_features",
    "tsne_embed",
]
