"""Per-layer MLP projection heads for PatchNCE."""
from typing import Mapping

import torch
import torch.nn as nn
import torch.nn.functional as F

from src.errors import LocationError, ShapeError


class ProjectionHeads(nn.Module):
    """One two-layer MLP per PatchNCE layer, followed by L2 normalization.

    Attributes:
        layer_names: Layer order; must match the generator's feature dict
        dim: Embedding dimension
    """

    def __init__(self, channels: Mapping[str, int], dim: int):
        super().__init__()
        self.layer_names = list(channels)
        self.dim = dim
        self.mlps = nn.ModuleDict({
            name: nn.Sequential(nn.Linear(c, dim), nn.ReLU(inplace=True), nn.Linear(dim, dim))
            for name, c in channels.items()
        })

    def forward(self, name: str, vectors: torch.Tensor) -> torch.Tensor:
        return F.normalize(self.mlps[name](vectors), dim=-1)


def gather_locations(feature_map: torch.Tensor, locations: torch.Tensor) -> torch.Tensor:
    """Pick feature vectors at flat spatial indices.

    Args:
        feature_map: N x C x H x W
        locations: 1-D LongTensor of indices into H*W

    Returns:
        N x len(locations) x C

    Raises:
        LocationError: If an index is outside the map
    """
    n, c, h, w = feature_map.shape
    if locations.numel() and (int(locations.min()) < 0 or int(locations.max()) >= h * w):
        raise LocationError(
            f"location index out of range for a {h}x{w} map: [{int(locations.min())}, {int(locations.max())}]"
        )
    flat = feature_map.flatten(2).permute(0, 2, 1)
    return flat[:, locations.to(feature_map.device), :]


def extract_and_project(
    heads: ProjectionHeads,
    feature_maps: Mapping[str, torch.Tensor],
    locations: Mapping[str, torch.Tensor]
) -> dict[str, torch.Tensor]:
    """Embed the features at the sampled locations of every layer.

    The same locations are used for every image of the batch.

    Args:
        heads: Projection heads
        feature_maps: Layer name -> N x C x H x W
        locations: Layer name -> 1-D index list

    Returns:
        Layer name -> N x L x dim unit-norm embeddings

    Raises:
        LocationError: Out-of-range location
        ShapeError: A layer without locations or without a head
    """
    out = {}
    for name in heads.layer_names:
        if name not in feature_maps or name not in locations:
            raise ShapeError(f"Missing feature map or locations for layer '{name}'")
        out[name] = heads(name, gather_locations(feature_maps[name], locations[name]))
    return out
