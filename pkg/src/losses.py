"""Adversarial and PatchNCE objectives.

Total generator objective::

    total = gan_g + lambda_nce * (nce_x + nce_y)

where nce_x compares x with G(x) and nce_y compares y with G(y).
"""
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import torch
import torch.nn.functional as F

from src.errors import ShapeError
from src.models.discriminator import Discriminator
from src.models.generator import Generator
from src.models.projection import ProjectionHeads, extract_and_project
from src.schemas import LossReport, NCEConfig

GAN_MODES = ("lsgan", "nonsaturating")

Embeddings = Union[Mapping[str, torch.Tensor], Sequence[torch.Tensor]]


def _check_logits(*maps: torch.Tensor):
    for logits in maps:
        if logits.numel() == 0:
            raise ShapeError("Empty logit map")


def gan_loss_d(real_logits: torch.Tensor, fake_logits: torch.Tensor, mode: str = "lsgan") -> torch.Tensor:
    """Discriminator loss, averaged over the real and fake terms.

    lsgan: 0.5 * (mean((real - 1)^2) + mean(fake^2))
    nonsaturating: 0.5 * (mean(softplus(-real)) + mean(softplus(fake)))

    Raises:
        ShapeError: Empty logit map
    """
    _check_logits(real_logits, fake_logits)
    if mode == "lsgan":
        return 0.5 * (((real_logits - 1.0) ** 2).mean() + (fake_logits ** 2).mean())
    if mode == "nonsaturating":
        return 0.5 * (F.softplus(-real_logits).mean() + F.softplus(fake_logits).mean())
    raise ValueError(f"Unknown GAN mode '{mode}', expected one of {GAN_MODES}")


def gan_loss_g(fake_logits: torch.Tensor, mode: str = "lsgan") -> torch.Tensor:
    """Generator adversarial loss: mean((fake - 1)^2) for lsgan."""
    _check_logits(fake_logits)
    if mode == "lsgan":
        return ((fake_logits - 1.0) ** 2).mean()
    if mode == "nonsaturating":
        return F.softplus(-fake_logits).mean()
    raise ValueError(f"Unknown GAN mode '{mode}', expected one of {GAN_MODES}")


def sample_locations(
    map_shapes: Mapping[str, Sequence[int]],
    n_locations: int,
    rng: torch.Generator
) -> dict[str, torch.Tensor]:
    """Draw distinct flat spatial indices per layer.

    Args:
        map_shapes: Layer name -> (H, W) (or any shape ending in H, W)
        n_locations: Requested locations per layer
        rng: Torch generator; layers are drawn in mapping order

    Returns:
        Layer name -> 1-D LongTensor of min(n_locations, H*W) distinct indices
    """
    out = {}
    for name, shape in map_shapes.items():
        h, w = int(shape[-2]), int(shape[-1])
        if h * w == 0:
            raise ShapeError(f"Feature map '{name}' is empty")
        out[name] = torch.randperm(h * w, generator=rng)[:min(n_locations, h * w)]
    return out


def _as_list(embeddings: Embeddings) -> list[torch.Tensor]:
    if isinstance(embeddings, Mapping):
        return list(embeddings.values())
    return list(embeddings)


def patch_nce_loss(src_embeddings: Embeddings, trans_embeddings: Embeddings, tau: float) -> torch.Tensor:
    """Contrastive loss identifying each translated patch's source patch.

    For every layer and image, logits[i, j] = <trans_i, src_j> / tau and the
    target of row i is j = i; the other sampled locations of the same image
    are the negatives. The loss is averaged over locations, images and
    layers.

    Args:
        src_embeddings: Per-layer unit-norm embeddings, L x dim or N x L x dim
        trans_embeddings: Same structure, at the same locations
        tau: Temperature

    Returns:
        Scalar loss

    Raises:
        ShapeError: Mismatched layer or location counts
    """
    src_layers = _as_list(src_embeddings)
    trans_layers = _as_list(trans_embeddings)
    if len(src_layers) != len(trans_layers) or not src_layers:
        raise ShapeError(f"Layer count mismatch: {len(src_layers)} source vs {len(trans_layers)} translated")

    losses = []
    for src, trans in zip(src_layers, trans_layers):
        if src.dim() == 2:
            src = src[None]
        if trans.dim() == 2:
            trans = trans[None]
        if src.shape != trans.shape:
            raise ShapeError(f"Embedding shape mismatch: {tuple(src.shape)} vs {tuple(trans.shape)}")
        n_images, n_locations, _ = src.shape
        logits = torch.bmm(trans, src.transpose(1, 2)) / tau
        targets = torch.arange(n_locations, device=src.device).repeat(n_images)
        losses.append(F.cross_entropy(logits.reshape(n_images * n_locations, n_locations), targets))
    return torch.stack(losses).mean()


def combine_losses(gan_g, nce_x, nce_y, lambda_nce: float):
    """gan_g + lambda_nce * (nce_x + nce_y); works on floats and tensors."""
    return gan_g + lambda_nce * (nce_x + nce_y)


@dataclass
class LossTerms:
    """Differentiable loss terms of one step plus the translated batch."""
    gan_g: torch.Tensor
    gan_d: torch.Tensor
    nce_x: torch.Tensor
    nce_y: torch.Tensor
    total: torch.Tensor
    fake_x: torch.Tensor

    def report(self) -> LossReport:
        return LossReport(
            gan_g=float(self.gan_g.detach()),
            gan_d=float(self.gan_d.detach()),
            nce_x=float(self.nce_x.detach()),
            nce_y=float(self.nce_y.detach()),
            total=float(self.total.detach()),
        )


def draw_noise_seed(rng: torch.Generator) -> int:
    return int(torch.randint(0, 2 ** 31 - 1, (1,), generator=rng))


def nce_term(
    G: Generator,
    H: ProjectionHeads,
    src_feats: Mapping[str, torch.Tensor],
    translated: torch.Tensor,
    cfg: NCEConfig,
    rng: torch.Generator
) -> torch.Tensor:
    """PatchNCE between a source batch's features and its translation."""
    locations = sample_locations({k: v.shape for k, v in src_feats.items()}, cfg.n_locations, rng)
    trans_feats = G.encode(translated)
    src_emb = extract_and_project(H, src_feats, locations)
    trans_emb = extract_and_project(H, trans_feats, locations)
    if cfg.detach_keys:
        src_emb = {k: v.detach() for k, v in src_emb.items()}
    return patch_nce_loss(src_emb, trans_emb, cfg.temperature)


def total_loss(
    G: Generator,
    D: Discriminator,
    H: ProjectionHeads,
    x_batch: torch.Tensor,
    y_batch: torch.Tensor,
    cfg: NCEConfig,
    rng: torch.Generator,
    gan_mode: str = "lsgan"
) -> LossTerms:
    """Full objective for one unpaired batch.

    x and y go through the generator together; G(y) feeds the identity
    PatchNCE term. ``gan_d`` is computed on the detached translation. All
    randomness (noise seed, NCE locations) comes from ``rng``.

    Args:
        G: Generator
        D: Discriminator
        H: Projection heads
        x_batch: Source patches, N x 3 x S x S
        y_batch: Target patches, N x 3 x S x S
        cfg: PatchNCE settings
        rng: Torch generator
        gan_mode: "lsgan" or "nonsaturating"

    Returns:
        LossTerms
    """
    n = x_batch.shape[0]
    noise_seed = draw_noise_seed(rng)
    fake, feats = G(torch.cat([x_batch, y_batch], dim=0), noise_seed=noise_seed)
    fake_x, fake_y = fake[:n], fake[n:]
    feats_x = {k: v[:n] for k, v in feats.items()}
    feats_y = {k: v[n:] for k, v in feats.items()}

    gan_g = gan_loss_g(D(fake_x), gan_mode)
    gan_d = gan_loss_d(D(y_batch), D(fake_x.detach()), gan_mode)

    nce_x = nce_term(G, H, feats_x, fake_x, cfg, rng)
    nce_y = nce_term(G, H, feats_y, fake_y, cfg, rng)

    total = combine_losses(gan_g, nce_x, nce_y, cfg.lambda_nce)
    return LossTerms(gan_g=gan_g, gan_d=gan_d, nce_x=nce_x, nce_y=nce_y, total=total, fake_x=fake_x)
