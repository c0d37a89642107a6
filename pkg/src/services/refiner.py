"""Full-resolution refinement of synthetic datasets."""
import logging
from itertools import groupby
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch

from src.config import LOGGER_NAME, REFINE_NOISE_SEED
from src.data.samples import LabeledDataset, LabeledSample, quantize_to_8bit
from src.errors import ShapeError
from src.models.checkpoint import TranslationModels, load_translation_checkpoint
from src.models.generator import DOWNSAMPLE_FACTOR
from src.models.tensors import images_to_tensor, tensor_to_images
from src.schemas import Domain
from src.utils.hashing import config_hash

logger = logging.getLogger(LOGGER_NAME)

REFINED_PREFIX = "refined/"
REFINE_BATCH_SIZE = 16


def refined_id(source_id: str) -> str:
    return f"{REFINED_PREFIX}{source_id}"


def source_id(sample_id: str) -> str:
    """Id of the synthetic frame a refined frame was produced from."""
    return sample_id[len(REFINED_PREFIX):] if sample_id.startswith(REFINED_PREFIX) else sample_id


def batch_noise_seed(noise_seed: Optional[int], batch_index: int) -> int:
    """Noise seed of one refinement batch; None means ``REFINE_NOISE_SEED``."""
    if noise_seed is None:
        noise_seed = REFINE_NOISE_SEED
    return int(np.random.SeedSequence([noise_seed, batch_index]).generate_state(1)[0])


def refine_dataset(
    ckpt: Union[TranslationModels, Path, str],
    X: LabeledDataset,
    noise_seed: Optional[int] = None,
    device: Union[str, torch.device] = "cpu",
    batch_size: int = REFINE_BATCH_SIZE
) -> LabeledDataset:
    """Translate every frame of a dataset at full resolution.

    Labels are copied unchanged; ids gain a ``refined/`` prefix. Output
    images are stored on the 8-bit grid.

    Args:
        ckpt: Loaded translation models or a checkpoint directory
        X: Source dataset
        noise_seed: Seed of the injected noise (``REFINE_NOISE_SEED`` if None)
        device: Torch device
        batch_size: Frames per forward pass

    Returns:
        Refined dataset with domain ``refined``

    Raises:
        ShapeError: A frame whose height or width is not divisible by 4
    """
    if noise_seed is None:
        noise_seed = REFINE_NOISE_SEED
    models = ckpt if isinstance(ckpt, TranslationModels) else load_translation_checkpoint(Path(ckpt), device)
    generator = models.generator.to(device).eval()

    for sample in X:
        h, w = sample.size
        if h % DOWNSAMPLE_FACTOR or w % DOWNSAMPLE_FACTOR:
            raise ShapeError(f"Frame {sample.id} is {h}x{w}; refinement needs sizes divisible by {DOWNSAMPLE_FACTOR}")

    refined: list[LabeledSample] = []
    batch_index = 0
    with torch.no_grad():
        # consecutive frames of equal size share a forward pass
        for _, group in groupby(X.samples, key=lambda s: s.size):
            group = list(group)
            for start in range(0, len(group), batch_size):
                chunk = group[start:start + batch_size]
                seed = batch_noise_seed(noise_seed, batch_index)
                out, _ = generator(images_to_tensor([s.image for s in chunk], device), noise_seed=seed)
                for sample, image in zip(chunk, tensor_to_images(out)):
                    refined.append(LabeledSample(
                        image=quantize_to_8bit(image),
                        labels=sample.labels.copy(),
                        domain=Domain.REFINED,
                        id=refined_id(sample.id),
                    ))
                batch_index += 1

    logger.info(f"Refined {len(refined)} frames of '{X.name}' (noise seed {noise_seed})")
    return LabeledDataset(
        name=f"{X.name}_refined",
        num_classes=X.num_classes,
        samples=tuple(refined),
        class_names=X.class_names,
        config_hash=config_hash(models.meta.config_hash, X.config_hash, noise_seed),
    )
