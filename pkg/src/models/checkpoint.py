"""Checkpoint directories.

Layout::

    <dir>/meta.json                  CheckpointMeta
    <dir>/<prefix>.<param.path>.f32  little-endian float32, C order

Prefixes: generator, discriminator, heads (translation); segmenter, ema
(segmentation).
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import numpy as np
import torch
import torch.nn as nn

from src.config import LOGGER_NAME
from src.errors import ConfigurationError, FormatError
from src.models.discriminator import Discriminator
from src.models.generator import Generator
from src.models.projection import ProjectionHeads
from src.models.segmenter import Segmenter
from src.schemas import CheckpointMeta, SegmenterConfig, TranslationConfig, load_config, read_document, write_document

logger = logging.getLogger(LOGGER_NAME)

META_NAME = "meta.json"
BLOB_SUFFIX = ".f32"
BLOB_DTYPE = np.dtype("<f4")


def _blob_path(ckpt_dir: Path, key: str) -> Path:
    return ckpt_dir / f"{key}{BLOB_SUFFIX}"


def save_checkpoint(
    ckpt_dir: Path,
    modules: Mapping[str, nn.Module],
    kind: str,
    architecture: dict[str, Any],
    config_hash: str,
    step: int = 0,
    epoch: int = 0,
    manifest_hash: Optional[str] = None
) -> Path:
    """Write module parameters and metadata to a checkpoint directory.

    Args:
        ckpt_dir: Target directory (created if needed)
        modules: Prefix -> module
        kind: "translation" or "segmenter"
        architecture: Config needed to rebuild the modules
        config_hash: Hash of the producing configuration
        step: Optimizer steps taken
        epoch: Completed epochs
        manifest_hash: Hash of the experiment manifest, when run by the pipeline

    Returns:
        Path to the checkpoint directory
    """
    ckpt_dir = Path(ckpt_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    shapes = {}
    for prefix, module in modules.items():
        for name, tensor in module.state_dict().items():
            key = f"{prefix}.{name}"
            array = tensor.detach().to("cpu", torch.float32).contiguous().numpy().astype(BLOB_DTYPE, copy=False)
            array.tofile(_blob_path(ckpt_dir, key))
            shapes[key] = list(tensor.shape)

    meta = CheckpointMeta(
        kind=kind,
        architecture=architecture,
        step=step,
        epoch=epoch,
        config_hash=config_hash,
        manifest_hash=manifest_hash,
        tensors=shapes,
    )
    write_document(meta, ckpt_dir / META_NAME)
    logger.debug(f"Saved {kind} checkpoint ({len(shapes)} tensors) to {ckpt_dir}")
    return ckpt_dir


def read_meta(ckpt_dir: Path) -> CheckpointMeta:
    return read_document(CheckpointMeta, Path(ckpt_dir) / META_NAME)


def load_module_state(ckpt_dir: Path, meta: CheckpointMeta, prefix: str, module: nn.Module):
    """Fill a module's parameters from the blobs under ``prefix``.

    Raises:
        FormatError: Missing blob, or a shape that disagrees with the
            module built from the recorded architecture
    """
    ckpt_dir = Path(ckpt_dir)
    state = {}
    for name, tensor in module.state_dict().items():
        key = f"{prefix}.{name}"
        expected = list(tensor.shape)
        if key not in meta.tensors:
            raise FormatError(f"{ckpt_dir}: checkpoint has no tensor '{key}'")
        if meta.tensors[key] != expected:
            raise FormatError(f"{ckpt_dir}: '{key}' has shape {meta.tensors[key]}, architecture expects {expected}")
        path = _blob_path(ckpt_dir, key)
        if not path.exists():
            raise FormatError(f"{ckpt_dir}: missing blob {path.name}")
        array = np.fromfile(path, dtype=BLOB_DTYPE)
        if array.size != tensor.numel():
            raise FormatError(f"{path}: {array.size} values, expected {tensor.numel()}")
        state[name] = torch.from_numpy(array.astype(np.float32).reshape(expected))
    module.load_state_dict(state)


# ============================================================
# Translation checkpoints
# ============================================================

@dataclass
class TranslationModels:
    generator: Generator
    discriminator: Discriminator
    heads: ProjectionHeads
    cfg: TranslationConfig
    meta: CheckpointMeta


def build_translation_models(cfg: TranslationConfig) -> tuple[Generator, Discriminator, ProjectionHeads]:
    generator = Generator(cfg.generator)
    discriminator = Discriminator(cfg.discriminator)
    heads = ProjectionHeads(generator.nce_channels(), cfg.generator.nce_dim)
    return generator, discriminator, heads


def save_translation_checkpoint(
    ckpt_dir: Path,
    generator: Generator,
    discriminator: Discriminator,
    heads: ProjectionHeads,
    cfg: TranslationConfig,
    config_hash: str,
    step: int,
    epoch: int,
    manifest_hash: Optional[str] = None
) -> Path:
    return save_checkpoint(
        ckpt_dir,
        {"generator": generator, "discriminator": discriminator, "heads": heads},
        kind="translation",
        architecture={"translation": cfg.model_dump(mode="json")},
        config_hash=config_hash,
        step=step,
        epoch=epoch,
        manifest_hash=manifest_hash,
    )


def load_translation_checkpoint(ckpt_dir: Path, device: Union[str, torch.device] = "cpu") -> TranslationModels:
    """Rebuild generator, discriminator and heads from a checkpoint.

    Raises:
        FormatError: Wrong kind, missing files or mismatched shapes
    """
    meta = read_meta(ckpt_dir)
    if meta.kind != "translation":
        raise FormatError(f"{ckpt_dir}: expected a translation checkpoint, got '{meta.kind}'")
    try:
        cfg = load_config(TranslationConfig, meta.architecture.get("translation"))
    except (ConfigurationError, KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{ckpt_dir}: unreadable architecture: {e}") from e

    generator, discriminator, heads = build_translation_models(cfg)
    load_module_state(ckpt_dir, meta, "generator", generator)
    load_module_state(ckpt_dir, meta, "discriminator", discriminator)
    load_module_state(ckpt_dir, meta, "heads", heads)
    for module in (generator, discriminator, heads):
        module.to(device).eval()
    logger.info(f"Loaded translation checkpoint from {ckpt_dir} (epoch {meta.epoch}, step {meta.step})")
    return TranslationModels(generator, discriminator, heads, cfg, meta)


# ============================================================
# Segmenter checkpoints
# ============================================================

@dataclass
class SegmenterModels:
    model: Segmenter
    ema: Segmenter
    cfg: SegmenterConfig
    meta: CheckpointMeta


def save_segmenter_checkpoint(
    ckpt_dir: Path,
    model: Segmenter,
    ema: Segmenter,
    cfg: SegmenterConfig,
    config_hash: str,
    step: int,
    epoch: int,
    manifest_hash: Optional[str] = None
) -> Path:
    return save_checkpoint(
        ckpt_dir,
        {"segmenter": model, "ema": ema},
        kind="segmenter",
        architecture={"num_classes": model.num_classes, "segmenter": cfg.model_dump(mode="json")},
        config_hash=config_hash,
        step=step,
        epoch=epoch,
        manifest_hash=manifest_hash,
    )


def load_segmenter_checkpoint(ckpt_dir: Path, device: Union[str, torch.device] = "cpu") -> SegmenterModels:
    """Rebuild the raw and EMA segmenters from a checkpoint.

    Raises:
        FormatError: Wrong kind, missing files or mismatched shapes
    """
    meta = read_meta(ckpt_dir)
    if meta.kind != "segmenter":
        raise FormatError(f"{ckpt_dir}: expected a segmenter checkpoint, got '{meta.kind}'")
    try:
        cfg = load_config(SegmenterConfig, meta.architecture.get("segmenter"))
        num_classes = int(meta.architecture["num_classes"])
    except (ConfigurationError, KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{ckpt_dir}: unreadable architecture: {e}") from e

    model = Segmenter(num_classes, cfg)
    ema = Segmenter(num_classes, cfg)
    load_module_state(ckpt_dir, meta, "segmenter", model)
    load_module_state(ckpt_dir, meta, "ema", ema)
    model.to(device).eval()
    ema.to(device).eval()
    logger.info(f"Loaded segmenter checkpoint from {ckpt_dir} (epoch {meta.epoch})")
    return SegmenterModels(model, ema, cfg, meta)
