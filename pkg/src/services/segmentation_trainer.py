"""Segmenter training with EMA shadow weights and mixed data sources."""
import copy
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from src.config import LOGGER_NAME, SEG_EMA_DECAY, AppConfig
from src.data.samples import LabeledDataset
from src.errors import ConfigurationError, DataError, ShapeError
from src.models.checkpoint import save_segmenter_checkpoint
from src.models.segmenter import Segmenter
from src.models.tensors import images_to_tensor, labels_to_tensor
from src.schemas import EpochIoU, SegmenterConfig
from src.services.evaluation import evaluate_miou, iou_distribution
from src.utils.hashing import config_hash

logger = logging.getLogger(LOGGER_NAME)

_INIT_LOCK = threading.Lock()

Tensors = Union[torch.Tensor, Iterable[torch.Tensor]]


@torch.no_grad()
def ema_update(ema: Tensors, params: Tensors, decay: float = SEG_EMA_DECAY) -> Tensors:
    """In place: ema <- decay * ema + (1 - decay) * params, elementwise.

    Args:
        ema: Shadow tensor or sequence of tensors
        params: Current tensor(s), same structure and shapes
        decay: Decay factor in [0, 1]

    Returns:
        ``ema``

    Raises:
        ShapeError: Different tensor counts or shapes
    """
    ema_list = [ema] if isinstance(ema, torch.Tensor) else list(ema)
    param_list = [params] if isinstance(params, torch.Tensor) else list(params)
    if len(ema_list) != len(param_list):
        raise ShapeError(f"EMA holds {len(ema_list)} tensors, parameters have {len(param_list)}")
    for e, p in zip(ema_list, param_list):
        if e.shape != p.shape:
            raise ShapeError(f"EMA tensor shape {tuple(e.shape)} != parameter shape {tuple(p.shape)}")
    for e, p in zip(ema_list, param_list):
        e.mul_(decay).add_(p.detach().to(e.dtype), alpha=1.0 - decay)
    return ema


class ModelEma:
    """Shadow copy of a model tracking an exponential moving average."""

    def __init__(self, model: nn.Module, decay: float = SEG_EMA_DECAY):
        self.module = copy.deepcopy(model)
        self.module.eval()
        self.module.requires_grad_(False)
        self.decay = decay

    def update(self, model: nn.Module):
        ema_update(list(self.module.parameters()), list(model.parameters()), self.decay)
        # buffers are copied, not averaged
        for e, b in zip(self.module.buffers(), model.buffers()):
            e.copy_(b)


def mixed_batch_source(
    real: LabeledDataset,
    refined: LabeledDataset,
    p_real: float,
    rng: np.random.Generator
) -> Iterator[LabeledDataset]:
    """Endless per-batch choice between two datasets.

    Each mini-batch is drawn wholly from one dataset: ``real`` with
    probability ``p_real``, else ``refined``.

    Raises:
        ConfigurationError: p_real outside [0, 1]
        DataError: Empty dataset
    """
    if not 0.0 <= p_real <= 1.0:
        raise ConfigurationError(f"p_real must lie in [0, 1], got {p_real}")
    if len(real) == 0 or len(refined) == 0:
        raise DataError("Mixed training needs two non-empty datasets")
    if p_real in (0.0, 1.0):
        fixed = real if p_real == 1.0 else refined
        while True:
            yield fixed
    while True:
        yield real if rng.random() < p_real else refined


@dataclass(frozen=True)
class MixedSource:
    """Training mixture: batches from ``real`` with probability ``p_real``."""
    real: LabeledDataset
    other: LabeledDataset
    p_real: float

    @property
    def num_classes(self) -> int:
        return self.real.num_classes

    @property
    def name(self) -> str:
        return f"{self.real.name}+{self.other.name}"


TrainingSource = Union[LabeledDataset, MixedSource]


@dataclass
class SegmenterState:
    """Raw and EMA segmenters plus the per-epoch evaluation history."""
    model: Segmenter
    ema: ModelEma
    cfg: SegmenterConfig
    history: list[EpochIoU] = field(default_factory=list)
    steps: int = 0
    epoch_seconds: list[float] = field(default_factory=list)

    @property
    def raw_series(self) -> list[float]:
        return [h.raw.mean_iou for h in self.history]

    @property
    def ema_series(self) -> list[float]:
        return [h.ema.mean_iou for h in self.history]

    def save(self, ckpt_dir: Path, run_hash: str, manifest_hash: Optional[str] = None) -> Path:
        return save_segmenter_checkpoint(ckpt_dir, self.model, self.ema.module, self.cfg, run_hash,
                                         self.steps, len(self.history), manifest_hash)


def _batch_source(train: TrainingSource, rng: np.random.Generator) -> Iterator[LabeledDataset]:
    if isinstance(train, MixedSource):
        return mixed_batch_source(train.real, train.other, train.p_real, rng)

    def single():
        while True:
            yield train
    return single()


class SegmentationTrainer:
    """Trains the segmenter and evaluates raw and EMA weights every epoch."""

    def __init__(self, cfg: SegmenterConfig, config: AppConfig):
        """Initialize the trainer.

        Args:
            cfg: Segmenter hyperparameters
            config: Application configuration (device)
        """
        cfg.check()
        self.cfg = cfg
        self.config = config
        self.device = torch.device(config.device)

    def _check_sources(self, train: TrainingSource, test: LabeledDataset):
        datasets = [train.real, train.other] if isinstance(train, MixedSource) else [train]
        for dataset in datasets + [test]:
            if len(dataset) == 0:
                raise DataError(f"Dataset '{dataset.name}' is empty")
        counts = {d.num_classes for d in datasets + [test]}
        if len(counts) != 1:
            raise ConfigurationError(f"Class counts disagree between training and test data: {sorted(counts)}")
        if isinstance(train, MixedSource) and not 0.0 <= train.p_real <= 1.0:
            raise ConfigurationError(f"p_real must lie in [0, 1], got {train.p_real}")

    def train(self, train: TrainingSource, test: LabeledDataset) -> SegmenterState:
        """Run the epoch schedule.

        Each epoch draws ``images_per_epoch`` samples with replacement in
        mini-batches, minimizes pixelwise cross-entropy, updates the EMA
        after every optimizer step and evaluates both weight sets on
        ``test``.

        Args:
            train: Dataset or real/other mixture
            test: Test dataset

        Returns:
            SegmenterState with one history entry per epoch

        Raises:
            ConfigurationError: Class-count mismatch or invalid mixture
            DataError: Empty dataset
        """
        cfg = self.cfg
        self._check_sources(train, test)
        num_classes = test.num_classes

        with _INIT_LOCK, torch.random.fork_rng(devices=[]):
            torch.manual_seed(cfg.seed)
            model = Segmenter(num_classes, cfg)
        model.to(self.device).train()
        ema = ModelEma(model, cfg.ema_decay)
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
        state = SegmenterState(model=model, ema=ema, cfg=cfg)

        rng = np.random.default_rng(cfg.seed)
        # source choice has its own stream so sample indices do not depend on the mixture
        sources = _batch_source(train, np.random.default_rng([cfg.seed, 1]))

        logger.info("=" * 60)
        logger.info(f"Training segmenter on '{train.name}': {cfg.epochs} epochs x {cfg.images_per_epoch} images, "
                    f"batch {cfg.batch_size}, EMA decay {cfg.ema_decay}")
        logger.info("=" * 60)

        for epoch in range(cfg.epochs):
            started = time.perf_counter()
            losses = []
            remaining = cfg.images_per_epoch
            while remaining > 0:
                size = min(cfg.batch_size, remaining)
                remaining -= size
                dataset = next(sources)
                indices = rng.integers(0, len(dataset), size=size)
                batch = [dataset[int(i)] for i in indices]
                if len({s.size for s in batch}) != 1:
                    raise DataError(f"Dataset '{dataset.name}' mixes frame sizes within a batch")

                images = images_to_tensor([s.image for s in batch], self.device)
                labels = labels_to_tensor([s.labels for s in batch], self.device)
                loss = F.cross_entropy(model(images), labels)

                optimizer.zero_grad(set_to_none=True)
                loss.backward()
                optimizer.step()
                ema.update(model)
                state.steps += 1
                losses.append(float(loss.detach()))

            raw_report = evaluate_miou(model, test, self.device)
            ema_report = evaluate_miou(ema.module, test, self.device)
            state.history.append(EpochIoU(epoch=epoch, raw=raw_report, ema=ema_report))
            state.epoch_seconds.append(time.perf_counter() - started)
            logger.info(f"Epoch {epoch + 1}/{cfg.epochs}: loss={np.mean(losses):.4f} "
                        f"mIoU raw={raw_report.mean_iou:.4f} ema={ema_report.mean_iou:.4f}")

        if len(state.history) >= cfg.last_k:
            dist = iou_distribution(state.history, cfg.last_k)
            logger.info(f"Last {cfg.last_k} epochs: raw {dist.raw.mean:.4f} +/- {dist.raw.std:.4f}, "
                        f"ema {dist.ema.mean:.4f} +/- {dist.ema.std:.4f}")
        return state


def train_segmenter(
    train: TrainingSource,
    test: LabeledDataset,
    cfg: SegmenterConfig,
    config: Optional[AppConfig] = None
) -> SegmenterState:
    """Train a segmenter; see ``SegmentationTrainer.train``."""
    return SegmentationTrainer(cfg, config or AppConfig.from_env()).train(train, test)


def segmenter_run_hash(train_hashes: list[Optional[str]], test_hash: Optional[str], cfg: SegmenterConfig,
                       p_real: Optional[float] = None) -> str:
    return config_hash("segmenter", train_hashes, test_hash, cfg, p_real)
