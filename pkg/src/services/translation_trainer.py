"""Adversarial training of the translation model on unpaired patches."""
import logging
import math
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn as nn

from src.config import LOGGER_NAME, AppConfig
from src.data.batching import UnpairedPatchLoader
from src.data.samples import LabeledDataset
from src.errors import DataError, TrainingAbortedError
from src.losses import combine_losses, gan_loss_g, total_loss
from src.models.checkpoint import build_translation_models, save_translation_checkpoint
from src.models.generator import Generator
from src.models.tensors import images_to_tensor
from src.schemas import EpochRecord, EpochTiming, LossReport, StepRecord, TranslationConfig
from src.utils.hashing import config_hash

logger = logging.getLogger(LOGGER_NAME)

LOG_NAME = "log.ndjson"
SNAPSHOT_DIR = "snapshots"
DIAGNOSTIC_DIR = "diagnostic"

# model construction draws from the global torch RNG
_INIT_LOCK = threading.Lock()


def build_seeded_models(cfg: TranslationConfig):
    """Build generator, discriminator and heads with weights fixed by ``cfg.seed``."""
    with _INIT_LOCK, torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        return build_translation_models(cfg)


def lr_factor(epoch: int, epochs: int) -> float:
    """Learning-rate multiplier of one epoch.

    Constant 1 for the first ``epochs // 2`` epochs, then linear decay
    that stops one step short of zero: the final epoch runs at
    ``1 / (epochs - epochs // 2 + 1)``.
    """
    half = epochs // 2
    return 1.0 - max(0, epoch + 1 - half) / float(epochs - half + 1)


def set_requires_grad(module: nn.Module, flag: bool):
    for p in module.parameters():
        p.requires_grad_(flag)


def collapse_distance(generator: Generator, probe: torch.Tensor, noise_seed: int) -> float:
    """Mean pairwise RMS pixel distance between translations of a probe batch."""
    with torch.no_grad():
        out, _ = generator(probe, noise_seed=noise_seed)
    flat = out.flatten(1).to(torch.float64)
    return float(torch.pdist(flat).mean() / math.sqrt(flat.shape[1]))


def _is_finite(report: LossReport) -> bool:
    return all(math.isfinite(v) for v in report.model_dump().values())


@dataclass
class TrainingResult:
    """Outcome of one translation training run.

    Attributes:
        checkpoint: Final checkpoint directory
        config_hash: Hash recorded in every checkpoint of the run
        timings: Wall time per epoch
        collapse_distances: Collapse-probe distance per epoch
        collapse_epochs: Epochs whose distance fell below the threshold
        steps: Optimizer steps taken
    """
    checkpoint: Path
    config_hash: str
    timings: list[EpochTiming] = field(default_factory=list)
    collapse_distances: list[Optional[float]] = field(default_factory=list)
    collapse_epochs: list[int] = field(default_factory=list)
    steps: int = 0

    @property
    def collapsed(self) -> bool:
        return bool(self.collapse_epochs)

    @property
    def mean_epoch_seconds(self) -> float:
        return float(np.mean([t.wall_seconds for t in self.timings])) if self.timings else 0.0


class TranslationTrainer:
    """Trains generator, discriminator and projection heads.

    Each step first updates D on the detached translation, then updates G
    and H against the updated D.
    """

    def __init__(
        self,
        cfg: TranslationConfig,
        config: AppConfig,
        run_hash: Optional[str] = None,
        manifest_hash: Optional[str] = None
    ):
        """Initialize the trainer.

        Args:
            cfg: Translation hyperparameters
            config: Application configuration (device, prefetch threads)
            run_hash: Hash recorded in checkpoints (defaults to the config hash)
            manifest_hash: Experiment manifest hash recorded in checkpoints
        """
        cfg.check()
        self.cfg = cfg
        self.config = config
        self.device = torch.device(config.device)
        self.run_hash = run_hash or config_hash(cfg)
        self.manifest_hash = manifest_hash

    def _save(self, ckpt_dir: Path, G, D, H, step: int, epoch: int) -> Path:
        return save_translation_checkpoint(ckpt_dir, G, D, H, self.cfg, self.run_hash, step, epoch,
                                           self.manifest_hash)

    def train(self, X: LabeledDataset, Y: LabeledDataset, out_dir: Path) -> TrainingResult:
        """Run training and write checkpoints plus ``log.ndjson``.

        Args:
            X: Source-domain dataset
            Y: Target-domain dataset
            out_dir: Run directory; the final checkpoint is written at its root

        Returns:
            TrainingResult

        Raises:
            DataError: Empty dataset or a patch that does not fit
            TrainingAbortedError: Non-finite loss; a diagnostic checkpoint is saved first
        """
        cfg = self.cfg
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

        loader = UnpairedPatchLoader(X, Y, cfg.batch, cfg.patch, cfg.seed, num_workers=self.config.data_workers)

        logger.info("=" * 60)
        logger.info(f"Training translation model: |X|={len(X)}, |Y|={len(Y)}, patch={cfg.patch.effective_size}, "
                    f"batch={cfg.batch}, epochs={cfg.epochs}, lambda_nce={cfg.lambda_nce}, n_noise={cfg.noise.n_noise}")
        logger.info(f"{loader.steps_per_epoch} steps per epoch on {self.device}")
        logger.info("=" * 60)

        G, D, H = build_seeded_models(cfg)
        for module in (G, D, H):
            module.to(self.device).train()

        opt_g = torch.optim.Adam(list(G.parameters()) + list(H.parameters()), lr=cfg.optimizer.lr,
                                 betas=cfg.optimizer.betas)
        opt_d = torch.optim.Adam(D.parameters(), lr=cfg.optimizer.lr, betas=cfg.optimizer.betas)
        schedule = lambda epoch: lr_factor(epoch, cfg.epochs)
        sched_g = torch.optim.lr_scheduler.LambdaLR(opt_g, schedule)
        sched_d = torch.optim.lr_scheduler.LambdaLR(opt_d, schedule)

        rng = torch.Generator().manual_seed(cfg.seed)
        probe = self._probe_batch(X)
        result = TrainingResult(checkpoint=out_dir, config_hash=self.run_hash)
        step = 0

        with open(out_dir / LOG_NAME, "w", encoding="utf-8") as log_file:
            for epoch in range(cfg.epochs):
                started = time.perf_counter()
                lr = opt_g.param_groups[0]["lr"]

                for batch in loader.iter_epoch(epoch):
                    x = images_to_tensor(batch.x, self.device)
                    y = images_to_tensor(batch.y, self.device)

                    set_requires_grad(D, True)
                    terms = total_loss(G, D, H, x, y, cfg.nce, rng, cfg.gan_mode)
                    if not _is_finite(terms.report()):
                        self._abort(out_dir, G, D, H, step, epoch, terms.report())

                    # D step
                    opt_d.zero_grad(set_to_none=True)
                    terms.gan_d.backward()
                    opt_d.step()

                    # G + H step against the updated D
                    set_requires_grad(D, False)
                    opt_g.zero_grad(set_to_none=True)
                    gan_g = gan_loss_g(D(terms.fake_x), cfg.gan_mode)
                    total = combine_losses(gan_g, terms.nce_x, terms.nce_y, cfg.lambda_nce)
                    report = LossReport(
                        gan_g=float(gan_g.detach()),
                        gan_d=float(terms.gan_d.detach()),
                        nce_x=float(terms.nce_x.detach()),
                        nce_y=float(terms.nce_y.detach()),
                        total=float(total.detach()),
                    )
                    if not _is_finite(report):
                        self._abort(out_dir, G, D, H, step, epoch, report)
                    total.backward()
                    opt_g.step()
                    step += 1

                    log_file.write(StepRecord(epoch=epoch, step=step, loss=report).model_dump_json() + "\n")
                    logger.debug(f"epoch {epoch} step {step}: total={report.total:.4f} gan_g={report.gan_g:.4f} "
                                 f"gan_d={report.gan_d:.4f} nce_x={report.nce_x:.4f} nce_y={report.nce_y:.4f}")

                sched_g.step()
                sched_d.step()
                wall = time.perf_counter() - started
                result.timings.append(EpochTiming(epoch_index=epoch, wall_seconds=wall))

                distance = None
                collapsed = False
                if probe is not None:
                    distance = collapse_distance(G, probe, cfg.seed)
                    collapsed = distance < cfg.collapse_threshold
                    if collapsed:
                        result.collapse_epochs.append(epoch)
                        logger.warning(f"Possible mode collapse at epoch {epoch}: probe distance {distance:.4f} "
                                       f"< {cfg.collapse_threshold}")
                result.collapse_distances.append(distance)

                log_file.write(EpochRecord(epoch=epoch, wall_seconds=wall, lr=lr, collapse_distance=distance,
                                           collapsed=collapsed).model_dump_json() + "\n")
                log_file.flush()
                logger.info(f"Epoch {epoch + 1}/{cfg.epochs} done in {wall:.2f}s (lr={lr:.2e}, "
                            f"probe distance={distance if distance is None else round(distance, 4)})")

                if (epoch + 1) % cfg.checkpoint_every == 0 and epoch + 1 < cfg.epochs:
                    self._save(out_dir / SNAPSHOT_DIR / f"epoch_{epoch + 1:04d}", G, D, H, step, epoch + 1)

        self._save(out_dir, G, D, H, step, cfg.epochs)
        result.steps = step

        logger.info("=" * 60)
        logger.info(f"Translation training complete: {step} steps, mean epoch {result.mean_epoch_seconds:.2f}s, "
                    f"collapse epochs: {result.collapse_epochs or 'none'}")
        logger.info("=" * 60)
        return result

    def _probe_batch(self, X: LabeledDataset) -> Optional[torch.Tensor]:
        count = min(self.cfg.probe_size, len(X))
        if count < 2:
            logger.warning("Fewer than two source frames; collapse detector disabled")
            return None
        frames = [X[i].image for i in range(count)]
        if len({f.shape for f in frames}) != 1:
            raise DataError("Collapse probe frames must share one size")
        return images_to_tensor(frames, self.device)

    def _abort(self, out_dir: Path, G, D, H, step: int, epoch: int, report: LossReport):
        diagnostic = self._save(out_dir / DIAGNOSTIC_DIR, G, D, H, step, epoch)
        logger.error(f"Non-finite loss at epoch {epoch}, step {step}: {report.model_dump()}; "
                     f"diagnostic checkpoint at {diagnostic}")
        raise TrainingAbortedError(f"Non-finite loss at epoch {epoch}, step {step}", diagnostic_checkpoint=diagnostic)


def train_cut(
    cfg: TranslationConfig,
    X: LabeledDataset,
    Y: LabeledDataset,
    out_dir: Path,
    config: Optional[AppConfig] = None,
    run_hash: Optional[str] = None
) -> TrainingResult:
    """Train the translation model; see ``TranslationTrainer.train``."""
    return TranslationTrainer(cfg, config or AppConfig.from_env(), run_hash).train(X, Y, out_dir)
