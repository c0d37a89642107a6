"""Experiment pipeline: render, translate, refine, segment, analyze.

Every stage writes into ``<root>/<stage>/<stage-hash>/`` together with a
``stage.json`` record. Stage hashes chain (data -> translation -> refine
-> segmentation arms -> analysis), so changing one config re-runs that
stage and everything downstream while earlier outputs are reused.
"""
import logging
import shutil
import threading
from dataclasses import replace
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from src.analysis.plotting import plot_iou_distributions
from src.config import AppConfig, LOGGER_NAME
from src.data.dataset_io import load_dataset, save_dataset
from src.data.samples import LabeledDataset
from src.data.scenes import (
    default_pseudo_real_camera,
    default_pseudo_real_scene_config,
    default_synthetic_scene_config,
    generate_dataset,
)
from src.errors import ConfigurationError, FormatError, StageError, StaleArtifactError
from src.models.checkpoint import load_segmenter_checkpoint
from src.schemas import (
    ArmReport,
    Domain,
    EmbeddingDocument,
    ExperimentManifest,
    PipelineSummary,
    StageRecord,
    TranslationSummary,
    read_document,
    write_document,
)
from src.services.evaluation import arm_report
from src.services.feature_analysis import analyze_triples
from src.services.refiner import refine_dataset
from src.services.segmentation_trainer import MixedSource, SegmentationTrainer, TrainingSource
from src.services.translation_trainer import TranslationTrainer
from src.utils.hashing import config_hash

logger = logging.getLogger(LOGGER_NAME)

STAGE_RECORD = "stage.json"
SUMMARY_NAME = "summary.json"
SUMMARY_PLOT = "summary.svg"
CHECKPOINT_DIR = "checkpoint"
REFINED_DIR = "refined"
REPORT_NAME = "report.json"
TRANSLATION_RESULT = "result.json"

REAL_SEED_OFFSET = 1_000_000
TEST_SEED_OFFSET = 2_000_000
DATASET_NAMES = ("syn_train", "real_train", "real_test", "analysis_real")


def default_manifest(**overrides) -> ExperimentManifest:
    """Desk-scale manifest over the built-in synthetic / pseudo-real scene pair."""
    return ExperimentManifest(
        synthetic_scene=default_synthetic_scene_config(),
        pseudo_real_scene=default_pseudo_real_scene_config(),
        pseudo_real_camera=default_pseudo_real_camera(),
        **overrides,
    )


def manifest_hash(manifest: ExperimentManifest) -> str:
    """Hash of everything that determines results (the output root is excluded)."""
    return config_hash(manifest.model_dump(mode="json", exclude={"output_root"}))


def data_stage_hash(manifest: ExperimentManifest) -> str:
    m = manifest
    return config_hash("data", m.synthetic_scene, m.pseudo_real_scene, m.synthetic_camera,
                       m.pseudo_real_camera, m.sizes, m.seed)


def experiment_seeds(manifest: ExperimentManifest) -> dict[str, list[int]]:
    """Scene seeds of the four experiment datasets.

    The analysis frames re-render the first synthetic seeds in the
    pseudo-real domain, giving id-matched synthetic/real pairs.
    """
    base, sizes = manifest.seed, manifest.sizes
    syn = [base + i for i in range(sizes.syn_train)]
    return {
        "syn_train": syn,
        "real_train": [base + REAL_SEED_OFFSET + i for i in range(sizes.real_train)],
        "real_test": [base + TEST_SEED_OFFSET + i for i in range(sizes.real_test)],
        "analysis_real": syn[:sizes.analysis],
    }


def render_datasets(manifest: ExperimentManifest, data_hash: Optional[str] = None) -> dict[str, LabeledDataset]:
    """Render the synthetic training set and the three pseudo-real sets."""
    seeds = experiment_seeds(manifest)
    m = manifest
    return {
        "syn_train": generate_dataset(m.synthetic_scene, seeds["syn_train"], Domain.SYNTHETIC,
                                      m.synthetic_camera, "syn_train", data_hash),
        "real_train": generate_dataset(m.pseudo_real_scene, seeds["real_train"], Domain.PSEUDO_REAL,
                                       m.pseudo_real_camera, "real_train", data_hash),
        "real_test": generate_dataset(m.pseudo_real_scene, seeds["real_test"], Domain.PSEUDO_REAL,
                                      m.pseudo_real_camera, "real_test", data_hash),
        "analysis_real": generate_dataset(m.pseudo_real_scene, seeds["analysis_real"], Domain.PSEUDO_REAL,
                                          m.pseudo_real_camera, "analysis_real", data_hash),
    }


class StageCache:
    """Hash-keyed stage directories with completion records."""

    def __init__(self, root: Path, manifest_hash: str, force: bool = False):
        self.root = Path(root)
        self.manifest_hash = manifest_hash
        self.force = force

    def path(self, group: str, stage_hash: str) -> Path:
        return self.root / group / stage_hash

    def lookup(self, stage: str, stage_dir: Path, stage_hash: str) -> Optional[StageRecord]:
        """Return the record of a reusable output, or None if the stage must run.

        Raises:
            StaleArtifactError: The directory holds an incomplete or foreign
                output and ``force`` is off
        """
        if not stage_dir.exists():
            return None
        try:
            record = read_document(StageRecord, stage_dir / STAGE_RECORD)
        except FormatError:
            record = None

        if record is not None and record.complete and record.config_hash == stage_hash and record.stage == stage:
            return record

        reason = "incomplete" if record is None or not record.complete else f"recorded hash {record.config_hash}"
        if not self.force:
            raise StaleArtifactError(
                f"Stage '{stage}' output at {stage_dir} is stale ({reason}); rerun with --force to rebuild"
            )
        logger.warning(f"Rebuilding stale stage '{stage}' at {stage_dir} ({reason})")
        shutil.rmtree(stage_dir)
        return None

    def begin(self, stage: str, stage_dir: Path, stage_hash: str):
        stage_dir.mkdir(parents=True, exist_ok=True)
        write_document(
            StageRecord(stage=stage, config_hash=stage_hash, manifest_hash=self.manifest_hash),
            stage_dir / STAGE_RECORD,
        )

    def complete(self, stage: str, stage_dir: Path, stage_hash: str, outputs: dict[str, str]) -> StageRecord:
        record = StageRecord(
            stage=stage,
            config_hash=stage_hash,
            manifest_hash=self.manifest_hash,
            complete=True,
            outputs=outputs,
        )
        write_document(record, stage_dir / STAGE_RECORD)
        return record


class ExperimentPipeline:
    """Runs (or reuses) every stage of one experiment manifest."""

    def __init__(
        self,
        manifest: ExperimentManifest,
        config: AppConfig,
        force: bool = False,
        root: Optional[Path] = None,
        datasets: Optional[dict[str, LabeledDataset]] = None
    ):
        """Initialize the pipeline.

        Args:
            manifest: Experiment manifest
            config: Application configuration (device, prefetch threads)
            force: Rebuild stale stage directories instead of refusing them
            root: Output root (defaults to ``manifest.output_root``)
            datasets: Already loaded experiment datasets of the same data stage

        Raises:
            ConfigurationError: Invalid manifest
        """
        manifest.check()
        self.manifest = manifest
        self.config = config
        self.root = Path(root if root is not None else manifest.output_root)
        self.manifest_hash = manifest_hash(manifest)
        self.cache = StageCache(self.root, self.manifest_hash, force)
        self.executed: list[str] = []
        self._datasets = datasets
        self._refined: Optional[LabeledDataset] = None
        self._lock = threading.RLock()

    # ------------------------------------------------------------
    # Stage hashes
    # ------------------------------------------------------------

    @cached_property
    def data_hash(self) -> str:
        return data_stage_hash(self.manifest)

    @cached_property
    def translation_hash(self) -> str:
        return config_hash("translation", self.data_hash, self.manifest.translation)

    @cached_property
    def refine_hash(self) -> str:
        return config_hash("refine", self.translation_hash, self.manifest.refine_seed)

    def arm_hash(self, arm: str) -> str:
        refined = self.refine_hash if "refined" in arm else None
        return config_hash("segment", arm, self.data_hash, refined, self.manifest.segmenter)

    @property
    def analysis_arm(self) -> str:
        """Arm whose EMA segmenter provides the analyzed features."""
        return "real" if "real" in self.manifest.arms else self.manifest.arms[0]

    @cached_property
    def analysis_hash(self) -> str:
        return config_hash("analysis", self.refine_hash, self.arm_hash(self.analysis_arm), self.manifest.analysis)

    # ------------------------------------------------------------
    # Stage runner
    # ------------------------------------------------------------

    def _run_stage(self, stage: str, group: str, stage_hash: str, build: Callable[[Path], dict[str, str]]) -> Path:
        stage_dir = self.cache.path(group, stage_hash)
        if self.cache.lookup(stage, stage_dir, stage_hash) is not None:
            logger.info(f"Stage '{stage}' is up to date ({stage_hash}); skipping")
            return stage_dir

        logger.info("=" * 60)
        logger.info(f"Stage '{stage}' ({stage_hash})")
        logger.info("=" * 60)
        try:
            self.cache.begin(stage, stage_dir, stage_hash)
            outputs = build(stage_dir)
            self.cache.complete(stage, stage_dir, stage_hash, outputs)
        except (StageError, StaleArtifactError):
            raise
        except Exception as e:
            logger.error(f"Stage '{stage}' failed: {e}", exc_info=True)
            raise StageError(stage, e) from e

        with self._lock:
            self.executed.append(stage)
        return stage_dir

    # ------------------------------------------------------------
    # Stages
    # ------------------------------------------------------------

    def data_stage(self) -> Path:
        def build(stage_dir: Path) -> dict[str, str]:
            datasets = render_datasets(self.manifest, self.data_hash)
            for name, dataset in datasets.items():
                save_dataset(dataset, stage_dir / name, self.manifest_hash)
            self._datasets = datasets
            return {name: name for name in datasets}

        with self._lock:
            return self._run_stage("data", "data", self.data_hash, build)

    def datasets(self) -> dict[str, LabeledDataset]:
        with self._lock:
            stage_dir = self.data_stage()
            if self._datasets is None:
                self._datasets = {
                    name: load_dataset(stage_dir / name, self.config.data_workers) for name in DATASET_NAMES
                }
            return self._datasets

    def translation_stage(self) -> Path:
        def build(stage_dir: Path) -> dict[str, str]:
            datasets = self.datasets()
            trainer = TranslationTrainer(self.manifest.translation, self.config, run_hash=self.translation_hash,
                                         manifest_hash=self.manifest_hash)
            result = trainer.train(datasets["syn_train"], datasets["real_train"], stage_dir / CHECKPOINT_DIR)
            write_document(
                TranslationSummary(
                    config_hash=self.translation_hash,
                    steps=result.steps,
                    mean_epoch_seconds=result.mean_epoch_seconds,
                    timings=result.timings,
                    collapse_distances=result.collapse_distances,
                    collapse_epochs=result.collapse_epochs,
                    collapsed=result.collapsed,
                ),
                stage_dir / TRANSLATION_RESULT,
            )
            return {"checkpoint": CHECKPOINT_DIR, "result": TRANSLATION_RESULT}

        return self._run_stage("translation", "translation", self.translation_hash, build)

    def translation_summary(self) -> TranslationSummary:
        return read_document(TranslationSummary, self.translation_stage() / TRANSLATION_RESULT)

    def refine_stage(self) -> Path:
        def build(stage_dir: Path) -> dict[str, str]:
            checkpoint = self.translation_stage() / CHECKPOINT_DIR
            refined = refine_dataset(checkpoint, self.datasets()["syn_train"],
                                     noise_seed=self.manifest.refine_seed, device=self.config.device)
            refined = replace(refined, config_hash=self.refine_hash)
            save_dataset(refined, stage_dir / REFINED_DIR, self.manifest_hash)
            self._refined = refined
            return {"refined": REFINED_DIR}

        with self._lock:
            return self._run_stage("refine", "refine", self.refine_hash, build)

    def refined(self) -> LabeledDataset:
        with self._lock:
            stage_dir = self.refine_stage()
            if self._refined is None:
                self._refined = load_dataset(stage_dir / REFINED_DIR, self.config.data_workers)
            return self._refined

    def training_source(self, arm: str) -> TrainingSource:
        """Training data of one arm.

        Raises:
            ConfigurationError: Unknown arm
        """
        p_real = self.manifest.segmenter.p_real
        if arm == "synthetic":
            return self.datasets()["syn_train"]
        if arm == "real":
            return self.datasets()["real_train"]
        if arm == "refined":
            return self.refined()
        if arm == "real+refined":
            return MixedSource(self.datasets()["real_train"], self.refined(), p_real)
        if arm == "real+synthetic":
            return MixedSource(self.datasets()["real_train"], self.datasets()["syn_train"], p_real)
        raise ConfigurationError(f"Unknown arm '{arm}'")

    def arm_stage(self, arm: str) -> ArmReport:
        """Train and evaluate the segmenter of one arm."""
        arm_hash = self.arm_hash(arm)

        def build(stage_dir: Path) -> dict[str, str]:
            source = self.training_source(arm)
            cfg = self.manifest.segmenter
            state = SegmentationTrainer(cfg, self.config).train(source, self.datasets()["real_test"])
            state.save(stage_dir / CHECKPOINT_DIR, arm_hash, self.manifest_hash)
            report = arm_report(arm, state.history, arm_hash, cfg.last_k, extra={
                "train": source.name,
                "mean_epoch_seconds": float(np.mean(state.epoch_seconds)),
                "steps": state.steps,
            })
            write_document(report, stage_dir / REPORT_NAME)
            return {"checkpoint": CHECKPOINT_DIR, "report": REPORT_NAME}

        stage_dir = self._run_stage(f"segment:{arm}", "segment", arm_hash, build)
        return read_document(ArmReport, stage_dir / REPORT_NAME)

    def analysis_stage(self) -> dict[str, dict[str, float]]:
        """Embed id-matched triples at every configured layer.

        Returns:
            Gap metrics per layer id
        """
        arm = self.analysis_arm
        self.arm_stage(arm)
        layer_ids = self.manifest.analysis.layer_ids

        def build(stage_dir: Path) -> dict[str, str]:
            ckpt = self.cache.path("segment", self.arm_hash(arm)) / CHECKPOINT_DIR
            segmenter = load_segmenter_checkpoint(ckpt, self.config.device).ema
            datasets = self.datasets()
            outputs = {}
            for layer_id in layer_ids:
                analyze_triples(
                    datasets["syn_train"],
                    self.refined(),
                    datasets["analysis_real"],
                    segmenter,
                    layer_id,
                    self.manifest.analysis,
                    out_json=stage_dir / f"embedding_{layer_id}.json",
                    out_plot=stage_dir / f"embedding_{layer_id}.svg",
                    device=self.config.device,
                    run_hash=self.analysis_hash,
                )
                outputs[layer_id] = f"embedding_{layer_id}.json"
            return outputs

        stage_dir = self._run_stage("analysis", "analysis", self.analysis_hash, build)
        return {
            layer_id: read_document(EmbeddingDocument, stage_dir / f"embedding_{layer_id}.json").gap
            for layer_id in layer_ids
        }

    # ------------------------------------------------------------
    # Whole experiment
    # ------------------------------------------------------------

    def run(self) -> PipelineSummary:
        """Execute all stages in order and write ``summary.json``.

        Raises:
            StaleArtifactError: A stale stage directory without ``force``
            StageError: A stage failed; names the stage
        """
        logger.info("=" * 60)
        logger.info(f"Experiment {self.manifest_hash} -> {self.root}")
        logger.info("=" * 60)

        self.data_stage()
        translation = self.translation_summary()
        self.refine_stage()
        reports = [self.arm_stage(arm) for arm in self.manifest.arms]
        gaps = self.analysis_stage()

        summary = PipelineSummary(
            manifest_hash=self.manifest_hash,
            track="ema",
            arms=reports,
            translation=translation.model_dump(mode="json"),
            analysis=gaps,
        )
        write_document(summary, self.root / SUMMARY_NAME)
        plot_iou_distributions(reports, self.root / SUMMARY_PLOT, track="ema",
                               title=f"experiment {self.manifest_hash}")

        for report in reports:
            stats = report.distribution.ema
            logger.info(f"  {report.arm:<16} EMA mIoU {stats.mean:.4f} +/- {stats.std:.4f} (last {stats.k})")
        if translation.collapsed:
            logger.warning(f"Translation collapsed in epochs {translation.collapse_epochs}")
        logger.info(f"Executed stages: {self.executed or 'none'}")
        return summary


def run_pipeline(
    manifest: ExperimentManifest,
    config: Optional[AppConfig] = None,
    force: bool = False,
    root: Optional[Path] = None
) -> Path:
    """Run one experiment; returns the experiment directory holding ``summary.json``."""
    pipeline = ExperimentPipeline(manifest, config or AppConfig.from_env(), force=force, root=root)
    pipeline.run()
    return pipeline.root
