"""Shared fixtures: tiny configs and datasets that train in seconds on CPU."""
import numpy as np
import pytest

from src.config import AppConfig
from src.data.samples import LabeledDataset, LabeledSample
from src.data.scenes import (
    default_pseudo_real_camera,
    default_pseudo_real_scene_config,
    default_synthetic_scene_config,
    generate_dataset,
)
from src.schemas import (
    AnalysisConfig,
    DatasetSizes,
    DiscriminatorConfig,
    Domain,
    EpochIoU,
    ExperimentManifest,
    GeneratorConfig,
    IoUReport,
    NCEConfig,
    PatchSpec,
    SceneConfig,
    SegmenterConfig,
    TranslationConfig,
    TsneConfig,
)

TINY_SIZE = (32, 32)


@pytest.fixture
def app_config(tmp_path) -> AppConfig:
    return AppConfig(
        project_root=tmp_path,
        output_root=tmp_path / "runs",
        logs_dir=tmp_path / "logs",
        device="cpu",
        data_workers=0,
    )


@pytest.fixture
def scene_cfg() -> SceneConfig:
    return default_synthetic_scene_config().model_copy(update={"image_size": TINY_SIZE})


@pytest.fixture
def real_scene_cfg() -> SceneConfig:
    return default_pseudo_real_scene_config().model_copy(update={"image_size": TINY_SIZE})


@pytest.fixture
def syn_dataset(scene_cfg) -> LabeledDataset:
    return generate_dataset(scene_cfg, range(6), Domain.SYNTHETIC, name="syn")


@pytest.fixture
def real_dataset(real_scene_cfg) -> LabeledDataset:
    return generate_dataset(real_scene_cfg, range(100, 104), Domain.PSEUDO_REAL,
                            default_pseudo_real_camera(), name="real")


@pytest.fixture
def tiny_translation_cfg() -> TranslationConfig:
    return TranslationConfig(
        patch=PatchSpec(requested_size=16),
        batch=4,
        epochs=2,
        nce=NCEConfig(n_locations=16),
        generator=GeneratorConfig(trunk_channels=16, n_blocks=1, nce_dim=16),
        discriminator=DiscriminatorConfig(channels=4),
        checkpoint_every=1,
        probe_size=2,
        seed=0,
    )


@pytest.fixture
def tiny_segmenter_cfg() -> SegmenterConfig:
    return SegmenterConfig(epochs=3, images_per_epoch=8, batch_size=4, width=4, last_k=2, seed=0)


@pytest.fixture
def tiny_analysis_cfg() -> AnalysisConfig:
    return AnalysisConfig(
        layer_ids=["enc1"],
        tsne=TsneConfig(perplexity=2.0, iterations=250, exaggeration_iters=100, seed=0),
    )


@pytest.fixture
def tiny_manifest(tmp_path, scene_cfg, real_scene_cfg, tiny_translation_cfg, tiny_segmenter_cfg,
                  tiny_analysis_cfg) -> ExperimentManifest:
    return ExperimentManifest(
        synthetic_scene=scene_cfg,
        pseudo_real_scene=real_scene_cfg,
        pseudo_real_camera=default_pseudo_real_camera(),
        sizes=DatasetSizes(syn_train=6, real_train=4, real_test=2, analysis=3),
        translation=tiny_translation_cfg,
        segmenter=tiny_segmenter_cfg,
        analysis=tiny_analysis_cfg,
        refine_noise_seed=0,
        output_root=str(tmp_path / "experiment"),
    )


def random_sample(h: int, w: int, seed: int = 0, num_classes: int = 4, sample_id: str = "s") -> LabeledSample:
    rng = np.random.default_rng(seed)
    return LabeledSample(
        image=rng.random((h, w, 3)).astype(np.float32),
        labels=rng.integers(0, num_classes, size=(h, w)).astype(np.uint8),
        domain=Domain.SYNTHETIC,
        id=sample_id,
    )


def random_dataset(n: int, h: int = 16, w: int = 16, seed: int = 0, name: str = "rand",
                   num_classes: int = 4) -> LabeledDataset:
    return LabeledDataset(
        name=name,
        num_classes=num_classes,
        samples=tuple(random_sample(h, w, seed * 1000 + i, num_classes, f"{name}_{i:03d}") for i in range(n)),
    )


def history_from(values) -> list[EpochIoU]:
    """Evaluation history with the given raw mIoU series and half of it as EMA."""
    return [
        EpochIoU(epoch=i, raw=IoUReport(per_class_iou={}, mean_iou=v), ema=IoUReport(per_class_iou={}, mean_iou=v / 2))
        for i, v in enumerate(values)
    ]
