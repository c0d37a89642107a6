"""Pydantic models for configs, on-disk documents and reports.

Range checks that operations must report as ``ConfigurationError`` live in
``check()`` methods rather than field validators, so an invalid config can
still be constructed and handed to an operation that rejects it.
"""
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Literal, Optional, Type, TypeVar

from pydantic import BaseModel, Field, ValidationError

from src.config import (
    COLLAPSE_PROBE_SIZE,
    COLLAPSE_THRESHOLD,
    CUT_ALLOWED_NOISE_MAPS,
    CUT_BATCH_SIZE,
    CUT_BETAS,
    CUT_CHECKPOINT_EVERY,
    CUT_DISCRIMINATOR_CHANNELS,
    CUT_EPOCHS,
    CUT_LAMBDA_NCE,
    CUT_LR,
    CUT_MIN_PATCH_SIZE,
    CUT_NCE_DIM,
    CUT_NCE_LOCATIONS,
    CUT_NCE_TEMPERATURE,
    CUT_PATCH_SIZE,
    CUT_RESIDUAL_BLOCKS,
    CUT_TRUNK_CHANNELS,
    IOU_LAST_K,
    SCENE_IMAGE_SIZE,
    SCENE_NUM_CLASSES,
    SCENE_OBJECTS_PER_SCENE,
    SEG_BATCH_SIZE,
    SEG_EMA_DECAY,
    SEG_EPOCHS,
    SEG_IMAGES_PER_EPOCH,
    SEG_LR,
    SEG_P_REAL,
    SEG_WIDTH,
    TSNE_EARLY_EXAGGERATION,
    TSNE_EXAGGERATION_ITERS,
    TSNE_ITERATIONS,
    TSNE_LEARNING_RATE,
    TSNE_PERPLEXITY,
)
from src.errors import ConfigurationError, FormatError, PatchSizeError

M = TypeVar("M", bound=BaseModel)

RGB = tuple[float, float, float]


class Domain(str, Enum):
    """Image domain tag."""
    SYNTHETIC = "synthetic"
    PSEUDO_REAL = "pseudo_real"
    REFINED = "refined"


def _check_rgb(color: RGB, what: str):
    if any(not 0.0 <= c <= 1.0 for c in color):
        raise ConfigurationError(f"{what} components must lie in [0, 1], got {color}")


# ============================================================
# Data configs
# ============================================================

class ShapeStyle(BaseModel):
    """One entry of the object palette."""
    kind: Literal["circle", "ellipse", "rectangle", "triangle"]
    base_color: RGB
    texture: Literal["flat", "stripes", "checker", "speckle"] = "flat"


class BackgroundStyle(BaseModel):
    """One background fill style; ``colors`` are the two fill tones."""
    kind: Literal["flat", "gradient", "checker", "stripes", "speckle"]
    colors: tuple[RGB, RGB]


class SceneConfig(BaseModel):
    """Procedural scene layout and appearance."""
    image_size: tuple[int, int] = SCENE_IMAGE_SIZE
    num_classes: int = SCENE_NUM_CLASSES
    objects_per_scene: tuple[int, int] = SCENE_OBJECTS_PER_SCENE
    shape_palette: list[ShapeStyle]
    background_palette: list[BackgroundStyle]
    rng_seed: int = 0

    def check(self):
        """Raise ConfigurationError if the config cannot render scenes."""
        h, w = self.image_size
        if h <= 0 or w <= 0 or h % 4 or w % 4:
            raise ConfigurationError(f"image_size must be positive multiples of 4, got {self.image_size}")
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {self.num_classes}")
        lo, hi = self.objects_per_scene
        if lo < 1 or hi < lo:
            raise ConfigurationError(f"objects_per_scene must satisfy 1 <= min <= max, got {self.objects_per_scene}")
        if not self.shape_palette:
            raise ConfigurationError("shape_palette must not be empty")
        if not self.background_palette:
            raise ConfigurationError("background_palette must not be empty")
        for style in self.shape_palette:
            _check_rgb(style.base_color, "shape base_color")
        for style in self.background_palette:
            for color in style.colors:
                _check_rgb(color, "background color")


class CameraEffectConfig(BaseModel):
    """Camera post-processing; the defaults are the identity."""
    noise_sigma: float = 0.0
    chromatic_shift_px: tuple[tuple[float, float], tuple[float, float], tuple[float, float]] = (
        (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)
    )
    white_balance_gain: RGB = (1.0, 1.0, 1.0)
    exposure_gamma: float = 1.0
    vignette_strength: float = 0.0

    def check(self):
        if self.noise_sigma < 0:
            raise ConfigurationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if any(g <= 0 for g in self.white_balance_gain):
            raise ConfigurationError(f"white_balance_gain must be > 0, got {self.white_balance_gain}")
        if self.exposure_gamma <= 0:
            raise ConfigurationError(f"exposure_gamma must be > 0, got {self.exposure_gamma}")
        if not 0.0 <= self.vignette_strength <= 1.0:
            raise ConfigurationError(f"vignette_strength must lie in [0, 1], got {self.vignette_strength}")

    @property
    def is_identity(self) -> bool:
        return self == CameraEffectConfig()


class PatchSpec(BaseModel):
    """Training patch size; CUT works on multiples of 4."""
    requested_size: int = CUT_PATCH_SIZE
    legacy_rescale: bool = False

    @property
    def effective_size(self) -> int:
        return self.requested_size - self.requested_size % 4

    @property
    def crop_size(self) -> int:
        """Side length cut from the source image before any rescaling."""
        return self.requested_size if self.legacy_rescale else self.effective_size

    def check(self, image_hw: Optional[tuple[int, int]] = None):
        if self.requested_size < CUT_MIN_PATCH_SIZE:
            raise ConfigurationError(
                f"patch size must be >= {CUT_MIN_PATCH_SIZE}, got {self.requested_size}"
            )
        if image_hw is not None and self.crop_size > min(image_hw):
            raise PatchSizeError(
                f"patch {self.requested_size} does not fit image of size {image_hw[0]}x{image_hw[1]}"
            )


# ============================================================
# Translation configs
# ============================================================

class NoiseConfig(BaseModel):
    """Random feature maps injected at the decoder input."""
    n_noise: int = 0

    def check(self, trunk_channels: int):
        if self.n_noise not in CUT_ALLOWED_NOISE_MAPS:
            raise ConfigurationError(f"n_noise must be one of {CUT_ALLOWED_NOISE_MAPS}, got {self.n_noise}")
        if self.n_noise > trunk_channels // 4:
            raise ConfigurationError(
                f"n_noise={self.n_noise} exceeds a quarter of the {trunk_channels} trunk channels"
            )


NCE_LAYER_NAMES = ("input", "stem", "down1", "down2", "trunk_mid")


class GeneratorConfig(BaseModel):
    trunk_channels: int = CUT_TRUNK_CHANNELS
    n_blocks: int = CUT_RESIDUAL_BLOCKS
    padding_mode: Literal["reflect", "zeros", "circular"] = "reflect"
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    nce_layers: list[str] = Field(default_factory=lambda: list(NCE_LAYER_NAMES))
    nce_dim: int = CUT_NCE_DIM

    def check(self):
        if self.trunk_channels < 4 or self.trunk_channels % 4:
            raise ConfigurationError(f"trunk_channels must be a positive multiple of 4, got {self.trunk_channels}")
        if self.n_blocks < 1:
            raise ConfigurationError(f"n_blocks must be >= 1, got {self.n_blocks}")
        unknown = [name for name in self.nce_layers if name not in NCE_LAYER_NAMES]
        if unknown or not self.nce_layers:
            raise ConfigurationError(f"nce_layers must be a non-empty subset of {NCE_LAYER_NAMES}, got {self.nce_layers}")
        if self.nce_dim < 1:
            raise ConfigurationError(f"nce_dim must be >= 1, got {self.nce_dim}")
        self.noise.check(self.trunk_channels)


class DiscriminatorConfig(BaseModel):
    channels: int = CUT_DISCRIMINATOR_CHANNELS

    def check(self):
        if self.channels < 1:
            raise ConfigurationError(f"discriminator channels must be >= 1, got {self.channels}")


class NCEConfig(BaseModel):
    n_locations: int = CUT_NCE_LOCATIONS
    temperature: float = CUT_NCE_TEMPERATURE
    lambda_nce: float = CUT_LAMBDA_NCE
    detach_keys: bool = True

    def check(self):
        if self.n_locations < 2:
            raise ConfigurationError(f"n_locations must be >= 2, got {self.n_locations}")
        if self.temperature <= 0:
            raise ConfigurationError(f"temperature must be > 0, got {self.temperature}")
        if self.lambda_nce < 0:
            raise ConfigurationError(f"lambda_nce must be >= 0, got {self.lambda_nce}")


class OptimizerConfig(BaseModel):
    lr: float = CUT_LR
    betas: tuple[float, float] = CUT_BETAS


class TranslationConfig(BaseModel):
    """Every hyperparameter of CUT training."""
    patch: PatchSpec = Field(default_factory=PatchSpec)
    batch: int = CUT_BATCH_SIZE
    epochs: int = CUT_EPOCHS
    nce: NCEConfig = Field(default_factory=NCEConfig)
    generator: GeneratorConfig = Field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = Field(default_factory=DiscriminatorConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    gan_mode: Literal["lsgan", "nonsaturating"] = "lsgan"
    seed: int = 0
    checkpoint_every: int = CUT_CHECKPOINT_EVERY
    collapse_threshold: float = COLLAPSE_THRESHOLD
    probe_size: int = COLLAPSE_PROBE_SIZE

    @property
    def lambda_nce(self) -> float:
        return self.nce.lambda_nce

    @property
    def noise(self) -> NoiseConfig:
        return self.generator.noise

    def check(self):
        if self.batch < 1:
            raise ConfigurationError(f"batch must be >= 1, got {self.batch}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.checkpoint_every < 1:
            raise ConfigurationError(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")
        if self.probe_size < 2:
            raise ConfigurationError(f"probe_size must be >= 2, got {self.probe_size}")
        self.patch.check()
        self.nce.check()
        self.generator.check()
        self.discriminator.check()


# ============================================================
# Segmentation / analysis configs
# ============================================================

class SegmenterConfig(BaseModel):
    epochs: int = SEG_EPOCHS
    images_per_epoch: int = SEG_IMAGES_PER_EPOCH
    batch_size: int = SEG_BATCH_SIZE
    lr: float = SEG_LR
    ema_decay: float = SEG_EMA_DECAY
    width: int = SEG_WIDTH
    p_real: float = SEG_P_REAL
    last_k: int = IOU_LAST_K
    seed: int = 0

    @property
    def total_images(self) -> int:
        return self.epochs * self.images_per_epoch

    def check(self):
        if self.epochs < 1 or self.images_per_epoch < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs, images_per_epoch and batch_size must be >= 1")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ConfigurationError(f"ema_decay must lie in [0, 1], got {self.ema_decay}")
        if not 0.0 <= self.p_real <= 1.0:
            raise ConfigurationError(f"p_real must lie in [0, 1], got {self.p_real}")
        if self.width < 4:
            raise ConfigurationError(f"width must be >= 4, got {self.width}")


class TsneConfig(BaseModel):
    perplexity: float = TSNE_PERPLEXITY
    iterations: int = TSNE_ITERATIONS
    learning_rate: float = TSNE_LEARNING_RATE
    early_exaggeration: float = TSNE_EARLY_EXAGGERATION
    exaggeration_iters: int = TSNE_EXAGGERATION_ITERS
    seed: int = 0

    def check(self):
        if self.perplexity < 2:
            raise ConfigurationError(f"perplexity must be >= 2, got {self.perplexity}")
        if self.iterations < self.exaggeration_iters or self.iterations < 250:
            raise ConfigurationError(f"iterations must be >= max(250, exaggeration_iters), got {self.iterations}")
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")


class AnalysisConfig(BaseModel):
    layer_ids: list[str] = Field(default_factory=lambda: ["enc1", "enc3"])  # early, late
    tsne: TsneConfig = Field(default_factory=TsneConfig)
    highlight_index: int = 0  # triple connected by the red line


# ============================================================
# Experiment manifest
# ============================================================

ARM_NAMES = ("synthetic", "refined", "real", "real+refined", "real+synthetic")


class DatasetSizes(BaseModel):
    syn_train: int = 200
    real_train: int = 200
    real_test: int = 60
    analysis: int = 60

    def check(self):
        if min(self.syn_train, self.real_train, self.real_test, self.analysis) < 1:
            raise ConfigurationError("all dataset sizes must be >= 1")


class ExperimentManifest(BaseModel):
    """Everything one reproducible experiment needs."""
    synthetic_scene: SceneConfig
    pseudo_real_scene: SceneConfig
    synthetic_camera: CameraEffectConfig = Field(default_factory=CameraEffectConfig)
    pseudo_real_camera: CameraEffectConfig
    sizes: DatasetSizes = Field(default_factory=DatasetSizes)
    translation: TranslationConfig = Field(default_factory=TranslationConfig)
    segmenter: SegmenterConfig = Field(default_factory=SegmenterConfig)
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)
    arms: list[str] = Field(default_factory=lambda: ["synthetic", "refined", "real", "real+refined"])
    refine_noise_seed: Optional[int] = None
    seed: int = 0
    output_root: str = "runs/experiment"

    @property
    def refine_seed(self) -> int:
        """Noise seed of the refine stage; the experiment seed unless set explicitly."""
        return self.seed if self.refine_noise_seed is None else self.refine_noise_seed

    def check(self):
        self.synthetic_scene.check()
        self.pseudo_real_scene.check()
        if self.synthetic_scene.num_classes != self.pseudo_real_scene.num_classes:
            raise ConfigurationError("synthetic and pseudo-real scenes must declare the same num_classes")
        if self.synthetic_scene.image_size != self.pseudo_real_scene.image_size:
            raise ConfigurationError("synthetic and pseudo-real scenes must share image_size")
        self.synthetic_camera.check()
        self.pseudo_real_camera.check()
        self.sizes.check()
        self.translation.check()
        self.translation.patch.check(self.synthetic_scene.image_size)
        self.segmenter.check()
        self.analysis.tsne.check()
        unknown = [arm for arm in self.arms if arm not in ARM_NAMES]
        if unknown or not self.arms:
            raise ConfigurationError(f"arms must be a non-empty subset of {ARM_NAMES}, got {self.arms}")


# ============================================================
# On-disk documents
# ============================================================

class SampleEntry(BaseModel):
    id: str
    image: str
    mask: str
    domain: Domain


class DatasetManifest(BaseModel):
    name: str
    num_classes: int
    class_names: list[str]
    samples: list[SampleEntry]
    config_hash: Optional[str] = None
    manifest_hash: Optional[str] = None  # experiment that produced the dataset


class CheckpointMeta(BaseModel):
    kind: Literal["translation", "segmenter"]
    architecture: dict[str, Any]
    step: int = 0
    epoch: int = 0
    config_hash: str
    manifest_hash: Optional[str] = None
    tensors: dict[str, list[int]]
    created_at: datetime = Field(default_factory=datetime.now)


class LossReport(BaseModel):
    gan_g: float
    gan_d: float
    nce_x: float
    nce_y: float
    total: float


class StepRecord(BaseModel):
    kind: Literal["step"] = "step"
    epoch: int
    step: int
    loss: LossReport


class EpochRecord(BaseModel):
    kind: Literal["epoch"] = "epoch"
    epoch: int
    wall_seconds: float
    lr: float
    collapse_distance: Optional[float] = None
    collapsed: bool = False


class EpochTiming(BaseModel):
    epoch_index: int
    wall_seconds: float


class DistributionStats(BaseModel):
    k: int
    mean: float
    std: float
    min: float
    max: float
    median: float


class IoUReport(BaseModel):
    per_class_iou: dict[int, Optional[float]]
    mean_iou: float
    last_k_stats: Optional[DistributionStats] = None
    config_hash: Optional[str] = None


class EpochIoU(BaseModel):
    epoch: int
    raw: IoUReport
    ema: IoUReport


class IoUDistribution(BaseModel):
    k: int
    raw: DistributionStats
    ema: DistributionStats
    raw_series: list[float]
    ema_series: list[float]


class ArmReport(BaseModel):
    """Per-arm result file; the input of ``plot``."""
    arm: str
    config_hash: str
    distribution: IoUDistribution
    final_raw: IoUReport
    final_ema: IoUReport
    extra: dict[str, Any] = Field(default_factory=dict)


class TranslationSummary(BaseModel):
    """Outcome of the translation stage, stored next to its checkpoint."""
    config_hash: str
    steps: int
    mean_epoch_seconds: float
    timings: list[EpochTiming]
    collapse_distances: list[Optional[float]]
    collapse_epochs: list[int]
    collapsed: bool


class StageRecord(BaseModel):
    stage: str
    config_hash: str
    manifest_hash: str
    complete: bool = False
    outputs: dict[str, str] = Field(default_factory=dict)
    created_at: datetime = Field(default_factory=datetime.now)


class PipelineSummary(BaseModel):
    manifest_hash: str
    track: Literal["ema", "raw"] = "ema"
    arms: list[ArmReport]
    translation: dict[str, Any] = Field(default_factory=dict)
    analysis: dict[str, Any] = Field(default_factory=dict)


class EmbeddingPoint(BaseModel):
    id: str
    domain: Domain
    x: float
    y: float


class EmbeddingDocument(BaseModel):
    layer_id: str
    config: TsneConfig
    config_hash: str
    points: list[EmbeddingPoint]
    gap: dict[str, float]
    clusters: dict[str, dict[str, Any]]
    initial_kl: float
    final_kl: float


class SweepArm(BaseModel):
    value: float
    report: ArmReport
    mean_epoch_seconds: float
    collapsed: bool


class SweepReport(BaseModel):
    axis: Literal["patch_size", "lambda_nce", "n_noise"]
    manifest_hash: str
    arms: list[SweepArm]
    references: list[ArmReport]


# ============================================================
# Helpers
# ============================================================

def load_config(model: Type[M], data: Any) -> M:
    """Validate raw data into a config model.

    Raises:
        ConfigurationError: If validation fails
    """
    try:
        return model.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid {model.__name__}: {e}") from e


def read_document(model: Type[M], path: Path) -> M:
    """Read and validate a JSON document from disk.

    Raises:
        FormatError: If the file is missing or malformed
    """
    path = Path(path)
    if not path.exists():
        raise FormatError(f"Missing file: {path}")
    try:
        return model.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise FormatError(f"Malformed {path.name}: {e}") from e


def write_document(doc: BaseModel, path: Path):
    """Write a document as indented JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(doc.model_dump_json(indent=2), encoding="utf-8")


def load_config_file(model: Type[M], path: Path) -> M:
    """Read a JSON config file into a config model.

    Raises:
        ConfigurationError: Missing file, invalid JSON or invalid values
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Missing config file: {path}")
    try:
        return model.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ConfigurationError(f"Invalid {model.__name__} in {path}: {e}") from e
