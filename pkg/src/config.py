"""Centralized configuration management for syn2real.

This module consolidates:
- Environment variables
- Desk-scale defaults for data, translation, segmentation and analysis
- Path configuration
"""
import os
from dataclasses import dataclass
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Get project root (parent of src/)
PROJECT_ROOT = Path(__file__).parent.parent

# ============================================================
# MODULE-LEVEL CONSTANTS (Defaults)
# ============================================================
#
# These constants define the default behavior of syn2real. Experiment
# manifests override the domain values; environment variables in .env
# override the runtime values (device, logging, output location).
#
# Organization:
# - Scene Rendering: toy domain pair
# - Translation (CUT): patch training hyperparameters
# - Segmentation: downstream training protocol
# - Analysis: t-SNE settings
# - Runtime: device and data loading
# - Logging
# - Application Metadata
#

# ─────────────────────────────────────────────────────────────
# Scene Rendering
# ─────────────────────────────────────────────────────────────
SCENE_IMAGE_SIZE = (64, 64)  # (H, W), both divisible by 4
SCENE_NUM_CLASSES = 4  # background + 3 object classes
SCENE_OBJECTS_PER_SCENE = (2, 5)  # inclusive range
PIXEL_LEVELS = 255  # images live on the 8-bit grid v/255

# ─────────────────────────────────────────────────────────────
# Translation (CUT)
# ─────────────────────────────────────────────────────────────
CUT_PATCH_SIZE = 48  # desk default; the full-scale study uses 60..160
CUT_MIN_PATCH_SIZE = 16  # smallest patch the discriminator accepts
CUT_BATCH_SIZE = 40  # irrespective of patch size
CUT_EPOCHS = 40  # desk default; 400 at full scale
CUT_LAMBDA_NCE = 1.0
CUT_NCE_LOCATIONS = 256  # sampled locations per layer per image
CUT_NCE_TEMPERATURE = 0.07
CUT_NCE_DIM = 256  # projection head embedding size
CUT_LR = 2e-4
CUT_BETAS = (0.5, 0.999)
CUT_TRUNK_CHANNELS = 64  # M
CUT_RESIDUAL_BLOCKS = 4  # R
CUT_DISCRIMINATOR_CHANNELS = 32
CUT_ALLOWED_NOISE_MAPS = (0, 4, 8, 16, 32)
CUT_CHECKPOINT_EVERY = 10  # epochs between snapshots
COLLAPSE_THRESHOLD = 0.02  # RMS pixel distance between probe outputs
COLLAPSE_PROBE_SIZE = 8
REFINE_NOISE_SEED = 0  # noise seed of refinement when none is given

# ─────────────────────────────────────────────────────────────
# Segmentation
# ─────────────────────────────────────────────────────────────
SEG_EPOCHS = 60  # desk default; 300 at full scale
SEG_IMAGES_PER_EPOCH = 200  # desk default; 1500 at full scale
SEG_BATCH_SIZE = 8
SEG_LR = 1e-3
SEG_EMA_DECAY = 0.995
SEG_WIDTH = 16  # channels of the first encoder stage
SEG_P_REAL = 0.5  # mixture probability for real mini-batches
IOU_LAST_K = 50  # epochs in the reported IoU distribution (desk runs use 20)

# ─────────────────────────────────────────────────────────────
# Analysis
# ─────────────────────────────────────────────────────────────
TSNE_PERPLEXITY = 30.0
TSNE_ITERATIONS = 1000
TSNE_LEARNING_RATE = 200.0
TSNE_EARLY_EXAGGERATION = 12.0
TSNE_EXAGGERATION_ITERS = 250
TSNE_ENTROPY_TOLERANCE = 1e-5

# Scatter plot colours per domain
DOMAIN_COLORS = {
    "synthetic": "turquoise",
    "refined": "orange",
    "pseudo_real": "blue",
}

# ─────────────────────────────────────────────────────────────
# Runtime
# ─────────────────────────────────────────────────────────────
DEFAULT_DEVICE = "cpu"
DEFAULT_DATA_WORKERS = 2  # prefetch threads of the batch iterator
DEFAULT_OUTPUT_DIRNAME = "runs"

# ─────────────────────────────────────────────────────────────
# Logging Configuration
# ─────────────────────────────────────────────────────────────
LOG_FILENAME = "syn2real.log"  # Name of log file in logs/ directory
LOG_LEVEL = "INFO"  # Logging level: DEBUG, INFO, WARNING, ERROR, CRITICAL
LOG_MAX_FILE_SIZE_MB = 10  # Max size per log file before rotation
LOG_BACKUP_COUNT = 5  # Number of backup files to keep (50MB total)
LOGGER_NAME = "syn2real"

# ─────────────────────────────────────────────────────────────
# Application Metadata
# ─────────────────────────────────────────────────────────────
APP_VERSION = "0.1.0"


@dataclass
class AppConfig:
    """Runtime configuration container.

    Experiment hyperparameters travel in the JSON manifest (see
    ``src.schemas``); this class only carries what depends on the machine.

    Attributes:
        project_root: Root directory of the project
        output_root: Default directory for experiment outputs
        logs_dir: Directory for application logs
        device: Torch device string used for training and inference
        data_workers: Prefetch threads for the unpaired batch iterator
        log_filename: Log file name
        log_level: Logging level
        app_version: Application version
    """
    project_root: Path
    output_root: Path
    logs_dir: Path
    device: str = DEFAULT_DEVICE
    data_workers: int = DEFAULT_DATA_WORKERS
    log_filename: str = LOG_FILENAME
    log_level: str = LOG_LEVEL
    app_version: str = APP_VERSION

    @classmethod
    def from_env(cls) -> "AppConfig":
        """Load configuration from environment variables.

        Reads from .env file if present, otherwise uses system environment.

        Returns:
            AppConfig instance with all settings

        Raises:
            ValueError: If a numeric override cannot be parsed
        """
        output_root = Path(os.getenv("SYN2REAL_OUTPUT_ROOT", PROJECT_ROOT / DEFAULT_OUTPUT_DIRNAME))
        logs_dir = Path(os.getenv("SYN2REAL_LOG_DIR", PROJECT_ROOT / "logs"))

        try:
            data_workers = int(os.getenv("SYN2REAL_DATA_WORKERS", DEFAULT_DATA_WORKERS))
        except ValueError:
            raise ValueError("SYN2REAL_DATA_WORKERS must be an integer")

        return cls(
            project_root=PROJECT_ROOT,
            output_root=output_root,
            logs_dir=logs_dir,
            device=os.getenv("SYN2REAL_DEVICE", DEFAULT_DEVICE),
            data_workers=data_workers,
            log_level=os.getenv("SYN2REAL_LOG_LEVEL", LOG_LEVEL),
        )

    def create_directories(self):
        """Create required directories if they don't exist.

        This is separated from config loading to avoid side effects
        during configuration initialization.
        """
        self.logs_dir.mkdir(parents=True, exist_ok=True)
        self.output_root.mkdir(parents=True, exist_ok=True)

    def validate(self) -> bool:
        """Validate runtime settings.

        Returns:
            True if configuration is valid

        Raises:
            ValueError: If the device string or worker count is unusable
        """
        if self.data_workers < 0:
            raise ValueError(f"data_workers must be >= 0, got {self.data_workers}")

        if not (self.device == "cpu" or self.device.startswith("cuda") or self.device == "mps"):
            raise ValueError(f"Unsupported device: {self.device}")

        return True
