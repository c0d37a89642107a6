"""One-axis sweeps over the translation stage.

Every value gets its own translation, refinement and ``refined`` arm. The
data stage and the two reference arms (synthetic-only, real-only) are
shared, so they run once per sweep.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from src.analysis.plotting import plot_iou_distributions
from src.config import AppConfig, LOGGER_NAME
from src.errors import ConfigurationError
from src.schemas import ExperimentManifest, SweepArm, SweepReport, load_config, write_document
from src.services.pipeline_service import ExperimentPipeline
from src.utils.hashing import config_hash

logger = logging.getLogger(LOGGER_NAME)

SWEEP_AXES = ("patch_size", "lambda_nce", "n_noise")
SWEEP_ARM = "refined"
REFERENCE_ARMS = ("synthetic", "real")
SWEEP_DIR = "sweeps"


def apply_axis(manifest: ExperimentManifest, axis: str, value: float) -> ExperimentManifest:
    """Copy of the manifest with one translation setting replaced.

    Raises:
        ConfigurationError: Unknown axis or a value the manifest rejects
    """
    data = manifest.model_dump(mode="json")
    translation = data["translation"]
    if axis == "patch_size":
        translation["patch"]["requested_size"] = int(value)
    elif axis == "lambda_nce":
        translation["nce"]["lambda_nce"] = float(value)
    elif axis == "n_noise":
        translation["generator"]["noise"]["n_noise"] = int(value)
    else:
        raise ConfigurationError(f"Unknown sweep axis '{axis}', expected one of {SWEEP_AXES}")
    swept = load_config(ExperimentManifest, data)
    swept.check()
    return swept


def format_value(value: float) -> str:
    return f"{value:g}"


class SweepService:
    """Runs a sweep and writes ``sweep.json`` plus the comparison figure."""

    def __init__(
        self,
        manifest: ExperimentManifest,
        config: AppConfig,
        force: bool = False,
        root: Optional[Path] = None
    ):
        manifest.check()
        self.manifest = manifest
        self.config = config
        self.force = force
        self.root = Path(root if root is not None else manifest.output_root)

    def sweep_dir(self, axis: str, values: Sequence[float], base_hash: str) -> Path:
        return self.root / SWEEP_DIR / f"{axis}_{config_hash('sweep', axis, list(values), base_hash)}"

    def run(self, axis: str, values: Sequence[float], jobs: int = 1) -> SweepReport:
        """Sweep one axis.

        Args:
            axis: ``patch_size``, ``lambda_nce`` or ``n_noise``
            values: Axis values; duplicates are dropped
            jobs: Values trained concurrently

        Returns:
            SweepReport with one arm per value and the two reference arms

        Raises:
            ConfigurationError: Unknown axis, no values, or an invalid value
        """
        if axis not in SWEEP_AXES:
            raise ConfigurationError(f"Unknown sweep axis '{axis}', expected one of {SWEEP_AXES}")
        if not values:
            raise ConfigurationError("A sweep needs at least one value")
        if jobs < 1:
            raise ConfigurationError(f"jobs must be >= 1, got {jobs}")
        values = list(dict.fromkeys(float(v) for v in values))
        manifests = [(value, apply_axis(self.manifest, axis, value)) for value in values]

        base = ExperimentPipeline(self.manifest, self.config, force=self.force, root=self.root)
        datasets = base.datasets()
        references = [base.arm_stage(arm) for arm in REFERENCE_ARMS]

        logger.info("=" * 60)
        logger.info(f"Sweeping {axis} over {[format_value(v) for v in values]} with {jobs} job(s)")
        logger.info("=" * 60)

        def run_value(item: tuple[float, ExperimentManifest]) -> SweepArm:
            value, manifest = item
            pipeline = ExperimentPipeline(manifest, self.config, force=self.force, root=self.root,
                                          datasets=datasets)
            translation = pipeline.translation_summary()
            report = pipeline.arm_stage(SWEEP_ARM)
            logger.info(f"{axis}={format_value(value)}: EMA mIoU {report.distribution.ema.mean:.4f}, "
                        f"{translation.mean_epoch_seconds:.2f}s/epoch, collapsed={translation.collapsed}")
            return SweepArm(
                value=value,
                report=report,
                mean_epoch_seconds=translation.mean_epoch_seconds,
                collapsed=translation.collapsed,
            )

        if jobs == 1:
            arms = [run_value(item) for item in manifests]
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                arms = list(pool.map(run_value, manifests))

        report = SweepReport(axis=axis, manifest_hash=base.manifest_hash, arms=arms, references=references)
        out_dir = self.sweep_dir(axis, values, base.manifest_hash)
        write_document(report, out_dir / "sweep.json")
        plot_iou_distributions(
            [references[0]] + [arm.report for arm in arms] + [references[1]],
            out_dir / "sweep.svg",
            track="ema",
            labels=["synthetic"] + [f"{axis}={format_value(v)}" for v in values] + ["real"],
            title=f"{axis} sweep",
        )
        logger.info(f"Sweep written to {out_dir}")
        return report


def run_sweep(
    manifest: ExperimentManifest,
    axis: str,
    values: Sequence[float],
    config: Optional[AppConfig] = None,
    jobs: int = 1,
    force: bool = False
) -> SweepReport:
    """Sweep one translation setting; see ``SweepService.run``."""
    return SweepService(manifest, config or AppConfig.from_env(), force=force).run(axis, values, jobs)
