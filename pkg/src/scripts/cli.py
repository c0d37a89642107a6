"""Command-line entry point: ``syn2real <command> ...``.

Examples:
  # Render the four desk datasets
  syn2real gen-data --out runs/data

  # Train the translation model and refine the synthetic frames
  syn2real train-cut --x runs/data/syn_train --y runs/data/real_train --out runs/cut
  syn2real refine --ckpt runs/cut --in runs/data/syn_train --out runs/refined --noise-seed 0

  # Train a segmenter on a real/refined mixture and evaluate it
  syn2real train-seg --train runs/data/real_train,runs/refined --p-real 0.5 \\
      --test runs/data/real_test --epochs 60 --per-epoch 200 --out runs/seg
  syn2real eval --ckpt runs/seg --test runs/data/real_test --report runs/seg/eval.json

  # Whole experiment, then a patch-size sweep
  syn2real pipeline --config manifest.json
  syn2real sweep --config manifest.json --axis patch_size --values 32,48,64 --jobs 3
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Optional

from src.analysis.plotting import plot_iou_distributions
from src.config import AppConfig, LOGGER_NAME
from src.data.dataset_io import load_dataset, save_dataset
from src.errors import ConfigurationError, Syn2RealError
from src.models.checkpoint import load_segmenter_checkpoint
from src.schemas import (
    AnalysisConfig,
    ArmReport,
    ExperimentManifest,
    SegmenterConfig,
    TranslationConfig,
    load_config_file,
    read_document,
    write_document,
)
from src.services.evaluation import arm_report, evaluate_miou
from src.services.feature_analysis import analyze_triples
from src.services.pipeline_service import (
    SUMMARY_NAME,
    data_stage_hash,
    default_manifest,
    render_datasets,
    run_pipeline,
)
from src.services.refiner import refine_dataset
from src.services.segmentation_trainer import MixedSource, SegmentationTrainer, segmenter_run_hash
from src.services.sweep_service import SWEEP_AXES, SweepService
from src.services.translation_trainer import TranslationTrainer
from src.utils.logger import setup_logger

logger = logging.getLogger(LOGGER_NAME)

REPORT_NAME = "report.json"


# ============================================================
# Argument helpers
# ============================================================

def float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def required_out(args: argparse.Namespace) -> Path:
    if args.out is None:
        raise ConfigurationError(f"'{args.command}' needs --out")
    return Path(args.out)


def load_manifest(args: argparse.Namespace) -> ExperimentManifest:
    """Manifest from --config (or the desk default) with --seed/--out applied."""
    manifest = load_config_file(ExperimentManifest, args.config) if args.config else default_manifest()
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["output_root"] = str(args.out)
    manifest = manifest.model_copy(update=updates)
    manifest.check()
    return manifest


# ============================================================
# Commands
# ============================================================

def cmd_gen_data(args: argparse.Namespace, config: AppConfig):
    manifest = load_manifest(args)
    out = Path(manifest.output_root)
    datasets = render_datasets(manifest, data_stage_hash(manifest))
    for name, dataset in datasets.items():
        save_dataset(dataset, out / name)
    logger.info(f"Wrote {', '.join(datasets)} to {out}")


def cmd_train_cut(args: argparse.Namespace, config: AppConfig):
    cfg = load_config_file(TranslationConfig, args.config) if args.config else TranslationConfig()
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    X = load_dataset(args.x, config.data_workers)
    Y = load_dataset(args.y, config.data_workers)
    result = TranslationTrainer(cfg, config).train(X, Y, required_out(args))
    logger.info(f"Checkpoint at {result.checkpoint}: {result.steps} steps, "
                f"{result.mean_epoch_seconds:.2f}s/epoch, collapsed={result.collapsed}")


def cmd_refine(args: argparse.Namespace, config: AppConfig):
    X = load_dataset(args.input, config.data_workers)
    refined = refine_dataset(args.ckpt, X, noise_seed=args.noise_seed, device=config.device)
    save_dataset(refined, required_out(args))


def cmd_train_seg(args: argparse.Namespace, config: AppConfig):
    cfg = load_config_file(SegmenterConfig, args.config) if args.config else SegmenterConfig()
    updates = {"epochs": args.epochs, "images_per_epoch": args.per_epoch, "seed": args.seed, "p_real": args.p_real}
    cfg = cfg.model_copy(update={k: v for k, v in updates.items() if v is not None})

    dirs = [d for d in args.train.split(",") if d]
    if not 1 <= len(dirs) <= 2:
        raise ConfigurationError(f"--train takes one directory or two comma-separated ones, got '{args.train}'")
    datasets = [load_dataset(Path(d), config.data_workers) for d in dirs]
    train = datasets[0] if len(datasets) == 1 else MixedSource(datasets[0], datasets[1], cfg.p_real)
    test = load_dataset(args.test, config.data_workers)

    out = required_out(args)
    run_hash = segmenter_run_hash([d.config_hash for d in datasets], test.config_hash, cfg,
                                  cfg.p_real if len(datasets) == 2 else None)
    state = SegmentationTrainer(cfg, config).train(train, test)
    state.save(out, run_hash)
    report = arm_report(train.name, state.history, run_hash, cfg.last_k, extra={"train": dirs})
    write_document(report, out / REPORT_NAME)
    logger.info(f"Segmenter and {REPORT_NAME} written to {out}")


def cmd_eval(args: argparse.Namespace, config: AppConfig):
    models = load_segmenter_checkpoint(args.ckpt, config.device)
    test = load_dataset(args.test, config.data_workers)
    model = models.model if args.raw else models.ema
    report = evaluate_miou(model, test, config.device)
    report = report.model_copy(update={"config_hash": models.meta.config_hash})
    write_document(report, args.report)
    logger.info(f"{'Raw' if args.raw else 'EMA'} mIoU {report.mean_iou:.4f} on '{test.name}' -> {args.report}")


def cmd_analyze(args: argparse.Namespace, config: AppConfig):
    cfg = load_config_file(AnalysisConfig, args.config) if args.config else AnalysisConfig()
    if args.seed is not None:
        cfg = cfg.model_copy(update={"tsne": cfg.tsne.model_copy(update={"seed": args.seed})})
    layer_id = args.layer or cfg.layer_ids[0]
    segmenter = load_segmenter_checkpoint(args.ckpt, config.device).ema
    analyze_triples(
        load_dataset(args.syn, config.data_workers),
        load_dataset(args.refined, config.data_workers),
        load_dataset(args.real, config.data_workers),
        segmenter,
        layer_id,
        cfg,
        out_json=required_out(args),
        out_plot=args.plot,
        device=config.device,
    )


def cmd_pipeline(args: argparse.Namespace, config: AppConfig):
    root = run_pipeline(load_manifest(args), config, force=args.force)
    logger.info(f"Summary at {root / SUMMARY_NAME}")


def cmd_sweep(args: argparse.Namespace, config: AppConfig):
    report = SweepService(load_manifest(args), config, force=args.force).run(args.axis, args.values, args.jobs)
    for arm in report.arms:
        logger.info(f"  {args.axis}={arm.value:g}: EMA mIoU {arm.report.distribution.ema.mean:.4f}, "
                    f"{arm.mean_epoch_seconds:.2f}s/epoch, collapsed={arm.collapsed}")


def cmd_plot(args: argparse.Namespace, config: AppConfig):
    reports = [read_document(ArmReport, Path(p)) for p in args.reports]
    plot_iou_distributions(reports, required_out(args), track=args.track)


# ============================================================
# Parser
# ============================================================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file (manifest or per-command config)")
    common.add_argument("--seed", type=int, help="Override the configured seed")
    common.add_argument("--out", type=Path, help="Output directory or file")
    common.add_argument("--force", action="store_true", help="Rebuild stale stage outputs instead of refusing them")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(
        prog="syn2real",
        description="Synthetic-to-real translation and segmentation experiments",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__.split("Examples:", 1)[1] if __doc__ else None,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, handler: Callable, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(handler=handler)
        return p

    add("gen-data", cmd_gen_data, "Render the synthetic and pseudo-real datasets")

    p = add("train-cut", cmd_train_cut, "Train the translation model")
    p.add_argument("--x", type=Path, required=True, help="Synthetic (source) dataset")
    p.add_argument("--y", type=Path, required=True, help="Real (target) dataset")

    p = add("refine", cmd_refine, "Translate a dataset with a trained generator")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--noise-seed", type=int, default=None, help="Seed of the injected noise (default 0)")

    p = add("train-seg", cmd_train_seg, "Train a segmenter (optionally on a real/other mixture)")
    p.add_argument("--train", required=True, help="Dataset dir, or 'real_dir,other_dir' for a mixture")
    p.add_argument("--p-real", type=float, default=None, help="Probability of a real mini-batch")
    p.add_argument("--test", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--per-epoch", type=int, default=None, help="Images per epoch")

    p = add("eval", cmd_eval, "Evaluate a segmenter checkpoint")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--test", type=Path, required=True)
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--raw", action="store_true", help="Evaluate raw instead of EMA weights")

    p = add("analyze", cmd_analyze, "Embed synthetic/refined/real triples with t-SNE")
    p.add_argument("--syn", type=Path, required=True)
    p.add_argument("--refined", type=Path, required=True)
    p.add_argument("--real", type=Path, required=True)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--layer", default=None)
    p.add_argument("--plot", type=Path, default=None)

    add("pipeline", cmd_pipeline, "Run the whole experiment")

    p = add("sweep", cmd_sweep, "Sweep one translation setting")
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", type=float_list, required=True, help="Comma-separated values")
    p.add_argument("--jobs", type=int, default=1)

    p = add("plot", cmd_plot, "Plot IoU distributions of several reports")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--track", choices=("ema", "raw"), default="ema")

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    """Parse arguments, run one command and map failures to exit codes."""
    args = build_parser().parse_args(argv)

    try:
        config = AppConfig.from_env()
        config.validate()
    except ValueError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return ConfigurationError.exit_code

    setup_logger(config.logs_dir, "DEBUG" if args.verbose else config.log_level, console=True)

    try:
        args.handler(args, config)
    except Syn2RealError as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        return e.exit_code
    except Exception as e:
        logger.error(f"{args.command} failed unexpectedly: {e}", exc_info=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
