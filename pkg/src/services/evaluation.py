"""mIoU evaluation and last-K distribution statistics."""
import logging
from typing import Any, Optional, Sequence, Union

import numpy as np
import torch

from src.config import IOU_LAST_K, LOGGER_NAME
from src.data.samples import LabeledDataset
from src.errors import ConfigurationError, DataError, HistoryLengthError, ShapeError
from src.models.segmenter import Segmenter
from src.models.tensors import images_to_tensor
from src.schemas import ArmReport, DistributionStats, EpochIoU, IoUDistribution, IoUReport

logger = logging.getLogger(LOGGER_NAME)

EVAL_BATCH_SIZE = 16


def confusion_matrix(pred: np.ndarray, gt: np.ndarray, num_classes: int) -> np.ndarray:
    """C x C pixel counts; rows are ground truth, columns predictions.

    Raises:
        ShapeError: If prediction and ground truth differ in shape
    """
    if pred.shape != gt.shape:
        raise ShapeError(f"Prediction shape {pred.shape} != ground-truth shape {gt.shape}")
    index = gt.astype(np.int64).ravel() * num_classes + pred.astype(np.int64).ravel()
    return np.bincount(index, minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def iou_from_confusion(confusion: np.ndarray) -> IoUReport:
    """Per-class TP / (TP + FP + FN); classes absent from both sides are undefined."""
    tp = np.diag(confusion).astype(np.float64)
    fp = confusion.sum(axis=0) - tp
    fn = confusion.sum(axis=1) - tp
    denom = tp + fp + fn

    per_class: dict[int, Optional[float]] = {}
    for c in range(confusion.shape[0]):
        per_class[c] = None if denom[c] == 0 else float(tp[c] / denom[c])

    defined = [v for v in per_class.values() if v is not None]
    mean_iou = float(np.mean(defined)) if defined else 0.0
    return IoUReport(per_class_iou=per_class, mean_iou=mean_iou)


def predict(model: Segmenter, images: Sequence[np.ndarray], device: Union[str, torch.device] = "cpu") -> np.ndarray:
    """Arg-max class map for a list of equally sized frames."""
    with torch.no_grad():
        logits = model(images_to_tensor(list(images), device))
    return logits.argmax(dim=1).cpu().numpy()


def evaluate_miou(
    model: Segmenter,
    test: LabeledDataset,
    device: Union[str, torch.device] = "cpu",
    batch_size: int = EVAL_BATCH_SIZE
) -> IoUReport:
    """Dataset-level mIoU from one global confusion matrix.

    Args:
        model: Segmenter (raw or EMA parameters)
        test: Labeled test set
        device: Torch device
        batch_size: Frames per forward pass

    Returns:
        IoUReport with per-class IoU (None = undefined) and mean IoU

    Raises:
        DataError: Empty test set
        ShapeError: Prediction and ground truth disagree in shape
    """
    if len(test) == 0:
        raise DataError("Cannot evaluate on an empty test set")
    was_training = model.training
    model.eval()

    confusion = np.zeros((test.num_classes, test.num_classes), dtype=np.int64)
    samples = test.samples
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        # frames of different sizes are evaluated one by one
        groups = [chunk] if len({s.size for s in chunk}) == 1 else [[s] for s in chunk]
        for group in groups:
            preds = predict(model, [s.image for s in group], device)
            for sample, pred in zip(group, preds):
                confusion += confusion_matrix(pred, sample.labels, test.num_classes)

    model.train(was_training)
    return iou_from_confusion(confusion)


def distribution_stats(values: Sequence[float]) -> DistributionStats:
    """Mean, population std, min, max and median of a series."""
    array = np.asarray(values, dtype=np.float64)
    if array.size == 0:
        raise HistoryLengthError("Cannot summarize an empty series")
    return DistributionStats(
        k=int(array.size),
        mean=float(array.mean()),
        std=float(array.std()),
        min=float(array.min()),
        max=float(array.max()),
        median=float(np.median(array)),
    )


def iou_distribution(history: Sequence[EpochIoU], k: int = IOU_LAST_K) -> IoUDistribution:
    """Statistics of the raw and EMA mIoU over the last ``k`` epochs.

    Raises:
        ConfigurationError: k < 1
        HistoryLengthError: Fewer than k recorded epochs
    """
    if k < 1:
        raise ConfigurationError(f"k must be >= 1, got {k}")
    if len(history) < k:
        raise HistoryLengthError(f"History has {len(history)} epochs, {k} requested")
    window = history[-k:]
    raw = [h.raw.mean_iou for h in window]
    ema = [h.ema.mean_iou for h in window]
    return IoUDistribution(
        k=k,
        raw=distribution_stats(raw),
        ema=distribution_stats(ema),
        raw_series=raw,
        ema_series=ema,
    )


def arm_report(
    arm: str,
    history: Sequence[EpochIoU],
    run_hash: str,
    last_k: int = IOU_LAST_K,
    extra: Optional[dict[str, Any]] = None
) -> ArmReport:
    """Summarize one training arm.

    The window shrinks to the recorded history when fewer than ``last_k``
    epochs exist, with a warning.

    Raises:
        HistoryLengthError: Empty history
    """
    if not history:
        raise HistoryLengthError(f"Arm '{arm}' has no recorded epochs")
    k = min(last_k, len(history))
    if k < last_k:
        logger.warning(f"Arm '{arm}': only {len(history)} epochs recorded, reporting the last {k}")
    dist = iou_distribution(history, k)
    final = history[-1]
    return ArmReport(
        arm=arm,
        config_hash=run_hash,
        distribution=dist,
        final_raw=final.raw.model_copy(update={"last_k_stats": dist.raw, "config_hash": run_hash}),
        final_ema=final.ema.model_copy(update={"last_k_stats": dist.ema, "config_hash": run_hash}),
        extra=dict(extra or {}),
    )
