"""Dataset directory format.

Layout::

    <root>/manifest.json
    <root>/images/<id>.png   8-bit RGB
    <root>/masks/<id>.png    8-bit single channel, pixel value = class id
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from src.config import DEFAULT_DATA_WORKERS, LOGGER_NAME, PIXEL_LEVELS
from src.data.samples import LabeledDataset, LabeledSample
from src.errors import DataError, FormatError
from src.schemas import DatasetManifest, SampleEntry, read_document, write_document

logger = logging.getLogger(LOGGER_NAME)

MANIFEST_NAME = "manifest.json"


def _encode_image(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0.0, 1.0) * PIXEL_LEVELS).astype(np.uint8)


def save_dataset(dataset: LabeledDataset, root: Path, manifest_hash: Optional[str] = None):
    """Write a dataset to disk.

    Images are stored as 8-bit PNG; datasets produced by this package are
    already on the v/255 grid, so the round trip is lossless.

    Args:
        dataset: Dataset to write
        root: Target directory (created if needed)
        manifest_hash: Hash of the experiment manifest, when run by the pipeline
    """
    root = Path(root)
    entries = []
    for sample in dataset:
        image_rel = f"images/{sample.id}.png"
        mask_rel = f"masks/{sample.id}.png"
        image_path = root / image_rel
        mask_path = root / mask_rel
        image_path.parent.mkdir(parents=True, exist_ok=True)
        mask_path.parent.mkdir(parents=True, exist_ok=True)

        Image.fromarray(_encode_image(sample.image)).save(image_path)
        Image.fromarray(sample.labels.astype(np.uint8)).save(mask_path)
        entries.append(SampleEntry(id=sample.id, image=image_rel, mask=mask_rel, domain=sample.domain))

    manifest = DatasetManifest(
        name=dataset.name,
        num_classes=dataset.num_classes,
        class_names=list(dataset.class_names),
        samples=entries,
        config_hash=dataset.config_hash,
        manifest_hash=manifest_hash,
    )
    write_document(manifest, root / MANIFEST_NAME)
    logger.info(f"Saved dataset '{dataset.name}' ({len(dataset)} samples) to {root}")


def _load_sample(root: Path, entry: SampleEntry, num_classes: int) -> LabeledSample:
    image_path = root / entry.image
    mask_path = root / entry.mask
    for path in (image_path, mask_path):
        if not path.exists():
            raise FormatError(f"Manifest references missing file: {path}")

    with Image.open(image_path) as im:
        if im.mode != "RGB":
            raise FormatError(f"{image_path}: expected 8-bit RGB, got mode {im.mode}")
        image = np.asarray(im, dtype=np.uint8)
    with Image.open(mask_path) as im:
        if im.mode != "L":
            raise FormatError(f"{mask_path}: expected 8-bit single-channel mask, got mode {im.mode}")
        labels = np.array(im, dtype=np.uint8)

    if labels.shape != image.shape[:2]:
        raise FormatError(
            f"Sample {entry.id}: mask shape {labels.shape} does not match image shape {image.shape[:2]}"
        )
    if labels.size and int(labels.max()) >= num_classes:
        raise FormatError(
            f"Sample {entry.id}: mask contains class id {int(labels.max())} >= declared {num_classes}"
        )

    return LabeledSample(
        image=(image.astype(np.float32) / PIXEL_LEVELS),
        labels=labels,
        domain=entry.domain,
        id=entry.id,
    )


def load_dataset(root: Path, workers: int = DEFAULT_DATA_WORKERS) -> LabeledDataset:
    """Read a dataset directory.

    Args:
        root: Dataset directory containing manifest.json
        workers: Decoding threads (0 = sequential)

    Returns:
        Immutable LabeledDataset

    Raises:
        FormatError: Missing manifest or files, shape mismatch, out-of-range class id
    """
    root = Path(root)
    manifest = read_document(DatasetManifest, root / MANIFEST_NAME)
    if len(manifest.class_names) != manifest.num_classes:
        raise FormatError(
            f"{root / MANIFEST_NAME}: {len(manifest.class_names)} class names for {manifest.num_classes} classes"
        )

    if workers > 0:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(lambda e: _load_sample(root, e, manifest.num_classes), manifest.samples))
    else:
        samples = [_load_sample(root, e, manifest.num_classes) for e in manifest.samples]

    try:
        dataset = LabeledDataset(
            name=manifest.name,
            num_classes=manifest.num_classes,
            samples=tuple(samples),
            class_names=tuple(manifest.class_names),
            config_hash=manifest.config_hash,
        )
    except DataError as e:
        raise FormatError(str(e)) from e

    logger.info(f"Loaded dataset '{dataset.name}' ({len(dataset)} samples) from {root}")
    return dataset
