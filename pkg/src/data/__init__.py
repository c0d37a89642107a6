"""Desk-scale domains, dataset I/O and patch sampling."""
from src.data.batching import UnpairedBatch, UnpairedPatchLoader, unpaired_batch_iterator
from src.data.camera import apply_camera_effects
from src.data.dataset_io import load_dataset, save_dataset
from src.data.patches import bicubic_resize, random_crop
from src.data.samples import LabeledDataset, LabeledSample, quantize_to_8bit
from src.data.scenes import (
    default_pseudo_real_camera,
    default_pseudo_real_scene_config,
    default_synthetic_scene_config,
    generate_dataset,
    generate_synthetic_scene,
    render_scene,
)

__all__ = [
    "LabeledDataset",
    "LabeledSample",
    "UnpairedBatch",
    "UnpairedPatchLoader",
    "apply_camera_effects",
    "bicubic_resize",
    "default_pseudo_real_camera",
    "default_pseudo_real_scene_config",
    "default_synthetic_scene_config",
    "generate_dataset",
    "generate_synthetic_scene",
    "load_dataset",
    "quantize_to_8bit",
    "random_crop",
    "render_scene",
    "save_dataset",
    "unpaired_batch_iterator",
]
