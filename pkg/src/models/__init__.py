"""Translation networks, segmenter and checkpoint I/O."""
from src.models.checkpoint import (
    TranslationModels,
    SegmenterModels,
    build_translation_models,
    load_segmenter_checkpoint,
    load_translation_checkpoint,
    save_segmenter_checkpoint,
    save_translation_checkpoint,
)
from src.models.discriminator import Discriminator
from src.models.generator import Generator
from src.models.projection import ProjectionHeads, extract_and_project
from src.models.segmenter import Segmenter
from src.models.tensors import images_to_tensor, labels_to_tensor, tensor_to_images

__all__ = [
    "Discriminator",
    "Generator",
    "ProjectionHeads",
    "Segmenter",
    "SegmenterModels",
    "TranslationModels",
    "build_translation_models",
    "extract_and_project",
    "images_to_tensor",
    "labels_to_tensor",
    "load_segmenter_checkpoint",
    "load_translation_checkpoint",
    "save_segmenter_checkpoint",
    "save_translation_checkpoint",
    "tensor_to_images",
]
