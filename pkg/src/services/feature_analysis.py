"""Joint embedding of synthetic / refined / real triples."""
import logging
from pathlib import Path
from typing import Optional, Union

import torch

from src.analysis.features import (
    FeatureVector,
    cluster_statistics,
    mask_background,
    nearest_real_distance,
    pooled_features,
    stack_vectors,
)
from src.analysis.plotting import plot_embedding
from src.analysis.tsne import tsne_embed
from src.config import LOGGER_NAME
from src.data.samples import LabeledDataset
from src.errors import DataError
from src.models.segmenter import Segmenter
from src.schemas import AnalysisConfig, Domain, EmbeddingDocument, EmbeddingPoint, write_document
from src.services.refiner import source_id
from src.utils.hashing import config_hash

logger = logging.getLogger(LOGGER_NAME)


def matched_ids(synthetic: LabeledDataset, refined: LabeledDataset, real: LabeledDataset) -> list[str]:
    """Ids present in all three datasets, in synthetic order."""
    refined_ids = {source_id(i) for i in refined.ids}
    real_ids = set(real.ids)
    return [i for i in synthetic.ids if i in refined_ids and i in real_ids]


def extract_domain_features(
    model: Segmenter,
    dataset: LabeledDataset,
    ids: list[str],
    domain: Domain,
    layer_id: str,
    device: Union[str, torch.device] = "cpu"
) -> list[FeatureVector]:
    by_source = {source_id(s.id): s for s in dataset}
    return [
        FeatureVector(
            values=pooled_features(model, mask_background(by_source[i]), layer_id, device),
            source_id=i,
            domain=domain,
        )
        for i in ids
    ]


def analyze_triples(
    synthetic: LabeledDataset,
    refined: LabeledDataset,
    real: LabeledDataset,
    model: Segmenter,
    layer_id: str,
    cfg: AnalysisConfig,
    out_json: Optional[Path] = None,
    out_plot: Optional[Path] = None,
    device: Union[str, torch.device] = "cpu",
    run_hash: Optional[str] = None
) -> EmbeddingDocument:
    """Mask, pool and jointly embed id-matched triples.

    Args:
        synthetic: Synthetic frames
        refined: Refined versions (ids prefixed ``refined/``)
        real: Real frames sharing the synthetic ids
        model: Segmenter whose layer is analyzed
        layer_id: Named segmenter layer
        cfg: Analysis settings
        out_json: Optional path for the embedding document
        out_plot: Optional path for the scatter figure
        device: Torch device
        run_hash: Hash recorded in the document

    Returns:
        EmbeddingDocument with points, gap metrics and cluster statistics

    Raises:
        DataError: No id-matched triples
        ConfigurationError: Unknown layer id
    """
    ids = matched_ids(synthetic, refined, real)
    if not ids:
        raise DataError("No id-matched synthetic/refined/real triples")

    logger.info(f"Analyzing {len(ids)} triples at layer '{layer_id}'")
    features = {
        Domain.SYNTHETIC: extract_domain_features(model, synthetic, ids, Domain.SYNTHETIC, layer_id, device),
        Domain.REFINED: extract_domain_features(model, refined, ids, Domain.REFINED, layer_id, device),
        Domain.PSEUDO_REAL: extract_domain_features(model, real, ids, Domain.PSEUDO_REAL, layer_id, device),
    }
    vectors = [v for group in features.values() for v in group]
    matrix = stack_vectors(vectors)
    domains = [v.domain for v in vectors]

    real_matrix = stack_vectors(features[Domain.PSEUDO_REAL])
    gap = {
        "synthetic_to_real": nearest_real_distance(stack_vectors(features[Domain.SYNTHETIC]), real_matrix),
        "refined_to_real": nearest_real_distance(stack_vectors(features[Domain.REFINED]), real_matrix),
    }

    result = tsne_embed(matrix, cfg.tsne)
    points = [
        EmbeddingPoint(id=v.source_id, domain=v.domain, x=float(x), y=float(y))
        for v, (x, y) in zip(vectors, result.points)
    ]

    feature_stats = cluster_statistics(matrix, domains)
    embedding_stats = cluster_statistics(result.points, domains)
    clusters = {
        name: {
            "count": feature_stats[name]["count"],
            "feature_spread": feature_stats[name]["spread"],
            "embedding_centroid": embedding_stats[name]["centroid"],
            "embedding_spread": embedding_stats[name]["spread"],
        }
        for name in feature_stats
    }

    doc = EmbeddingDocument(
        layer_id=layer_id,
        config=cfg.tsne.model_copy(update={"perplexity": result.perplexity}),
        config_hash=run_hash or config_hash("analysis", synthetic.config_hash, refined.config_hash,
                                            real.config_hash, layer_id, cfg),
        points=points,
        gap=gap,
        clusters=clusters,
        initial_kl=result.initial_kl,
        final_kl=result.final_kl,
    )
    logger.info(f"Layer '{layer_id}': nearest-real distance synthetic={gap['synthetic_to_real']:.4f}, "
                f"refined={gap['refined_to_real']:.4f}")

    if out_json is not None:
        write_document(doc, Path(out_json))
    if out_plot is not None:
        highlight = ids[cfg.highlight_index] if 0 <= cfg.highlight_index < len(ids) else None
        plot_embedding(doc, Path(out_plot), highlight_id=highlight)
    return doc

