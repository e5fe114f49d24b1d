"""Ranking distance calibration for few-shot episodes over precomputed embeddings."""

from rdc.embedding_store import EmbeddingSet, l2_normalize, load_embeddings, save_embeddings
from rdc.episodes import Episode, sample_episode
from rdc.finetune import Adapter, evaluate_after_finetune, finetune_episode
from rdc.harness import RunConfig, RunReport, generate_synthetic, run
from rdc.metric import (
    DistanceMatrix,
    Prototypes,
    compute_prototypes,
    euclidean_matrix,
    npc_classify,
    npc_classify_from_matrix,
)
from rdc.rerank import CalibrationConfig, rdc_pipeline

__all__ = [
    "Adapter",
    "CalibrationConfig",
    "DistanceMatrix",
    "EmbeddingSet",
    "Episode",
    "Prototypes",
    "RunConfig",
    "RunReport",
    "compute_prototypes",
    "euclidean_matrix",
    "evaluate_after_finetune",
    "finetune_episode",
    "generate_synthetic",
    "l2_normalize",
    "load_embeddings",
    "npc_classify",
    "npc_classify_from_matrix",
    "rdc_pipeline",
    "run",
    "sample_episode",
    "save_embeddings",
]
