"""namesplit: split same-named authors into distinct people.

Publications sharing an ambiguous author name are embedded from two
angles, relational (typed co-occurrence walks with learned per-relation
weights) and textual (document vectors), their similarity matrices are
blended, and an adaptive density/message-passing clustering produces one
group per real author.
"""

from .cluster import adaptive_cluster, ap_cluster, combine_similarity, hdbscan_cluster
from .corpus import (
    Block,
    GroundTruth,
    PublicationRecord,
    build_block,
    generate_synthetic_block,
    load_corpus,
    normalize_author_name,
    tokenize_text,
)
from .evaluation import macro_pairwise_f1, pairwise_prf, write_report
from .fusion import structural_similarity, train_attention
from .hetnet import build_hetnet, metapath, project_metapath
from .pipeline import PipelineConfig, config_hash, run_ablation, run_pipeline
from .semantic import build_doc_corpus, semantic_similarity, train_doc_vectors
from .walker import context_pairs, sample_walks

__version__ = "0.1.0"

__all__ = [
    "Block",
    "GroundTruth",
    "PipelineConfig",
    "PublicationRecord",
    "adaptive_cluster",
    "ap_cluster",
    "build_block",
    "build_doc_corpus",
    "build_hetnet",
    "combine_similarity",
    "config_hash",
    "context_pairs",
    "generate_synthetic_block",
    "hdbscan_cluster",
    "load_corpus",
    "macro_pairwise_f1",
    "metapath",
    "normalize_author_name",
    "pairwise_prf",
    "project_metapath",
    "run_ablation",
    "run_pipeline",
    "sample_walks",
    "semantic_similarity",
    "structural_similarity",
    "tokenize_text",
    "train_attention",
    "train_doc_vectors",
    "write_report",
]
