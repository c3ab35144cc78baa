"""Self-supervised entity alignment for knowledge-graph pairs.

Alternates functionality-weighted probabilistic reasoning with
multi-modal embedding training (graph structure, relation/attribute
counts, precomputed name and image vectors) and ranks candidates with
CSLS-adjusted cosine similarity.
"""

from .inference import EvalReport, align, cosine_matrix, csls_adjust, evaluate, mapping_accuracy
from .kg import (
    FeatureStore,
    InvalidGraphError,
    KgPair,
    KnowledgeGraph,
    ParseError,
    build_adjacency,
    parse_features,
    parse_gold_links,
    parse_kg,
)
from .model import (
    CountMatrices,
    EmbeddingModel,
    ModalityBundle,
    count_matrices,
    embed_all,
    embed_pair,
    encode_counts,
    fuse,
    gcn_forward,
    image_attention,
    init_model,
    init_model_for_pair,
    load_model,
    save_model,
)
from .pipeline import ConfigError, PipelineConfig, PipelineResult, run_pipeline
from .reasoning import (
    AlignmentState,
    FusionConfig,
    ParisConfig,
    RelationStats,
    compute_functionalities,
    emit_mappings,
    lexical_seed,
    run_paris,
    update_entity_probabilities,
    update_relation_subsumption,
    write_mappings_tsv,
)
from .synth import SynthSpec, generate, load_pair_dir
from .train import (
    EmptySeedMappingsError,
    TrainConfig,
    TrainingSet,
    margin_loss,
    mine_hard_negatives,
    train,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
