"""Token-level metric-DP text sanitisation with context-aware noise."""

from .corpus import (
    CorpusStats,
    SentenceRecord,
    Stopwords,
    default_stopwords,
    load_stopwords,
    sanitize_corpus,
    tokenize,
)
from .embeddings import (
    EmbeddingTable,
    EmptyTable,
    MalformedLine,
    ZeroQuery,
    embed,
    load_table,
    nearest_neighbors,
    nearest_neighbors_batch,
)
from .evaluation import (
    AttackReport,
    AuditReport,
    InsufficientSupport,
    attack_pr_at_k,
    dp_audit,
    parameter_sweep,
    utility_report,
)
from .mechanisms import (
    MechanismConfig,
    SanitizedToken,
    compose_context_vector,
    exponential_sample,
    sanitize_sentence,
)
from .noise import NoiseParams, RngState, radial_cdf, sample_noise
from .stencil import StencilWeights, contribution_profile, stencil_weights, window_weights_at

__version__ = "0.1.0"
