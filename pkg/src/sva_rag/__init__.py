"""Retrieval-augmented severity assessment for known software vulnerabilities.

Pipeline: ingest CVE records, enrich them with CVSS metrics and weakness
knowledge, embed code and descriptions, retrieve the most similar known
vulnerabilities for each target, and ask an LLM to reason its way to one of
the four severity labels. Everything runs offline with the fallback embedder
and mock completers; real providers are opt-in configuration.
"""

from .errors import SvaError
from .models import (
    CweInfo,
    KnowledgeEntry,
    NvdInfo,
    SEVERITY_ORDER,
    Severity,
    VulnerabilityRecord,
    severity_from_score,
)
from .embedding import (
    EmbeddingVector,
    FallbackEmbedder,
    Modality,
    RemoteEmbeddingProvider,
    cosine_similarity,
    fallback_embed,
)
from .knowledge_base import (
    IngestResult,
    KnowledgeStore,
    enrich_store,
    ingest_dataset,
    normalize_entry,
)
from .retrieval import (
    RetrievalConfig,
    RetrievalTarget,
    ScoredEntry,
    brute_force_rank,
    combined_similarity,
    retrieve_top_k,
)
from .prompting import (
    AssembledPrompt,
    Demonstration,
    PromptTemplate,
    assemble_prompt,
    estimate_tokens,
    parse_severity,
)
from .llm import ChatCompletionClient, LlmConfig, MockCompleter, make_completer
from .dataset import SplitSpec, stratified_split
from .evaluation import ConfusionMatrix, EvaluationReport, evaluate_run
from .pipeline import RunManifest, assess, build_report, embed_store, run_sweep

__version__ = "0.1.0"

__all__ = [
    "SvaError",
    "Severity",
    "SEVERITY_ORDER",
    "severity_from_score",
    "VulnerabilityRecord",
    "NvdInfo",
    "CweInfo",
    "KnowledgeEntry",
    "Modality",
    "EmbeddingVector",
    "FallbackEmbedder",
    "RemoteEmbeddingProvider",
    "fallback_embed",
    "cosine_similarity",
    "IngestResult",
    "KnowledgeStore",
    "ingest_dataset",
    "normalize_entry",
    "enrich_store",
    "RetrievalConfig",
    "RetrievalTarget",
    "ScoredEntry",
    "combined_similarity",
    "retrieve_top_k",
    "brute_force_rank",
    "Demonstration",
    "AssembledPrompt",
    "PromptTemplate",
    "assemble_prompt",
    "parse_severity",
    "estimate_tokens",
    "LlmConfig",
    "ChatCompletionClient",
    "MockCompleter",
    "make_completer",
    "SplitSpec",
    "stratified_split",
    "ConfusionMatrix",
    "EvaluationReport",
    "evaluate_run",
    "RunManifest",
    "assess",
    "embed_store",
    "build_report",
    "run_sweep",
    "__version__",
]
