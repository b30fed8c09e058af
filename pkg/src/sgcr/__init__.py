"""Spec-grounded code review with dual pathways and verified discovery.

The library reviews code against a directory of rule files two ways at
once: an ensemble pass grounded in every rule chunk, and a free-form
discovery pass whose proposals must survive retrieval grounding and a
verifier quorum. Both pathways emit the same Finding type, so their
outputs de-duplicate into a single prioritized report.

Everything runs offline by default: the mock backend synthesizes
deterministic responses and the replay backend serves recorded fixtures.
"""

from .config import RunConfig, merge_config, validate_config
from .errors import (
    ConfigError,
    DiffSyntaxError,
    EnsembleError,
    FixtureMiss,
    HunkCountMismatch,
    InvalidReviewRequest,
    MalformedSpecFile,
    PatchDoesNotApply,
    SgcrError,
    UnparsableResponse,
)
from .explicit import run_explicit
from .gateway import EnsembleConfig, ModelRequest, ModelResponse, request_fingerprint
from .implicit import run_implicit
from .ingestion import (
    FileDiff,
    Hunk,
    ReviewRequest,
    ReviewUnit,
    apply_file_diff,
    build_review_request,
    parse_unified_diff,
    render_unified_diff,
)
from .pipeline import run_review
from .report import (
    FinalReport,
    FindingCluster,
    attach_patches,
    compute_run_id,
    consolidate,
    dedupe,
    prioritize,
    render,
)
from .retrieval import (
    MockEmbeddingProvider,
    VectorIndex,
    build_index,
    cosine_similarity,
    load_index,
    retrieve,
    save_index,
)
from .specs import SpecLibrary, Specification, load_library, segment_library
from .types import (
    Category,
    Finding,
    HypotheticalIssue,
    PatchSuggestion,
    Pathway,
    PathwayReport,
    Severity,
    Verdict,
    VerifierVerdict,
)

__version__ = "0.1.0"

__all__ = [
    "Category",
    "ConfigError",
    "DiffSyntaxError",
    "EnsembleConfig",
    "EnsembleError",
    "FileDiff",
    "FinalReport",
    "Finding",
    "FindingCluster",
    "FixtureMiss",
    "Hunk",
    "HunkCountMismatch",
    "HypotheticalIssue",
    "InvalidReviewRequest",
    "MalformedSpecFile",
    "MockEmbeddingProvider",
    "ModelRequest",
    "ModelResponse",
    "PatchDoesNotApply",
    "PatchSuggestion",
    "Pathway",
    "PathwayReport",
    "ReviewRequest",
    "ReviewUnit",
    "RunConfig",
    "SgcrError",
    "SpecLibrary",
    "Specification",
    "Severity",
    "UnparsableResponse",
    "VectorIndex",
    "Verdict",
    "VerifierVerdict",
    "apply_file_diff",
    "attach_patches",
    "build_index",
    "build_review_request",
    "compute_run_id",
    "consolidate",
    "cosine_similarity",
    "dedupe",
    "load_index",
    "load_library",
    "merge_config",
    "parse_unified_diff",
    "prioritize",
    "render",
    "render_unified_diff",
    "request_fingerprint",
    "retrieve",
    "run_explicit",
    "run_implicit",
    "run_review",
    "save_index",
    "segment_library",
    "validate_config",
]
