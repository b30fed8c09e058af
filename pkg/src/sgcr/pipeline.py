"""Wire a validated configuration into a full review run.

This is the layer the command line (and tests that want end-to-end runs
without a subprocess) calls: build the backend and embedding provider,
load rules and index, run the requested pathway combination, consolidate,
and optionally attach patches.
"""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Optional

from . import report as report_mod
from .backends import BaseBackend, HttpBackend, Jitter, MockBackend, RecordingBackend, ReplayBackend
from .config import RunConfig
from .errors import ConfigError
from .explicit import run_explicit
from .gateway import DEFAULT_MAX_OUTPUT_TOKENS, EnsembleConfig, ModelRequest, ensemble_parsed
from .implicit import run_implicit
from .ingestion import ReviewRequest, prompt_block
from .parsing import parse_findings_response
from .prompts import Role, render_prompt
from .report import FinalReport, attach_patches, compute_run_id, consolidate
from .retrieval import (
    EmbeddingProvider,
    HttpEmbeddingProvider,
    MockEmbeddingProvider,
    VectorIndex,
    build_index,
    load_index,
)
from .specs import SpecLibrary, load_library
from .types import Pathway, PathwayReport, freeze_stats

logger = logging.getLogger(__name__)

ENV_TEST_JITTER = "SGCR_TEST_JITTER"


def _jitter_from_env() -> Optional[Jitter]:
    """Optional scheduling noise, set as 'max_ms:seed' (testing aid)."""
    raw = os.environ.get(ENV_TEST_JITTER, "")
    if not raw:
        return None
    try:
        max_ms_text, seed_text = raw.split(":", 1)
        return Jitter(max_ms=float(max_ms_text), seed=int(seed_text))
    except ValueError:
        logger.warning("ignoring malformed %s=%r", ENV_TEST_JITTER, raw)
        return None


def build_backend(config: RunConfig) -> BaseBackend:
    jitter = _jitter_from_env()
    if config.backend == "mock":
        return MockBackend(jitter=jitter)
    if config.backend == "replay":
        return ReplayBackend(Path(config.fixtures_dir or ""), jitter=jitter)
    if config.backend == "http":
        return HttpBackend(
            base_url=config.base_url or "",
            model=config.model,
            api_key=config.api_key,
            jitter=jitter,
        )
    if config.backend == "record":
        delegate = HttpBackend(
            base_url=config.base_url or "",
            model=config.model,
            api_key=config.api_key,
        )
        return RecordingBackend(delegate, Path(config.fixtures_dir or ""), jitter=jitter)
    raise ConfigError(f"unknown backend {config.backend!r}")


def build_provider(config: RunConfig) -> EmbeddingProvider:
    if config.embedding == "mock":
        return MockEmbeddingProvider(dimension=config.embedding_dimension)
    return HttpEmbeddingProvider(
        base_url=config.base_url or "",
        model=config.model,
        api_key=config.api_key,
    )


def load_rules(config: RunConfig) -> SpecLibrary:
    if not config.specs_dir:
        raise ConfigError("a rules directory is required for this mode")
    return load_library(Path(config.specs_dir), language_filter=config.language)


def resolve_index(
    config: RunConfig, library: SpecLibrary, provider: EmbeddingProvider
) -> VectorIndex:
    if config.index_path:
        return load_index(Path(config.index_path), library)
    return build_index(library, provider)


def _run_baseline(
    request: ReviewRequest,
    backend: BaseBackend,
    config: RunConfig,
    run_id: str,
) -> PathwayReport:
    """Single ungrounded review call: the comparison floor.

    Reuses the reviewer prompt with an empty rules block and no quorum
    machinery, so the only difference from the explicit pathway is the
    grounding.
    """
    prompt = render_prompt(
        Role.EXPLICIT_REVIEWER, {"code": prompt_block(request), "specs": ""}
    )
    base = ModelRequest(
        role=Role.EXPLICIT_REVIEWER.value,
        prompt=prompt,
        temperature=0.0,
        max_output_tokens=DEFAULT_MAX_OUTPUT_TOKENS,
    )
    single = EnsembleConfig(n=1, quorum=1, temperature=0.0, base_seed=config.seed)
    parsed, stats = ensemble_parsed(
        backend, base, single, lambda text: parse_findings_response(text, Pathway.EXPLICIT)
    )
    findings = parsed[0] or []
    return PathwayReport(
        pathway=Pathway.EXPLICIT,
        findings=tuple(findings),
        summary=f"{len(findings)} finding(s) from a single ungrounded pass",
        stats=freeze_stats(
            {
                "pathway": Pathway.EXPLICIT.value,
                "baseline": True,
                "model_calls": stats.calls,
                "run_id": run_id,
            }
        ),
    )


def run_review(
    config: RunConfig,
    request: ReviewRequest,
    backend: Optional[BaseBackend] = None,
) -> FinalReport:
    """Execute the configured pathway combination over the request.

    backend overrides the configured one (fixture recording, tests);
    everything else, run identity included, still follows the config.
    """
    if backend is None:
        backend = build_backend(config)
    ensemble = EnsembleConfig(
        n=config.ensemble_size,
        quorum=config.quorum,
        temperature=config.temperature,
        base_seed=config.seed,
    )
    run_id = compute_run_id(request, config.echo())

    if config.mode == "baseline":
        reports = [_run_baseline(request, backend, config, run_id)]
        final = consolidate(reports, run_id, config.mode, config.echo())
        return final

    library = load_rules(config)
    reports = []
    if config.mode in ("full", "explicit_only"):
        reports.append(
            run_explicit(
                request,
                library,
                backend,
                ensemble,
                chunk_budget=config.chunk_budget,
                aggregation_mode=config.aggregation,
                model_summary=config.model_summary,
                run_id=run_id,
            )
        )
    if config.mode in ("full", "implicit_only"):
        provider = build_provider(config)
        index = resolve_index(config, library, provider)
        reports.append(
            run_implicit(
                request,
                library,
                backend,
                provider,
                index,
                ensemble,
                k=config.top_k,
                threshold=config.score_threshold,
                max_proposals=config.max_proposals,
                allow_ungrounded=config.allow_ungrounded,
                soft_fail=config.implicit_soft_fail,
                run_id=run_id,
            )
        )

    final = consolidate(reports, run_id, config.mode, config.echo())
    if config.patches:
        final = attach_patches(final, request, library, backend, seed=config.seed)
        stats = dict(final.patch_stats)
        logger.info(
            "patches: %d attached of %d attempted (%d uncited skipped)",
            stats.get("attached", 0),
            stats.get("attempted", 0),
            stats.get("skipped_uncited", 0),
        )
    return final


def render_report(final: FinalReport, fmt: str) -> str:
    return report_mod.render(final, fmt)
