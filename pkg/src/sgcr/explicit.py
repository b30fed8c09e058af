"""Rule-grounded review pathway.

Every rule chunk is reviewed by an ensemble of n diversified calls that
all see the same code. Per-chunk candidate reviews are aggregated into a
partial result keeping only findings supported by a quorum of members,
then the partials are merged into one pathway report. Aggregation is
deterministic by default; a model-backed mode exists for semantic
grouping but anything the model invents without candidate support is
dropped.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .errors import InvalidReviewRequest, NoCandidates, NoPartials
from .gateway import (
    DEFAULT_MAX_OUTPUT_TOKENS,
    EnsembleConfig,
    ModelBackend,
    ModelRequest,
    ensemble_parsed,
    generate,
)
from .ingestion import ReviewRequest, prompt_block
from .matching import findings_equivalent
from .parsing import parse_findings_response
from .prompts import Role, render_prompt
from .specs import DEFAULT_CHUNK_BUDGET, SpecChunk, SpecLibrary, chunk_prompt_text, segment_library
from .types import (
    CATEGORY_RANK,
    SEVERITY_RANK,
    Category,
    Finding,
    Pathway,
    PathwayReport,
    finding_payload,
    freeze_stats,
    sort_findings,
)

logger = logging.getLogger(__name__)

_CHUNK_WORKERS = 4

AGGREGATION_MODES = ("deterministic", "model")


@dataclass(frozen=True)
class CandidateReview:
    """Findings from one ensemble member for one rule chunk."""

    chunk_ordinal: int
    instance_index: int
    findings: tuple[Finding, ...]


@dataclass(frozen=True)
class AggregatedReview:
    """Quorum-filtered findings for one rule chunk."""

    chunk_ordinal: int
    findings: tuple[Finding, ...]
    n_effective: int


def resolve_category(spec_ids: Sequence[str], library: SpecLibrary) -> Category:
    """Highest-ranked category among the cited rules; default maintainability."""
    known = library.ids()
    categories = [library.get(spec_id).category for spec_id in spec_ids if spec_id in known]
    if not categories:
        return Category.MAINTAINABILITY
    return min(categories, key=lambda category: CATEGORY_RANK[category])


def _strip_unknown_spec_ids(finding: Finding, library: SpecLibrary) -> Finding:
    known = library.ids()
    kept = tuple(spec_id for spec_id in finding.spec_ids if spec_id in known)
    dropped = set(finding.spec_ids) - set(kept)
    if dropped:
        logger.warning(
            "finding %s cites unknown rule ids %s; dropping them",
            finding.finding_id,
            sorted(dropped),
        )
    return replace(finding, spec_ids=kept, category=resolve_category(kept, library))


def review_chunk_ensemble(
    request: ReviewRequest,
    chunk: SpecChunk,
    library: SpecLibrary,
    backend: ModelBackend,
    ensemble: EnsembleConfig,
) -> tuple[list[CandidateReview], int]:
    """Run the reviewer ensemble for one chunk.

    Returns the candidate reviews for present slots plus the number of
    calls made (including retries). Findings are normalized here: unknown
    cited rule ids are stripped and the category is resolved.
    """
    prompt = render_prompt(
        Role.EXPLICIT_REVIEWER,
        {"code": prompt_block(request), "specs": chunk_prompt_text(library, chunk)},
    )
    base = ModelRequest(
        role=Role.EXPLICIT_REVIEWER.value,
        prompt=prompt,
        temperature=ensemble.temperature,
        max_output_tokens=DEFAULT_MAX_OUTPUT_TOKENS,
    )
    parsed, stats = ensemble_parsed(
        backend,
        base,
        ensemble,
        lambda text: parse_findings_response(text, Pathway.EXPLICIT),
    )
    candidates = [
        CandidateReview(
            chunk_ordinal=chunk.ordinal,
            instance_index=index,
            findings=tuple(_strip_unknown_spec_ids(f, library) for f in findings),
        )
        for index, findings in enumerate(parsed)
        if findings is not None
    ]
    return candidates, stats.calls


def _cluster_with_instances(
    entries: list[tuple[Finding, int]]
) -> list[list[tuple[Finding, int]]]:
    """Union-find over (finding, instance) pairs, deterministic order."""
    ordered = sorted(entries, key=lambda entry: (entry[0].sort_key(), entry[1]))
    parent = list(range(len(ordered)))

    def find(index: int) -> int:
        root = index
        while parent[root] != root:
            root = parent[root]
        while parent[index] != root:
            parent[index], index = root, parent[index]
        return root

    for i in range(len(ordered)):
        for j in range(i + 1, len(ordered)):
            if findings_equivalent(ordered[i][0], ordered[j][0]):
                root_i, root_j = find(i), find(j)
                if root_i != root_j:
                    parent[max(root_i, root_j)] = min(root_i, root_j)

    groups: dict[int, list[tuple[Finding, int]]] = {}
    for index, entry in enumerate(ordered):
        groups.setdefault(find(index), []).append(entry)
    return [groups[root] for root in sorted(groups)]


def _merge_group(
    group: list[tuple[Finding, int]],
    support: int,
    n_effective: int,
    library: Optional[SpecLibrary],
) -> Finding:
    representative = min(group, key=lambda entry: (entry[1], entry[0].sort_key()))[0]
    severity = min(
        (entry[0].severity for entry in group), key=lambda severity: SEVERITY_RANK[severity]
    )
    spec_ids = tuple(sorted({spec_id for entry in group for spec_id in entry[0].spec_ids}))
    if library is not None:
        category = resolve_category(spec_ids, library)
    else:
        category = min(
            (entry[0].category for entry in group),
            key=lambda category: CATEGORY_RANK[category],
        )
    return replace(
        representative,
        severity=severity,
        confidence=support / n_effective,
        spec_ids=spec_ids,
        category=category,
    )


def aggregate_candidates(
    chunk: SpecChunk,
    candidates: Sequence[CandidateReview],
    ensemble: EnsembleConfig,
    mode: str = "deterministic",
    backend: Optional[ModelBackend] = None,
    library: Optional[SpecLibrary] = None,
) -> AggregatedReview:
    """Merge one chunk's candidate reviews into a quorum-filtered partial.

    Deterministic mode clusters equivalent findings and keeps groups whose
    support (distinct ensemble members) reaches the quorum; the merged
    finding takes the earliest member's wording, the most severe member's
    severity, and confidence = support / present members. Model mode asks
    the aggregator role to group candidates instead, then computes support
    the same way and drops unsupported inventions.
    """
    if mode not in AGGREGATION_MODES:
        raise ValueError(f"unknown aggregation mode {mode!r}")
    if not candidates:
        raise NoCandidates(f"chunk {chunk.ordinal} has no candidate reviews")
    n_effective = len({candidate.instance_index for candidate in candidates})
    entries = [
        (finding, candidate.instance_index)
        for candidate in sorted(candidates, key=lambda c: c.instance_index)
        for finding in candidate.findings
    ]

    if mode == "deterministic":
        merged: list[Finding] = []
        for group in _cluster_with_instances(entries):
            support = len({instance for _, instance in group})
            if support < ensemble.quorum:
                logger.debug(
                    "chunk %d: dropping finding %s (support %d < quorum %d)",
                    chunk.ordinal,
                    group[0][0].finding_id,
                    support,
                    ensemble.quorum,
                )
                continue
            merged.append(_merge_group(group, support, n_effective, library))
        return AggregatedReview(
            chunk_ordinal=chunk.ordinal,
            findings=tuple(sort_findings(merged)),
            n_effective=n_effective,
        )

    if backend is None:
        raise ValueError("model aggregation requires a backend")
    payload = json.dumps(
        [
            {
                "instance": candidate.instance_index,
                "findings": [finding_payload(f) for f in candidate.findings],
            }
            for candidate in sorted(candidates, key=lambda c: c.instance_index)
        ],
        sort_keys=True,
        indent=2,
    )
    prompt = render_prompt(Role.AGGREGATOR, {"candidates": payload})
    response = generate(
        backend,
        ModelRequest(role=Role.AGGREGATOR.value, prompt=prompt, temperature=0.0),
    )
    aggregated = parse_findings_response(response.text, Pathway.EXPLICIT)
    kept: list[Finding] = []
    for finding in aggregated:
        supporters = {
            instance
            for candidate_finding, instance in entries
            if findings_equivalent(finding, candidate_finding)
        }
        if not supporters:
            logger.warning(
                "aggregator invented finding %s with no candidate support; dropping",
                finding.finding_id,
            )
            continue
        normalized = _strip_unknown_spec_ids(finding, library) if library else finding
        kept.append(replace(normalized, confidence=len(supporters) / n_effective))
    return AggregatedReview(
        chunk_ordinal=chunk.ordinal,
        findings=tuple(sort_findings(kept)),
        n_effective=n_effective,
    )


def synthesize_partials(
    partials: Sequence[AggregatedReview],
    backend: Optional[ModelBackend] = None,
    model_summary: bool = False,
) -> PathwayReport:
    """Merge per-chunk partials into the pathway report.

    Cross-chunk duplicates (same code shown against different rule chunks)
    collapse to the highest-confidence member with severity and confidence
    raised to the group maxima and cited rules unioned. The summary is a
    plain count line unless a model summary is requested.
    """
    if not partials:
        raise NoPartials("no partial reviews to synthesize")
    entries = [
        (finding, partial.chunk_ordinal)
        for partial in sorted(partials, key=lambda p: p.chunk_ordinal)
        for finding in partial.findings
    ]
    merged: list[Finding] = []
    for group in _cluster_with_instances(entries):
        representative = min(
            group, key=lambda entry: (-entry[0].confidence, entry[0].sort_key())
        )[0]
        severity = min(
            (entry[0].severity for entry in group),
            key=lambda severity: SEVERITY_RANK[severity],
        )
        confidence = max(entry[0].confidence for entry in group)
        spec_ids = tuple(sorted({spec_id for entry in group for spec_id in entry[0].spec_ids}))
        category = min(
            (entry[0].category for entry in group),
            key=lambda category: CATEGORY_RANK[category],
        )
        merged.append(
            replace(
                representative,
                severity=severity,
                confidence=confidence,
                spec_ids=spec_ids,
                category=category,
            )
        )
    findings = tuple(sort_findings(merged))
    summary = (
        f"{len(findings)} rule-grounded finding(s) across {len(partials)} rule chunk(s)"
    )
    if model_summary:
        if backend is None:
            raise ValueError("a model summary requires a backend")
        payload = json.dumps(
            [finding_payload(f) for f in findings], sort_keys=True, indent=2
        )
        prompt = render_prompt(Role.SYNTHESIZER, {"candidates": payload})
        response = generate(
            backend,
            ModelRequest(role=Role.SYNTHESIZER.value, prompt=prompt, temperature=0.0),
        )
        summary = response.text.strip()
    return PathwayReport(pathway=Pathway.EXPLICIT, findings=findings, summary=summary)


def run_explicit(
    request: ReviewRequest,
    library: SpecLibrary,
    backend: ModelBackend,
    ensemble: EnsembleConfig,
    chunk_budget: int = DEFAULT_CHUNK_BUDGET,
    aggregation_mode: str = "deterministic",
    model_summary: bool = False,
    run_id: str = "",
) -> PathwayReport:
    """Segment the rule library, review every chunk, and synthesize.

    Chunks run concurrently; results are assembled in chunk order so the
    report is identical whatever the completion order. Raises EnsembleError
    when any chunk exceeds its failure budget.
    """
    if not request.units:
        raise InvalidReviewRequest("explicit review needs at least one unit")
    chunks = segment_library(library, chunk_budget)

    calls_total = 0
    absent_total = 0

    def one_chunk(chunk: SpecChunk) -> tuple[AggregatedReview, int, int]:
        candidates, calls = review_chunk_ensemble(request, chunk, library, backend, ensemble)
        aggregated = aggregate_candidates(
            chunk, candidates, ensemble, aggregation_mode, backend=backend, library=library
        ) if candidates else AggregatedReview(chunk.ordinal, (), 0)
        return aggregated, calls, ensemble.n - len(candidates)

    partials: list[Optional[AggregatedReview]] = [None] * len(chunks)
    with ThreadPoolExecutor(max_workers=min(_CHUNK_WORKERS, len(chunks))) as pool:
        futures = [pool.submit(one_chunk, chunk) for chunk in chunks]
        for index, future in enumerate(futures):
            aggregated, calls, absent = future.result()
            partials[index] = aggregated
            calls_total += calls
            absent_total += absent

    report = synthesize_partials(
        [partial for partial in partials if partial is not None],
        backend=backend,
        model_summary=model_summary,
    )
    stats = freeze_stats(
        {
            "pathway": Pathway.EXPLICIT.value,
            "chunks": len(chunks),
            "model_calls": calls_total,
            "absent_slots": absent_total,
            "findings": len(report.findings),
            "run_id": run_id,
        }
    )
    return replace(report, stats=stats)
