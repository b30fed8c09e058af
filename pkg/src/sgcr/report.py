"""Final consolidation: de-duplicate across pathways, rank, patch, render.

Findings from both pathways are clustered by the shared equivalence
relation. Each cluster keeps one representative whose severity and
confidence are raised to the member maxima, so agreement between pathways
never weakens a finding. Ranking is a total order (severity, category,
confidence, location) so rendered output is byte-stable. Patch suggestions
are generated per cluster against the exact code snippet under review and
discarded unless the diff parses and applies cleanly.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

from .errors import DiffSyntaxError, PatchDoesNotApply, SgcrError, UnparsableResponse, WireError
from .gateway import ModelBackend, ModelRequest, generate
from .ingestion import ReviewRequest, apply_file_diff, parse_unified_diff, unit_for_location
from .matching import cluster_findings
from .parsing import parse_patch_response
from .prompts import Role, render_prompt
from .specs import SpecLibrary
from .types import (
    CATEGORY_RANK,
    SEVERITY_RANK,
    Finding,
    PatchSuggestion,
    Pathway,
    PathwayReport,
    Severity,
    finding_payload,
    patch_payload,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1"

_PATCH_WORKERS = 4


@dataclass(frozen=True)
class FindingCluster:
    """One de-duplicated finding plus the members that collapsed into it."""

    representative: Finding
    members: tuple[Finding, ...]
    pathways: tuple[str, ...]

    @property
    def duplicates(self) -> int:
        return len(self.members) - 1


@dataclass(frozen=True)
class FinalReport:
    run_id: str
    mode: str
    clusters: tuple[FindingCluster, ...]
    summary: str
    pathway_reports: tuple[PathwayReport, ...]
    config_echo: tuple[tuple[str, object], ...] = ()
    patch_stats: tuple[tuple[str, int], ...] = ()
    schema_version: str = SCHEMA_VERSION


def compute_run_id(request: ReviewRequest, config: Mapping[str, object]) -> str:
    """Deterministic run identity from configuration and reviewed content."""
    units = [
        {
            "path": unit.path,
            "start_line": unit.start_line,
            "content_sha": hashlib.sha256(unit.content.encode("utf-8")).hexdigest()[:16],
        }
        for unit in request.units
    ]
    raw = json.dumps(
        {"config": dict(config), "units": units},
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()[:12]


def _representative(members: Sequence[Finding]) -> Finding:
    """Pick the cluster winner, then raise it to the member maxima.

    Tie-break order: most severe, most confident, explicit before implicit,
    lowest finding id. The winner's wording and location survive; severity
    and confidence become the maxima over members, cited rules the union,
    category the highest-ranked among members.
    """
    winner = min(
        members,
        key=lambda finding: (
            SEVERITY_RANK[finding.severity],
            -finding.confidence,
            0 if finding.pathway is Pathway.EXPLICIT else 1,
            finding.finding_id,
        ),
    )
    severity = min(
        (finding.severity for finding in members),
        key=lambda severity: SEVERITY_RANK[severity],
    )
    confidence = max(finding.confidence for finding in members)
    spec_ids = tuple(sorted({spec_id for finding in members for spec_id in finding.spec_ids}))
    category = min(
        (finding.category for finding in members),
        key=lambda category: CATEGORY_RANK[category],
    )
    return replace(
        winner,
        severity=severity,
        confidence=confidence,
        spec_ids=spec_ids,
        category=category,
    )


def dedupe(findings: Sequence[Finding]) -> list[FindingCluster]:
    """Collapse equivalent findings across pathways into clusters."""
    clusters = []
    for group in cluster_findings(findings):
        members = tuple(group)
        pathways = tuple(sorted({finding.pathway.value for finding in members}))
        clusters.append(
            FindingCluster(
                representative=_representative(members),
                members=members,
                pathways=pathways,
            )
        )
    return clusters


def prioritize(clusters: Sequence[FindingCluster]) -> list[FindingCluster]:
    """Total order: severity, then category, then confidence, then location."""
    return sorted(
        clusters,
        key=lambda cluster: (
            SEVERITY_RANK[cluster.representative.severity],
            CATEGORY_RANK[cluster.representative.category],
            -cluster.representative.confidence,
            cluster.representative.sort_key(),
        ),
    )


def _count_by(clusters: Sequence[FindingCluster]) -> tuple[dict[str, int], dict[str, int]]:
    by_severity = {severity.value: 0 for severity in Severity}
    by_pathway = {"explicit": 0, "implicit": 0, "both": 0}
    for cluster in clusters:
        by_severity[cluster.representative.severity.value] += 1
        if len(cluster.pathways) > 1:
            by_pathway["both"] += 1
        else:
            by_pathway[cluster.pathways[0]] += 1
    return by_severity, by_pathway


def _summary_line(clusters: Sequence[FindingCluster]) -> str:
    by_severity, by_pathway = _count_by(clusters)
    severity_part = ", ".join(
        f"{by_severity[severity.value]} {severity.value}" for severity in Severity
    )
    return (
        f"{len(clusters)} finding(s) after de-duplication ({severity_part});"
        f" {by_pathway['explicit']} rule-grounded, {by_pathway['implicit']} discovered,"
        f" {by_pathway['both']} confirmed by both pathways"
    )


def consolidate(
    reports: Sequence[PathwayReport],
    run_id: str,
    mode: str,
    config_echo: Optional[Mapping[str, object]] = None,
) -> FinalReport:
    """Merge pathway reports into the final prioritized report.

    Pathway reports that carry a run id must agree with the given one;
    mixing outputs of different runs is a caller bug worth failing loudly.
    """
    for report in reports:
        stated = report.stats_dict().get("run_id", "")
        if stated and run_id and stated != run_id:
            raise ValueError(
                f"pathway report run id {stated!r} does not match {run_id!r}"
            )
    findings = [finding for report in reports for finding in report.findings]
    clusters = prioritize(dedupe(findings))
    echo = tuple(sorted((config_echo or {}).items()))
    return FinalReport(
        run_id=run_id,
        mode=mode,
        clusters=tuple(clusters),
        summary=_summary_line(clusters),
        pathway_reports=tuple(reports),
        config_echo=echo,
    )


def generate_patch(
    cluster: FindingCluster,
    request: ReviewRequest,
    library: SpecLibrary,
    backend: ModelBackend,
    seed: int = 0,
) -> Optional[PatchSuggestion]:
    """One patch attempt for a cluster; None whenever the result is unusable.

    The model sees the raw snippet (no line numbering) and must return a
    unified diff against that snippet alone: exactly one file section, at
    least one hunk, applying cleanly. Anything else is discarded; a bad
    patch is worse than no patch.
    """
    finding = cluster.representative
    unit = unit_for_location(request, finding.file, finding.start_line)
    if unit is None:
        logger.info(
            "no reviewed snippet for %s:%d; skipping patch",
            finding.file,
            finding.start_line,
        )
        return None
    known = library.ids()
    cited = [spec_id for spec_id in finding.spec_ids if spec_id in known]
    if not cited:
        logger.info(
            "finding %s cites no known rules; skipping patch", finding.finding_id
        )
        return None
    specs_text = "\n\n".join(library.get(spec_id).prompt_text() for spec_id in cited)
    finding_text = json.dumps(
        {
            "file": finding.file,
            "start_line": finding.start_line,
            "end_line": finding.end_line,
            "description": finding.description,
            "snippet_first_line": unit.start_line,
        },
        sort_keys=True,
    )
    prompt = render_prompt(
        Role.PATCH_GENERATOR,
        {"code": unit.content, "finding": finding_text, "specs": specs_text},
    )
    try:
        response = generate(
            backend,
            ModelRequest(
                role=Role.PATCH_GENERATOR.value, prompt=prompt, temperature=0.0, seed=seed
            ),
        )
        diff_text, explanation = parse_patch_response(response.text)
        diffs = parse_unified_diff(diff_text)
        if len(diffs) != 1 or not diffs[0].hunks:
            raise PatchDoesNotApply(
                f"expected one file section with hunks, got {len(diffs)}"
            )
        apply_file_diff(unit.content, diffs[0])
    except (WireError, UnparsableResponse, DiffSyntaxError, PatchDoesNotApply) as exc:
        logger.warning(
            "patch for finding %s discarded: %s", finding.finding_id, exc
        )
        return None
    return PatchSuggestion(
        unified_diff=diff_text,
        explanation=explanation,
        constrained_by=tuple(cited),
    )


def attach_patches(
    report: FinalReport,
    request: ReviewRequest,
    library: SpecLibrary,
    backend: ModelBackend,
    seed: int = 0,
) -> FinalReport:
    """Generate patches concurrently, attach in cluster order.

    Clusters whose representative cites no known rule are skipped without a
    model call; generation failures only cost the patch. Outcome counts land
    in the report's patch_stats.
    """
    clusters = list(report.clusters)
    known = library.ids()

    def patchable(cluster: FindingCluster) -> bool:
        return any(spec_id in known for spec_id in cluster.representative.spec_ids)

    def one(cluster: FindingCluster) -> Optional[PatchSuggestion]:
        return generate_patch(cluster, request, library, backend, seed=seed)

    eligible = [index for index, cluster in enumerate(clusters) if patchable(cluster)]
    attached = 0
    if eligible:
        with ThreadPoolExecutor(max_workers=min(_PATCH_WORKERS, len(eligible))) as pool:
            futures = {
                index: pool.submit(one, clusters[index]) for index in eligible
            }
            for index in eligible:
                patch = futures[index].result()
                if patch is None:
                    continue
                cluster = clusters[index]
                clusters[index] = replace(
                    cluster,
                    representative=replace(cluster.representative, patch=patch),
                )
                attached += 1
    stats = {
        "attempted": len(eligible),
        "attached": attached,
        "skipped_uncited": len(clusters) - len(eligible),
    }
    return replace(
        report,
        clusters=tuple(clusters),
        patch_stats=tuple(sorted(stats.items())),
    )


def report_payload(report: FinalReport) -> dict[str, object]:
    """Schema v1 document: schema_version, summary, stats, clusters."""
    by_severity, by_pathway = _count_by(report.clusters)
    clusters = []
    for cluster in report.clusters:
        patch = cluster.representative.patch
        clusters.append(
            {
                "finding": finding_payload(cluster.representative),
                "duplicates": cluster.duplicates,
                "patch": patch_payload(patch) if patch is not None else None,
            }
        )
    stats: dict[str, object] = {
        "run_id": report.run_id,
        "mode": report.mode,
        "counts": {
            "total": len(report.clusters),
            "by_severity": by_severity,
            "by_pathway": by_pathway,
        },
        "pathways": {
            pathway_report.pathway.value: {
                "summary": pathway_report.summary,
                "stats": pathway_report.stats_dict(),
            }
            for pathway_report in report.pathway_reports
        },
        "config": dict(report.config_echo),
    }
    if report.patch_stats:
        stats["patches"] = dict(report.patch_stats)
    return {
        "schema_version": report.schema_version,
        "summary": report.summary,
        "stats": stats,
        "clusters": clusters,
    }


def render_json(report: FinalReport) -> str:
    return json.dumps(report_payload(report), sort_keys=True, indent=2) + "\n"


_SEVERITY_TITLES = {
    Severity.CRITICAL: "Critical",
    Severity.HIGH: "High",
    Severity.MEDIUM: "Medium",
    Severity.LOW: "Low",
}


def render_markdown(report: FinalReport) -> str:
    lines = [
        "# Review report",
        "",
        f"- run: `{report.run_id}` (mode: {report.mode})",
        f"- {report.summary}",
    ]
    for severity in Severity:
        section = [
            cluster
            for cluster in report.clusters
            if cluster.representative.severity is severity
        ]
        if not section:
            continue
        lines += ["", f"## {_SEVERITY_TITLES[severity]}", ""]
        for cluster in section:
            finding = cluster.representative
            anchor = f"{finding.file}:{finding.start_line}"
            if finding.end_line != finding.start_line:
                anchor += f"-{finding.end_line}"
            lines.append(
                f"- **{anchor}** [{finding.category.value}]"
                f" (confidence {finding.confidence:.2f}): {finding.description}"
            )
            if finding.spec_ids:
                lines.append(f"  - rules: {', '.join(finding.spec_ids)}")
            if finding.rationale:
                lines.append(f"  - rationale: {finding.rationale}")
            if cluster.duplicates:
                lines.append(
                    f"  - confirmed by {cluster.duplicates + 1} overlapping finding(s)"
                    f" ({', '.join(cluster.pathways)})"
                )
            if finding.patch is not None:
                lines.append("  - suggested patch:")
                lines.append("")
                lines.append("    ```diff")
                for diff_line in finding.patch.unified_diff.splitlines():
                    lines.append(f"    {diff_line}")
                lines.append("    ```")
    lines.append("")
    return "\n".join(lines)


def render(report: FinalReport, fmt: str = "json") -> str:
    if fmt == "json":
        return render_json(report)
    if fmt == "markdown":
        return render_markdown(report)
    raise SgcrError(f"unknown report format {fmt!r}")
