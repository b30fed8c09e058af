"""Equivalence between findings and deterministic clustering.

Two findings describe the same problem when they sit in the same file,
their line ranges overlap, and their descriptions share enough words
(token Jaccard at or above the threshold). Clustering is the transitive
closure of that relation, computed with union-find over a sorted input
so group membership and order never depend on arrival order.
"""

from __future__ import annotations

import re
from typing import Iterable, Sequence

from .types import Finding

JACCARD_THRESHOLD = 0.6

_TOKEN = re.compile(r"\w+")


def tokenize(text: str) -> frozenset[str]:
    return frozenset(match.group(0).lower() for match in _TOKEN.finditer(text))


def token_jaccard(a: str, b: str) -> float:
    """Jaccard similarity of word sets; two empty sets count as identical."""
    tokens_a = tokenize(a)
    tokens_b = tokenize(b)
    if not tokens_a and not tokens_b:
        return 1.0
    union = tokens_a | tokens_b
    if not union:
        return 0.0
    return len(tokens_a & tokens_b) / len(union)


def ranges_overlap(a_start: int, a_end: int, b_start: int, b_end: int) -> bool:
    return a_start <= b_end and b_start <= a_end


def findings_equivalent(a: Finding, b: Finding, threshold: float = JACCARD_THRESHOLD) -> bool:
    if a.file != b.file:
        return False
    if not ranges_overlap(a.start_line, a.end_line, b.start_line, b.end_line):
        return False
    return token_jaccard(a.description, b.description) >= threshold


def cluster_findings(
    findings: Iterable[Finding], threshold: float = JACCARD_THRESHOLD
) -> list[list[Finding]]:
    """Partition findings into equivalence groups.

    Groups are ordered by their smallest member key and members within a
    group keep key order, so the result is a pure function of the set.
    """
    ordered = sorted(findings, key=lambda f: (f.sort_key(), f.pathway.value))
    parent = list(range(len(ordered)))

    def find(index: int) -> int:
        root = index
        while parent[root] != root:
            root = parent[root]
        while parent[index] != root:
            parent[index], index = root, parent[index]
        return root

    def union(a: int, b: int) -> None:
        root_a, root_b = find(a), find(b)
        if root_a != root_b:
            parent[max(root_a, root_b)] = min(root_a, root_b)

    for i in range(len(ordered)):
        for j in range(i + 1, len(ordered)):
            if findings_equivalent(ordered[i], ordered[j], threshold):
                union(i, j)

    groups: dict[int, list[Finding]] = {}
    for index, finding in enumerate(ordered):
        groups.setdefault(find(index), []).append(finding)
    return [groups[root] for root in sorted(groups)]


def group_files(group: Sequence[Finding]) -> list[str]:
    return sorted({finding.file for finding in group})
