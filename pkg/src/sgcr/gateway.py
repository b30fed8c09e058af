"""Model request/response contract, fingerprinting, and ensemble dispatch.

Every model call is described by a ModelRequest; its fingerprint is the
sha256 of the canonical request JSON (sorted keys, prompt hashed verbatim)
and is stable across processes. Fingerprints key the record/replay fixture
store and seed the mock backend, so the whole pipeline can run offline and
deterministically.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Protocol, TypeVar

from enum import Enum

from .errors import EnsembleError, FixtureMiss, SgcrError, UnparsableResponse, WireError

logger = logging.getLogger(__name__)

DEFAULT_MAX_OUTPUT_TOKENS = 2048

# Retries per ensemble slot on transport or parse failures, same seed each time.
SLOT_RETRIES = 2

_MAX_WORKERS = 8


@dataclass(frozen=True)
class ModelRequest:
    """One model invocation: role, rendered prompt, and sampling knobs."""

    role: str
    prompt: str
    temperature: float = 0.0
    seed: Optional[int] = None
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    instance_index: int = 0

    def __post_init__(self) -> None:
        if isinstance(self.role, Enum):
            object.__setattr__(self, "role", self.role.value)
        if not self.role:
            raise ValueError("role must be non-empty")
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")
        if self.instance_index < 0:
            raise ValueError("instance_index must be non-negative")


@dataclass(frozen=True)
class ModelResponse:
    """Raw model output plus the identity of the request that produced it."""

    text: str
    backend_id: str
    request_fingerprint: str


@dataclass(frozen=True)
class EnsembleConfig:
    """Size, acceptance quorum, and diversity source for an ensemble."""

    n: int = 3
    quorum: int = 2
    temperature: float = 0.7
    base_seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("ensemble size must be positive")
        if not 1 <= self.quorum <= self.n:
            raise ValueError(f"quorum must be in 1..{self.n}, got {self.quorum}")


def canonical_request(request: ModelRequest) -> dict:
    return {
        "role": request.role,
        "prompt": request.prompt,
        "temperature": request.temperature,
        "seed": request.seed,
        "max_output_tokens": request.max_output_tokens,
        "instance_index": request.instance_index,
    }


def canonical_request_json(request: ModelRequest) -> str:
    return json.dumps(canonical_request(request), sort_keys=True, separators=(",", ":"))


def request_fingerprint(request: ModelRequest) -> str:
    return hashlib.sha256(canonical_request_json(request).encode("utf-8")).hexdigest()


class ModelBackend(Protocol):
    """Anything that can answer a ModelRequest with raw text."""

    backend_id: str

    def complete(self, request: ModelRequest) -> str: ...


def generate(backend: ModelBackend, request: ModelRequest) -> ModelResponse:
    """Single-call primitive: dispatch one request via the backend."""
    text = backend.complete(request)
    return ModelResponse(
        text=text,
        backend_id=backend.backend_id,
        request_fingerprint=request_fingerprint(request),
    )


def ensemble_requests(base_request: ModelRequest, config: EnsembleConfig) -> list[ModelRequest]:
    """The n slot requests, differing only in instance_index and seed."""
    return [
        replace(base_request, instance_index=i, seed=config.base_seed + i)
        for i in range(config.n)
    ]


def generate_ensemble(
    backend: ModelBackend,
    base_request: ModelRequest,
    config: EnsembleConfig,
) -> list[Optional[ModelResponse]]:
    """Dispatch n diversified requests, possibly concurrently.

    The returned list is ordered by instance_index regardless of completion
    order. Failed slots are None; the call raises EnsembleError only when
    more than n - quorum slots failed.
    """

    def one(request: ModelRequest) -> ModelResponse:
        return generate(backend, request)

    requests = ensemble_requests(base_request, config)
    results: list[Optional[ModelResponse]] = [None] * config.n
    errors: list[tuple[int, SgcrError]] = []
    with ThreadPoolExecutor(max_workers=min(_MAX_WORKERS, config.n)) as pool:
        futures = [pool.submit(one, request) for request in requests]
        for index, future in enumerate(futures):
            try:
                results[index] = future.result()
            except SgcrError as exc:
                errors.append((index, exc))
                logger.warning("ensemble slot %d failed: %s", index, exc)
    _check_failure_budget(errors, config)
    return results


@dataclass
class EnsembleStats:
    """Call accounting for one ensemble invocation."""

    calls: int = 0
    failures: int = 0


T = TypeVar("T")


def ensemble_parsed(
    backend: ModelBackend,
    base_request: ModelRequest,
    config: EnsembleConfig,
    parser: Callable[[str], T],
) -> tuple[list[Optional[T]], EnsembleStats]:
    """Ensemble dispatch with per-slot parsing and bounded retries.

    Each slot is attempted up to 1 + SLOT_RETRIES times (same seed) when the
    transport fails or the response does not parse; a slot that still fails
    is marked absent (None). A fixture miss is never retried: replay lookups
    are deterministic. Raises EnsembleError past the n - quorum budget.
    """
    stats = EnsembleStats()
    stats_lock = threading.Lock()

    def count_call() -> None:
        with stats_lock:
            stats.calls += 1

    def one_slot(request: ModelRequest) -> T:
        last_error: SgcrError = UnparsableResponse("no attempt made")
        for attempt in range(1 + SLOT_RETRIES):
            count_call()
            try:
                response = generate(backend, request)
                return parser(response.text)
            except FixtureMiss:
                raise
            except (WireError, UnparsableResponse) as exc:
                last_error = exc
                if attempt < SLOT_RETRIES:
                    logger.warning(
                        "slot %d attempt %d failed (%s), retrying",
                        request.instance_index,
                        attempt + 1,
                        exc,
                    )
        raise last_error

    requests = ensemble_requests(base_request, config)
    results: list[Optional[T]] = [None] * config.n
    errors: list[tuple[int, SgcrError]] = []
    with ThreadPoolExecutor(max_workers=min(_MAX_WORKERS, config.n)) as pool:
        futures = [pool.submit(one_slot, request) for request in requests]
        for index, future in enumerate(futures):
            try:
                results[index] = future.result()
            except SgcrError as exc:
                errors.append((index, exc))
                stats.failures += 1
                logger.warning("ensemble slot %d absent: %s", index, exc)
    _check_failure_budget(errors, config)
    return results, stats


def _check_failure_budget(errors: list[tuple[int, SgcrError]], config: EnsembleConfig) -> None:
    if len(errors) > config.n - config.quorum:
        detail = "; ".join(f"slot {index}: {exc}" for index, exc in errors)
        raise EnsembleError(
            f"{len(errors)} of {config.n} ensemble calls failed"
            f" (quorum {config.quorum} unreachable): {detail}"
        )
