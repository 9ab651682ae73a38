"""Text augmentation: 20 rewrites per sentence, replacing only the target object.

Backends are callables ``AugmentationRequest -> AugmentationResult``. The
``stub_backend`` is offline and deterministic; ``HttpBackend`` talks to any
chat-completion style endpoint configured through environment variables.
"""

from __future__ import annotations

import json
import logging
import os
import re
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Callable, Sequence

from .data import SceneRecord

logger = logging.getLogger(__name__)

N_ALTERNATIVES = 20
EXPANSION_FACTOR = N_ALTERNATIVES + 1
PROMPT_VERSION = "1"

PROMPT_TEMPLATE = (
    "Rewrite the instruction below {n} times. In every rewrite, replace only the "
    'target object "{target}" with a different, semantically similar word or short '
    "phrase, and keep every other word unchanged.\n"
    "Answer with exactly {n} lines, numbered 1 to {n}, one rewrite per line, and "
    "no other text.\n"
    "\n"
    "Instruction: {sentence}\n"
    "Target object: {target}\n"
)

ENV_ENDPOINT = "AUGMENT_ENDPOINT"
ENV_MODEL = "AUGMENT_MODEL"
ENV_API_KEY = "AUGMENT_API_KEY"


class AugmentationError(ValueError):
    pass


class CountMismatchError(AugmentationError):
    def __init__(self, found: int, expected: int = N_ALTERNATIVES):
        self.found = found
        self.expected = expected
        super().__init__(f"expected {expected} alternatives, found {found}")


class BackendConfigError(RuntimeError):
    pass


@dataclass(frozen=True)
class AugmentationRequest:
    sentence: str
    target_object: str

    def __post_init__(self) -> None:
        if not self.sentence.strip() or not self.target_object.strip():
            raise AugmentationError("sentence and target_object must be non-empty")
        if self.target_object.lower() not in self.sentence.lower():
            raise AugmentationError(f"target {self.target_object!r} does not occur in {self.sentence!r}")


@dataclass(frozen=True)
class AugmentationResult:
    alternatives: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.alternatives) != N_ALTERNATIVES:
            raise CountMismatchError(len(self.alternatives))
        if any(not a.strip() for a in self.alternatives):
            raise AugmentationError("empty alternative")

    def check_against(self, sentence: str) -> None:
        same = [a for a in self.alternatives if a.strip() == sentence.strip()]
        if same:
            raise AugmentationError(f"{len(same)} alternative(s) repeat the original sentence")


Backend = Callable[[AugmentationRequest], AugmentationResult]


def build_prompt(req: AugmentationRequest) -> str:
    return PROMPT_TEMPLATE.format(n=N_ALTERNATIVES, target=req.target_object, sentence=req.sentence)


_NUMBERED = re.compile(r"^\s*\(?(\d{1,3})[.):]\s*(.*\S)\s*$")
_BULLET = re.compile(r"^\s*[-*•]\s+(.*\S)\s*$")


def parse_response(text: str) -> AugmentationResult:
    """Extract the rewrites from a model reply.

    If any line is numbered, only numbered lines count; otherwise, if any
    line is bulleted, only bulleted lines count; otherwise every non-blank
    line that is not a code fence counts. This drops the prose an LLM tends
    to wrap around its list.
    """
    lines = text.splitlines()
    numbered = [m.group(2) for m in map(_NUMBERED.match, lines) if m]
    if numbered:
        items = numbered
    else:
        bulleted = [m.group(1) for m in map(_BULLET.match, lines) if m]
        items = bulleted or [ln.strip() for ln in lines if ln.strip() and not ln.strip().startswith("```")]
    items = [it.strip().strip('"').strip() for it in items]
    items = [it for it in items if it]
    if len(items) != N_ALTERNATIVES:
        raise CountMismatchError(len(items))
    return AugmentationResult(tuple(items))


def render_numbered(alternatives: Sequence[str]) -> str:
    return "\n".join(f"{i}. {a}" for i, a in enumerate(alternatives, 1))


@lru_cache(maxsize=None)
def synonym_table() -> dict[str, tuple[str, ...]]:
    raw = json.loads(resources.files(__package__).joinpath("synonyms.json").read_text(encoding="utf-8"))
    return {k.lower(): tuple(v) for k, v in raw.items()}


def _substitute(sentence: str, target: str, replacement: str) -> str:
    return re.sub(re.escape(target), lambda _: replacement, sentence, flags=re.IGNORECASE)


def stub_backend(req: AugmentationRequest) -> AugmentationResult:
    """Offline backend: swap the target for entries of a bundled synonym table.

    Unknown targets get ``variant-01`` .. ``variant-20``.
    """
    words = synonym_table().get(req.target_object.lower().strip())
    if words is None:
        words = tuple(f"variant-{i:02d}" for i in range(1, N_ALTERNATIVES + 1))
    return AugmentationResult(tuple(_substitute(req.sentence, req.target_object, w) for w in words[:N_ALTERNATIVES]))


@dataclass
class HttpBackend:
    """Chat-completion client: POST ``{"model", "messages"}``, read ``choices[0].message.content``."""

    endpoint: str
    model: str = "gpt-4"
    api_key: str | None = None
    timeout: float = 60.0
    temperature: float = 1.0

    @classmethod
    def from_env(cls, environ: dict | None = None) -> HttpBackend:
        env = os.environ if environ is None else environ
        endpoint = env.get(ENV_ENDPOINT)
        if not endpoint:
            raise BackendConfigError(f"{ENV_ENDPOINT} is not set")
        return cls(endpoint=endpoint, model=env.get(ENV_MODEL) or "gpt-4", api_key=env.get(ENV_API_KEY) or None)

    def __call__(self, req: AugmentationRequest) -> AugmentationResult:
        body = json.dumps(
            {
                "model": self.model,
                "messages": [{"role": "user", "content": build_prompt(req)}],
                "temperature": self.temperature,
            }
        ).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        request = urllib.request.Request(self.endpoint, data=body, headers=headers, method="POST")
        with urllib.request.urlopen(request, timeout=self.timeout) as resp:
            payload = json.loads(resp.read().decode("utf-8"))
        try:
            content = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise AugmentationError(f"unexpected response shape: {str(payload)[:200]}") from None
        return parse_response(content)


@dataclass
class ExpansionResult:
    records: list[SceneRecord]
    n_input: int
    failed_ids: list[str] = field(default_factory=list)

    @property
    def multiplier(self) -> float:
        return len(self.records) / self.n_input if self.n_input else 0.0


def _augment_one(rec: SceneRecord, backend: Backend, max_retries: int) -> AugmentationResult | None:
    try:
        req = AugmentationRequest(rec.sentence, rec.target_object)
    except AugmentationError as exc:
        logger.warning("skipping %s: %s", rec.id, exc)
        return None
    for attempt in range(1 + max_retries):
        try:
            result = backend(req)
            result.check_against(rec.sentence)
            return result
        except (AugmentationError, OSError, urllib.error.URLError, json.JSONDecodeError) as exc:
            logger.warning("augmentation of %s failed (attempt %d): %s", rec.id, attempt + 1, exc)
    return None


def expand_dataset(
    records: Sequence[SceneRecord],
    backend: Backend = stub_backend,
    max_retries: int = 3,
    max_in_flight: int = 4,
) -> ExpansionResult:
    """Emit each record followed by its 20 rewrites (21x when nothing fails).

    Records whose augmentation still fails after ``max_retries`` retries are
    emitted once, unchanged, and listed in ``failed_ids``. Output order
    follows input order whatever order the backend calls complete in.
    """
    for rec in records:
        if not rec.target_object:
            raise AugmentationError(f"record {rec.id!r} has no target_object")
    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        results = list(pool.map(lambda r: _augment_one(r, backend, max_retries), records))
    out: list[SceneRecord] = []
    failed: list[str] = []
    for rec, result in zip(records, results):
        out.append(rec)
        if result is None:
            failed.append(rec.id)
            continue
        out.extend(rec.replace(sentence=s) for s in result.alternatives)
    return ExpansionResult(out, len(records), failed)
