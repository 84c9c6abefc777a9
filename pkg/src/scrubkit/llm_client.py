"""Completion-endpoint client with persistent response caching.

Two fixed prompt templates drive the denoising pipeline, one per stage.
Every response is cached in an append-only JSON-lines file keyed by
(stage, model, input sentence), so a finished run can be replayed
byte-identically with zero network traffic, and an interrupted run
resumes from the cache. A deterministic rule-based mock covers tests.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping, Union

import requests

from .errors import (
    EmptyCompletionError,
    TransientTransportError,
    TransportError,
    ValidationError,
)
from .noise import tokenize

ENV_API_KEY = "SCRUBKIT_API_KEY"
ENV_API_BASE = "SCRUBKIT_API_BASE"

DEFAULT_MODEL = "gpt-3.5-turbo-instruct"


class Stage(Enum):
    FIX_ENCODING = "fix_encoding"
    REPLACE_ENTITIES = "replace_entities"


INSTRUCTIONS: Mapping[Stage, str] = {
    Stage.FIX_ENCODING: (
        "Copy the sentence by replacing utf8 encoding error characters "
        "into the correct ascii symbols"
    ),
    Stage.REPLACE_ENTITIES: "Copy the sentence by replacing @words into the real words",
}


@dataclass(frozen=True)
class PromptTemplate:
    stage: Stage
    instruction: str

    def build(self, sentence: str) -> str:
        return f"{self.instruction}:\n{sentence}"


def template_for(stage: Stage) -> PromptTemplate:
    return PromptTemplate(stage=stage, instruction=INSTRUCTIONS[stage])


def cache_key(stage: Stage, model: str, sentence: str) -> str:
    payload = "\x1f".join((stage.value, model, sentence))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CompletionRecord:
    cache_key: str
    stage: str
    model: str
    input: str
    output: str
    timestamp: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "cache_key": self.cache_key,
                "stage": self.stage,
                "model": self.model,
                "input": self.input,
                "output": self.output,
                "timestamp": self.timestamp,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "CompletionRecord":
        obj = json.loads(line)
        return cls(
            cache_key=obj["cache_key"],
            stage=obj["stage"],
            model=obj["model"],
            input=obj["input"],
            output=obj["output"],
            timestamp=float(obj.get("timestamp", 0.0)),
        )


class CompletionCache:
    """Append-only JSON-lines cache; one corrupt line skips that entry
    with a warning instead of failing the run."""

    def __init__(self, path: Union[str, Path, None] = None):
        self._path = Path(path) if path is not None else None
        self._records: dict[str, CompletionRecord] = {}
        self._lock = threading.Lock()
        if self._path is not None and self._path.exists():
            for lineno, line in enumerate(
                self._path.read_text(encoding="utf-8").splitlines(), start=1
            ):
                if not line.strip():
                    continue
                try:
                    record = CompletionRecord.from_json(line)
                except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                    warnings.warn(
                        f"{self._path}:{lineno}: skipping corrupt cache line"
                    )
                    continue
                self._records[record.cache_key] = record

    @property
    def path(self) -> Path | None:
        return self._path

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, key: str) -> bool:
        return key in self._records

    def get(self, key: str) -> CompletionRecord | None:
        return self._records.get(key)

    def put(self, record: CompletionRecord) -> None:
        with self._lock:
            self._records[record.cache_key] = record
            if self._path is not None:
                with self._path.open("a", encoding="utf-8") as fh:
                    fh.write(record.to_json() + "\n")

    def seed(self, stage: Stage, model: str, sentence: str, output: str) -> None:
        """Insert a known completion (replay fixtures, resume testing)."""
        self.put(
            CompletionRecord(
                cache_key=cache_key(stage, model, sentence),
                stage=stage.value,
                model=model,
                input=sentence,
                output=output,
                timestamp=time.time(),
            )
        )


@dataclass(frozen=True)
class CompletionRequest:
    stage: Stage
    model: str
    sentence: str
    prompt: str
    max_tokens: int


class HttpTransport:
    """POST to an OpenAI-compatible completions endpoint.

    The API key is read from the environment only; it is never accepted
    as a flag.
    """

    def __init__(
        self,
        api_base: str | None = None,
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ):
        base = api_base or os.environ.get(ENV_API_BASE)
        if not base:
            raise ValidationError(
                f"no API base URL: pass --api-base or set {ENV_API_BASE}"
            )
        self._url = base.rstrip("/") + "/completions"
        self._timeout = timeout
        self._session = session or requests.Session()

    def __call__(self, request: CompletionRequest) -> str:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(ENV_API_KEY)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": request.model,
            "prompt": request.prompt,
            "temperature": 0,
            "n": 1,
            "max_tokens": request.max_tokens,
        }
        try:
            resp = self._session.post(
                self._url, json=body, headers=headers, timeout=self._timeout
            )
        except requests.RequestException as exc:
            raise TransientTransportError(str(exc)) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            retry_after = None
            hint = resp.headers.get("Retry-After")
            if hint is not None:
                try:
                    retry_after = float(hint)
                except ValueError:
                    retry_after = None
            raise TransientTransportError(
                f"HTTP {resp.status_code} from {self._url}", retry_after=retry_after
            )
        if resp.status_code != 200:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["text"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion response: {exc}") from exc


class MockTransport:
    """Applies ordered regex substitution rules to the input sentence;
    never touches the network. An empty rule set is the identity."""

    def __init__(self, rules: Union[Mapping[str, str], Iterable[tuple[str, str]]]):
        pairs = rules.items() if isinstance(rules, Mapping) else rules
        self._rules = [(re.compile(pattern), repl) for pattern, repl in pairs]

    def __call__(self, request: CompletionRequest) -> str:
        out = request.sentence
        for pattern, repl in self._rules:
            out = pattern.sub(repl, out)
        return out


class ReplayTransport:
    """Strict replay: any cache miss is a hard transport failure."""

    def __call__(self, request: CompletionRequest) -> str:
        raise TransportError(
            f"replay cache miss for stage {request.stage.value}: "
            f"{request.sentence[:60]!r}"
        )


def _strip_echo(stage: Stage, text: str) -> str:
    out = text.strip()
    instruction = INSTRUCTIONS[stage]
    if out.startswith(instruction):
        out = out[len(instruction) :].lstrip(" :\n\t")
    return out


class LlmClient:
    """Shareable across threads; in-flight requests are bounded by
    ``jobs`` and cache writes are serialized through a single writer."""

    def __init__(
        self,
        transport: Callable[[CompletionRequest], str],
        model: str = DEFAULT_MODEL,
        cache: CompletionCache | None = None,
        jobs: int = 4,
        max_attempts: int = 5,
        backoff_base: float = 1.0,
        backoff_factor: float = 2.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if jobs < 1:
            raise ValidationError(f"jobs must be >= 1, got {jobs}")
        self._transport = transport
        self.model = model
        self.cache = cache
        self.jobs = jobs
        self._max_attempts = max_attempts
        self._backoff_base = backoff_base
        self._backoff_factor = backoff_factor
        self._sleep = sleep
        self._gate = threading.BoundedSemaphore(jobs)
        self._counter_lock = threading.Lock()
        self.network_calls = 0

    def complete(self, stage: Stage, sentence: str) -> str:
        if not sentence:
            raise ValidationError("cannot complete an empty sentence")
        key = cache_key(stage, self.model, sentence)
        if self.cache is not None:
            record = self.cache.get(key)
            if record is not None:
                output = _strip_echo(stage, record.output)
                if not output:
                    raise EmptyCompletionError(f"cached empty completion for {key}")
                return output
        prompt = template_for(stage).build(sentence)
        max_tokens = 2 * len(tokenize(sentence)) + 16
        request = CompletionRequest(
            stage=stage,
            model=self.model,
            sentence=sentence,
            prompt=prompt,
            max_tokens=max_tokens,
        )
        output = _strip_echo(stage, self._call_with_retry(request))
        if not output:
            # Not cached: a later run may still get a usable completion.
            raise EmptyCompletionError(f"empty completion for {sentence[:60]!r}")
        if self.cache is not None:
            self.cache.put(
                CompletionRecord(
                    cache_key=key,
                    stage=stage.value,
                    model=self.model,
                    input=sentence,
                    output=output,
                    timestamp=time.time(),
                )
            )
        return output

    def _call_with_retry(self, request: CompletionRequest) -> str:
        delay = self._backoff_base
        for attempt in range(1, self._max_attempts + 1):
            try:
                with self._gate:
                    with self._counter_lock:
                        self.network_calls += 1
                    return self._transport(request)
            except TransientTransportError as exc:
                if attempt == self._max_attempts:
                    raise TransportError(
                        f"giving up after {attempt} attempts: {exc}"
                    ) from exc
                self._sleep(exc.retry_after if exc.retry_after is not None else delay)
                delay *= self._backoff_factor
        raise AssertionError("unreachable")


def mock_client(
    rules: Union[Mapping[str, str], Iterable[tuple[str, str]]],
    model: str = DEFAULT_MODEL,
    cache: CompletionCache | None = None,
    jobs: int = 4,
) -> LlmClient:
    return LlmClient(MockTransport(rules), model=model, cache=cache, jobs=jobs)


def replay_client(
    cache: CompletionCache, model: str = DEFAULT_MODEL, jobs: int = 4
) -> LlmClient:
    return LlmClient(ReplayTransport(), model=model, cache=cache, jobs=jobs)
