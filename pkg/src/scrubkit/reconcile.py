"""Selective edit retention: keep completion edits that touch noise
tokens, revert everything else.

Completion models fix grammar and spelling while they fix encoding
markers and placeholders. Aligning input and output into edits and
keeping only the edits whose source span overlaps a detected noise span
restores the author's original errors everywhere else.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import EssayRecord, Sentence, segment_sentences
from .errors import EmptyCompletionError, ScrubkitError, TransportError, ValidationError
from .llm_client import LlmClient, Stage
from .m2 import Edit, M2Entry, align, serialize_m2
from .noise import NoiseKind, NoiseSpan, detect_noise, is_noisy, tokenize

STAGE_ORDER = (Stage.FIX_ENCODING, Stage.REPLACE_ENTITIES)

_STAGE_KIND = {
    Stage.FIX_ENCODING: NoiseKind.ENCODING_ARTIFACT,
    Stage.REPLACE_ENTITIES: NoiseKind.ENTITY_PLACEHOLDER,
}

_ATTACH = frozenset(",.!?;:")


def filter_edits(edits: Iterable[Edit], spans: Iterable[NoiseSpan]) -> list[Edit]:
    """Keep exactly the edits whose source span intersects a noise span.

    Insertions are never kept: an insertion cannot touch a noise token,
    and retaining one would leak a grammar fix.
    """
    span_list = list(spans)
    kept = []
    for edit in edits:
        if edit.start == edit.end:
            continue
        for span in span_list:
            if max(edit.start, span.token_start) < min(edit.end, span.token_end):
                kept.append(edit)
                break
    return kept


def detokenize(tokens: Sequence[str]) -> str:
    """Join with single spaces, attaching closing punctuation to the
    preceding token. Quotes and parentheses stay space-separated."""
    parts: list[str] = []
    for tok in tokens:
        if parts and tok and all(c in _ATTACH for c in tok):
            parts[-1] += tok
        else:
            parts.append(tok)
    return " ".join(parts)


def apply_edits(source_tokens: Sequence[str], edits: Sequence[Edit]) -> str:
    """Splice each edit's replacement over its span, right to left, then
    detokenize."""
    n = len(source_tokens)
    prev_end = 0
    for edit in edits:
        if edit.end > n:
            raise ValidationError(
                f"edit [{edit.start}, {edit.end}) out of bounds for {n} tokens"
            )
        if edit.start < prev_end:
            raise ValidationError(
                f"edits must be sorted and non-overlapping at "
                f"[{edit.start}, {edit.end})"
            )
        prev_end = max(prev_end, edit.end)
    out = list(source_tokens)
    for edit in reversed(edits):
        out[edit.start : edit.end] = edit.replacement.split()
    return detokenize(out)


@dataclass
class DenoiseAudit:
    """All candidate edits per stage: kept ones carry annotator 0,
    dropped ones are re-tagged annotator 1."""

    entries: dict[Stage, list[M2Entry]] = field(default_factory=dict)

    def add(
        self,
        stage: Stage,
        ids: str,
        source_text: str,
        source_tokens: Sequence[str],
        kept: Sequence[Edit],
        dropped: Sequence[Edit],
    ) -> None:
        edits = sorted(
            list(kept) + [dataclasses.replace(e, annotator=1) for e in dropped],
            key=lambda e: (e.start, e.end, e.annotator),
        )
        self.entries.setdefault(stage, []).append(
            M2Entry(
                header=f"{ids} {source_text}",
                source_tokens=tuple(source_tokens),
                edits=tuple(edits),
            )
        )

    def merge(self, other: "DenoiseAudit") -> None:
        for stage, entries in other.entries.items():
            self.entries.setdefault(stage, []).extend(entries)

    def serialize(self, stage: Stage) -> str:
        return serialize_m2(self.entries.get(stage, []))


def denoise_sentence(
    sentence: Sentence,
    client: LlmClient,
    stages: Iterable[Stage],
    audit: DenoiseAudit | None = None,
    audit_ids: str | None = None,
) -> str:
    """Run the requested stages in order (encoding repair first) and
    return the reconciled text.

    Per stage: prompt the client with the current text, align its output
    against the current tokens, keep only edits overlapping the stage's
    noise kind, and apply them. A stage whose noise kind is absent is
    skipped without a client call, since nothing it returned could be
    retained. An output identical to the input leaves it unchanged.
    """
    requested = set(stages)
    current = sentence.text.strip()
    for stage in STAGE_ORDER:
        if stage not in requested:
            continue
        tokens = tokenize(current)
        spans = [s for s in detect_noise(tokens) if s.kind is _STAGE_KIND[stage]]
        if not spans:
            continue
        try:
            completion = client.complete(stage, current)
        except EmptyCompletionError:
            continue
        if completion == current:
            continue
        candidates = align(tokens, tokenize(completion))
        kept = filter_edits(candidates, spans)
        if audit is not None:
            kept_set = {(e.start, e.end) for e in kept}
            dropped = [e for e in candidates if (e.start, e.end) not in kept_set]
            ids = audit_ids or f"{sentence.essay_id}|0|{sentence.index}"
            audit.add(stage, ids, current, tokens, kept, dropped)
        if kept:
            current = apply_edits(tokens, kept)
    return current


@dataclass(frozen=True)
class SentenceFailure:
    essay_id: int
    sentence_index: int
    error: str
    transport: bool


@dataclass
class DenoiseReport:
    total_sentences: int = 0
    noisy_sentences: int = 0
    changed_sentences: int = 0
    failures: list[SentenceFailure] = field(default_factory=list)

    @property
    def had_transport_failure(self) -> bool:
        return any(f.transport for f in self.failures)


@dataclass
class DenoiseResult:
    records: list[EssayRecord]
    report: DenoiseReport
    audit: DenoiseAudit


def _splice(slice_text: str, core_result: str) -> str:
    stripped = slice_text.strip()
    start = slice_text.find(stripped) if stripped else len(slice_text)
    prefix = slice_text[:start]
    suffix = slice_text[start + len(stripped) :]
    return prefix + core_result + suffix


def denoise_corpus(
    records: Sequence[EssayRecord],
    client: LlmClient,
    stages: Iterable[Stage],
    jobs: int | None = None,
) -> DenoiseResult:
    """Denoise every noisy sentence and splice results back at their
    character offsets; clean sentences pass through byte-exact, scores
    and ids are untouched.

    Per-sentence failures fall back to the original text and are
    aggregated into the report.
    """
    requested = set(stages)
    workers = jobs if jobs is not None else client.jobs
    per_record = [segment_sentences(r) for r in records]
    report = DenoiseReport(total_sentences=sum(len(s) for s in per_record))
    audit = DenoiseAudit()

    tasks: list[tuple[int, Sentence]] = []
    for ri, sentences in enumerate(per_record):
        for sentence in sentences:
            if is_noisy(sentence):
                tasks.append((ri, sentence))
    report.noisy_sentences = len(tasks)

    def work(ri: int, sentence: Sentence):
        record = records[ri]
        ids = f"{record.essay_id}|{record.essay_set}|{sentence.index}"
        local_audit = DenoiseAudit()
        try:
            text = denoise_sentence(
                sentence, client, requested, audit=local_audit, audit_ids=ids
            )
            return text, local_audit, None
        except ScrubkitError as exc:
            failure = SentenceFailure(
                essay_id=record.essay_id,
                sentence_index=sentence.index,
                error=str(exc),
                transport=isinstance(exc, TransportError),
            )
            return None, local_audit, failure

    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda t: work(*t), tasks))
    else:
        outcomes = [work(ri, s) for ri, s in tasks]

    results: dict[tuple[int, int], str] = {}
    for (ri, sentence), (text, local_audit, failure) in zip(tasks, outcomes):
        audit.merge(local_audit)
        if failure is not None:
            report.failures.append(failure)
        elif text is not None:
            results[(ri, sentence.index)] = text

    new_records: list[EssayRecord] = []
    for ri, record in enumerate(records):
        pieces = []
        for sentence in per_record[ri]:
            start, end = sentence.char_offset
            slice_text = record.text[start:end]
            key = (ri, sentence.index)
            if key in results:
                spliced = _splice(slice_text, results[key])
                if spliced != slice_text:
                    report.changed_sentences += 1
                pieces.append(spliced)
            else:
                pieces.append(slice_text)
        new_records.append(dataclasses.replace(record, text="".join(pieces)))
    return DenoiseResult(records=new_records, report=report, audit=audit)
