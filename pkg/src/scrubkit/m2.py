"""ERRANT-style m2 annotations: parsing, bit-exact serialization, and
token-level alignment between an original and a corrected sentence.

An m2 file is a sequence of blocks separated by blank lines. Each block
is one ``S`` source line followed by zero or more ``A`` edit lines::

    S 682|1|2 I think this because ...
    A 19 20|||R:VERB|||don't|||REQUIRED|||-NONE-|||0

Headers are kept verbatim so parse -> serialize round-trips byte-exactly.
Alignment produces coarse labels only (``R:OTHER``/``M:OTHER``/``U:OTHER``);
richer labels from external files are preserved as parsed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import FormatError, ValidationError
from .noise import tokenize

_ID_TRIPLE = re.compile(r"\d+\|\d+\|\d+")

LABEL_REPLACE = "R:OTHER"
LABEL_INSERT = "M:OTHER"
LABEL_DELETE = "U:OTHER"


@dataclass(frozen=True)
class Edit:
    """One ``A`` line. ``start == end`` marks an insertion point."""

    start: int
    end: int
    type_label: str
    replacement: str
    necessity: str = "REQUIRED"
    comment: str = "-NONE-"
    annotator: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.start <= self.end:
            raise ValidationError(f"invalid edit span [{self.start}, {self.end})")

    def to_line(self) -> str:
        return (
            f"A {self.start} {self.end}|||{self.type_label}|||{self.replacement}"
            f"|||{self.necessity}|||{self.comment}|||{self.annotator}"
        )


def header_source_text(header: str) -> str:
    """The sentence part of a header, with a leading ``id|prompt|sentence``
    triple stripped when present."""
    first, _, rest = header.partition(" ")
    if _ID_TRIPLE.fullmatch(first):
        return rest
    return header


@dataclass(frozen=True)
class M2Entry:
    header: str
    source_tokens: tuple[str, ...]
    edits: tuple[Edit, ...]

    def __post_init__(self) -> None:
        n = len(self.source_tokens)
        last_by_annotator: dict[int, Edit] = {}
        for edit in self.edits:
            if edit.end > n:
                raise ValidationError(
                    f"edit span [{edit.start}, {edit.end}) exceeds "
                    f"{n} source tokens"
                )
            prev = last_by_annotator.get(edit.annotator)
            if prev is not None:
                if (edit.start, edit.end) < (prev.start, prev.end):
                    raise ValidationError(
                        f"annotator {edit.annotator} edits out of order at "
                        f"[{edit.start}, {edit.end})"
                    )
                if edit.start < prev.end:
                    raise ValidationError(
                        f"annotator {edit.annotator} edits overlap at "
                        f"[{edit.start}, {edit.end})"
                    )
            last_by_annotator[edit.annotator] = edit

    @classmethod
    def from_header(cls, header: str, edits: Iterable[Edit] = ()) -> "M2Entry":
        return cls(
            header=header,
            source_tokens=tuple(tokenize(header_source_text(header))),
            edits=tuple(edits),
        )


def _parse_edit_line(line: str, lineno: int) -> Edit:
    parts = line[2:].split("|||")
    if len(parts) != 6:
        raise FormatError(
            f"line {lineno}: expected 7 |||-separated fields, got {len(parts) + 1}"
        )
    span = parts[0].split()
    if len(span) != 2:
        raise FormatError(f"line {lineno}: malformed edit span {parts[0]!r}")
    try:
        start, end = int(span[0]), int(span[1])
    except ValueError:
        raise FormatError(f"line {lineno}: non-integer edit span {parts[0]!r}")
    try:
        annotator = int(parts[5])
    except ValueError:
        raise FormatError(f"line {lineno}: non-integer annotator {parts[5]!r}")
    return Edit(
        start=start,
        end=end,
        type_label=parts[1],
        replacement=parts[2],
        necessity=parts[3],
        comment=parts[4],
        annotator=annotator,
    )


def parse_m2(text: str) -> list[M2Entry]:
    """Entries in file order, every field captured verbatim."""
    entries: list[M2Entry] = []
    header: str | None = None
    edits: list[Edit] = []

    def flush() -> None:
        nonlocal header, edits
        if header is not None:
            entries.append(M2Entry.from_header(header, edits))
        header = None
        edits = []

    for lineno, line in enumerate(text.split("\n"), start=1):
        if line == "":
            flush()
        elif line.startswith("S ") or line == "S":
            flush()
            header = line[2:]
        elif line.startswith("A "):
            if header is None:
                raise FormatError(f"line {lineno}: edit line outside a block")
            edits.append(_parse_edit_line(line, lineno))
        else:
            raise FormatError(f"line {lineno}: expected 'S ', 'A ' or blank line")
    flush()
    return entries


def serialize_m2(entries: Iterable[M2Entry]) -> str:
    chunks = []
    for entry in entries:
        lines = [f"S {entry.header}"]
        lines.extend(edit.to_line() for edit in entry.edits)
        chunks.append("\n".join(lines) + "\n\n")
    return "".join(chunks)


# --- alignment ---------------------------------------------------------

OP_EQUAL = "equal"
OP_SUB = "sub"
OP_DELETE = "delete"
OP_INSERT = "insert"
OP_SWAP = "swap"

# Ops that consume both source and target tokens; two of these never
# share an edit, so each substituted token keeps its own edit and the
# noise-span retention filter stays narrow.
_CORE_OPS = (OP_SUB, OP_SWAP)


def alignment_ops(
    source: Sequence[str], target: Sequence[str]
) -> list[tuple[str, int, int, int, int]]:
    """Minimal-cost elementary alignment (match 0; substitution,
    insertion, deletion, adjacent transposition 1).

    Returns ``(op, src_start, src_end, tgt_start, tgt_end)`` tuples in
    source order. Ties resolve deterministically, preferring the
    diagonal so edits land as far left as possible.
    """
    n, m = len(source), len(target)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        dist[i][0] = i
    for j in range(m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            best = dist[i - 1][j - 1] + (source[i - 1] != target[j - 1])
            best = min(best, dist[i - 1][j] + 1, dist[i][j - 1] + 1)
            if (
                i > 1
                and j > 1
                and source[i - 1] != target[j - 1]
                and source[i - 1] == target[j - 2]
                and source[i - 2] == target[j - 1]
            ):
                best = min(best, dist[i - 2][j - 2] + 1)
            dist[i][j] = best

    ops: list[tuple[str, int, int, int, int]] = []
    i, j = n, m
    while i > 0 or j > 0:
        if (
            i > 0
            and j > 0
            and source[i - 1] == target[j - 1]
            and dist[i][j] == dist[i - 1][j - 1]
        ):
            ops.append((OP_EQUAL, i - 1, i, j - 1, j))
            i, j = i - 1, j - 1
        elif (
            i > 0
            and j > 0
            and source[i - 1] != target[j - 1]
            and dist[i][j] == dist[i - 1][j - 1] + 1
        ):
            ops.append((OP_SUB, i - 1, i, j - 1, j))
            i, j = i - 1, j - 1
        elif (
            i > 1
            and j > 1
            and source[i - 1] != target[j - 1]
            and source[i - 1] == target[j - 2]
            and source[i - 2] == target[j - 1]
            and dist[i][j] == dist[i - 2][j - 2] + 1
        ):
            ops.append((OP_SWAP, i - 2, i, j - 2, j))
            i, j = i - 2, j - 2
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            ops.append((OP_DELETE, i - 1, i, j, j))
            i -= 1
        else:
            ops.append((OP_INSERT, i, i, j - 1, j))
            j -= 1
    ops.reverse()
    return ops


def align(
    source_tokens: Sequence[str], corrected_tokens: Sequence[str]
) -> list[Edit]:
    """Edits that turn the source into the correction.

    Contiguous non-match runs merge into one edit, except that a
    boundary is forced between two substitution-type ops: ``don't`` and
    ``exercise`` fixes next to each other stay separate edits, while a
    one-to-many rewrite like ``from -> caused by`` stays one edit.
    """
    runs: list[list[int]] = []  # [i0, i1, j0, j1, has_core]
    for op, i0, i1, j0, j1 in alignment_ops(source_tokens, corrected_tokens):
        if op == OP_EQUAL:
            runs.append([])  # break marker
            continue
        core = op in _CORE_OPS
        if (
            runs
            and runs[-1]
            and runs[-1][1] == i0
            and runs[-1][3] == j0
            and not (core and runs[-1][4])
        ):
            runs[-1][1] = i1
            runs[-1][3] = j1
            runs[-1][4] = runs[-1][4] or core
        else:
            runs.append([i0, i1, j0, j1, core])

    edits: list[Edit] = []
    for run in runs:
        if not run:
            continue
        i0, i1, j0, j1, _ = run
        replacement = " ".join(corrected_tokens[j0:j1])
        if i0 == i1:
            label = LABEL_INSERT
        elif j0 == j1:
            label = LABEL_DELETE
        else:
            label = LABEL_REPLACE
        edits.append(Edit(start=i0, end=i1, type_label=label, replacement=replacement))
    return edits
