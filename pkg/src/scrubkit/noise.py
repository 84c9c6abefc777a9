"""Canonical tokenizer and detector for the two noise classes.

ASAP essays carry two kinds of noise: mis-decoded UTF-8 symbols rendered
as literal ``<U+hhhh>`` markers (or surviving raw C1 control bytes), and
anonymization placeholders such as ``@PERSON1`` or ``@CAPS2``. Every
token index in the toolkit (m2 edits, noise spans, edit filtering) comes
from :func:`tokenize`, which is the single source of truth.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Sequence

if TYPE_CHECKING:  # pragma: no cover
    from .corpus import Sentence

# Literal 8-char ASCII marker as distributed, plus raw C1 control bytes.
ENCODING_MARKER = re.compile(r"<U\+[0-9A-Fa-f]{4}>|[\x80-\x9f]")
# Uppercase run required so e-mail-style "@" uses are never flagged.
PLACEHOLDER = re.compile(r"@[A-Z]+[0-9]*")

# Punctuation detached from token edges; apostrophes and hyphens never
# split, so contractions stay single tokens.
DETACHED_PUNCTUATION = frozenset(',.!?;:"()')


class NoiseKind(Enum):
    ENCODING_ARTIFACT = "encoding"
    ENTITY_PLACEHOLDER = "entity"


@dataclass(frozen=True)
class NoiseSpan:
    """One noisy token, addressed by half-open token indices."""

    kind: NoiseKind
    token_start: int
    token_end: int
    surface: str

    def __post_init__(self) -> None:
        if not 0 <= self.token_start < self.token_end:
            raise ValueError(
                f"invalid noise span [{self.token_start}, {self.token_end})"
            )


def tokenize(text: str) -> list[str]:
    """Split on whitespace, then peel leading/trailing punctuation into
    separate tokens.

    ``<U+hhhh>`` markers and ``@WORD`` placeholders contain none of the
    detachable characters, so they always survive intact.
    """
    tokens: list[str] = []
    for chunk in text.split():
        lead: list[str] = []
        while len(chunk) > 1 and chunk[0] in DETACHED_PUNCTUATION:
            lead.append(chunk[0])
            chunk = chunk[1:]
        tail: list[str] = []
        while len(chunk) > 1 and chunk[-1] in DETACHED_PUNCTUATION:
            tail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(lead)
        tokens.append(chunk)
        tokens.extend(reversed(tail))
    return tokens


def detect_noise(tokens: Sequence[str]) -> list[NoiseSpan]:
    """One single-token span per noisy token, ascending by position.

    A token showing both patterns counts as an encoding artifact, since
    encoding repair runs first in the pipeline.
    """
    spans: list[NoiseSpan] = []
    for i, tok in enumerate(tokens):
        if ENCODING_MARKER.search(tok):
            spans.append(NoiseSpan(NoiseKind.ENCODING_ARTIFACT, i, i + 1, tok))
        elif PLACEHOLDER.fullmatch(tok):
            spans.append(NoiseSpan(NoiseKind.ENTITY_PLACEHOLDER, i, i + 1, tok))
    return spans


def is_noisy(sentence: "Sentence") -> bool:
    """True iff the sentence contains at least one noise span."""
    return bool(detect_noise(sentence.tokens))
