"""ASAP TSV ingestion, score normalization, and sentence segmentation.

Essay text is carried byte-faithfully: no Unicode normalization, and the
literal ``<U+hhhh>`` markers in the distributed data survive untouched.
Score ranges are not hard-coded; they come from a JSON config mapping
each essay set to ``{min, max}`` and, optionally, the name of the column
holding the overall score (default ``domain1_score``).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Union

from .errors import FormatError, ValidationError
from .noise import ENCODING_MARKER, tokenize

DEFAULT_SCORE_COLUMN = "domain1_score"
_REQUIRED_COLUMNS = ("essay_id", "essay_set", "essay")
_TERMINATORS = ".!?"


@dataclass(frozen=True)
class ScoreRange:
    essay_set: int
    min: int
    max: int

    def __post_init__(self) -> None:
        if not 1 <= self.essay_set <= 8:
            raise ValidationError(f"essay_set must be in 1..8, got {self.essay_set}")
        if self.max <= self.min:
            raise ValidationError(
                f"score range for set {self.essay_set} needs max > min "
                f"(got {self.min}..{self.max})"
            )


@dataclass(frozen=True)
class EssayRecord:
    essay_id: int
    essay_set: int
    text: str
    raw_score: int
    normalized_score: float


@dataclass(frozen=True)
class Sentence:
    essay_id: int
    index: int
    tokens: tuple[str, ...]
    char_offset: tuple[int, int]
    text: str


@dataclass(frozen=True)
class RangeConfig:
    """Per-set score ranges plus the name of each set's score column."""

    ranges: Mapping[int, ScoreRange]
    score_columns: Mapping[int, str]

    @classmethod
    def from_ranges(
        cls,
        ranges: Iterable[ScoreRange],
        score_columns: Mapping[int, str] | None = None,
    ) -> "RangeConfig":
        by_set = {r.essay_set: r for r in ranges}
        return cls(ranges=by_set, score_columns=dict(score_columns or {}))

    @classmethod
    def from_json(cls, text: str) -> "RangeConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"ranges config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise FormatError("ranges config must be a JSON object")
        ranges: dict[int, ScoreRange] = {}
        columns: dict[int, str] = {}
        for key, spec in raw.items():
            try:
                essay_set = int(key)
            except ValueError as exc:
                raise FormatError(f"ranges config key {key!r} is not an integer") from exc
            if not isinstance(spec, dict) or "min" not in spec or "max" not in spec:
                raise FormatError(
                    f"ranges config entry for set {essay_set} needs 'min' and 'max'"
                )
            ranges[essay_set] = ScoreRange(essay_set, int(spec["min"]), int(spec["max"]))
            if "score_column" in spec:
                columns[essay_set] = str(spec["score_column"])
        return cls(ranges=ranges, score_columns=columns)

    def range_for(self, essay_set: int) -> ScoreRange:
        try:
            return self.ranges[essay_set]
        except KeyError:
            raise ValidationError(f"no score range configured for essay set {essay_set}")

    def column_for(self, essay_set: int) -> str:
        return self.score_columns.get(essay_set, DEFAULT_SCORE_COLUMN)


def load_range_config(path: Union[str, Path]) -> RangeConfig:
    return RangeConfig.from_json(Path(path).read_text(encoding="utf-8"))


def normalize_score(raw: int, score_range: ScoreRange) -> float:
    """Linear map of the raw score onto [0, 1]."""
    if not score_range.min <= raw <= score_range.max:
        raise ValidationError(
            f"score {raw} outside range {score_range.min}..{score_range.max} "
            f"for essay set {score_range.essay_set}"
        )
    return (raw - score_range.min) / (score_range.max - score_range.min)


@dataclass(frozen=True)
class TsvTable:
    """A TSV file held verbatim: header, rows, and source encoding."""

    header: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]
    encoding: str = "utf-8"

    def column_index(self, name: str) -> int:
        try:
            return self.header.index(name)
        except ValueError:
            raise FormatError(f"missing column {name!r}")


def read_tsv(data: bytes) -> TsvTable:
    try:
        text = data.decode("utf-8")
        encoding = "utf-8"
    except UnicodeDecodeError:
        text = data.decode("latin-1")
        encoding = "latin-1"
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError("empty TSV input")
    header = tuple(lines[0].rstrip("\r").split("\t"))
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = tuple(line.rstrip("\r").split("\t"))
        if len(fields) != len(header):
            raise FormatError(
                f"line {lineno}: expected {len(header)} fields, got {len(fields)}"
            )
        rows.append(fields)
    return TsvTable(header=header, rows=tuple(rows), encoding=encoding)


def write_tsv(table: TsvTable) -> bytes:
    lines = ["\t".join(table.header)]
    lines.extend("\t".join(row) for row in table.rows)
    return ("\n".join(lines) + "\n").encode(table.encoding)


def _coerce_config(ranges: Union[RangeConfig, Iterable[ScoreRange]]) -> RangeConfig:
    if isinstance(ranges, RangeConfig):
        return ranges
    return RangeConfig.from_ranges(ranges)


def parse_asap_tsv(
    data: Union[bytes, TsvTable],
    ranges: Union[RangeConfig, Iterable[ScoreRange]],
) -> list[EssayRecord]:
    """One record per data row, in file order.

    Rows with an empty essay text are rejected rather than skipped, so
    corrupt inputs surface early.
    """
    table = read_tsv(data) if isinstance(data, (bytes, bytearray)) else data
    config = _coerce_config(ranges)
    for name in _REQUIRED_COLUMNS:
        table.column_index(name)
    id_col = table.column_index("essay_id")
    set_col = table.column_index("essay_set")
    text_col = table.column_index("essay")

    records: list[EssayRecord] = []
    for rowno, row in enumerate(table.rows, start=2):
        try:
            essay_id = int(row[id_col])
            essay_set = int(row[set_col])
        except ValueError as exc:
            raise FormatError(f"line {rowno}: non-integer id or set: {exc}") from exc
        if essay_id <= 0:
            raise ValidationError(f"line {rowno}: essay_id must be positive")
        if not 1 <= essay_set <= 8:
            raise ValidationError(
                f"line {rowno}: essay_set {essay_set} outside 1..8"
            )
        text = row[text_col]
        if not text:
            raise ValidationError(f"line {rowno}: empty essay text")
        score_range = config.range_for(essay_set)
        score_col = table.column_index(config.column_for(essay_set))
        try:
            raw_score = int(row[score_col])
        except ValueError as exc:
            raise FormatError(f"line {rowno}: non-integer score: {exc}") from exc
        try:
            normalized = normalize_score(raw_score, score_range)
        except ValidationError as exc:
            raise ValidationError(f"line {rowno}: {exc}") from exc
        records.append(
            EssayRecord(essay_id, essay_set, text, raw_score, normalized)
        )
    return records


def write_asap_tsv(
    records: Iterable[EssayRecord],
    ranges: Union[RangeConfig, Iterable[ScoreRange]],
) -> bytes:
    """Serialize records back to TSV with one score column per set name."""
    config = _coerce_config(ranges)
    recs = list(records)
    score_cols: list[str] = []
    for r in recs:
        col = config.column_for(r.essay_set)
        if col not in score_cols:
            score_cols.append(col)
    header = ("essay_id", "essay_set", "essay", *score_cols)
    rows = []
    for r in recs:
        col = config.column_for(r.essay_set)
        scores = tuple(str(r.raw_score) if c == col else "" for c in score_cols)
        rows.append((str(r.essay_id), str(r.essay_set), r.text, *scores))
    return write_tsv(TsvTable(header=header, rows=tuple(rows)))


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """Half-open character spans that jointly cover the text.

    A boundary sits after ``.``, ``!`` or ``?`` followed by whitespace and
    an uppercase letter or digit; positions inside a ``<U+hhhh>`` marker
    are never boundaries.
    """
    marker_spans = [m.span() for m in ENCODING_MARKER.finditer(text)]

    def in_marker(pos: int) -> bool:
        return any(a <= pos < b for a, b in marker_spans)

    starts = [0]
    n = len(text)
    i = 0
    while i < n:
        if text[i] in _TERMINATORS and not in_marker(i):
            j = i + 1
            if j < n and text[j].isspace():
                while j < n and text[j].isspace():
                    j += 1
                if j < n and (text[j].isupper() or text[j].isdigit()):
                    starts.append(j)
                    i = j
                    continue
        i += 1
    return [(s, e) for s, e in zip(starts, starts[1:] + [n])]


def segment_sentences(record: EssayRecord) -> list[Sentence]:
    if not record.text:
        raise ValidationError(f"essay {record.essay_id}: empty text")
    sentences = []
    for index, (start, end) in enumerate(sentence_spans(record.text)):
        chunk = record.text[start:end]
        sentences.append(
            Sentence(
                essay_id=record.essay_id,
                index=index,
                tokens=tuple(tokenize(chunk)),
                char_offset=(start, end),
                text=chunk,
            )
        )
    return sentences


def make_sentence(text: str, essay_id: int = 0, index: int = 0) -> Sentence:
    """Build a standalone sentence over a raw string (tests, scripts)."""
    return Sentence(
        essay_id=essay_id,
        index=index,
        tokens=tuple(tokenize(text)),
        char_offset=(0, len(text)),
        text=text,
    )


def replace_essay_texts(table: TsvTable, new_texts: Mapping[int, str]) -> TsvTable:
    """Rewrite only the essay column, keyed by essay_id; every other
    field stays byte-verbatim so scores cannot be corrupted in transit."""
    id_col = table.column_index("essay_id")
    text_col = table.column_index("essay")
    rows = []
    for row in table.rows:
        essay_id = int(row[id_col])
        if essay_id in new_texts:
            row = row[:text_col] + (new_texts[essay_id],) + row[text_col + 1 :]
        rows.append(row)
    return dataclasses.replace(table, rows=tuple(rows))
