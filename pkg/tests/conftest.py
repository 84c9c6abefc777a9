"""Shared fixtures: the reference noisy sentence, its m2 blocks, replay
completions reconstructed from those blocks, and synthetic corpora."""

from __future__ import annotations

import random

import pytest

from scrubkit.corpus import EssayRecord, RangeConfig, ScoreRange, make_sentence
from scrubkit.llm_client import DEFAULT_MODEL, CompletionCache, Stage

# One real noisy sentence: an entity placeholder at token 15 and an
# encoding marker inside token 19.
REFERENCE_SOURCE = (
    "I think this because mere cases of suicide are from online bullying, "
    "people get @CAPS2 addicted that they don<U+0092>t exercize and become obeast, "
    "and because it is bad for the environment."
)

# After the encoding stage only the marker fix is retained.
REFERENCE_STAGE1 = REFERENCE_SOURCE.replace("don<U+0092>t", "don't")

# After both stages the placeholder is also replaced; spelling errors
# ("exercize", "obeast") survive untouched.
REFERENCE_CLEANED = REFERENCE_STAGE1.replace("@CAPS2", "too")

CLEAN_TARGET_SPAN = "people get too addicted that they don't exercize and become obeast,"

# Completion outputs for the two stages: the model drops the leading
# pronoun and corrects grammar and spelling along with the noise.
STAGE1_COMPLETION = (
    "think this because mere cases of suicide are from online bullying, "
    "people get @CAPS2 addicted that they don't exercise and become obese, "
    "and because it is bad for the environment."
)
STAGE2_COMPLETION = (
    "think this because many cases of suicide are caused by online bullying, "
    "individuals get too addicted that they don't exercise and become obese, "
    "and because it is harmful to the environment."
)

REFERENCE_M2 = (
    f"S 682|1|2 {REFERENCE_SOURCE}\n"
    "A 0 1|||U:OTHER||||||REQUIRED|||-NONE-|||0\n"
    "A 19 20|||R:VERB|||don't|||REQUIRED|||-NONE-|||0\n"
    "A 20 21|||R:SPELL|||exercise|||REQUIRED|||-NONE-|||0\n"
    "A 23 24|||R:OTHER|||obese,|||REQUIRED|||-NONE-|||0\n"
    "\n"
    f"S 682|1|2 {REFERENCE_STAGE1}\n"
    "A 0 1|||U:OTHER||||||REQUIRED|||-NONE-|||0\n"
    "A 5 6|||R:ADJ|||many|||REQUIRED|||-NONE-|||0\n"
    "A 10 11|||R:OTHER|||caused by|||REQUIRED|||-NONE-|||0\n"
    "A 13 14|||R:NOUN|||individuals|||REQUIRED|||-NONE-|||0\n"
    "A 15 16|||R:OTHER|||too|||REQUIRED|||-NONE-|||0\n"
    "A 20 21|||R:SPELL|||exercise|||REQUIRED|||-NONE-|||0\n"
    "A 23 24|||R:OTHER|||obese,|||REQUIRED|||-NONE-|||0\n"
    "A 28 29|||R:ADJ|||harmful|||REQUIRED|||-NONE-|||0\n"
    "A 29 30|||R:PREP|||to|||REQUIRED|||-NONE-|||0\n"
    "\n"
)


@pytest.fixture
def reference_sentence():
    return make_sentence(REFERENCE_SOURCE, essay_id=682, index=2)


@pytest.fixture
def seeded_cache(tmp_path):
    """Replay cache holding the two stage completions."""
    cache = CompletionCache(tmp_path / "replay.jsonl")
    cache.seed(Stage.FIX_ENCODING, DEFAULT_MODEL, REFERENCE_SOURCE, STAGE1_COMPLETION)
    cache.seed(Stage.REPLACE_ENTITIES, DEFAULT_MODEL, REFERENCE_STAGE1, STAGE2_COMPLETION)
    return cache


# Deterministic mock rules that fully clean both noise classes.
CLEANING_RULES = (
    (r"<U\+0092>", "'"),
    (r"<U\+[0-9A-Fa-f]{4}>", ""),
    (r"@CAPS\d*", "too"),
    (r"@PERSON\d*", "Alice"),
    (r"@[A-Z]+\d*", "thing"),
)

_WORDS = (
    "the essay argues that students learn best when they practice daily "
    "and teachers give feedback because writing improves with effort "
    "while reading builds vocabulary so schools should value both"
).split()

_RANGE_SPECS = {
    1: (2, 12),
    2: (1, 6),
    3: (0, 3),
    4: (0, 3),
    5: (0, 4),
    6: (0, 4),
    7: (0, 30),
    8: (0, 60),
}


def make_range_config() -> RangeConfig:
    return RangeConfig.from_ranges(
        ScoreRange(s, lo, hi) for s, (lo, hi) in _RANGE_SPECS.items()
    )


def range_config_json() -> str:
    import json

    return json.dumps(
        {str(s): {"min": lo, "max": hi} for s, (lo, hi) in _RANGE_SPECS.items()}
    )


def make_noisy_text(rng: random.Random, n_sentences: int = 3) -> str:
    """Random essay text with injected encoding markers and placeholders."""
    sentences = []
    for _ in range(n_sentences):
        words = [rng.choice(_WORDS) for _ in range(rng.randint(5, 12))]
        if rng.random() < 0.5:
            i = rng.randrange(len(words))
            w = words[i]
            words[i] = w[: max(1, len(w) // 2)] + "<U+0092>" + w[max(1, len(w) // 2) :]
        if rng.random() < 0.5:
            words[rng.randrange(len(words))] = rng.choice(
                ["@PERSON1", "@CAPS2", "@ORGANIZATION1"]
            )
        sentence = " ".join(words)
        sentences.append(sentence[0].upper() + sentence[1:] + ".")
    return " ".join(sentences)


def make_synthetic_corpus(
    n_essays: int = 80,
    seed: int = 7,
    noisy: bool = True,
) -> list[EssayRecord]:
    """Essays spread over all 8 prompt sets with random scores inside
    each set's configured range."""
    rng = random.Random(seed)
    config = make_range_config()
    records = []
    for i in range(n_essays):
        essay_set = (i % 8) + 1
        score_range = config.range_for(essay_set)
        if noisy and rng.random() < 0.6:
            text = make_noisy_text(rng)
        else:
            n_words = rng.randint(8, 40)
            words = [rng.choice(_WORDS) for _ in range(n_words)]
            s = " ".join(words)
            text = s[0].upper() + s[1:] + "."
        raw = rng.randint(score_range.min, score_range.max)
        records.append(
            EssayRecord(
                essay_id=i + 1,
                essay_set=essay_set,
                text=text,
                raw_score=raw,
                normalized_score=(raw - score_range.min)
                / (score_range.max - score_range.min),
            )
        )
    return records


def make_length_scored_corpus(n_essays: int = 64, seed: int = 3) -> list[EssayRecord]:
    """Corpus whose score is exactly the essay's token count: every
    essay has a distinct length, so rank metrics of a perfect linear
    model hit 1 on every fold."""
    rng = random.Random(seed)
    records = []
    denom = float(10 + n_essays + 5)
    for i in range(n_essays):
        n_words = 10 + i
        text = " ".join(rng.choice(_WORDS) for _ in range(n_words))
        records.append(
            EssayRecord(
                essay_id=i + 1,
                essay_set=(i % 8) + 1,
                text=text,
                raw_score=n_words,
                normalized_score=n_words / denom,
            )
        )
    return records


def corpus_to_tsv(records) -> bytes:
    lines = ["essay_id\tessay_set\tessay\tdomain1_score"]
    for r in records:
        lines.append(f"{r.essay_id}\t{r.essay_set}\t{r.text}\t{r.raw_score}")
    return ("\n".join(lines) + "\n").encode("utf-8")
