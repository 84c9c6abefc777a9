"""scrubkit: denoising and evaluation toolkit for ASAP-style essay corpora."""

from .corpus import (
    EssayRecord,
    RangeConfig,
    ScoreRange,
    Sentence,
    load_range_config,
    make_sentence,
    normalize_score,
    parse_asap_tsv,
    segment_sentences,
    write_asap_tsv,
)
from .errors import (
    EmptyCompletionError,
    FormatError,
    NumericalError,
    ScrubkitError,
    TransportError,
    ValidationError,
)
from .harness import (
    BaselinePredictor,
    FoldSpec,
    RunReport,
    Variant,
    VariantPair,
    essay_features,
    fit_baseline,
    format_table,
    make_folds,
    predict,
    run_experiment,
)
from .llm_client import (
    CompletionCache,
    CompletionRecord,
    LlmClient,
    PromptTemplate,
    Stage,
    cache_key,
    mock_client,
    replay_client,
    template_for,
)
from .m2 import Edit, M2Entry, align, alignment_ops, parse_m2, serialize_m2
from .metrics import (
    EvalReport,
    PerplexityReport,
    evaluate_predictions,
    load_token_logprobs,
    perplexity,
    qwk,
    rank_and_linear_stats,
)
from .noise import NoiseKind, NoiseSpan, detect_noise, is_noisy, tokenize
from .reconcile import (
    DenoiseAudit,
    DenoiseReport,
    DenoiseResult,
    apply_edits,
    denoise_corpus,
    denoise_sentence,
    detokenize,
    filter_edits,
)

__version__ = "0.1.0"
