"""Batch front end: detect, denoise, evaluate, metrics.

Exit codes: 0 success, 2 input or validation problem, 3 external
service failure. All input and output paths are explicit flags.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .corpus import (
    load_range_config,
    parse_asap_tsv,
    read_tsv,
    replace_essay_texts,
    segment_sentences,
    write_tsv,
)
from .errors import FormatError, ScrubkitError, TransportError, ValidationError
from .harness import Variant, VariantPair, format_table, run_experiment
from .llm_client import (
    ENV_API_BASE,
    CompletionCache,
    HttpTransport,
    LlmClient,
    ReplayTransport,
    Stage,
)
from .metrics import evaluate_predictions
from .noise import NoiseKind, detect_noise, is_noisy
from .reconcile import denoise_corpus

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SERVICE = 3

_STAGE_NAMES = {"encoding": Stage.FIX_ENCODING, "entities": Stage.REPLACE_ENTITIES}
_VARIANT_NAMES = {
    "original": Variant.ORIGINAL,
    "encoding": Variant.ENCODING_FIXED,
    "cleaned": Variant.CLEANED,
}


def _parse_stages(raw: str) -> list[Stage]:
    stages = []
    for name in raw.split(","):
        name = name.strip()
        if name not in _STAGE_NAMES:
            raise ValidationError(
                f"unknown stage {name!r}; expected encoding and/or entities"
            )
        stages.append(_STAGE_NAMES[name])
    return stages


def _emit(args, payload_json: str, payload_table: str) -> None:
    if args.output:
        prefix = Path(args.output)
        if args.emit in ("json", "both"):
            prefix.with_suffix(".json").write_text(payload_json, encoding="utf-8")
        if args.emit in ("table", "both"):
            prefix.with_suffix(".txt").write_text(payload_table, encoding="utf-8")
    else:
        if args.emit in ("json", "both"):
            print(payload_json)
        if args.emit in ("table", "both"):
            print(payload_table, end="")


def cmd_detect(args) -> int:
    config = load_range_config(args.ranges)
    records = parse_asap_tsv(Path(args.input).read_bytes(), config)
    essays = []
    totals = {"encoding": 0, "entity": 0}
    total_sentences = 0
    noisy_sentences = 0
    for record in records:
        counts = {"encoding": 0, "entity": 0}
        sentences = segment_sentences(record)
        total_sentences += len(sentences)
        for sentence in sentences:
            spans = detect_noise(sentence.tokens)
            if spans:
                noisy_sentences += 1
            for span in spans:
                kind = "encoding" if span.kind is NoiseKind.ENCODING_ARTIFACT else "entity"
                counts[kind] += 1
        totals["encoding"] += counts["encoding"]
        totals["entity"] += counts["entity"]
        essays.append(
            {
                "essay_id": record.essay_id,
                "essay_set": record.essay_set,
                "encoding": counts["encoding"],
                "entity": counts["entity"],
                "sentences": len(sentences),
            }
        )
    pct = round(100.0 * noisy_sentences / total_sentences, 2) if total_sentences else 0.0
    summary = f"{noisy_sentences} noisy sentences ({pct:.2f}%)"
    report = {
        "essays": essays,
        "totals": totals,
        "total_sentences": total_sentences,
        "noisy_sentences": noisy_sentences,
        "noisy_pct": pct,
    }
    table_lines = [
        f"essay {e['essay_id']}: encoding={e['encoding']} entity={e['entity']}"
        for e in essays
    ]
    table_lines.append(
        f"total spans: encoding={totals['encoding']} entity={totals['entity']}"
    )
    table_lines.append(f"total sentences: {total_sentences}")
    table_lines.append(summary)
    _emit(args, json.dumps(report, indent=2), "\n".join(table_lines) + "\n")
    return EXIT_OK


def _build_client(args) -> LlmClient:
    cache = CompletionCache(args.cache) if args.cache else CompletionCache(None)
    api_base = args.api_base or os.environ.get(ENV_API_BASE)
    if api_base:
        transport = HttpTransport(api_base=api_base)
    else:
        # No endpoint configured: run strictly from the response cache.
        transport = ReplayTransport()
    return LlmClient(transport, model=args.model, cache=cache, jobs=args.jobs)


def cmd_denoise(args) -> int:
    config = load_range_config(args.ranges)
    table = read_tsv(Path(args.input).read_bytes())
    records = parse_asap_tsv(table, config)
    stages = _parse_stages(args.stages)
    client = _build_client(args)

    result = denoise_corpus(records, client, stages)
    new_texts = {r.essay_id: r.text for r in result.records}
    Path(args.output).write_bytes(write_tsv(replace_essay_texts(table, new_texts)))

    if args.audit:
        audit_dir = Path(args.audit)
        audit_dir.mkdir(parents=True, exist_ok=True)
        for name, stage in _STAGE_NAMES.items():
            if stage in result.audit.entries:
                (audit_dir / f"{name}.m2").write_text(
                    result.audit.serialize(stage), encoding="utf-8"
                )

    report = result.report
    print(
        f"sentences: {report.total_sentences} total, "
        f"{report.noisy_sentences} noisy, {report.changed_sentences} changed"
    )
    print(f"network calls: {client.network_calls}")
    if report.failures:
        for failure in report.failures:
            print(
                f"failed essay {failure.essay_id} sentence "
                f"{failure.sentence_index}: {failure.error}",
                file=sys.stderr,
            )
        if report.had_transport_failure:
            # The cache keeps all completed work; rerun to resume.
            return EXIT_SERVICE
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = load_range_config(args.ranges)
    pair = VariantPair(
        train_variant=_VARIANT_NAMES[args.train],
        eval_variant=_VARIANT_NAMES[args.eval],
    )
    paths = {
        Variant.ORIGINAL: args.original,
        Variant.ENCODING_FIXED: args.encoding_fixed,
        Variant.CLEANED: args.cleaned,
    }
    variants = {}
    for variant in {pair.train_variant, pair.eval_variant}:
        path = paths[variant]
        if not path:
            raise ValidationError(f"no TSV supplied for variant {variant.value!r}")
        variants[variant] = parse_asap_tsv(Path(path).read_bytes(), config)
    report = run_experiment(variants, pair)
    _emit(args, report.to_json(), format_table(report))
    return EXIT_OK


def cmd_metrics(args) -> int:
    config = load_range_config(args.ranges)
    records = parse_asap_tsv(Path(args.gold).read_bytes(), config)
    gold = [r.normalized_score for r in records]
    preds = []
    for lineno, line in enumerate(
        Path(args.pred).read_text(encoding="utf-8").splitlines(), start=1
    ):
        line = line.strip()
        if not line:
            continue
        try:
            preds.append(float(line))
        except ValueError as exc:
            raise FormatError(f"{args.pred}:{lineno}: not a number: {line!r}") from exc
    report = evaluate_predictions(preds, gold)
    payload = json.dumps(report.to_dict(), indent=2)
    table = "\n".join(
        f"{name.upper()}: " + ("n/a" if value is None else f"{value:.4f}")
        for name, value in report.to_dict().items()
    )
    _emit(args, payload, table + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scrubkit",
        description="Denoise ASAP-style essay corpora and evaluate score predictors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    detect = sub.add_parser("detect", help="count noise spans and noisy sentences")
    detect.add_argument("--input", required=True, help="ASAP TSV file")
    detect.add_argument("--ranges", required=True, help="score-range JSON config")
    detect.add_argument("--emit", choices=("json", "table", "both"), default="table")
    detect.add_argument("--output", help="output path prefix (stdout if absent)")
    detect.set_defaults(handler=cmd_detect)

    denoise = sub.add_parser("denoise", help="produce a denoised corpus variant")
    denoise.add_argument("--input", required=True, help="ASAP TSV file")
    denoise.add_argument("--ranges", required=True, help="score-range JSON config")
    denoise.add_argument("--output", required=True, help="variant TSV to write")
    denoise.add_argument(
        "--stages",
        default="encoding,entities",
        help="comma list of stages: encoding, entities",
    )
    denoise.add_argument("--cache", help="JSON-lines completion cache path")
    denoise.add_argument("--audit", help="directory for per-stage audit .m2 files")
    denoise.add_argument("--api-base", help=f"completions endpoint (or {ENV_API_BASE})")
    denoise.add_argument("--model", default="gpt-3.5-turbo-instruct")
    denoise.add_argument("--jobs", type=int, default=4)
    denoise.add_argument("--seed", type=int, default=0, help="reserved for stochastic predictors")
    denoise.set_defaults(handler=cmd_denoise)

    evaluate = sub.add_parser("evaluate", help="prompt-wise 8-fold cross-validation")
    evaluate.add_argument("--ranges", required=True)
    evaluate.add_argument("--original", help="original-variant TSV")
    evaluate.add_argument("--encoding-fixed", help="encoding-fixed-variant TSV")
    evaluate.add_argument("--cleaned", help="cleaned-variant TSV")
    evaluate.add_argument("--train", choices=sorted(_VARIANT_NAMES), required=True)
    evaluate.add_argument("--eval", choices=sorted(_VARIANT_NAMES), required=True)
    evaluate.add_argument("--emit", choices=("json", "table", "both"), default="both")
    evaluate.add_argument("--output", help="output path prefix (stdout if absent)")
    evaluate.add_argument("--seed", type=int, default=0)
    evaluate.set_defaults(handler=cmd_evaluate)

    metrics_cmd = sub.add_parser(
        "metrics", help="score an external prediction file against gold"
    )
    metrics_cmd.add_argument(
        "--pred", required=True, help="one normalized prediction per line"
    )
    metrics_cmd.add_argument("--gold", required=True, help="gold ASAP TSV")
    metrics_cmd.add_argument("--ranges", required=True)
    metrics_cmd.add_argument("--emit", choices=("json", "table", "both"), default="json")
    metrics_cmd.add_argument("--output", help="output path prefix (stdout if absent)")
    metrics_cmd.set_defaults(handler=cmd_metrics)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except TransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SERVICE
    except (FormatError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ScrubkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
