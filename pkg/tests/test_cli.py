import json

import pytest

from scrubkit.cli import main
from scrubkit.corpus import parse_asap_tsv
from scrubkit.llm_client import DEFAULT_MODEL, CompletionCache, Stage, cache_key
from scrubkit.metrics import evaluate_predictions
from scrubkit.noise import NoiseKind, detect_noise, tokenize

from conftest import (
    CLEAN_TARGET_SPAN,
    REFERENCE_SOURCE,
    REFERENCE_STAGE1,
    STAGE1_COMPLETION,
    STAGE2_COMPLETION,
    corpus_to_tsv,
    make_range_config,
    make_synthetic_corpus,
    range_config_json,
)


@pytest.fixture
def ranges_path(tmp_path):
    path = tmp_path / "ranges.json"
    path.write_text(range_config_json())
    return str(path)


@pytest.fixture
def reference_corpus_tsv(tmp_path):
    data = (
        "essay_id\tessay_set\tessay\tdomain1_score\n"
        f"682\t1\t{REFERENCE_SOURCE}\t8\n"
        "683\t1\tA clean essay with no markers at all.\t4\n"
    ).encode("utf-8")
    path = tmp_path / "corpus.tsv"
    path.write_bytes(data)
    return str(path)


@pytest.fixture
def seeded_cache_path(tmp_path):
    path = tmp_path / "cache.jsonl"
    cache = CompletionCache(path)
    cache.seed(Stage.FIX_ENCODING, DEFAULT_MODEL, REFERENCE_SOURCE, STAGE1_COMPLETION)
    cache.seed(
        Stage.REPLACE_ENTITIES, DEFAULT_MODEL, REFERENCE_STAGE1, STAGE2_COMPLETION
    )
    return str(path)


class TestDetect:
    def test_reference_corpus_counts(self, capsys, reference_corpus_tsv, ranges_path):
        code = main(
            ["detect", "--input", reference_corpus_tsv, "--ranges", ranges_path, "--emit", "json"]
        )
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["totals"] == {"encoding": 1, "entity": 1}
        assert report["noisy_sentences"] == 1
        assert report["total_sentences"] == 2
        assert report["noisy_pct"] == 50.0

    def test_clean_corpus_line(self, capsys, tmp_path, ranges_path):
        path = tmp_path / "clean.tsv"
        path.write_bytes(
            b"essay_id\tessay_set\tessay\tdomain1_score\n1\t1\tAll clean here.\t8\n"
        )
        code = main(["detect", "--input", str(path), "--ranges", ranges_path])
        assert code == 0
        out = capsys.readouterr().out
        assert "0 noisy sentences (0.00%)" in out

    def test_percentage_two_decimals(self, capsys, tmp_path, ranges_path):
        rows = ["essay_id\tessay_set\tessay\tdomain1_score"]
        rows.append("1\t1\tOne @CAPS1 noisy. Two clean here. Three clean too.\t8")
        path = tmp_path / "c.tsv"
        path.write_bytes(("\n".join(rows) + "\n").encode())
        main(["detect", "--input", str(path), "--ranges", ranges_path])
        out = capsys.readouterr().out
        assert "1 noisy sentences (33.33%)" in out

    def test_format_error_exit_code(self, tmp_path, ranges_path, capsys):
        path = tmp_path / "bad.tsv"
        path.write_bytes(b"essay_id\tessay_set\n1\t1\n")
        assert main(["detect", "--input", str(path), "--ranges", ranges_path]) == 2
        assert "error:" in capsys.readouterr().err


class TestDenoise:
    def _run(self, tmp_path, reference_corpus_tsv, ranges_path, cache, stages):
        out_path = tmp_path / "variant.tsv"
        audit_dir = tmp_path / "audit"
        code = main(
            [
                "denoise",
                "--input", reference_corpus_tsv,
                "--ranges", ranges_path,
                "--output", str(out_path),
                "--stages", stages,
                "--cache", cache,
                "--audit", str(audit_dir),
            ]
        )
        return code, out_path, audit_dir

    def test_both_stages_produce_cleaned_variant(
        self, tmp_path, reference_corpus_tsv, ranges_path, seeded_cache_path
    ):
        code, out_path, audit_dir = self._run(
            tmp_path, reference_corpus_tsv, ranges_path, seeded_cache_path,
            "encoding,entities",
        )
        assert code == 0
        records = parse_asap_tsv(out_path.read_bytes(), make_range_config())
        assert CLEAN_TARGET_SPAN in records[0].text
        assert records[0].raw_score == 8
        assert records[1].text == "A clean essay with no markers at all."
        assert (audit_dir / "encoding.m2").exists()
        assert (audit_dir / "entities.m2").exists()
        audit_text = (audit_dir / "encoding.m2").read_text()
        assert audit_text.startswith("S 682|1|0 ")

    def test_encoding_stage_only(
        self, tmp_path, reference_corpus_tsv, ranges_path, seeded_cache_path
    ):
        code, out_path, _ = self._run(
            tmp_path, reference_corpus_tsv, ranges_path, seeded_cache_path, "encoding"
        )
        assert code == 0
        records = parse_asap_tsv(out_path.read_bytes(), make_range_config())
        assert "@CAPS2" in records[0].text
        assert "don't" in records[0].text

    def test_warm_cache_rerun_identical_zero_network(
        self, tmp_path, reference_corpus_tsv, ranges_path, seeded_cache_path, capsys
    ):
        _, out1, _ = self._run(
            tmp_path, reference_corpus_tsv, ranges_path, seeded_cache_path,
            "encoding,entities",
        )
        first = out1.read_bytes()
        capsys.readouterr()
        code, out2, _ = self._run(
            tmp_path, reference_corpus_tsv, ranges_path, seeded_cache_path,
            "encoding,entities",
        )
        assert code == 0
        assert out2.read_bytes() == first
        assert "network calls: 0" in capsys.readouterr().out

    def test_incomplete_cache_exits_3_and_keeps_progress(
        self, tmp_path, reference_corpus_tsv, ranges_path, capsys
    ):
        cache_path = tmp_path / "partial.jsonl"
        CompletionCache(cache_path).seed(
            Stage.FIX_ENCODING, DEFAULT_MODEL, REFERENCE_SOURCE, STAGE1_COMPLETION
        )
        code, out_path, _ = self._run(
            tmp_path, reference_corpus_tsv, ranges_path, str(cache_path),
            "encoding,entities",
        )
        assert code == 3
        # Partial progress: output written with the original text kept.
        records = parse_asap_tsv(out_path.read_bytes(), make_range_config())
        assert records[0].text == REFERENCE_SOURCE
        assert cache_path.exists()

    def test_unknown_stage_rejected(self, tmp_path, reference_corpus_tsv, ranges_path):
        code = main(
            [
                "denoise",
                "--input", reference_corpus_tsv,
                "--ranges", ranges_path,
                "--output", str(tmp_path / "x.tsv"),
                "--stages", "bogus",
            ]
        )
        assert code == 2

    def test_detect_after_denoise_shows_no_entities(
        self, tmp_path, reference_corpus_tsv, ranges_path, seeded_cache_path, capsys
    ):
        _, out_path, _ = self._run(
            tmp_path, reference_corpus_tsv, ranges_path, seeded_cache_path,
            "encoding,entities",
        )
        capsys.readouterr()
        main(["detect", "--input", str(out_path), "--ranges", ranges_path, "--emit", "json"])
        report = json.loads(capsys.readouterr().out)
        assert report["totals"]["entity"] == 0


class TestEvaluate:
    def _paths(self, tmp_path):
        records = make_synthetic_corpus(64, seed=21)
        cleaned = [
            r if "<U+0092>" not in r.text else
            type(r)(r.essay_id, r.essay_set, r.text.replace("<U+0092>", "'"), r.raw_score, r.normalized_score)
            for r in records
        ]
        original = tmp_path / "original.tsv"
        cleaned_path = tmp_path / "cleaned.tsv"
        original.write_bytes(corpus_to_tsv(records))
        cleaned_path.write_bytes(corpus_to_tsv(cleaned))
        return str(original), str(cleaned_path)

    def test_cleaned_vs_original_table(self, capsys, tmp_path, ranges_path):
        original, cleaned = self._paths(tmp_path)
        code = main(
            [
                "evaluate",
                "--ranges", ranges_path,
                "--original", original,
                "--cleaned", cleaned,
                "--train", "cleaned",
                "--eval", "original",
                "--emit", "table",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert out.startswith("Cleaned\n")
        header = out.splitlines()[1]
        for i in range(1, 9):
            assert f"Prompt {i}" in header
        assert "Average" in header

    def test_original_json(self, capsys, tmp_path, ranges_path):
        original, _ = self._paths(tmp_path)
        code = main(
            [
                "evaluate",
                "--ranges", ranges_path,
                "--original", original,
                "--train", "original",
                "--eval", "original",
                "--emit", "json",
            ]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["pair"]["label"] == "Original"
        assert len(payload["per_fold"]) == 8

    def test_mismatched_variants_exit_2(self, tmp_path, ranges_path, capsys):
        original, _ = self._paths(tmp_path)
        records = make_synthetic_corpus(64, seed=21)
        records[0] = type(records[0])(
            records[0].essay_id,
            records[0].essay_set,
            records[0].text,
            records[0].raw_score - 1,
            records[0].normalized_score,
        )
        bad = tmp_path / "bad.tsv"
        bad.write_bytes(corpus_to_tsv(records))
        code = main(
            [
                "evaluate",
                "--ranges", ranges_path,
                "--original", original,
                "--cleaned", str(bad),
                "--train", "cleaned",
                "--eval", "original",
            ]
        )
        assert code == 2

    def test_missing_variant_file_exit_2(self, tmp_path, ranges_path):
        original, _ = self._paths(tmp_path)
        code = main(
            [
                "evaluate",
                "--ranges", ranges_path,
                "--original", original,
                "--train", "cleaned",
                "--eval", "original",
            ]
        )
        assert code == 2

    def test_output_files_written(self, tmp_path, ranges_path):
        original, cleaned = self._paths(tmp_path)
        prefix = tmp_path / "report"
        code = main(
            [
                "evaluate",
                "--ranges", ranges_path,
                "--original", original,
                "--cleaned", cleaned,
                "--train", "cleaned",
                "--eval", "cleaned",
                "--emit", "both",
                "--output", str(prefix),
            ]
        )
        assert code == 0
        payload = json.loads(prefix.with_suffix(".json").read_text())
        assert payload["pair"]["label"] == "Cleaned'"
        assert prefix.with_suffix(".txt").read_text().startswith("Cleaned'")


class TestMetrics:
    def _gold(self, tmp_path):
        records = make_synthetic_corpus(40, seed=33, noisy=False)
        path = tmp_path / "gold.tsv"
        path.write_bytes(corpus_to_tsv(records))
        return path, [r.normalized_score for r in records]

    def test_perfect_predictions(self, capsys, tmp_path, ranges_path):
        gold_path, gold = self._gold(tmp_path)
        pred_path = tmp_path / "pred.txt"
        pred_path.write_text("".join(f"{g}\n" for g in gold))
        code = main(
            [
                "metrics",
                "--pred", str(pred_path),
                "--gold", str(gold_path),
                "--ranges", ranges_path,
            ]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["qwk"] == 1.0
        assert payload["mse"] == 0.0

    def test_reversed_ranks(self, capsys, tmp_path, ranges_path):
        gold_path, gold = self._gold(tmp_path)
        preds = [1.0 - g for g in gold]
        pred_path = tmp_path / "pred.txt"
        pred_path.write_text("".join(f"{p}\n" for p in preds))
        main(
            [
                "metrics",
                "--pred", str(pred_path),
                "--gold", str(gold_path),
                "--ranges", ranges_path,
            ]
        )
        payload = json.loads(capsys.readouterr().out)
        assert payload["krc"] == pytest.approx(-1.0, abs=1e-12)

    def test_matches_library_evaluation(self, capsys, tmp_path, ranges_path):
        import random

        gold_path, gold = self._gold(tmp_path)
        rng = random.Random(1234)
        preds = [rng.random() for _ in gold]
        pred_path = tmp_path / "pred.txt"
        pred_path.write_text("".join(f"{p!r}\n" for p in preds))
        main(
            [
                "metrics",
                "--pred", str(pred_path),
                "--gold", str(gold_path),
                "--ranges", ranges_path,
            ]
        )
        payload = json.loads(capsys.readouterr().out)
        expected = evaluate_predictions(preds, gold)
        for name, value in expected.to_dict().items():
            assert payload[name] == pytest.approx(value, abs=1e-12)

    def test_length_mismatch_exit_2(self, tmp_path, ranges_path, capsys):
        gold_path, gold = self._gold(tmp_path)
        pred_path = tmp_path / "pred.txt"
        pred_path.write_text("0.5\n0.25\n")
        code = main(
            [
                "metrics",
                "--pred", str(pred_path),
                "--gold", str(gold_path),
                "--ranges", ranges_path,
            ]
        )
        assert code == 2
        assert "mismatch" in capsys.readouterr().err

    def test_bad_prediction_value_exit_2(self, tmp_path, ranges_path):
        gold_path, _ = self._gold(tmp_path)
        pred_path = tmp_path / "pred.txt"
        pred_path.write_text("not-a-number\n")
        code = main(
            [
                "metrics",
                "--pred", str(pred_path),
                "--gold", str(gold_path),
                "--ranges", ranges_path,
            ]
        )
        assert code == 2

    def test_missing_file_exit_2(self, tmp_path, ranges_path):
        gold_path, _ = self._gold(tmp_path)
        code = main(
            [
                "metrics",
                "--pred", str(tmp_path / "absent.txt"),
                "--gold", str(gold_path),
                "--ranges", ranges_path,
            ]
        )
        assert code == 2
