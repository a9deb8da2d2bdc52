import json

import numpy as np
import pytest

from phasecond.data import (
    QAExample,
    SyntheticSpec,
    evaluate,
    exact_match_score,
    f1_score,
    generate_synthetic,
    load_jsonl,
    load_squad,
    normalize_answer,
    tokenize_with_offsets,
    write_jsonl,
)
from phasecond.errors import ConfigError, DataError, DataFormatError
from phasecond.features import exact_match_features

SQUAD_DOC = {
    "version": "1.1",
    "data": [{
        "title": "Super_Bowl_50",
        "paragraphs": [{
            "context": ("The American Football Conference (AFC) champion "
                        "Denver Broncos defeated the National Football "
                        "Conference (NFC) champion Carolina Panthers 24-10."),
            "qas": [
                {"id": "q1",
                 "question": "Which NFL team represented the AFC at Super Bowl 50?",
                 "answers": [{"text": "Denver Broncos",
                              "answer_start": 48}]},
                {"id": "q2",
                 "question": "Who did they defeat?",
                 "answers": [{"text": "Carolina Panthers",
                              "answer_start": 120}]},
            ],
        }],
    }],
}


def write_squad(tmp_path, doc=SQUAD_DOC):
    path = tmp_path / "squad.json"
    path.write_text(json.dumps(doc))
    return path


class TestTokenizer:
    def test_punctuation_detached(self):
        tokens, _ = tokenize_with_offsets("Broncos defeated, 24-10.")
        assert tokens == ["Broncos", "defeated", ",", "24", "-", "10", "."]

    def test_offsets_reconstruct_text(self):
        text = "The champion Denver Broncos (AFC) won 24-10!"
        tokens, offsets = tokenize_with_offsets(text)
        for tok, (s, e) in zip(tokens, offsets):
            assert text[s:e] == tok


class TestLoadSquad:
    def test_answer_maps_to_exact_token_span(self, tmp_path):
        examples = load_squad(write_squad(tmp_path))
        ex = examples[0]
        s, e = ex.gold_spans[0]
        assert ex.passage_tokens[s:e + 1] == ["Denver", "Broncos"]
        assert ex.span_text(s, e) == "Denver Broncos"
        assert not ex.approximate_spans

    def test_mid_token_offset_expands_and_flags(self, tmp_path):
        doc = json.loads(json.dumps(SQUAD_DOC))
        ans = doc["data"][0]["paragraphs"][0]["qas"][0]["answers"][0]
        ans["text"] = "enver Broncos"
        ans["answer_start"] = 49
        examples = load_squad(write_squad(tmp_path, doc))
        ex = examples[0]
        s, e = ex.gold_spans[0]
        assert ex.passage_tokens[s:e + 1] == ["Denver", "Broncos"]
        assert ex.approximate_spans

    def test_empty_answers_mode_dependent(self, tmp_path):
        doc = json.loads(json.dumps(SQUAD_DOC))
        doc["data"][0]["paragraphs"][0]["qas"][0]["answers"] = []
        path = write_squad(tmp_path, doc)
        kept = load_squad(path, training=False)
        assert kept[0].gold_spans == []
        with pytest.raises(DataFormatError):
            load_squad(path, training=True)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{this is not json")
        with pytest.raises(DataFormatError, match="not valid JSON"):
            load_squad(path)

    def test_missing_field_names_path(self, tmp_path):
        doc = {"data": [{"paragraphs": [{"context": "abc", "qas": [{"id": "x"}]}]}]}
        path = write_squad(tmp_path, doc)
        with pytest.raises(DataFormatError, match=r"data\[0\].paragraphs\[0\].qas\[0\]"):
            load_squad(path)


class TestSynthetic:
    def test_deterministic(self, tmp_path):
        spec = SyntheticSpec(n_examples=30, seed=7)
        a = generate_synthetic(spec)
        b = generate_synthetic(spec)
        pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_jsonl(a, pa)
        write_jsonl(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_spans_in_range_and_valid(self):
        examples = generate_synthetic(SyntheticSpec(n_examples=200, vocab_size=50,
                                                    min_len=20, max_len=30, seed=1))
        assert len(examples) == 200
        for ex in examples:
            assert 20 <= len(ex.passage_tokens) <= 30
            (s, e), = ex.gold_spans
            assert 0 <= s <= e < len(ex.passage_tokens)
            assert ex.answer_texts[0] == " ".join(ex.passage_tokens[s:e + 1])

    def test_exact_match_bit_fires_only_at_key(self):
        for ex in generate_synthetic(SyntheticSpec(n_examples=25, seed=3)):
            bits, _ = exact_match_features(ex.passage_tokens, ex.question_tokens)
            (s, _), = ex.gold_spans
            expected = np.zeros(len(ex.passage_tokens))
            expected[s - 1] = 1.0  # the key token right before the answer
            assert bits.tolist() == expected.tolist()

    def test_answer_tokens_disjoint_from_question(self):
        for ex in generate_synthetic(SyntheticSpec(n_examples=25, seed=4)):
            answer_tokens = set(ex.answer_texts[0].split())
            assert answer_tokens.isdisjoint(set(ex.question_tokens))

    def test_infeasible_spec_rejected(self):
        with pytest.raises(ConfigError):
            generate_synthetic(SyntheticSpec(n_examples=1, vocab_size=10))
        with pytest.raises(ConfigError):
            generate_synthetic(SyntheticSpec(n_examples=1, min_len=4, max_len=6))

    def test_jsonl_roundtrip(self, tmp_path):
        examples = generate_synthetic(SyntheticSpec(n_examples=10, seed=5))
        path = tmp_path / "data.jsonl"
        write_jsonl(examples, path)
        loaded = load_jsonl(path)
        assert [ex.id for ex in loaded] == [ex.id for ex in examples]
        for a, b in zip(loaded, examples):
            assert a.passage_tokens == b.passage_tokens
            assert a.gold_spans == b.gold_spans
            assert a.answer_texts == b.answer_texts


class TestMetrics:
    def test_exact(self):
        assert exact_match_score("Denver Broncos", "Denver Broncos") == 1.0
        assert f1_score("Denver Broncos", "Denver Broncos") == 1.0

    def test_partial_overlap(self):
        assert exact_match_score("Broncos", "Denver Broncos") == 0.0
        assert f1_score("Broncos", "Denver Broncos") == pytest.approx(2 / 3)

    def test_article_removal(self):
        assert exact_match_score("the Denver Broncos", "Denver Broncos") == 1.0

    def test_normalization(self):
        assert normalize_answer("The U.S. Army!") == "us army"

    def test_empty_after_normalization(self):
        assert exact_match_score("a an the", "the") == 1.0
        assert f1_score("a an the", "the") == 1.0
        assert f1_score("", "Denver") == 0.0

    def test_evaluate_aggregates(self):
        examples = [
            QAExample(id="1", passage_text="", passage_tokens=[], passage_offsets=[],
                      question_tokens=[], gold_spans=[], answer_texts=["Denver Broncos"]),
            QAExample(id="2", passage_text="", passage_tokens=[], passage_offsets=[],
                      question_tokens=[], gold_spans=[], answer_texts=["blue", "red"]),
        ]
        result = evaluate({"1": "Broncos", "2": "red"}, examples)
        assert result.em == pytest.approx(50.0)
        assert result.f1 == pytest.approx((2 / 3 * 100 + 100) / 2)
        assert result.per_question[0]["f1"] == pytest.approx(66.67, abs=0.01)

    def test_gold_as_prediction_is_perfect(self):
        examples = generate_synthetic(SyntheticSpec(n_examples=20, seed=6))
        preds = {ex.id: ex.answer_texts[0] for ex in examples}
        result = evaluate(preds, examples)
        assert result.em == 100.0 and result.f1 == 100.0

    def test_em_bounded_by_f1(self):
        rng = np.random.default_rng(7)
        words = ["alpha", "beta", "gamma", "delta", "the", "an"]
        for _ in range(300):
            pred = " ".join(rng.choice(words, size=rng.integers(0, 4)))
            gold = " ".join(rng.choice(words, size=rng.integers(1, 4)))
            assert exact_match_score(pred, gold) <= f1_score(pred, gold) + 1e-12

    def test_missing_prediction(self):
        examples = generate_synthetic(SyntheticSpec(n_examples=2, seed=8))
        preds = {examples[0].id: examples[0].answer_texts[0]}
        result = evaluate(preds, examples)
        assert result.em == pytest.approx(50.0)
        with pytest.raises(DataError):
            evaluate(preds, examples, strict=True)
