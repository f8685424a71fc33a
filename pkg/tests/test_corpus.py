from __future__ import annotations

import json

import pytest

from edfner.corpus import (
    CorpusFormatError,
    Gazetteer,
    demo_gazetteer,
    generate_synthetic,
    load_bio,
    load_gazetteer,
    load_jsonl,
    save_gazetteer,
    write_jsonl,
)
from edfner.types import normalize


class TestJsonl:
    def test_single_document(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(
            '{"id":"d1","text":"Started aspirin.","entities":'
            '[{"text":"aspirin","start":8,"end":15,"type":"treatment"}]}\n'
        )
        corpus = load_jsonl(str(path))
        assert len(corpus.documents) == 1
        (gold,) = corpus.gold["d1"]
        assert gold.surface == "aspirin"
        assert gold.polarity == "unspecified"

    def test_negative_polarity(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(
            '{"id":"d1","text":"Denies chest pain.","entities":'
            '[{"text":"chest pain","start":7,"end":17,"type":"problem","polarity":"negative"}]}\n'
        )
        corpus = load_jsonl(str(path))
        assert corpus.gold["d1"][0].polarity == "negative"

    def test_span_text_mismatch(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(
            '{"id":"d1","text":"Started aspirin.","entities":'
            '[{"text":"warfarin","start":8,"end":15,"type":"treatment"}]}\n'
        )
        with pytest.raises(CorpusFormatError, match="warfarin"):
            load_jsonl(str(path))

    def test_unknown_polarity(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(
            '{"id":"d1","text":"aspirin","entities":'
            '[{"text":"aspirin","start":0,"end":7,"type":"t","polarity":"sometimes"}]}\n'
        )
        with pytest.raises(CorpusFormatError, match="polarity"):
            load_jsonl(str(path))

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"id":"d1","text":"x","entities":[]}\n{bad json\n')
        with pytest.raises(CorpusFormatError, match=":2"):
            load_jsonl(str(path))

    def test_round_trip(self, tmp_path, small_corpus):
        first = tmp_path / "a.jsonl"
        second = tmp_path / "b.jsonl"
        write_jsonl(small_corpus, str(first))
        reloaded = load_jsonl(str(first))
        write_jsonl(reloaded, str(second))
        assert first.read_text() == second.read_text()
        assert [d.text for d in reloaded.documents] == [d.text for d in small_corpus.documents]
        assert reloaded.gold == small_corpus.gold


class TestBioReader:
    def _load(self, tmp_path, lines):
        path = tmp_path / "c.bio"
        path.write_text("\n".join(lines) + "\n")
        return load_bio(str(path))

    def test_single_entity(self, tmp_path):
        corpus = self._load(tmp_path, ["took\tO", "aspirin\tB-treatment"])
        (gold,) = corpus.gold["d0001"]
        assert (gold.surface, gold.type) == ("aspirin", "treatment")

    def test_multi_token_entity(self, tmp_path):
        corpus = self._load(tmp_path, ["New\tB-loc", "York\tI-loc"])
        (gold,) = corpus.gold["d0001"]
        assert gold.surface == "New York"
        assert corpus.documents[0].text[gold.span[0]:gold.span[1]] == "New York"

    def test_orphan_inside_tag_promoted(self, tmp_path, caplog):
        with caplog.at_level("WARNING"):
            corpus = self._load(tmp_path, ["York\tI-loc"])
        (gold,) = corpus.gold["d0001"]
        assert gold.surface == "York"
        assert any("I-loc" in r.message for r in caplog.records)

    def test_blank_line_starts_new_document(self, tmp_path):
        corpus = self._load(tmp_path, ["a\tB-x", "", "b\tB-x"])
        assert len(corpus.documents) == 2

    def test_unknown_tag_shape(self, tmp_path):
        with pytest.raises(CorpusFormatError, match="tag shape"):
            self._load(tmp_path, ["a\tQ-x"])

    def test_missing_label_column(self, tmp_path):
        with pytest.raises(CorpusFormatError, match="token<TAB>label"):
            self._load(tmp_path, ["just-a-token"])


class TestGazetteer:
    def test_contamination_must_be_disjoint(self):
        with pytest.raises(ValueError, match="overlap"):
            Gazetteer(
                subtypes={"drug": ("aspirin",)},
                targets={"drug": "treatment"},
                contamination={"drug": ("Aspirin",)},
            )

    def test_every_subtype_needs_target(self):
        with pytest.raises(ValueError, match="target"):
            Gazetteer(subtypes={"drug": ("aspirin",)}, targets={})

    def test_empty_surface_list_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            Gazetteer(subtypes={"drug": ()}, targets={"drug": "treatment"})

    def test_json_round_trip(self, tmp_path, treatment_gazetteer):
        path = tmp_path / "g.json"
        save_gazetteer(treatment_gazetteer, str(path))
        loaded = load_gazetteer(str(path))
        assert loaded == treatment_gazetteer


class TestBioCrossModuleAgreement:
    """The file reader and the model-output parser must decode tags identically."""

    import random as _random

    def test_reader_and_parser_agree_on_random_sequences(self, tmp_path):
        from edfner.backend import parse_bio, render_bio

        rng = self._random.Random(515)
        words = ["alpha", "beta", "gamma", "delta", "x1"]
        types = ["drug", "loc"]
        for trial in range(100):
            pairs = []
            for _ in range(rng.randint(1, 12)):
                word = rng.choice(words)
                roll = rng.random()
                if roll < 0.5:
                    label = "O"
                elif roll < 0.8:
                    label = "B-" + rng.choice(types)
                else:
                    label = "I-" + rng.choice(types)
                pairs.append((word, label))
            path = tmp_path / f"seq{trial}.bio"
            path.write_text("\n".join(f"{w}\t{label}" for w, label in pairs) + "\n")
            corpus = load_bio(str(path))
            from_reader = [(g.surface, g.type) for g in corpus.gold["d0001"]]
            from_parser = parse_bio(render_bio(pairs))
            assert from_reader == from_parser


class TestSynthetic:
    def test_deterministic_for_fixed_seed(self, treatment_gazetteer, tmp_path):
        a = generate_synthetic(seed=7, n_docs=3, gazetteer=treatment_gazetteer)
        b = generate_synthetic(seed=7, n_docs=3, gazetteer=treatment_gazetteer)
        pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_jsonl(a, str(pa))
        write_jsonl(b, str(pb))
        assert pa.read_bytes() == pb.read_bytes()

    def test_different_seed_differs(self, treatment_gazetteer):
        a = generate_synthetic(seed=7, n_docs=3, gazetteer=treatment_gazetteer)
        b = generate_synthetic(seed=8, n_docs=3, gazetteer=treatment_gazetteer)
        assert [d.text for d in a.documents] != [d.text for d in b.documents]

    def test_gold_spans_match_surfaces(self, treatment_gazetteer):
        corpus = generate_synthetic(seed=11, n_docs=100, gazetteer=treatment_gazetteer)
        for doc in corpus.documents:
            for g in corpus.gold[doc.id]:
                assert doc.text[g.span[0]:g.span[1]] == g.surface

    def test_negation_templates_mark_negative_polarity(self, treatment_gazetteer):
        corpus = generate_synthetic(
            seed=5, n_docs=50, gazetteer=treatment_gazetteer, negation_rate=0.5
        )
        from edfner.corpus import NEGATION_CUES

        saw_negative = False
        for doc in corpus.documents:
            sentences = [doc.slice(s) for s in doc.sentences]
            for g in corpus.gold[doc.id]:
                enclosing = next(
                    doc.slice(s) for s in doc.sentences if s[0] <= g.span[0] < s[1]
                )
                has_cue = any(c in enclosing.lower() for c in NEGATION_CUES)
                assert has_cue == (g.polarity == "negative")
                saw_negative |= g.polarity == "negative"
        assert saw_negative

    def test_surfaces_unique_per_document(self, treatment_gazetteer):
        corpus = generate_synthetic(seed=9, n_docs=50, gazetteer=treatment_gazetteer)
        for doc_id, golds in corpus.gold.items():
            normalized = [normalize(g.surface) for g in golds]
            assert len(normalized) == len(set(normalized))

    def test_requires_at_least_one_doc(self, treatment_gazetteer):
        with pytest.raises(ValueError):
            generate_synthetic(seed=1, n_docs=0, gazetteer=treatment_gazetteer)

    def test_demo_gazetteers_are_substring_free(self):
        for target in ("treatment", "problem"):
            g = demo_gazetteer(target)
            surfaces = [normalize(s) for s in g.all_surfaces()]
            for i, a in enumerate(surfaces):
                for j, b in enumerate(surfaces):
                    assert i == j or a not in b
