from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from edfner.types import (
    Document,
    EntityTypeSpec,
    FilterVerdict,
    GoldEntity,
    Mention,
    NormalizationConfig,
    SubTypeSet,
    entity_type,
    normalize,
    tokens_of,
)


class TestNormalize:
    def test_lowercase_and_trim(self):
        assert normalize("  Aspirin ") == "aspirin"

    def test_empty_identity(self):
        assert normalize("") == ""

    def test_collapse_internal_whitespace(self):
        assert normalize("New   York") == "new york"

    def test_punctuation_kept_by_default(self):
        assert normalize("q.d.") == "q.d."

    def test_strip_edge_punctuation(self):
        cfg = NormalizationConfig(strip_edge_punctuation=True)
        assert normalize("(aspirin).", cfg) == "aspirin"
        assert normalize("...", cfg) == ""

    @given(st.text(max_size=60), st.booleans(), st.booleans(), st.booleans())
    def test_idempotent(self, s, lower, collapse, strip):
        cfg = NormalizationConfig(
            lowercase=lower, collapse_whitespace=collapse, strip_edge_punctuation=strip
        )
        once = normalize(s, cfg)
        assert normalize(once, cfg) == once


class TestTokens:
    def test_splits_on_non_alnum(self):
        assert tokens_of("his aspirin") == {"his", "aspirin"}
        assert tokens_of("x-ray q.d.") == {"x", "ray", "q", "d"}

    def test_punctuation_only_falls_back_to_whole_string(self):
        assert tokens_of("...") == {"..."}


class TestDocument:
    def test_valid_segmentation(self):
        doc = Document(id="d1", text="ab cd", sentences=((0, 5),), paragraphs=((0, 5),))
        assert doc.slice((0, 2)) == "ab"

    def test_range_outside_text_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            Document(id="d1", text="ab", sentences=(), paragraphs=((0, 5),))

    def test_overlapping_ranges_rejected(self):
        with pytest.raises(ValueError, match="overlap"):
            Document(id="d1", text="abcd", sentences=(), paragraphs=((0, 3), (2, 4)))

    def test_uncovered_text_rejected(self):
        with pytest.raises(ValueError, match="not covered"):
            Document(id="d1", text="ab cd", sentences=(), paragraphs=((0, 2),))


class TestSubTypeSet:
    def test_preserves_order(self):
        s = SubTypeSet(target="treatment", source="annotation", subtypes=("b", "a"))
        assert list(s) == ["b", "a"]

    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="empty"):
            SubTypeSet(target="treatment", source="annotation", subtypes=())

    def test_rejects_case_insensitive_duplicates(self):
        with pytest.raises(ValueError, match="duplicate"):
            SubTypeSet(target="t", source="custom", subtypes=("Drug", "DRUG"))


class TestFilterVerdict:
    def test_answer_must_match_probability(self):
        FilterVerdict(answer="no", p_no=0.5, accepted=False)
        FilterVerdict(answer="yes", p_no=0.2, accepted=True)
        with pytest.raises(ValueError):
            FilterVerdict(answer="no", p_no=0.4, accepted=False)
        with pytest.raises(ValueError):
            FilterVerdict(answer="yes", p_no=0.5, accepted=True)


class TestGoldEntity:
    def test_default_polarity(self):
        g = GoldEntity(surface="aspirin", span=(0, 7), type="treatment")
        assert g.polarity == "unspecified"

    def test_unknown_polarity_rejected(self):
        with pytest.raises(ValueError, match="polarity"):
            GoldEntity(surface="a", span=(0, 1), type="t", polarity="maybe")

    def test_span_mismatch_detected(self):
        doc = Document(id="d1", text="took aspirin", paragraphs=((0, 12),))
        g = GoldEntity(surface="aspirin", span=(0, 7), type="treatment")
        with pytest.raises(ValueError, match="aspirin"):
            g.check_against(doc)


class TestEntityTypeSpec:
    def test_blank_name_rejected(self):
        with pytest.raises(ValueError):
            EntityTypeSpec(name="  ")

    def test_stock_descriptions(self):
        t = entity_type("treatment")
        assert t.description.startswith("a procedure or substance")
        assert entity_type("adverse drug").requires_context


class TestMention:
    def test_accepted_without_verdict(self):
        m = Mention(surface="aspirin", normalized="aspirin")
        assert m.accepted

    def test_empty_surface_rejected(self):
        with pytest.raises(ValueError):
            Mention(surface="", normalized="")
