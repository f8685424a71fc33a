from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from edfner.context import ContextWindow, context_for, ground, make_document, segment
from edfner.types import Mention, normalize


class TestSegment:
    def test_two_paragraphs_two_sentences(self):
        sentences, paragraphs = segment("A b.\n\nC d.")
        assert len(paragraphs) == 2
        assert len(sentences) == 2

    def test_empty_text(self):
        assert segment("") == ((), ())

    def test_no_terminator_is_one_sentence(self):
        sentences, paragraphs = segment("No terminator")
        assert len(sentences) == 1
        assert sentences[0] == (0, len("No terminator"))

    def test_terminator_mid_paragraph(self):
        text = "First sentence. Second one! Third?"
        sentences, _ = segment(text)
        assert [text[a:b] for a, b in sentences] == [
            "First sentence.", "Second one!", "Third?",
        ]

    def test_hard_newline_splits_sentences(self):
        text = "HEADER:\nBody text here."
        sentences, paragraphs = segment(text)
        assert [text[a:b] for a, b in sentences] == ["HEADER:", "Body text here."]
        assert len(paragraphs) == 1

    @given(st.text(alphabet=" \n.ab?!", max_size=80))
    def test_paragraphs_cover_non_whitespace_exactly_once(self, text):
        # make_document re-validates the coverage invariant internally
        make_document("d", text)

    @given(st.text(alphabet=" \n.ab?!", max_size=80))
    def test_sentences_nest_in_paragraphs(self, text):
        sentences, paragraphs = segment(text)
        for s in sentences:
            assert any(p[0] <= s[0] and s[1] <= p[1] for p in paragraphs)


class TestGround:
    def test_multiple_case_insensitive_occurrences(self):
        doc = make_document("d", "Aspirin. aspirin")
        assert ground(doc, "aspirin") == ((0, 7), (9, 16))

    def test_absent_surface(self):
        doc = make_document("d", "Aspirin. aspirin")
        assert ground(doc, "warfarin") == ()

    def test_whitespace_tolerant(self):
        doc = make_document("d", "Lives in New York today")
        spans = ground(doc, "new  york")
        assert len(spans) == 1
        assert doc.slice(spans[0]) == "New York"

    def test_grounded_text_normalizes_to_surface(self):
        doc = make_document("d", "Took ASPIRIN and aspirin.")
        for span in ground(doc, "Aspirin"):
            assert normalize(doc.slice(span)) == normalize("Aspirin")


def _mention(doc, surface):
    return Mention(surface=surface, normalized=normalize(surface), spans=ground(doc, surface))


class TestContextFor:
    doc = make_document(
        "d",
        "HISTORY:\nThe patient is well. Started aspirin yesterday.\n\nPLAN:\nContinue care.",
    )

    def test_mode_none_is_empty(self):
        assert context_for(self.doc, _mention(self.doc, "aspirin"), "none").text == ""

    def test_mode_document_is_full_text(self):
        assert context_for(self.doc, _mention(self.doc, "aspirin"), "document").text == self.doc.text

    def test_mode_sentence_is_enclosing_sentence(self):
        window = context_for(self.doc, _mention(self.doc, "aspirin"), "sentence")
        assert window.text == "Started aspirin yesterday."

    def test_mode_paragraph_is_enclosing_block(self):
        window = context_for(self.doc, _mention(self.doc, "aspirin"), "paragraph")
        assert window.text == "HISTORY:\nThe patient is well. Started aspirin yesterday."

    def test_ungroundable_falls_back_to_empty(self, caplog):
        mention = Mention(surface="warfarin", normalized="warfarin", spans=())
        window = context_for(self.doc, mention, "sentence")
        assert window.text == ""

    def test_mode_windows_nest(self):
        mention = _mention(self.doc, "aspirin")
        none = context_for(self.doc, mention, "none").text
        sentence = context_for(self.doc, mention, "sentence").text
        paragraph = context_for(self.doc, mention, "paragraph").text
        document = context_for(self.doc, mention, "document").text
        assert none in sentence
        assert sentence in paragraph
        assert paragraph in document

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            context_for(self.doc, _mention(self.doc, "aspirin"), "chapter")
        with pytest.raises(ValueError):
            ContextWindow(mode="chapter", text="")
