from __future__ import annotations

import pytest

from edfner.config import echo_backend
from edfner.decomposer import (
    DecompositionParseError,
    UnknownDecompositionError,
    decompose,
    decompose_llm,
    ensure_target_included,
    load_custom_list,
    parse_subtype_response,
)
from edfner.types import EntityTypeSpec, SubTypeSet

# The curated registries, frozen list by list. Retrieval iterates these in
# order, so order matters as much as membership.
ANNOTATION_GOLDEN = {
    "treatment": [
        "medical treatment", "medical intervention", "medical procedure", "medical device",
        "treatment", "biological substance", "drug", "medication",
    ],
    "problem": [
        "medical problem", "disease", "syndrome", "symptom", "medical condition", "behavior",
        "virus", "bacterium", "injury", "abnormality", "abnormal test result", "mental status",
    ],
    "test": [
        "medical test", "medical procedure", "medical panel", "medical examination",
        "medical evaluation", "test", "procedure", "laboratory procedure",
        "diagnostic procedure", "panel", "measure", "physiologic measure", "vital sign",
        "examination", "evaluation",
    ],
    "clinical department": [
        "clinical department", "medical department", "clinical unit", "clinical service",
        "clinical practice", "clinical room", "department", "location", "building", "hospital",
    ],
    "disease/disorder": [
        "medical problem", "disease", "syndrome", "symptom", "medical condition", "behavior",
        "virus", "bacterium", "injury", "abnormality", "abnormal test result",
    ],
    "adverse drug": ["drug"],
    "adverse drug event": ["medical problem"],
}

CHATGPT_GOLDEN = {
    "treatment": [
        "medical treatment", "medication", "medical procedure", "therapy",
        "medical intervention", "consultation", "counseling", "discharge instruction",
        "supportive care",
    ],
    "problem": [
        "medical problem", "medical diagnosis", "disease", "abnormal test result", "symptom",
        "abnormal imaging finding", "complication", "chronic health condition",
        "medication side effect", "mental health issue", "social determinants of health",
    ],
    "test": [
        "medical test", "laboratory test", "imaging study", "diagnostic procedure",
        "genetic test", "electrodiagnostic test", "functional test", "microbiological test",
    ],
}

UMLS_GOLDEN = {
    "treatment": [
        "medical treatment", "therapeutic procedure", "preventive procedure", "medical device",
        "steroid", "pharmacologic substance", "biomedical material", "dental material",
        "antibiotic", "clinical drug", "drug delivery device",
    ],
    "problem": [
        "medical problem", "pathologic function", "disease", "syndrome", "mental dysfunction",
        "behavioral dysfunction", "cell dysfunction", "molecular dysfunction",
        "congenital abnormality", "acquired abnormality", "injury", "poisoning",
        "anatomic abnormality", "neoplastic process", "virus", "bacterium", "symptom",
    ],
    "test": ["medical test", "laboratory procedure", "diagnostic procedure"],
}


class TestRegistry:
    @pytest.mark.parametrize("target,expected", sorted(ANNOTATION_GOLDEN.items()))
    def test_annotation_lists(self, target, expected):
        assert list(decompose(target, "annotation")) == expected

    @pytest.mark.parametrize("target,expected", sorted(CHATGPT_GOLDEN.items()))
    def test_chatgpt_lists(self, target, expected):
        assert list(decompose(target, "llm-generated")) == expected

    @pytest.mark.parametrize("target,expected", sorted(UMLS_GOLDEN.items()))
    def test_umls_lists(self, target, expected):
        assert list(decompose(target, "umls")) == expected

    def test_lookup_is_case_insensitive(self):
        assert list(decompose("Treatment", "annotation")) == ANNOTATION_GOLDEN["treatment"]

    def test_unknown_pair(self):
        # UMLS has no semantic types for clinical departments
        with pytest.raises(UnknownDecompositionError):
            decompose("clinical department", "umls")

    def test_unknown_source(self):
        with pytest.raises(UnknownDecompositionError):
            decompose("treatment", "wikipedia")

    def test_source_recorded(self):
        s = decompose("treatment", "umls")
        assert s.source == "umls"
        assert s.target == "treatment"


class TestEnsureTargetIncluded:
    def test_appends_when_absent(self):
        s = SubTypeSet(target="treatment", source="custom", subtypes=("drug",))
        assert list(ensure_target_included(s)) == ["drug", "treatment"]

    def test_idempotent(self):
        s = SubTypeSet(target="treatment", source="custom", subtypes=("treatment", "drug"))
        assert ensure_target_included(s) is s
        grown = ensure_target_included(
            SubTypeSet(target="treatment", source="custom", subtypes=("drug",))
        )
        assert ensure_target_included(grown) is grown

    def test_case_insensitive_presence(self):
        s = SubTypeSet(target="Treatment", source="custom", subtypes=("treatment",))
        assert ensure_target_included(s) is s


class TestParseSubtypeResponse:
    def test_comma_separated(self):
        assert parse_subtype_response("medication, therapy, surgery") == [
            "medication", "therapy", "surgery",
        ]

    def test_bulleted(self):
        assert parse_subtype_response("- drug\n- device") == ["drug", "device"]

    def test_numbered(self):
        assert parse_subtype_response("1. drug\n2) device") == ["drug", "device"]

    def test_drops_duplicates_case_insensitively(self):
        assert parse_subtype_response("Drug, drug, device") == ["Drug", "device"]

    def test_empty_raises_with_raw(self):
        with pytest.raises(DecompositionParseError) as err:
            parse_subtype_response("   \n ")
        assert err.value.raw == "   \n "


class TestDecomposeLlm:
    def test_parses_and_appends_target(self):
        backend = echo_backend("medication, therapy, surgery")
        s = decompose_llm(EntityTypeSpec(name="treatment"), backend)
        assert list(s) == ["medication", "therapy", "surgery", "treatment"]
        assert s.source == "llm-generated"

    def test_registry_miss_falls_through_to_backend(self):
        backend = echo_backend("ward, unit")
        s = decompose("clinical department", "llm-generated", backend=backend)
        assert list(s) == ["ward", "unit", "clinical department"]

    def test_registry_hit_does_not_call_backend(self):
        backend = echo_backend("never used")
        s = decompose("treatment", "llm-generated", backend=backend)
        assert list(s) == CHATGPT_GOLDEN["treatment"]
        assert backend.mock.calls == 0

    def test_empty_response_raises(self):
        with pytest.raises(DecompositionParseError):
            decompose_llm(EntityTypeSpec(name="treatment"), echo_backend(""))


def test_load_custom_list(tmp_path):
    path = tmp_path / "subtypes.txt"
    path.write_text("alpha\n\nbeta\n")
    s = load_custom_list(str(path), "gamma")
    assert list(s) == ["alpha", "beta"]
    assert s.source == "custom"
