"""Entity-type decomposition: curated sub-type registries plus an LLM-backed route.

The registry ships the curated lists for three sources (expert annotation
guidelines, ChatGPT-generated, UMLS semantic types). Sub-type strings are
stored verbatim because they become prompt content.
"""
from __future__ import annotations

import re

from .backend import BackendDescriptor, CompletionRequest, complete
from .types import EntityTypeSpec, SubTypeSet

ANNOTATION = "annotation"
LLM_GENERATED = "llm-generated"
UMLS = "umls"
CUSTOM = "custom"
SOURCES = (ANNOTATION, LLM_GENERATED, UMLS, CUSTOM)

_ANNOTATION_LISTS: dict[str, tuple[str, ...]] = {
    "treatment": (
        "medical treatment", "medical intervention", "medical procedure", "medical device",
        "treatment", "biological substance", "drug", "medication",
    ),
    "problem": (
        "medical problem", "disease", "syndrome", "symptom", "medical condition", "behavior",
        "virus", "bacterium", "injury", "abnormality", "abnormal test result", "mental status",
    ),
    "test": (
        "medical test", "medical procedure", "medical panel", "medical examination",
        "medical evaluation", "test", "procedure", "laboratory procedure",
        "diagnostic procedure", "panel", "measure", "physiologic measure", "vital sign",
        "examination", "evaluation",
    ),
    "clinical department": (
        "clinical department", "medical department", "clinical unit", "clinical service",
        "clinical practice", "clinical room", "department", "location", "building", "hospital",
    ),
    "disease/disorder": (
        "medical problem", "disease", "syndrome", "symptom", "medical condition", "behavior",
        "virus", "bacterium", "injury", "abnormality", "abnormal test result",
    ),
    "adverse drug": ("drug",),
    "adverse drug event": ("medical problem",),
}

_CHATGPT_LISTS: dict[str, tuple[str, ...]] = {
    "treatment": (
        "medical treatment", "medication", "medical procedure", "therapy",
        "medical intervention", "consultation", "counseling", "discharge instruction",
        "supportive care",
    ),
    "problem": (
        "medical problem", "medical diagnosis", "disease", "abnormal test result", "symptom",
        "abnormal imaging finding", "complication", "chronic health condition",
        "medication side effect", "mental health issue", "social determinants of health",
    ),
    "test": (
        "medical test", "laboratory test", "imaging study", "diagnostic procedure",
        "genetic test", "electrodiagnostic test", "functional test", "microbiological test",
    ),
}

_UMLS_LISTS: dict[str, tuple[str, ...]] = {
    "treatment": (
        "medical treatment", "therapeutic procedure", "preventive procedure", "medical device",
        "steroid", "pharmacologic substance", "biomedical material", "dental material",
        "antibiotic", "clinical drug", "drug delivery device",
    ),
    "problem": (
        "medical problem", "pathologic function", "disease", "syndrome", "mental dysfunction",
        "behavioral dysfunction", "cell dysfunction", "molecular dysfunction",
        "congenital abnormality", "acquired abnormality", "injury", "poisoning",
        "anatomic abnormality", "neoplastic process", "virus", "bacterium", "symptom",
    ),
    "test": ("medical test", "laboratory procedure", "diagnostic procedure"),
}

REGISTRY: dict[str, dict[str, tuple[str, ...]]] = {
    ANNOTATION: _ANNOTATION_LISTS,
    LLM_GENERATED: _CHATGPT_LISTS,
    UMLS: _UMLS_LISTS,
}

DECOMPOSE_PROMPT = (
    "You are an intelligent clinical language model. "
    "Your job is to extract {entity_type} from a patient's discharge summary. "
    "What entities can be considered as {entity_type} in a discharge summary?"
)


class UnknownDecompositionError(KeyError):
    pass


class DecompositionParseError(ValueError):
    """Raised when an LLM decomposition response holds no list-like content."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


def registry_lookup(source: str, target_name: str) -> tuple[str, ...] | None:
    lists = REGISTRY.get(source)
    if lists is None:
        return None
    return lists.get(target_name.strip().lower())


def ensure_target_included(s: SubTypeSet) -> SubTypeSet:
    """Append the target name to the sub-type list when absent. Idempotent."""
    if any(st.lower() == s.target.lower() for st in s.subtypes):
        return s
    return SubTypeSet(target=s.target, source=s.source, subtypes=s.subtypes + (s.target,))


_BULLET_RE = re.compile(r"^\s*(?:[-*•·]+|\d+[.)])\s*")


def parse_subtype_response(raw: str) -> list[str]:
    """Parse an LLM decomposition response: comma-separated, newline-separated or bulleted.

    Empty items and case-insensitive duplicates are dropped, order preserved.
    """
    items: list[str] = []
    seen: set[str] = set()
    for line in raw.splitlines():
        line = _BULLET_RE.sub("", line)
        for piece in line.split(","):
            piece = piece.strip().strip(".").strip()
            if piece and piece.lower() not in seen:
                seen.add(piece.lower())
                items.append(piece)
    if not items:
        raise DecompositionParseError("no list-like content in decomposition response", raw)
    return items


def decompose_llm(target: EntityTypeSpec, backend: BackendDescriptor) -> SubTypeSet:
    """Ask an LLM backend for sub-types of ``target`` and parse them."""
    prompt = DECOMPOSE_PROMPT.format(entity_type=target.name)
    response = complete(CompletionRequest(prompt=prompt, max_new_tokens=256), backend)
    subtypes = parse_subtype_response(response.text)
    result = SubTypeSet(target=target.name, source=LLM_GENERATED, subtypes=tuple(subtypes))
    return ensure_target_included(result)


def decompose(
    target: EntityTypeSpec | str,
    source: str,
    backend: BackendDescriptor | None = None,
) -> SubTypeSet:
    """Produce the sub-type set for a target type from a registry source or an LLM.

    Registry hits (including the shipped ChatGPT lists under ``llm-generated``)
    are returned as-is; an ``llm-generated`` miss falls through to the backend.
    """
    spec = target if isinstance(target, EntityTypeSpec) else EntityTypeSpec(name=target)
    if source not in SOURCES:
        raise UnknownDecompositionError(f"unknown decomposer source {source!r}")
    canned = registry_lookup(source, spec.name)
    if canned is not None:
        return SubTypeSet(target=spec.name, source=source, subtypes=canned)
    if source == LLM_GENERATED and backend is not None:
        return decompose_llm(spec, backend)
    raise UnknownDecompositionError(
        f"no sub-type list for target {spec.name!r} under source {source!r}"
    )


def load_custom_list(path: str, target: str) -> SubTypeSet:
    """Read a custom sub-type list from a plain-text file, one sub-type per line."""
    with open(path, encoding="utf-8") as fh:
        subtypes = [line.strip() for line in fh if line.strip()]
    return SubTypeSet(target=target, source=CUSTOM, subtypes=tuple(subtypes))
