"""Domain types shared across the pipeline: documents, entity types, mentions, gold spans.

All types here are immutable after construction and safe to share between
concurrent workers. Spans are character offsets over Unicode code points,
as ``(start, end)`` half-open intervals.
"""
from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass

Span = tuple[int, int]

POLARITIES = ("positive", "negative", "unspecified")


@dataclass(frozen=True)
class NormalizationConfig:
    """Controls the string normalization used for matching and deduplication."""

    lowercase: bool = True
    collapse_whitespace: bool = True
    strip_edge_punctuation: bool = False


DEFAULT_NORMALIZATION = NormalizationConfig()


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def normalize(s: str, cfg: NormalizationConfig = DEFAULT_NORMALIZATION) -> str:
    """Normalize a surface string for matching. Deterministic and idempotent."""
    if cfg.collapse_whitespace:
        s = " ".join(s.split())
    if cfg.lowercase:
        s = s.lower()
    if cfg.strip_edge_punctuation:
        # alternate whitespace and punctuation stripping to a fixpoint, so a
        # second normalize pass can never expose more strippable edges
        prev = None
        while s != prev:
            prev = s
            s = s.strip()
            start, end = 0, len(s)
            while start < end and _is_punct(s[start]):
                start += 1
            while end > start and _is_punct(s[end - 1]):
                end -= 1
            s = s[start:end]
    return s


_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokens_of(normalized: str) -> frozenset[str]:
    """Token set of a normalized surface: maximal runs of letters/digits.

    Surfaces with no alphanumeric content fall back to the whole string as a
    single token, so that two equal surfaces always share a token.
    """
    toks = frozenset(_TOKEN_RE.findall(normalized))
    return toks if toks else frozenset({normalized})


def _check_ranges(ranges: tuple[Span, ...], text_len: int, what: str) -> None:
    prev_end = -1
    for start, end in ranges:
        if not (0 <= start <= end <= text_len):
            raise ValueError(f"{what} range ({start}, {end}) outside [0, {text_len}]")
        if start < prev_end:
            raise ValueError(f"{what} ranges overlap or are out of order at ({start}, {end})")
        prev_end = end


@dataclass(frozen=True)
class Document:
    """One clinical narrative plus its derived sentence/paragraph segmentation."""

    id: str
    text: str
    sentences: tuple[Span, ...] = ()
    paragraphs: tuple[Span, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "sentences", tuple(tuple(r) for r in self.sentences))
        object.__setattr__(self, "paragraphs", tuple(tuple(r) for r in self.paragraphs))
        _check_ranges(self.sentences, len(self.text), "sentence")
        _check_ranges(self.paragraphs, len(self.text), "paragraph")
        # Every non-whitespace character must fall in exactly one paragraph.
        covered = [False] * len(self.text)
        for start, end in self.paragraphs:
            for i in range(start, end):
                covered[i] = True
        for i, ch in enumerate(self.text):
            if not ch.isspace() and not covered[i]:
                raise ValueError(
                    f"document {self.id!r}: character {i} ({ch!r}) not covered by any paragraph"
                )

    def slice(self, span: Span) -> str:
        return self.text[span[0]:span[1]]


@dataclass(frozen=True)
class EntityTypeSpec:
    """A target entity type, optionally with a concise description for prompting."""

    name: str
    description: str | None = None
    requires_context: bool = False

    def __post_init__(self) -> None:
        if not self.name.strip():
            raise ValueError("entity type name must be non-empty")


# Stock one-line descriptions for the described filter-prompt variant, taken from
# the i2b2 2010 annotation guidelines (clinical department is our own wording).
DEFAULT_TYPE_DESCRIPTIONS: dict[str, str] = {
    "treatment": "a procedure or substance given to a patient to resolve a medical problem",
    "problem": "an observation thought to be abnormal or caused by a disease",
    "test": "a procedure or measure to find more information about a medical problem",
    "clinical department": "a clinical unit or clinical service name",
}

# Entity types whose filtering depends on narrative context.
CONTEXT_DEPENDENT_TYPES = frozenset({"adverse drug", "adverse drug event"})


def entity_type(name: str) -> EntityTypeSpec:
    """EntityTypeSpec for ``name`` with stock description/context flags filled in."""
    key = name.strip().lower()
    return EntityTypeSpec(
        name=name.strip(),
        description=DEFAULT_TYPE_DESCRIPTIONS.get(key),
        requires_context=key in CONTEXT_DEPENDENT_TYPES,
    )


@dataclass(frozen=True)
class SubTypeSet:
    """Ordered sub-types produced by decomposing a target entity type."""

    target: str
    source: str  # annotation | llm-generated | umls | custom
    subtypes: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "subtypes", tuple(self.subtypes))
        if not self.subtypes:
            raise ValueError(f"sub-type set for {self.target!r} is empty")
        seen: set[str] = set()
        for s in self.subtypes:
            key = s.lower()
            if key in seen:
                raise ValueError(f"duplicate sub-type {s!r} (case-insensitive) for {self.target!r}")
            seen.add(key)

    def __iter__(self):
        return iter(self.subtypes)

    def __len__(self) -> int:
        return len(self.subtypes)


@dataclass(frozen=True)
class FilterVerdict:
    """Outcome of one yes/no classification, with the renormalized 'No' probability."""

    answer: str  # "yes" | "no"
    p_no: float
    accepted: bool

    def __post_init__(self) -> None:
        if self.answer not in ("yes", "no"):
            raise ValueError(f"verdict answer must be yes/no, got {self.answer!r}")
        if not 0.0 <= self.p_no <= 1.0:
            raise ValueError(f"p_no out of [0, 1]: {self.p_no}")
        # argmax consistency: "no" wins ties
        if self.answer == "no" and self.p_no < 0.5:
            raise ValueError("answer 'no' requires p_no >= 0.5")
        if self.answer == "yes" and self.p_no >= 0.5:
            raise ValueError("answer 'yes' requires p_no < 0.5")


@dataclass(frozen=True)
class Mention:
    """A predicted entity surface, its producing sub-types, and grounded spans."""

    surface: str
    normalized: str
    origins: frozenset[str] = frozenset()
    spans: tuple[Span, ...] = ()
    verdict: FilterVerdict | None = None

    def __post_init__(self) -> None:
        if not self.surface:
            raise ValueError("mention surface must be non-empty")
        object.__setattr__(self, "origins", frozenset(self.origins))
        object.__setattr__(self, "spans", tuple(tuple(s) for s in self.spans))

    @property
    def accepted(self) -> bool:
        """Whether the mention survives filtering (unfiltered mentions count as accepted)."""
        return self.verdict is None or self.verdict.accepted


def make_mention(
    surface: str,
    origins: frozenset[str] | set[str] = frozenset(),
    spans: tuple[Span, ...] = (),
    cfg: NormalizationConfig = DEFAULT_NORMALIZATION,
) -> Mention:
    return Mention(surface=surface, normalized=normalize(surface, cfg), origins=frozenset(origins), spans=spans)


@dataclass(frozen=True)
class GoldEntity:
    """An annotated entity span with its type and (optional) polarity attribute."""

    surface: str
    span: Span
    type: str
    polarity: str = "unspecified"

    def __post_init__(self) -> None:
        object.__setattr__(self, "span", tuple(self.span))
        if self.polarity not in POLARITIES:
            raise ValueError(f"unknown polarity {self.polarity!r}; expected one of {POLARITIES}")

    def check_against(self, doc: Document) -> None:
        start, end = self.span
        if doc.text[start:end] != self.surface:
            raise ValueError(
                f"gold entity {self.surface!r} does not match document {doc.id!r} "
                f"text at [{start}, {end}): {doc.text[start:end]!r}"
            )
