"""Document segmentation and the context window handed to the filter.

Paragraphs are blank-line-delimited blocks; sentences split on ``.?!`` followed
by whitespace and on hard newlines. Both are rule-based stand-ins adequate for
clinical notes at this granularity.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .types import DEFAULT_NORMALIZATION, Document, Mention, NormalizationConfig, Span, normalize

log = logging.getLogger(__name__)

CONTEXT_MODES = ("none", "sentence", "paragraph", "document")

_PARA_SEP = re.compile(r"\n[ \t\r]*\n")
_SENT_BREAK = re.compile(r"[.?!]+(?=\s)|\n")


def _trimmed_span(text: str, start: int, end: int) -> Span | None:
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    return (start, end) if start < end else None


def segment(text: str) -> tuple[tuple[Span, ...], tuple[Span, ...]]:
    """Compute (sentences, paragraphs) as character ranges over ``text``."""
    paragraphs: list[Span] = []
    cursor = 0
    for sep in _PARA_SEP.finditer(text):
        span = _trimmed_span(text, cursor, sep.start())
        if span:
            paragraphs.append(span)
        cursor = sep.end()
    tail = _trimmed_span(text, cursor, len(text))
    if tail:
        paragraphs.append(tail)

    sentences: list[Span] = []
    for pstart, pend in paragraphs:
        cursor = pstart
        for brk in _SENT_BREAK.finditer(text, pstart, pend):
            span = _trimmed_span(text, cursor, brk.end())
            if span:
                sentences.append(span)
            cursor = brk.end()
        span = _trimmed_span(text, cursor, pend)
        if span:
            sentences.append(span)
    return tuple(sentences), tuple(paragraphs)


def make_document(doc_id: str, text: str) -> Document:
    """Build a Document with segmentation computed."""
    sentences, paragraphs = segment(text)
    return Document(id=doc_id, text=text, sentences=sentences, paragraphs=paragraphs)


def ground(
    doc: Document, surface: str, cfg: NormalizationConfig = DEFAULT_NORMALIZATION
) -> tuple[Span, ...]:
    """All case-insensitive, whitespace-tolerant occurrences of ``surface`` in the document.

    Returns ascending non-overlapping spans (leftmost match wins); empty when
    the surface does not ground anywhere.
    """
    normalized = normalize(surface, cfg)
    parts = normalized.split()
    if not parts:
        return ()
    pattern = re.compile(r"\s+".join(re.escape(p) for p in parts), re.IGNORECASE)
    return tuple(m.span() for m in pattern.finditer(doc.text))


@dataclass(frozen=True)
class ContextWindow:
    """The textual context passed to the filter; empty iff mode none or ungroundable."""

    mode: str
    text: str

    def __post_init__(self) -> None:
        if self.mode not in CONTEXT_MODES:
            raise ValueError(f"unknown context mode {self.mode!r}")


def _covering_slice(units: tuple[Span, ...], span: Span) -> Span | None:
    """Smallest contiguous run of units covering ``span``, as one (start, end) range."""
    hit = [u for u in units if u[1] > span[0] and u[0] < span[1]]
    if not hit:
        return None
    return (hit[0][0], hit[-1][1])


def context_for(doc: Document, mention: Mention, mode: str) -> ContextWindow:
    """Context window for a mention: none, enclosing sentence/paragraph, or full document.

    Ungroundable mentions fall back to an empty window (warned) so the pipeline
    stays total even when a model re-words a surface.
    """
    if mode == "none":
        return ContextWindow(mode=mode, text="")
    if mode == "document":
        return ContextWindow(mode=mode, text=doc.text)
    if mode not in CONTEXT_MODES:
        raise ValueError(f"unknown context mode {mode!r}")
    if not mention.spans:
        log.warning(
            "mention %r has no grounded span in document %s; using empty %s context",
            mention.surface, doc.id, mode,
        )
        return ContextWindow(mode=mode, text="")
    units = doc.sentences if mode == "sentence" else doc.paragraphs
    window = _covering_slice(units, mention.spans[0])
    if window is None:
        log.warning(
            "no %s unit covers span %s of %r in document %s; using empty context",
            mode, mention.spans[0], mention.surface, doc.id,
        )
        return ContextWindow(mode=mode, text="")
    return ContextWindow(mode=mode, text=doc.slice(window))
