"""Yes/No filtering of retrieved mentions, with context, prompt variants, and a
probability threshold.

A mention is rejected iff the classifier answers "No" AND its renormalized
'No' probability is at least the threshold. Threshold 0 is the plain filter
(every "No" rejected); threshold 1 disables filtering short of a 'No' with
probability exactly 1, which finite log-probabilities never produce.
"""
from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, replace

from .backend import (
    CLASSIFIER,
    FILTER_DECODING,
    MOCK,
    YES_NO,
    BackendDescriptor,
    CompletionRequest,
    complete,
    yes_no_logprobs,
)
from .context import ContextWindow, context_for
from .templates import has_input_slot, render_prompt
from .types import (
    DEFAULT_NORMALIZATION,
    Document,
    EntityTypeSpec,
    FilterVerdict,
    Mention,
    NormalizationConfig,
)

log = logging.getLogger(__name__)

DEFAULT_VARIANT = "default"
DESCRIBED_VARIANT = "described"
PROMPT_VARIANTS = (DEFAULT_VARIANT, DESCRIBED_VARIANT)


class FilterError(RuntimeError):
    pass


@dataclass(frozen=True)
class FilterConfig:
    backend: BackendDescriptor
    context_mode: str = "none"
    prompt_variant: str = DEFAULT_VARIANT
    threshold: float = 0.0
    normalization: NormalizationConfig = DEFAULT_NORMALIZATION

    def __post_init__(self) -> None:
        if self.prompt_variant not in PROMPT_VARIANTS:
            raise ValueError(f"unknown filter prompt variant {self.prompt_variant!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")
        if self.backend.kind not in (CLASSIFIER, MOCK):
            raise ValueError(f"filter backend must be a classifier or mock, got {self.backend.kind}")


def render_filter_prompt(
    entity: str,
    t: EntityTypeSpec,
    variant: str = DEFAULT_VARIANT,
    context: ContextWindow | None = None,
    wrapper_template: str = "asclepius",
) -> str:
    """Build the filter prompt for one entity.

    The described variant asks the per-type question built from the type's
    description. A non-empty context is carried in the wrapper template's
    document slot when it has one, otherwise prepended to the instruction.
    """
    if variant == DESCRIBED_VARIANT:
        if not t.description:
            raise FilterError(
                f"described filter prompt for {t.name!r} needs an entity description"
            )
        question = render_prompt(
            "filter_described", {"entity": entity, "description": t.description}
        )
    else:
        question = render_prompt("filter_default", {"entity": entity, "entity_type": t.name})
    if context is None or not context.text:
        return question
    if has_input_slot(wrapper_template):
        return render_prompt(wrapper_template, {"input": context.text, "instruction": question})
    return render_prompt(wrapper_template, {"instruction": context.text + "\n\n" + question})


def apply_threshold(answer: str, p_no: float, tau: float) -> bool:
    """Accept/reject rule: rejected iff answer is 'no' and p_no >= tau."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {tau}")
    if answer not in ("yes", "no"):
        raise ValueError(f"answer must be yes/no, got {answer!r}")
    return not (answer == "no" and p_no >= tau)


def classify(
    entity: str,
    t: EntityTypeSpec,
    context: ContextWindow | None,
    cfg: FilterConfig,
    doc_id: str = "",
) -> FilterVerdict:
    """One yes/no-constrained classification of an entity against the target type."""
    prompt = render_filter_prompt(
        entity, t, cfg.prompt_variant, context, wrapper_template=cfg.backend.template
    )
    req = CompletionRequest(
        prompt=prompt,
        max_new_tokens=cfg.backend.decoding.max_new_tokens,
        temperature=cfg.backend.decoding.temperature,
        top_p=cfg.backend.decoding.top_p,
        want_logprobs=not cfg.backend.server_constrained,
        constraint=YES_NO,
        meta={
            "op": "classify",
            "doc_id": doc_id,
            "entity": entity,
            "entity_type": t.name,
            "context": context.text if context else "",
        },
    )
    resp = complete(req, cfg.backend)
    if resp.first_token_candidates:
        lp_yes, lp_no = yes_no_logprobs(resp)
        # renormalize over the two candidates; shift by the max for stability
        shift = max(lp_yes, lp_no)
        p_no = math.exp(lp_no - shift) / (math.exp(lp_yes - shift) + math.exp(lp_no - shift))
    else:
        # server-side constrained decoding without logprobs: degenerate probability
        p_no = 1.0 if resp.text == "No" else 0.0
    answer = "no" if p_no >= 0.5 else "yes"
    return FilterVerdict(
        answer=answer, p_no=p_no, accepted=apply_threshold(answer, p_no, cfg.threshold)
    )


class VerdictCache:
    """Thread-safe verdict cache keyed by (surface, type, context, variant)."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._store: dict[tuple, FilterVerdict] = {}

    def get_or_compute(self, key: tuple, compute) -> FilterVerdict:
        with self._lock:
            if key in self._store:
                return self._store[key]
        verdict = compute()
        with self._lock:
            return self._store.setdefault(key, verdict)


def attach_verdicts(
    mentions: list[Mention],
    t: EntityTypeSpec,
    doc: Document,
    cfg: FilterConfig,
    cache: VerdictCache | None = None,
) -> list[Mention]:
    """Classify every mention once per (surface, context) and attach the verdicts."""
    cache = cache or VerdictCache()
    out: list[Mention] = []
    for m in mentions:
        window = context_for(doc, m, cfg.context_mode)
        key = (m.normalized, t.name.lower(), window.text, cfg.prompt_variant)
        verdict = cache.get_or_compute(
            key, lambda: classify(m.surface, t, window, cfg, doc_id=doc.id)
        )
        out.append(replace(m, verdict=verdict))
    return out


def filter_set(
    mentions: list[Mention],
    t: EntityTypeSpec,
    doc: Document,
    cfg: FilterConfig,
    cache: VerdictCache | None = None,
) -> list[Mention]:
    """The accepted subset of ``mentions`` after classification; always a subset."""
    return [m for m in attach_verdicts(mentions, t, doc, cfg, cache) if m.accepted]
