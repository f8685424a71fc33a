"""Prompt template registry.

Templates ship as plain-text golden files under ``assets/templates/`` and are
rendered by single-pass placeholder substitution, so slot values containing
brace syntax are never re-expanded. A single trailing newline in the asset
file is not part of the template.
"""
from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

_SLOT_RE = re.compile(r"\{(\w+)\}")

# Which templates take a document/context slot besides the instruction.
TEMPLATE_SLOTS: dict[str, frozenset[str]] = {
    "uniner": frozenset({"input", "instruction"}),
    "gner": frozenset({"input", "instruction"}),
    "asclepius": frozenset({"input", "instruction"}),
    "llama2": frozenset({"instruction"}),
    "filter_default": frozenset({"entity", "entity_type"}),
    "filter_described": frozenset({"entity", "description"}),
}


class UnknownTemplateError(KeyError):
    pass


class MissingSlotError(KeyError):
    pass


@lru_cache(maxsize=None)
def template_text(template_id: str) -> str:
    """Raw template content for ``template_id`` (without the file's trailing newline)."""
    if template_id not in TEMPLATE_SLOTS:
        raise UnknownTemplateError(f"unknown template id {template_id!r}")
    raw = (
        resources.files("edfner")
        .joinpath(f"assets/templates/{template_id}.txt")
        .read_text(encoding="utf-8")
    )
    return raw[:-1] if raw.endswith("\n") else raw


def render_prompt(template_id: str, slots: dict[str, str]) -> str:
    """Render a template by substituting every ``{slot}`` placeholder it contains."""
    text = template_text(template_id)

    def _sub(m: re.Match) -> str:
        name = m.group(1)
        if name not in slots:
            raise MissingSlotError(f"template {template_id!r} needs slot {name!r}")
        return slots[name]

    return _SLOT_RE.sub(_sub, text)


def has_input_slot(template_id: str) -> bool:
    return "input" in TEMPLATE_SLOTS.get(template_id, frozenset())
