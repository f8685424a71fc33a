"""Corpus loading, persistence, and a deterministic synthetic corpus generator.

The canonical on-disk format is JSONL with character offsets (one document per
line); a CoNLL-style BIO reader bridges token-labelled data into it. Because
the clinical datasets this engine targets are license-restricted, the module
also generates templated clinical-style notes from a gazetteer, with gold
spans known by construction.
"""
from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field

from .context import make_document
from .types import (
    DEFAULT_NORMALIZATION,
    Document,
    EntityTypeSpec,
    GoldEntity,
    NormalizationConfig,
    entity_type,
    normalize,
)

log = logging.getLogger(__name__)


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Corpus:
    """Documents plus gold annotations and the catalog of annotated entity types."""

    documents: tuple[Document, ...]
    gold: dict[str, tuple[GoldEntity, ...]]
    type_catalog: tuple[EntityTypeSpec, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "documents", tuple(self.documents))
        by_id = {d.id: d for d in self.documents}
        if len(by_id) != len(self.documents):
            raise CorpusFormatError("duplicate document ids in corpus")
        catalog_names = {t.name.lower() for t in self.type_catalog}
        for doc_id, entities in self.gold.items():
            doc = by_id.get(doc_id)
            if doc is None:
                raise CorpusFormatError(f"gold annotations reference unknown document {doc_id!r}")
            for g in entities:
                g.check_against(doc)
                if g.type.lower() not in catalog_names:
                    raise CorpusFormatError(
                        f"gold type {g.type!r} in document {doc_id!r} missing from type catalog"
                    )

    def document(self, doc_id: str) -> Document:
        for d in self.documents:
            if d.id == doc_id:
                return d
        raise KeyError(doc_id)

    def gold_for(self, doc_id: str, type_name: str | None = None) -> tuple[GoldEntity, ...]:
        entities = self.gold.get(doc_id, ())
        if type_name is None:
            return entities
        return tuple(g for g in entities if g.type.lower() == type_name.lower())

    def gold_surfaces(
        self, type_name: str, cfg: NormalizationConfig = DEFAULT_NORMALIZATION
    ) -> frozenset[str]:
        """Normalized gold surfaces of one type across the whole corpus."""
        return frozenset(
            normalize(g.surface, cfg)
            for entities in self.gold.values()
            for g in entities
            if g.type.lower() == type_name.lower()
        )


def _catalog_from_names(names: set[str]) -> tuple[EntityTypeSpec, ...]:
    return tuple(entity_type(n) for n in sorted(names))


def load_jsonl(path: str) -> Corpus:
    """Load a corpus from JSONL: one ``{"id", "text", "entities": [...]}`` object per line."""
    documents: list[Document] = []
    gold: dict[str, tuple[GoldEntity, ...]] = {}
    type_names: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: malformed JSON ({exc})") from exc
            try:
                doc = make_document(str(record["id"]), record["text"])
            except KeyError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: missing field {exc}") from exc
            entities = []
            for ent in record.get("entities", []):
                try:
                    surface, start, end = ent["text"], int(ent["start"]), int(ent["end"])
                    etype = ent["type"]
                except KeyError as exc:
                    raise CorpusFormatError(
                        f"{path}:{lineno}: entity missing field {exc}"
                    ) from exc
                polarity = ent.get("polarity", "unspecified")
                if polarity not in ("positive", "negative", "unspecified"):
                    raise CorpusFormatError(
                        f"{path}:{lineno}: unknown polarity {polarity!r} on entity {surface!r}"
                    )
                if doc.text[start:end] != surface:
                    raise CorpusFormatError(
                        f"{path}:{lineno}: entity {surface!r} does not match document text "
                        f"{doc.text[start:end]!r} at [{start}, {end})"
                    )
                entities.append(GoldEntity(surface=surface, span=(start, end), type=etype, polarity=polarity))
                type_names.add(etype)
            documents.append(doc)
            gold[doc.id] = tuple(entities)
    return Corpus(documents=tuple(documents), gold=gold, type_catalog=_catalog_from_names(type_names))


def write_jsonl(corpus: Corpus, path: str) -> None:
    """Write a corpus back out in the canonical JSONL format."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            entities = []
            for g in corpus.gold.get(doc.id, ()):
                ent: dict = {"text": g.surface, "start": g.span[0], "end": g.span[1], "type": g.type}
                if g.polarity != "unspecified":
                    ent["polarity"] = g.polarity
                entities.append(ent)
            fh.write(json.dumps({"id": doc.id, "text": doc.text, "entities": entities}) + "\n")


def load_bio(path: str) -> Corpus:
    """Load a CoNLL-style file (token TAB label, blank line between blocks).

    Each blank-line-separated block becomes one document whose text is the
    tokens joined by single spaces. An I- tag without a matching open entity
    is promoted to B- and warned about, so malformed files still load.
    """
    blocks: list[list[tuple[str, str]]] = [[]]
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                if blocks[-1]:
                    blocks.append([])
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise CorpusFormatError(f"{path}:{lineno}: expected 'token<TAB>label', got {line!r}")
            token, label = parts[0], parts[-1]
            if label != "O" and not (label.startswith("B-") or label.startswith("I-")):
                raise CorpusFormatError(f"{path}:{lineno}: unknown tag shape {label!r}")
            blocks[-1].append((token, label))
    if not blocks[-1]:
        blocks.pop()

    documents: list[Document] = []
    gold: dict[str, tuple[GoldEntity, ...]] = {}
    type_names: set[str] = set()
    for i, block in enumerate(blocks):
        doc_id = f"d{i + 1:04d}"
        tokens = [tok for tok, _ in block]
        text = " ".join(tokens)
        offsets = []
        pos = 0
        for tok in tokens:
            offsets.append((pos, pos + len(tok)))
            pos += len(tok) + 1
        entities: list[GoldEntity] = []
        open_start: int | None = None
        open_type: str | None = None

        def _flush(end_index: int) -> None:
            nonlocal open_start, open_type
            if open_start is not None:
                span = (offsets[open_start][0], offsets[end_index][1])
                entities.append(
                    GoldEntity(surface=text[span[0]:span[1]], span=span, type=open_type)
                )
                type_names.add(open_type)
            open_start = open_type = None

        for j, (_tok, label) in enumerate(block):
            if label == "O":
                _flush(j - 1)
            elif label.startswith("B-"):
                _flush(j - 1)
                open_start, open_type = j, label[2:]
            else:  # I-
                tag_type = label[2:]
                if open_type == tag_type:
                    continue
                log.warning("%s: document %s token %d: I-%s without open %s entity; treating as B-",
                            path, doc_id, j, tag_type, tag_type)
                _flush(j - 1)
                open_start, open_type = j, tag_type
        _flush(len(block) - 1)

        documents.append(make_document(doc_id, text))
        gold[doc_id] = tuple(entities)
    return Corpus(documents=tuple(documents), gold=gold, type_catalog=_catalog_from_names(type_names))


# ---------------------------------------------------------------------------
# Gazetteer and synthetic corpus generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Gazetteer:
    """Surfaces per sub-type, off-type contamination surfaces, and the sub-type
    to target-type mapping that drives synthetic gold labels."""

    subtypes: dict[str, tuple[str, ...]]
    targets: dict[str, str]
    contamination: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.subtypes:
            raise ValueError("gazetteer declares no sub-types")
        on_type = set()
        for name, surfaces in self.subtypes.items():
            if not surfaces:
                raise ValueError(f"gazetteer sub-type {name!r} has an empty surface list")
            if name not in self.targets:
                raise ValueError(f"gazetteer sub-type {name!r} has no target-type mapping")
            on_type.update(normalize(s) for s in surfaces)
        for name, surfaces in self.contamination.items():
            clash = {normalize(s) for s in surfaces} & on_type
            if clash:
                raise ValueError(
                    f"contamination surfaces for {name!r} overlap on-type lists: {sorted(clash)}"
                )

    def all_surfaces(self) -> tuple[str, ...]:
        out = [s for surfaces in self.subtypes.values() for s in surfaces]
        out += [s for surfaces in self.contamination.values() for s in surfaces]
        return tuple(out)


def load_gazetteer(path: str) -> Gazetteer:
    """Read a gazetteer from JSON: {"subtypes": {...}, "targets": {...}, "contamination": {...}}."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        return Gazetteer(
            subtypes={k: tuple(v) for k, v in data["subtypes"].items()},
            targets=dict(data["targets"]),
            contamination={k: tuple(v) for k, v in data.get("contamination", {}).items()},
        )
    except KeyError as exc:
        raise CorpusFormatError(f"{path}: gazetteer missing field {exc}") from exc


def save_gazetteer(gazetteer: Gazetteer, path: str) -> None:
    data = {
        "subtypes": {k: list(v) for k, v in gazetteer.subtypes.items()},
        "targets": dict(gazetteer.targets),
        "contamination": {k: list(v) for k, v in gazetteer.contamination.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


def demo_gazetteer(target: str = "treatment") -> Gazetteer:
    """Small curated gazetteer for demos and tests.

    Surfaces are chosen so that none is a substring of another (normalized),
    which keeps substring-matching mock backends exact on generated corpora.
    """
    if target == "treatment":
        subtypes = {
            "medication": (
                "aspirin", "lisinopril", "metformin", "warfarin", "ibuprofen",
                "insulin glargine", "atorvastatin", "clopidogrel",
            ),
            "medical procedure": (
                "appendectomy", "hip replacement", "coronary artery bypass grafting",
                "dialysis", "physical therapy",
            ),
            "medical device": ("pacemaker", "insulin pump", "nasogastric tube"),
            "treatment": ("chemotherapy", "radiation therapy", "blood transfusion"),
        }
        contamination = {
            "medical procedure": ("endoscopy", "colonoscopy", "lumbar puncture"),
            "medical device": ("holter monitor",),
        }
    elif target == "problem":
        subtypes = {
            "symptom": ("nausea", "chest pain", "shortness of breath", "dizziness", "headache"),
            "disease": ("pneumonia", "hypertension", "diabetes mellitus", "atrial fibrillation"),
            "abnormality": ("anemia", "hyponatremia", "hypokalemia"),
            "problem": ("sepsis", "delirium"),
        }
        contamination = {
            "symptom": ("chest x-ray",),
            "disease": ("echocardiogram",),
        }
    else:
        raise ValueError(f"no demo gazetteer for target {target!r}")
    return Gazetteer(
        subtypes=subtypes,
        targets={name: target for name in subtypes},
        contamination=contamination,
    )


# Negation cues used by the synthetic templates; the polarity-aware mock filter
# recognizes exactly these.
NEGATION_CUES = ("denies", "no evidence of", "negative for", "without")

_SECTION_HEADERS = (
    "HISTORY OF PRESENT ILLNESS",
    "HOSPITAL COURSE",
    "PLAN",
    "FOLLOW UP",
)

_POSITIVE_TEMPLATES = (
    "The patient was started on {e} during the admission.",
    "We continued {e} at the prior home dose.",
    "The team administered {e} with good effect.",
    "Records show {e} documented on day two.",
    "The patient will remain on {e} after discharge.",
)

_NEGATIVE_TEMPLATES = (
    "The patient denies {e} at this time.",
    "There is no evidence of {e} on review.",
    "Screening was negative for {e} today.",
    "The patient was discharged without {e}.",
)

_CONTAMINATION_TEMPLATES = (
    "Also noted in the chart: {c}.",
    "A separate mention of {c} was discussed with the team.",
)

_FILLER_SENTENCES = (
    "The patient is a pleasant adult seen on rounds today.",
    "Vital signs remained stable overnight.",
    "The family was updated at the bedside.",
    "Diet was advanced as tolerated.",
    "Social work assisted with the disposition planning.",
)


class CorpusGenerationError(RuntimeError):
    pass


def _check_generator_inputs(gazetteer: Gazetteer) -> None:
    # Substring collisions between surfaces would make substring-matching mocks
    # return entities that were never embedded; refuse such gazetteers.
    normalized = [normalize(s) for s in gazetteer.all_surfaces()]
    for i, a in enumerate(normalized):
        for j, b in enumerate(normalized):
            if i != j and a in b:
                raise CorpusGenerationError(
                    f"gazetteer surface {a!r} is a substring of {b!r}; "
                    "the synthetic generator requires substring-free surfaces"
                )
    static_text = normalize(
        " ".join(
            _SECTION_HEADERS
            + _POSITIVE_TEMPLATES
            + _NEGATIVE_TEMPLATES
            + _CONTAMINATION_TEMPLATES
            + _FILLER_SENTENCES
        )
    )
    for s in normalized:
        if s in static_text:
            raise CorpusGenerationError(f"gazetteer surface {s!r} occurs in template text")


def generate_synthetic(
    seed: int,
    n_docs: int,
    gazetteer: Gazetteer,
    negation_rate: float = 0.25,
    contamination_sentences: int = 1,
) -> Corpus:
    """Generate a deterministic corpus of templated clinical-style notes.

    Every embedded on-type surface becomes a gold entity of its sub-type's
    target type, at its exact character span; surfaces embedded through a
    negation template get polarity "negative". Contamination surfaces are
    embedded as plain narrative text with no gold annotation.
    """
    if n_docs < 1:
        raise ValueError("n_docs must be >= 1")
    _check_generator_inputs(gazetteer)
    rng = random.Random(seed)
    entity_pool = [
        (sub, surface) for sub, surfaces in sorted(gazetteer.subtypes.items()) for surface in surfaces
    ]
    contamination_pool = [
        surface for _, surfaces in sorted(gazetteer.contamination.items()) for surface in surfaces
    ]

    documents: list[Document] = []
    gold: dict[str, tuple[GoldEntity, ...]] = {}
    type_names: set[str] = set()

    for i in range(n_docs):
        doc_id = f"syn{i + 1:04d}"
        sampled = rng.sample(entity_pool, k=min(rng.randint(3, 6), len(entity_pool)))
        # one surface at most once per document, so gold/prediction matching is unambiguous
        picks: list[tuple[str, str]] = []
        seen: set[str] = set()
        for sub, surface in sampled:
            if normalize(surface) not in seen:
                seen.add(normalize(surface))
                picks.append((sub, surface))

        parts: list[str] = []
        entities: list[GoldEntity] = []
        pos = 0

        def _append(text: str) -> None:
            nonlocal pos
            parts.append(text)
            pos += len(text)

        n_sections = rng.randint(2, 3)
        sections = rng.sample(_SECTION_HEADERS, k=n_sections)
        per_section = [picks[j::n_sections] for j in range(n_sections)]
        contaminate_in = rng.randrange(n_sections) if contamination_pool else -1

        for si, header in enumerate(sections):
            if si > 0:
                _append("\n\n")
            _append(header + ":\n")
            sentences: list[str] = [rng.choice(_FILLER_SENTENCES)]
            for sub, surface in per_section[si]:
                negated = rng.random() < negation_rate
                template = rng.choice(_NEGATIVE_TEMPLATES if negated else _POSITIVE_TEMPLATES)
                prefix, suffix = template.split("{e}")
                sentences.append((prefix, surface, suffix, sub, negated))
            if si == contaminate_in:
                for c in rng.sample(
                    contamination_pool, k=min(contamination_sentences, len(contamination_pool))
                ):
                    template = rng.choice(_CONTAMINATION_TEMPLATES)
                    prefix, suffix = template.split("{c}")
                    sentences.append((prefix, c, suffix, None, False))
            rng.shuffle(sentences)
            for sj, sent in enumerate(sentences):
                if sj > 0:
                    _append(" ")
                if isinstance(sent, str):
                    _append(sent)
                    continue
                prefix, surface, suffix, sub, negated = sent
                _append(prefix)
                start = pos
                _append(surface)
                if sub is not None:
                    entities.append(
                        GoldEntity(
                            surface=surface,
                            span=(start, start + len(surface)),
                            type=gazetteer.targets[sub],
                            polarity="negative" if negated else "positive",
                        )
                    )
                    type_names.add(gazetteer.targets[sub])
                _append(suffix)

        text = "".join(parts)
        doc = make_document(doc_id, text)
        for g in entities:
            g.check_against(doc)
        documents.append(doc)
        gold[doc_id] = tuple(entities)

    return Corpus(documents=tuple(documents), gold=gold, type_catalog=_catalog_from_names(type_names))
