"""Run-mode orchestration over a corpus: baseline, decomposition, filter, both.

Modes:
    baseline  one retrieval per document with the target type itself
    ed        one retrieval per sub-type (or one multi-type call), results unioned
    f         the baseline's mentions, filtered
    edf       the union's mentions, filtered

Documents are processed independently and persisted incrementally; a backend
failure marks the document failed and the run continues. Mentions are
deduplicated per document by normalized surface, merging the producing
sub-types, and ordered canonically so equal configurations produce identical
artifacts.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field

from . import runs
from .backend import BackendDescriptor, BackendError, extract_multi, extract_single
from .context import ground
from .corpus import Corpus
from .decomposer import decompose, ensure_target_included
from .evaluation import EvalReport, score_cells
from .filtering import FilterConfig, VerdictCache, attach_verdicts
from .types import (
    DEFAULT_NORMALIZATION,
    Document,
    EntityTypeSpec,
    Mention,
    NormalizationConfig,
    SubTypeSet,
    normalize,
)

log = logging.getLogger(__name__)

MODES = ("baseline", "ed", "f", "edf")


class PipelineConfigError(ValueError):
    pass


class DocumentFailed(RuntimeError):
    pass


@dataclass
class RunConfig:
    mode: str
    targets: tuple[EntityTypeSpec, ...]
    ner: BackendDescriptor
    decomposer_source: str | None = None
    subtype_sets: dict[str, SubTypeSet] = field(default_factory=dict)
    decomposer_backend: BackendDescriptor | None = None
    include_target: bool = True
    filter: FilterConfig | None = None
    normalization: NormalizationConfig = DEFAULT_NORMALIZATION
    concurrency: int = 1
    out_dir: str | None = None
    config_snapshot: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise PipelineConfigError(f"unknown run mode {self.mode!r}")
        if not self.targets:
            raise PipelineConfigError("at least one target entity type is required")
        if self.mode in ("f", "edf") and self.filter is None:
            raise PipelineConfigError(f"mode {self.mode!r} requires a filter backend")
        if self.mode in ("ed", "edf") and self.decomposer_source is None and not self.subtype_sets:
            raise PipelineConfigError(f"mode {self.mode!r} requires a decomposer source")
        if self.concurrency < 1:
            raise PipelineConfigError("concurrency must be >= 1")


def merge_mentions(
    doc: Document,
    surfaces_by_origin: list[tuple[str, list[str]]],
    cfg: NormalizationConfig = DEFAULT_NORMALIZATION,
) -> list[Mention]:
    """Dedup raw surfaces by normalized form, merging origins and grounding spans.

    The first raw spelling seen for a normalized surface is kept; output is
    sorted by normalized surface.
    """
    first_surface: dict[str, str] = {}
    origins: dict[str, set[str]] = {}
    for origin, surfaces in surfaces_by_origin:
        for raw in surfaces:
            raw = raw.strip()
            if not raw:
                continue
            key = normalize(raw, cfg)
            first_surface.setdefault(key, raw)
            origins.setdefault(key, set()).add(origin)
    out = []
    for key in sorted(first_surface):
        surface = first_surface[key]
        out.append(
            Mention(
                surface=surface,
                normalized=key,
                origins=frozenset(origins[key]),
                spans=ground(doc, surface, cfg),
            )
        )
    return out


def run_baseline(
    doc: Document,
    t: EntityTypeSpec,
    ner: BackendDescriptor,
    cfg: NormalizationConfig = DEFAULT_NORMALIZATION,
) -> list[Mention]:
    """Single retrieval with the target type itself as the query."""
    if ner.supports_multi:
        by_type = extract_multi(doc, [t.name], ner)
        surfaces = by_type.get(t.name, [])
    else:
        surfaces = extract_single(doc, t.name, ner)
    return merge_mentions(doc, [(t.name, surfaces)], cfg)


def run_ed(
    doc: Document,
    t: EntityTypeSpec,
    subtypes: SubTypeSet,
    ner: BackendDescriptor,
    cfg: NormalizationConfig = DEFAULT_NORMALIZATION,
) -> list[Mention]:
    """Union of one retrieval per sub-type (or one multi-type call)."""
    collected: list[tuple[str, list[str]]] = []
    if ner.supports_multi:
        by_type = extract_multi(doc, list(subtypes), ner)
        collected = [(sub, by_type.get(sub, [])) for sub in subtypes]
    else:
        errors: list[str] = []
        for sub in subtypes:
            try:
                collected.append((sub, extract_single(doc, sub, ner)))
            except BackendError as exc:
                errors.append(f"{sub}: {exc}")
                log.warning("sub-type retrieval failed for %r on %s: %s", sub, doc.id, exc)
        if errors and not collected:
            raise DocumentFailed(
                f"all {len(errors)} sub-type retrievals failed for {doc.id}: {errors[0]}"
            )
    return merge_mentions(doc, collected, cfg)


def run_edf(
    doc: Document,
    t: EntityTypeSpec,
    cfg: RunConfig,
    subtypes: SubTypeSet | None = None,
    cache: VerdictCache | None = None,
) -> list[Mention]:
    """Final mentions for one document under the configured mode."""
    _, accepted = _run_document_type(doc, t, cfg, subtypes, cache)
    return accepted


def _run_document_type(
    doc: Document,
    t: EntityTypeSpec,
    cfg: RunConfig,
    subtypes: SubTypeSet | None,
    cache: VerdictCache | None,
) -> tuple[list[Mention], list[Mention]]:
    """(pre-filter mentions with verdicts, accepted mentions) for one doc and target."""
    if cfg.mode in ("ed", "edf"):
        if subtypes is None:
            raise PipelineConfigError(f"mode {cfg.mode!r} needs a sub-type set for {t.name!r}")
        mentions = run_ed(doc, t, subtypes, cfg.ner, cfg.normalization)
    else:
        mentions = run_baseline(doc, t, cfg.ner, cfg.normalization)
    if cfg.mode in ("f", "edf"):
        assert cfg.filter is not None
        mentions = attach_verdicts(mentions, t, doc, cfg.filter, cache)
    return mentions, [m for m in mentions if m.accepted]


@dataclass(frozen=True)
class CorpusRunResult:
    report: EvalReport
    prefilter: dict[tuple[str, str], list[Mention]]
    failures: dict[str, str]
    out_dir: str | None = None

    def accepted(self) -> dict[tuple[str, str], list[Mention]]:
        return {key: [m for m in ms if m.accepted] for key, ms in self.prefilter.items()}


def resolve_subtypes(cfg: RunConfig) -> dict[str, SubTypeSet]:
    """Sub-type set per target (lower-cased name), honoring explicit overrides."""
    if cfg.mode not in ("ed", "edf"):
        return {}
    resolved: dict[str, SubTypeSet] = {}
    for t in cfg.targets:
        key = t.name.lower()
        if key in cfg.subtype_sets:
            s = cfg.subtype_sets[key]
        else:
            s = decompose(t, cfg.decomposer_source, backend=cfg.decomposer_backend)
        if cfg.include_target:
            s = ensure_target_included(s)
        resolved[key] = s
    return resolved


def run_corpus(corpus: Corpus, cfg: RunConfig) -> CorpusRunResult:
    """Process every document of the corpus under the configured mode.

    Results are persisted incrementally to ``cfg.out_dir`` (when set) and the
    run can be resumed: completed documents are skipped without new backend
    calls. Rerunning a finished run recomputes the report from the stored rows
    and issues no backend calls at all.
    """
    subtype_sets = resolve_subtypes(cfg)
    docs = sorted(corpus.documents, key=lambda d: d.id)
    writer = runs.RunWriter(cfg.out_dir, cfg.config_snapshot) if cfg.out_dir else None
    skip = writer.ok_docs() if writer else set()
    cache = VerdictCache()
    threshold = cfg.filter.threshold if cfg.filter else 0.0
    context_mode = cfg.filter.context_mode if cfg.filter else "none"

    committed_pred, committed_verdicts = writer.committed_rows() if writer else ([], [])
    failures: dict[str, str] = {}

    def process(doc: Document) -> tuple[list[dict], list[dict], str | None]:
        pred_rows: list[dict] = []
        verdict_rows: list[dict] = []
        try:
            for t in cfg.targets:
                mentions, _ = _run_document_type(
                    doc, t, cfg, subtype_sets.get(t.name.lower()), cache
                )
                for m in mentions:
                    pred_rows.append(runs.prediction_row(doc.id, t.name, m))
                    if m.verdict is not None:
                        verdict_rows.append(runs.verdict_row(doc.id, t.name, m, context_mode))
        except Exception as exc:  # noqa: BLE001 - per-document isolation
            log.warning("document %s failed: %s", doc.id, exc)
            return [], [], f"{type(exc).__name__}: {exc}"
        return pred_rows, verdict_rows, None

    pending = [d for d in docs if d.id not in skip]
    new_pred: list[dict] = []
    new_verdicts: list[dict] = []

    def commit(doc_id: str, result: tuple[list[dict], list[dict], str | None]) -> None:
        pred_rows, verdict_rows, error = result
        if error is None:
            new_pred.extend(pred_rows)
            new_verdicts.extend(verdict_rows)
        else:
            failures[doc_id] = error
        if writer:
            writer.commit_doc(doc_id, pred_rows, verdict_rows, error=error)

    try:
        if cfg.concurrency == 1:
            for doc in pending:
                commit(doc.id, process(doc))
        else:
            done: dict[str, tuple] = {}
            next_index = 0
            with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
                future_ids = {pool.submit(process, doc): doc.id for doc in pending}
                for future in as_completed(future_ids):
                    done[future_ids[future]] = future.result()
                    while next_index < len(pending) and pending[next_index].id in done:
                        doc_id = pending[next_index].id
                        commit(doc_id, done.pop(doc_id))
                        next_index += 1
    finally:
        if writer:
            writer.close()

    all_pred = committed_pred + new_pred
    all_verdicts = committed_verdicts + new_verdicts
    prefilter = runs.mentions_from_rows(all_pred, all_verdicts, threshold)

    gold_cells = {
        (doc.id, t.name): list(corpus.gold_for(doc.id, t.name))
        for doc in docs
        for t in cfg.targets
    }
    accepted_cells = {
        key: [m for m in ms if m.accepted] for key, ms in prefilter.items()
    }
    report = score_cells(accepted_cells, gold_cells, cfg.normalization)

    if writer:
        report_dict = report.to_dict()
        report_dict["failures"] = {k: failures[k] for k in sorted(failures)}
        writer.finalize(report_dict)
    return CorpusRunResult(
        report=report, prefilter=prefilter, failures=failures, out_dir=cfg.out_dir
    )
