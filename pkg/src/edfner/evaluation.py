"""Exact-match scoring, fully-absent and polarity error analyses, threshold sweeps.

Matching is string-level per document: predictions and gold mentions are
compared as multisets of normalized surfaces, so tp per surface is the minimum
of its prediction and gold counts. Span-level matching is out of scope here.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .filtering import apply_threshold
from .types import (
    DEFAULT_NORMALIZATION,
    GoldEntity,
    Mention,
    NormalizationConfig,
    normalize,
    tokens_of,
)


def exact_match(
    preds: list[Mention],
    golds: list[GoldEntity],
    cfg: NormalizationConfig = DEFAULT_NORMALIZATION,
) -> tuple[int, int, int]:
    """(tp, fp, fn) under one-to-one multiset matching of normalized surfaces."""
    pred_counts = Counter(m.normalized for m in preds)
    gold_counts = Counter(normalize(g.surface, cfg) for g in golds)
    tp = sum(min(count, gold_counts[surface]) for surface, count in pred_counts.items())
    return tp, len(preds) - tp, len(golds) - tp


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall, F1; zero (not NaN) on empty denominators."""
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    per_document: tuple[dict, ...] = ()
    per_type: tuple[dict, ...] = ()

    @staticmethod
    def from_cells(cells: dict[tuple[str, str], tuple[int, int, int]]) -> "EvalReport":
        """Aggregate per-(document, type) count cells into one micro-averaged report."""
        def _row(tp: int, fp: int, fn: int) -> dict:
            p, r, f1 = prf(tp, fp, fn)
            return {"tp": tp, "fp": fp, "fn": fn, "precision": p, "recall": r, "f1": f1}

        doc_totals: dict[str, list[int]] = {}
        type_totals: dict[str, list[int]] = {}
        total = [0, 0, 0]
        for (doc_id, type_name), (tp, fp, fn) in sorted(cells.items()):
            for bucket in (doc_totals.setdefault(doc_id, [0, 0, 0]),
                           type_totals.setdefault(type_name, [0, 0, 0]),
                           total):
                bucket[0] += tp
                bucket[1] += fp
                bucket[2] += fn
        per_document = tuple(
            {"doc_id": doc_id, **_row(*counts)} for doc_id, counts in sorted(doc_totals.items())
        )
        per_type = tuple(
            {"entity_type": name, **_row(*counts)} for name, counts in sorted(type_totals.items())
        )
        p, r, f1 = prf(*total)
        return EvalReport(
            tp=total[0], fp=total[1], fn=total[2],
            precision=p, recall=r, f1=f1,
            per_document=per_document, per_type=per_type,
        )

    def to_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "per_document": list(self.per_document),
            "per_type": list(self.per_type),
        }

    @staticmethod
    def from_dict(data: dict) -> "EvalReport":
        return EvalReport(
            tp=data["tp"], fp=data["fp"], fn=data["fn"],
            precision=data["precision"], recall=data["recall"], f1=data["f1"],
            per_document=tuple(data.get("per_document", ())),
            per_type=tuple(data.get("per_type", ())),
        )


def score_cells(
    predictions: dict[tuple[str, str], list[Mention]],
    gold: dict[tuple[str, str], list[GoldEntity]],
    cfg: NormalizationConfig = DEFAULT_NORMALIZATION,
) -> EvalReport:
    """Score predictions grouped by (doc_id, entity_type) against gold of the same keys."""
    cells: dict[tuple[str, str], tuple[int, int, int]] = {}
    for key in sorted(set(predictions) | set(gold)):
        cells[key] = exact_match(predictions.get(key, []), gold.get(key, []), cfg)
    return EvalReport.from_cells(cells)


# ---------------------------------------------------------------------------
# Error analyses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AbsenceReport:
    """How many gold mentions share no token with any prediction."""

    n_gold: int
    n_fully_absent: int
    fully_absent: tuple[str, ...]

    @property
    def ratio(self) -> float:
        return self.n_fully_absent / self.n_gold if self.n_gold else 0.0

    def to_dict(self) -> dict:
        return {
            "n_gold": self.n_gold,
            "n_fully_absent": self.n_fully_absent,
            "ratio": self.ratio,
            "fully_absent": list(self.fully_absent),
        }


def fully_absent(
    golds: list[GoldEntity],
    preds: list[Mention],
    cfg: NormalizationConfig = DEFAULT_NORMALIZATION,
) -> AbsenceReport:
    """Gold mentions of one document sharing no normalized token with any prediction.

    A prediction that partially captures a gold (any shared token) keeps it
    from counting as fully absent.
    """
    pred_tokens: set[str] = set()
    for m in preds:
        pred_tokens |= tokens_of(m.normalized)
    absent = tuple(
        g.surface
        for g in golds
        if not (tokens_of(normalize(g.surface, cfg)) & pred_tokens)
    )
    return AbsenceReport(n_gold=len(golds), n_fully_absent=len(absent), fully_absent=absent)


def merge_absence(reports: list[AbsenceReport]) -> AbsenceReport:
    return AbsenceReport(
        n_gold=sum(r.n_gold for r in reports),
        n_fully_absent=sum(r.n_fully_absent for r in reports),
        fully_absent=tuple(s for r in reports for s in r.fully_absent),
    )


class MissingVerdictsError(ValueError):
    pass


@dataclass(frozen=True)
class PolarityReport:
    """Rejected-gold counts grouped by the gold polarity attribute."""

    rejected_by_polarity: dict[str, int] = field(
        default_factory=lambda: {"positive": 0, "negative": 0, "unspecified": 0}
    )

    @property
    def total_rejected(self) -> int:
        return sum(self.rejected_by_polarity.values())

    def to_dict(self) -> dict:
        return {"rejected_by_polarity": dict(self.rejected_by_polarity),
                "total_rejected": self.total_rejected}


def polarity_breakdown(
    prefilter_mentions: dict[str, list[Mention]],
    gold: dict[str, list[GoldEntity]],
    cfg: NormalizationConfig = DEFAULT_NORMALIZATION,
) -> PolarityReport:
    """Count gold mentions rejected by the filter, grouped by polarity.

    A gold counts as rejected iff some pre-filter mention in its document has
    the same normalized surface and a non-accepting verdict. Gold never
    produced by retrieval is excluded. Requires a run mode that classified
    its mentions.
    """
    any_mentions = any(prefilter_mentions.values())
    any_verdicts = any(
        m.verdict is not None for mentions in prefilter_mentions.values() for m in mentions
    )
    if any_mentions and not any_verdicts:
        raise MissingVerdictsError(
            "polarity breakdown needs verdicts; run in a filter mode (f or edf)"
        )
    counts = {"positive": 0, "negative": 0, "unspecified": 0}
    for doc_id, golds in gold.items():
        rejected_surfaces = {
            m.normalized
            for m in prefilter_mentions.get(doc_id, [])
            if m.verdict is not None and not m.verdict.accepted
        }
        for g in golds:
            if normalize(g.surface, cfg) in rejected_surfaces:
                counts[g.polarity] += 1
    return PolarityReport(rejected_by_polarity=counts)


# ---------------------------------------------------------------------------
# Threshold sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    tau: float
    precision: float
    recall: float
    f1: float


def sweep_threshold(
    prefilter_mentions: dict[tuple[str, str], list[Mention]],
    gold: dict[tuple[str, str], list[GoldEntity]],
    grid: list[float],
    cfg: NormalizationConfig = DEFAULT_NORMALIZATION,
) -> list[SweepRow]:
    """Re-score acceptance at each threshold from persisted verdicts; no backend calls.

    Mentions without a verdict (unfiltered runs) are always accepted. Recall is
    non-decreasing in the threshold because the accepted set only grows.
    """
    rows = []
    for tau in grid:
        accepted = {
            key: [
                m for m in mentions
                if m.verdict is None or apply_threshold(m.verdict.answer, m.verdict.p_no, tau)
            ]
            for key, mentions in prefilter_mentions.items()
        }
        report = score_cells(accepted, gold, cfg)
        rows.append(SweepRow(tau=tau, precision=report.precision, recall=report.recall, f1=report.f1))
    return rows


def sweep_csv(rows: list[SweepRow]) -> str:
    lines = ["tau,precision,recall,f1"]
    for row in rows:
        lines.append(f"{row.tau!r},{row.precision!r},{row.recall!r},{row.f1!r}")
    return "\n".join(lines) + "\n"
