"""Run-directory persistence: predictions, verdicts, report, config, progress.

Layout inside a run directory:
    config.json        snapshot of the run configuration (written at start)
    predictions.jsonl  one pre-filter mention per line
    verdicts.jsonl     one classification per line (empty for unfiltered modes)
    progress.jsonl     per-document completion markers (enables resume)
    report.json        final metrics (written at completion)

Rows are appended per document while the run progresses, so an interrupted run
can resume without re-querying completed documents; artifacts are rewritten in
canonical order (doc id, then normalized surface) on completion. Verdict
probabilities round-trip at full precision through JSON.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from .filtering import apply_threshold
from .types import FilterVerdict, Mention

PREDICTIONS_FILE = "predictions.jsonl"
VERDICTS_FILE = "verdicts.jsonl"
REPORT_FILE = "report.json"
CONFIG_FILE = "config.json"
PROGRESS_FILE = "progress.jsonl"


class RunDirError(RuntimeError):
    pass


def prediction_row(doc_id: str, entity_type: str, m: Mention) -> dict:
    return {
        "doc_id": doc_id,
        "entity_type": entity_type,
        "surface": m.surface,
        "normalized": m.normalized,
        "origins": sorted(m.origins),
        "spans": [list(s) for s in m.spans],
    }


def verdict_row(doc_id: str, entity_type: str, m: Mention, context_mode: str) -> dict:
    assert m.verdict is not None
    return {
        "doc_id": doc_id,
        "surface": m.surface,
        "entity_type": entity_type,
        "answer": m.verdict.answer,
        "p_no": m.verdict.p_no,
        "context_mode": context_mode,
    }


def mentions_from_rows(
    pred_rows: list[dict], verdict_rows: list[dict], threshold: float = 0.0
) -> dict[tuple[str, str], list[Mention]]:
    """Rebuild pre-filter mentions (verdicts attached) grouped by (doc_id, entity_type).

    Acceptance is recomputed from the verdicts at the given threshold; it is
    never stored on disk.
    """
    verdicts: dict[tuple[str, str, str], FilterVerdict] = {}
    for row in verdict_rows:
        try:
            key = (row["doc_id"], row["entity_type"], row["surface"])
            verdicts[key] = FilterVerdict(
                answer=row["answer"],
                p_no=row["p_no"],
                accepted=apply_threshold(row["answer"], row["p_no"], threshold),
            )
        except KeyError as exc:
            raise RunDirError(f"verdict row missing field {exc}: {row!r}") from exc
    grouped: dict[tuple[str, str], list[Mention]] = {}
    for row in pred_rows:
        try:
            mention = Mention(
                surface=row["surface"],
                normalized=row["normalized"],
                origins=frozenset(row["origins"]),
                spans=tuple(tuple(s) for s in row["spans"]),
                verdict=verdicts.get((row["doc_id"], row["entity_type"], row["surface"])),
            )
            grouped.setdefault((row["doc_id"], row["entity_type"]), []).append(mention)
        except KeyError as exc:
            raise RunDirError(f"prediction row missing field {exc}: {row!r}") from exc
    return grouped


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise RunDirError(f"{path}:{lineno}: corrupt line ({exc})") from exc
    return rows


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _dump_json(path: Path, data: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class RunArtifacts:
    directory: str
    predictions: tuple[dict, ...]
    verdicts: tuple[dict, ...]
    report: dict
    config: dict

    def mentions(self) -> dict[tuple[str, str], list[Mention]]:
        threshold = float(self.config.get("filter", {}).get("threshold", 0.0))
        return mentions_from_rows(list(self.predictions), list(self.verdicts), threshold)


def load_run(directory: str) -> RunArtifacts:
    """Load a completed run directory, refusing partial ones by naming the missing file."""
    root = Path(directory)
    if not root.is_dir():
        raise RunDirError(f"run directory {directory!r} does not exist")
    for name in (CONFIG_FILE, PREDICTIONS_FILE, VERDICTS_FILE, REPORT_FILE):
        if not (root / name).exists():
            raise RunDirError(f"{name} missing from run directory {directory!r}")
    with open(root / CONFIG_FILE, encoding="utf-8") as fh:
        config = json.load(fh)
    with open(root / REPORT_FILE, encoding="utf-8") as fh:
        report = json.load(fh)
    return RunArtifacts(
        directory=str(root),
        predictions=tuple(_read_jsonl(root / PREDICTIONS_FILE)),
        verdicts=tuple(_read_jsonl(root / VERDICTS_FILE)),
        report=report,
        config=config,
    )


class RunWriter:
    """Single-writer persistence for one run directory, with resume support.

    Opening an existing directory resumes it: rows belonging to documents that
    never completed are compacted away, and ``ok_docs()`` reports what can be
    skipped. The configuration snapshot must match the original run's.
    """

    def __init__(self, directory: str, config_snapshot: dict):
        self.root = Path(directory)
        self.root.mkdir(parents=True, exist_ok=True)
        self._config = config_snapshot
        config_path = self.root / CONFIG_FILE
        if config_path.exists():
            with open(config_path, encoding="utf-8") as fh:
                existing = json.load(fh)
            if existing != config_snapshot:
                raise RunDirError(
                    f"run directory {directory!r} was written with a different configuration; "
                    "use a fresh directory"
                )
        else:
            _dump_json(config_path, config_snapshot)
        self._progress: dict[str, dict] = {}
        self._pred_rows: list[dict] = []
        self._verdict_rows: list[dict] = []
        self._load_and_compact()
        self._pred_fh = open(self.root / PREDICTIONS_FILE, "a", encoding="utf-8")
        self._verdict_fh = open(self.root / VERDICTS_FILE, "a", encoding="utf-8")
        self._progress_fh = open(self.root / PROGRESS_FILE, "a", encoding="utf-8")

    def _load_and_compact(self) -> None:
        progress_path = self.root / PROGRESS_FILE
        if progress_path.exists():
            for row in _read_jsonl(progress_path):
                self._progress[row["doc_id"]] = row
        done = {d for d, row in self._progress.items() if row["status"] == "ok"}
        for name, store in ((PREDICTIONS_FILE, self._pred_rows), (VERDICTS_FILE, self._verdict_rows)):
            path = self.root / name
            if path.exists():
                store.extend(r for r in _read_jsonl(path) if r.get("doc_id") in done)
            _write_jsonl(path, store)
        _write_jsonl(progress_path, [self._progress[d] for d in sorted(self._progress)])

    def ok_docs(self) -> set[str]:
        return {d for d, row in self._progress.items() if row["status"] == "ok"}

    def committed_rows(self) -> tuple[list[dict], list[dict]]:
        return list(self._pred_rows), list(self._verdict_rows)

    def commit_doc(
        self,
        doc_id: str,
        pred_rows: list[dict],
        verdict_rows: list[dict],
        error: str | None = None,
    ) -> None:
        """Persist one document's results; the progress marker goes last so a kill
        mid-append leaves the document resumable, not duplicated."""
        if error is None:
            for row in pred_rows:
                self._pred_fh.write(json.dumps(row, sort_keys=True) + "\n")
            for row in verdict_rows:
                self._verdict_fh.write(json.dumps(row, sort_keys=True) + "\n")
            self._pred_fh.flush()
            self._verdict_fh.flush()
            self._pred_rows.extend(pred_rows)
            self._verdict_rows.extend(verdict_rows)
            marker = {"doc_id": doc_id, "status": "ok"}
        else:
            marker = {"doc_id": doc_id, "status": "failed", "error": error}
        self._progress[doc_id] = marker
        self._progress_fh.write(json.dumps(marker, sort_keys=True) + "\n")
        self._progress_fh.flush()
        os.fsync(self._progress_fh.fileno())

    def finalize(self, report: dict) -> None:
        """Write the report and rewrite row files in canonical order."""
        self.close()
        key = lambda r: (r["doc_id"], r.get("entity_type", ""), r.get("normalized", r["surface"]))
        self._pred_rows.sort(key=key)
        self._verdict_rows.sort(key=key)
        _write_jsonl(self.root / PREDICTIONS_FILE, self._pred_rows)
        _write_jsonl(self.root / VERDICTS_FILE, self._verdict_rows)
        _dump_json(self.root / REPORT_FILE, report)

    def close(self) -> None:
        for fh in (self._pred_fh, self._verdict_fh, self._progress_fh):
            if not fh.closed:
                fh.close()
