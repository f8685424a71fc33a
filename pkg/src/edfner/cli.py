"""``edf`` command line: the full decompose / extract / run / evaluate workflow.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
Human-readable tables go to stdout; machine-readable formats go to files
under ``--out`` and carry the same numbers.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .backend import BackendError
from .config import ConfigError, build_run_config, load_toml
from .context import make_document
from .corpus import (
    CorpusFormatError,
    demo_gazetteer,
    generate_synthetic,
    load_gazetteer,
    load_jsonl,
    write_jsonl,
)
from .decomposer import UnknownDecompositionError, decompose
from .evaluation import (
    EvalReport,
    MissingVerdictsError,
    fully_absent,
    merge_absence,
    polarity_breakdown,
    score_cells,
    sweep_csv,
    sweep_threshold,
)
from .pipeline import PipelineConfigError, run_corpus
from .runs import RunDirError, load_run

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the CLI contract wants 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="edf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("decompose", help="print the sub-type list for a target type")
    p.add_argument("--target", required=True)
    p.add_argument("--source", required=True,
                   choices=["annotation", "llm-generated", "umls", "custom"])
    p.add_argument("--custom-list", help="plain-text file, one sub-type per line (source=custom)")
    p.add_argument("--out", help="also write the list as JSON")

    p = sub.add_parser("extract", help="extract mentions from one text with the configured backend")
    p.add_argument("--config", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--mode", default="baseline", choices=["baseline", "ed"])
    p.add_argument("--target")

    p = sub.add_parser("run", help="run a mode over a corpus and score it")
    p.add_argument("--mode", choices=["baseline", "ed", "f", "edf"])
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--filter-context", choices=["none", "sentence", "paragraph", "document"])
    p.add_argument("--filter-prompt", choices=["default", "described"])
    p.add_argument("--threshold", type=float)
    p.add_argument("--concurrency", type=int)

    p = sub.add_parser("evaluate", help="re-score a finished run directory against a corpus")
    p.add_argument("--run", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", help="write the recomputed report JSON here")

    p = sub.add_parser("analyze-absent", help="fully-absent gold analysis over a run's predictions")
    p.add_argument("--run", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out")

    p = sub.add_parser("analyze-polarity", help="polarity breakdown of filter-rejected gold")
    p.add_argument("--run", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out")

    p = sub.add_parser("sweep", help="threshold sweep re-scored from stored verdicts")
    p.add_argument("--run", required=True)
    p.add_argument("--corpus", help="defaults to the corpus recorded in the run config")
    p.add_argument("--grid", default="0:1:0.1", help="start:stop:step or comma list")
    p.add_argument("--out", help="write the sweep CSV here")

    p = sub.add_parser("gen-synthetic", help="generate a synthetic annotated corpus")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--docs", type=int, required=True)
    p.add_argument("--gazetteer", help="gazetteer JSON; defaults to the built-in demo")
    p.add_argument("--demo-target", default="treatment", choices=["treatment", "problem"])
    p.add_argument("--negation-rate", type=float, default=0.25)
    p.add_argument("--out", required=True)
    return parser


def parse_grid(spec: str) -> list[float]:
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid must be start:stop:step or a comma list, got {spec!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ConfigError("grid step must be positive")
        n = int(round((stop - start) / step))
        values = [round(start + i * step, 10) for i in range(n + 1)]
        return [v for v in values if v <= stop + 1e-9]
    try:
        return [float(p) for p in spec.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad grid value in {spec!r}") from exc


def _print_report(report: EvalReport) -> None:
    print(f"{'':<12}{'tp':>8}{'fp':>8}{'fn':>8}{'P':>10}{'R':>10}{'F1':>10}")
    print(f"{'overall':<12}{report.tp:>8}{report.fp:>8}{report.fn:>8}"
          f"{report.precision:>10.4f}{report.recall:>10.4f}{report.f1:>10.4f}")
    for row in report.per_type:
        print(f"{row['entity_type']:<12}{row['tp']:>8}{row['fp']:>8}{row['fn']:>8}"
              f"{row['precision']:>10.4f}{row['recall']:>10.4f}{row['f1']:>10.4f}")


def _cmd_decompose(args) -> int:
    if args.source == "custom":
        if not args.custom_list:
            raise ConfigError("--custom-list is required with --source custom")
        from .decomposer import load_custom_list

        subtypes = load_custom_list(args.custom_list, args.target)
    else:
        subtypes = decompose(args.target, args.source)
    for s in subtypes:
        print(s)
    if args.out:
        Path(args.out).write_text(
            json.dumps({"target": subtypes.target, "source": subtypes.source,
                        "subtypes": list(subtypes)}, indent=2) + "\n",
            encoding="utf-8",
        )
    return 0


def _cmd_extract(args) -> int:
    raw = load_toml(args.config)
    overrides = {"run.mode": args.mode}
    if args.target:
        overrides["run.targets"] = [args.target]
    cfg = build_run_config(raw, args.config, overrides=overrides)
    doc = make_document("stdin", args.text)
    from .pipeline import resolve_subtypes, run_baseline, run_ed

    result = {}
    subtype_sets = resolve_subtypes(cfg)
    for t in cfg.targets:
        if args.mode == "ed":
            mentions = run_ed(doc, t, subtype_sets[t.name.lower()], cfg.ner, cfg.normalization)
        else:
            mentions = run_baseline(doc, t, cfg.ner, cfg.normalization)
        result[t.name] = [
            {"surface": m.surface, "origins": sorted(m.origins), "spans": [list(s) for s in m.spans]}
            for m in mentions
        ]
    print(json.dumps(result, indent=2))
    return 0


def _cmd_run(args) -> int:
    corpus = load_jsonl(args.corpus)
    raw = load_toml(args.config)
    overrides = {
        "run.mode": args.mode,
        "run.concurrency": args.concurrency,
        "filter.context": args.filter_context,
        "filter.prompt": args.filter_prompt,
        "filter.threshold": args.threshold,
    }
    cfg = build_run_config(
        raw, args.config, corpus=corpus, corpus_path=args.corpus,
        out_dir=args.out, overrides=overrides,
    )
    result = run_corpus(corpus, cfg)
    _print_report(result.report)
    if result.failures:
        print(f"failed documents: {len(result.failures)}")
        for doc_id in sorted(result.failures):
            print(f"  {doc_id}: {result.failures[doc_id]}")
    return 0


def _load_run_and_corpus(args):
    artifacts = load_run(args.run)
    corpus_path = args.corpus or artifacts.config.get("run", {}).get("corpus")
    if not corpus_path:
        raise ConfigError("--corpus is required (none recorded in the run config)")
    return artifacts, load_jsonl(corpus_path)


def _cmd_evaluate(args) -> int:
    artifacts, corpus = _load_run_and_corpus(args)
    targets = artifacts.config.get("run", {}).get("targets", [])
    mentions = artifacts.mentions()
    gold_cells = {
        (doc.id, t): list(corpus.gold_for(doc.id, t)) for doc in corpus.documents for t in targets
    }
    accepted = {key: [m for m in ms if m.accepted] for key, ms in mentions.items()}
    report = score_cells(accepted, gold_cells)
    _print_report(report)
    if args.out:
        Path(args.out).write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return 0


def _cmd_analyze_absent(args) -> int:
    artifacts, corpus = _load_run_and_corpus(args)
    targets = artifacts.config.get("run", {}).get("targets", [])
    mentions = artifacts.mentions()
    reports = []
    for doc in corpus.documents:
        for t in targets:
            golds = list(corpus.gold_for(doc.id, t))
            preds = mentions.get((doc.id, t), [])
            reports.append(fully_absent(golds, preds))
    merged = merge_absence(reports)
    print(f"gold mentions:  {merged.n_gold}")
    print(f"fully absent:   {merged.n_fully_absent}")
    print(f"ratio:          {merged.ratio:.4f}")
    if args.out:
        Path(args.out).write_text(
            json.dumps(merged.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
    return 0


def _cmd_analyze_polarity(args) -> int:
    artifacts, corpus = _load_run_and_corpus(args)
    mentions = artifacts.mentions()
    by_doc: dict[str, list] = {}
    for (doc_id, _type), ms in mentions.items():
        by_doc.setdefault(doc_id, []).extend(ms)
    report = polarity_breakdown(by_doc, {d.id: list(corpus.gold_for(d.id)) for d in corpus.documents})
    for polarity in ("positive", "negative", "unspecified"):
        print(f"rejected gold ({polarity}): {report.rejected_by_polarity[polarity]}")
    print(f"total rejected gold:     {report.total_rejected}")
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return 0


def _cmd_sweep(args) -> int:
    artifacts, corpus = _load_run_and_corpus(args)
    targets = artifacts.config.get("run", {}).get("targets", [])
    grid = parse_grid(args.grid)
    mentions = artifacts.mentions()
    gold_cells = {
        (doc.id, t): list(corpus.gold_for(doc.id, t)) for doc in corpus.documents for t in targets
    }
    rows = sweep_threshold(mentions, gold_cells, grid)
    csv_text = sweep_csv(rows)
    print(csv_text, end="")
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
    return 0


def _cmd_gen_synthetic(args) -> int:
    gazetteer = load_gazetteer(args.gazetteer) if args.gazetteer else demo_gazetteer(args.demo_target)
    corpus = generate_synthetic(
        seed=args.seed, n_docs=args.docs, gazetteer=gazetteer, negation_rate=args.negation_rate
    )
    write_jsonl(corpus, args.out)
    n_gold = sum(len(v) for v in corpus.gold.values())
    print(f"wrote {len(corpus.documents)} documents, {n_gold} gold mentions to {args.out}")
    return 0


_COMMANDS = {
    "decompose": _cmd_decompose,
    "extract": _cmd_extract,
    "run": _cmd_run,
    "evaluate": _cmd_evaluate,
    "analyze-absent": _cmd_analyze_absent,
    "analyze-polarity": _cmd_analyze_polarity,
    "sweep": _cmd_sweep,
    "gen-synthetic": _cmd_gen_synthetic,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, PipelineConfigError, UnknownDecompositionError, MissingVerdictsError) as exc:
        print(f"edf: error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (BackendError, CorpusFormatError, RunDirError, OSError) as exc:
        print(f"edf: {type(exc).__name__}: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    except KeyboardInterrupt:
        print("edf: interrupted; run directory is resumable", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
