#!/usr/bin/env python3
"""Trace the filter's precision/recall trade-off across rejection thresholds.

Runs decomposition+filter once with a seeded stochastic mock filter, then
re-scores the stored verdicts over a threshold grid without further backend
calls. At threshold 0 the plain filter applies; at 1 filtering is disabled and
the row matches a decomposition-only run. Writes CSV plot data.

Usage: python scripts/threshold_tradeoff.py [--docs N] [--out CSV]
"""
from __future__ import annotations

import argparse
from pathlib import Path

from edfner.backend import ClassifierMock, GazetteerNerMock, mock_descriptor
from edfner.corpus import demo_gazetteer, generate_synthetic
from edfner.evaluation import sweep_csv, sweep_threshold
from edfner.filtering import FilterConfig
from edfner.pipeline import RunConfig, run_corpus
from edfner.types import SubTypeSet, entity_type


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--docs", type=int, default=100)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--out", default="runs-demo/threshold_tradeoff.csv")
    args = parser.parse_args()

    gazetteer = demo_gazetteer("treatment")
    corpus = generate_synthetic(seed=args.seed, n_docs=args.docs, gazetteer=gazetteer)
    treatment = entity_type("treatment")
    subtypes = SubTypeSet(target="treatment", source="custom",
                          subtypes=tuple(gazetteer.subtypes))

    cfg = RunConfig(
        mode="edf", targets=(treatment,),
        ner=mock_descriptor(GazetteerNerMock(gazetteer, contamination_rate=1.0, seed=3)),
        subtype_sets={"treatment": subtypes},
        filter=FilterConfig(backend=mock_descriptor(ClassifierMock(policy="stochastic", seed=13))),
    )
    result = run_corpus(corpus, cfg)

    gold = {
        (doc.id, "treatment"): list(corpus.gold_for(doc.id, "treatment"))
        for doc in corpus.documents
    }
    grid = [round(0.05 * i, 10) for i in range(21)]
    rows = sweep_threshold(result.prefilter, gold, grid)

    print(f"{'tau':>6}{'P':>9}{'R':>9}{'F1':>9}")
    for row in rows:
        print(f"{row.tau:>6.2f}{row.precision:>9.4f}{row.recall:>9.4f}{row.f1:>9.4f}")

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(sweep_csv(rows), encoding="utf-8")
    print(f"\nwrote {out}")


if __name__ == "__main__":
    main()
