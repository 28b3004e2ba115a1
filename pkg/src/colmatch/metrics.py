"""Evaluation metrics: MRR and Recall@GT.

MRR averages, over the source columns that appear in the ground truth, the
reciprocal rank of the first correct target in each column's candidate
list (0 when no correct target was retrieved).  Recall@GT cuts the global
score-ranked pair list at the ground-truth size and measures the overlap.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Optional

from .retrieval import MatchList
from .tables import GroundTruth


@dataclass
class EvalReport:
    mrr: float
    recall_at_gt: float
    first_correct_rank: dict  # source -> rank of first correct target, or None
    runtime_seconds: float
    config: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "mrr": self.mrr,
            "recall_at_gt": self.recall_at_gt,
            "first_correct_rank": self.first_correct_rank,
            "runtime_seconds": self.runtime_seconds,
            "config": self.config,
        }

    def as_text(self) -> str:
        lines = [
            f"{'metric':<14}{'value':>10}",
            f"{'mrr':<14}{self.mrr:>10.4f}",
            f"{'recall_at_gt':<14}{self.recall_at_gt:>10.4f}",
            f"{'runtime_s':<14}{self.runtime_seconds:>10.3f}",
        ]
        return "\n".join(lines)


def write_report(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def first_correct_ranks(matches: MatchList, gt: GroundTruth) -> dict:
    """Rank of the first correct target per ground-truth source (else None)."""
    ranks = {}
    for src in sorted(gt.sources()):
        wanted = gt.targets_for(src)
        rank = None
        for cand in matches.per_source.get(src, []):
            if cand.target in wanted:
                rank = cand.rank
                break
        ranks[src] = rank
    return ranks


def mrr(matches: MatchList, gt: GroundTruth) -> float:
    ranks = first_correct_ranks(matches, gt)
    if not ranks:
        return 0.0
    return sum(1.0 / r for r in ranks.values() if r is not None) / len(ranks)


def recall_at_gt(matches: MatchList, gt: GroundTruth) -> float:
    """|G intersect M| / |G| with M = the |G| best pairs overall.

    Global ties break by source name then target name, the same rule the
    retriever uses, so end-to-end runs stay deterministic.
    """
    if not gt.pairs:
        raise ValueError("ground truth must be non-empty")
    ranked = sorted(matches.flat(), key=lambda c: (-c.score, c.source, c.target))
    k = len(gt.pairs)
    top = {(c.source, c.target) for c in ranked[:k]}
    return len(top & gt.pairs) / k


def evaluate(source, target, gt: GroundTruth, config=None, llm_client=None) -> EvalReport:
    """Run the configured pipeline end-to-end and score it."""
    from .pipeline import PipelineConfig, run_pipeline  # deferred: avoids a cycle

    config = config or PipelineConfig()
    started = time.perf_counter()
    matches = run_pipeline(source, target, config, llm_client=llm_client)
    elapsed = time.perf_counter() - started
    return EvalReport(
        mrr=mrr(matches, gt),
        recall_at_gt=recall_at_gt(matches, gt),
        first_correct_rank=first_correct_ranks(matches, gt),
        runtime_seconds=elapsed,
        config=config.as_dict(),
    )
