"""Grid experiments over sampling x serialization x reranker x projection.

Every (cell, pair, repetition) run is appended to a JSONL checkpoint before
any aggregation happens, so a crashed grid resumes where it stopped and the
reported numbers can be re-derived from the raw records by hand.  Failed
runs are recorded too and count as done on resume; means skip them.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .embedding import EmbeddingProviderConfig
from .metrics import evaluate
from .pipeline import RERANKERS, PipelineConfig
from .rerank_llm import LlmConfig
from .sampling import STRATEGIES, SamplerConfig
from .serialization import FORMATS, SerializationConfig
from .tables import load_ground_truth, load_table

log = logging.getLogger(__name__)

RECORDS_NAME = "records.jsonl"
CSV_NAME = "results.csv"
TABLE_NAME = "results.txt"

DEFAULT_REPETITIONS = 3


@dataclass(frozen=True)
class ExperimentGrid:
    """Axes and table-pair suite for one ablation run."""

    suite: tuple  # of (source path, target path, ground truth path)
    sampling: tuple = ("priority",)
    serialization: tuple = ("default",)
    rerankers: tuple = ("none",)
    projections: tuple = (None,)  # head paths; None = frozen base encoder
    repetitions: int = DEFAULT_REPETITIONS
    seeds: tuple = (0,)
    sample_size: int = 10
    dimension: Optional[int] = None
    llm: Optional[LlmConfig] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "suite", tuple(tuple(p) for p in self.suite))
        object.__setattr__(self, "sampling", tuple(self.sampling))
        object.__setattr__(self, "serialization", tuple(self.serialization))
        object.__setattr__(self, "rerankers", tuple(self.rerankers))
        object.__setattr__(self, "projections", tuple(self.projections))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.suite:
            raise ValueError("suite must list at least one table pair")
        if any(len(p) != 3 for p in self.suite):
            raise ValueError("each suite entry needs (source, target, ground_truth) paths")
        for value in self.sampling:
            if value not in STRATEGIES:
                raise ValueError(f"unknown sampling strategy: {value!r}")
        for value in self.serialization:
            if value not in FORMATS:
                raise ValueError(f"unknown serialization format: {value!r}")
        for value in self.rerankers:
            if value not in RERANKERS:
                raise ValueError(f"unknown reranker: {value!r}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.seeds:
            raise ValueError("at least one seed required")

    def cells(self) -> list:
        """Axis product in declaration order; one dict per cell."""
        return [
            {"sampling": s, "serialization": f, "reranker": r, "projection": p}
            for s, f, r, p in itertools.product(
                self.sampling, self.serialization, self.rerankers, self.projections
            )
        ]


def _suite_entry(entry):
    # accepts ["src", "dst", "gt"] or {"source": ..., "target": ..., "ground_truth": ...}
    if isinstance(entry, dict):
        return entry["source"], entry["target"], entry["ground_truth"]
    if isinstance(entry, (list, tuple)) and len(entry) == 3:
        return tuple(entry)
    raise ValueError(
        "suite entries must be [source, target, ground_truth] paths or an object with those keys"
    )


def load_grid(path) -> ExperimentGrid:
    spec = json.loads(Path(path).read_text(encoding="utf-8"))
    suite = tuple(_suite_entry(entry) for entry in spec["suite"])
    llm = None
    if spec.get("llm"):
        llm = LlmConfig(
            endpoint=spec["llm"]["endpoint"],
            model=spec["llm"].get("model", "default"),
            temperature=spec["llm"].get("temperature", 0.0),
        )
    return ExperimentGrid(
        suite=suite,
        sampling=tuple(spec.get("sampling", ("priority",))),
        serialization=tuple(spec.get("serialization", ("default",))),
        rerankers=tuple(spec.get("rerankers", ("none",))),
        projections=tuple(spec.get("projections", (None,))),
        repetitions=int(spec.get("repetitions", DEFAULT_REPETITIONS)),
        seeds=tuple(spec.get("seeds", (0,))),
        sample_size=int(spec.get("sample_size", 10)),
        dimension=spec.get("dimension"),
        llm=llm,
    )


def _cell_id(cell: dict) -> str:
    projection = cell["projection"] if cell["projection"] is not None else "none"
    return "|".join([cell["sampling"], cell["serialization"], cell["reranker"], projection])


def _run_one(cell: dict, pair, seed: int, grid: ExperimentGrid) -> dict:
    source = load_table(pair[0])
    target = load_table(pair[1])
    gt = load_ground_truth(pair[2])
    config = PipelineConfig(
        sampling=SamplerConfig(
            strategy=cell["sampling"], sample_size=grid.sample_size, seed=seed
        ),
        serialization=SerializationConfig(format=cell["serialization"]),
        provider=EmbeddingProviderConfig(dimension=grid.dimension),
        reranker=cell["reranker"],
        projection_path=cell["projection"],
        llm=grid.llm,
        seed=seed,
    )
    report = evaluate(source, target, gt, config)
    return {
        "mrr": report.mrr,
        "recall_at_gt": report.recall_at_gt,
        "runtime_seconds": report.runtime_seconds,
    }


def _load_records(path: Path) -> list:
    if not path.exists():
        return []
    records = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(json.loads(line))
    return records


def _append_record(path: Path, record: dict) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        fh.flush()


def format_measure(values) -> str:
    """Population mean +/- std in the fixed 3-decimal style, e.g. 0.344±0.081."""
    if not values:
        return "n/a"
    mean = statistics.fmean(values)
    std = statistics.pstdev(values)
    return f"{mean:.3f}±{std:.3f}"


def aggregate(grid: ExperimentGrid, records) -> list:
    """Fold per-run records into one row per cell, in cell declaration order."""
    by_cell = {}
    for record in records:
        by_cell.setdefault(record["cell"], []).append(record)
    rows = []
    for cell in grid.cells():
        cell_records = sorted(
            by_cell.get(_cell_id(cell), []), key=lambda r: (r["pair"], r["repetition"])
        )
        ok = [r for r in cell_records if "error" not in r]
        failed = [r for r in cell_records if "error" in r]
        mrr_values = [r["mrr"] for r in ok]
        recall_values = [r["recall_at_gt"] for r in ok]
        rows.append(
            {
                **cell,
                "runs": len(ok),
                "failures": len(failed),
                "mrr_mean": statistics.fmean(mrr_values) if mrr_values else None,
                "mrr_std": statistics.pstdev(mrr_values) if mrr_values else None,
                "recall_mean": statistics.fmean(recall_values) if recall_values else None,
                "recall_std": statistics.pstdev(recall_values) if recall_values else None,
                "mrr": format_measure(mrr_values),
                "recall_at_gt": format_measure(recall_values),
            }
        )
    return rows


def write_results(rows, out_dir: Path) -> None:
    numeric = [
        "runs",
        "failures",
        "mrr_mean",
        "mrr_std",
        "recall_mean",
        "recall_std",
    ]
    with open(out_dir / CSV_NAME, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sampling", "serialization", "reranker", "projection"] + numeric)
        for row in rows:
            writer.writerow(
                [
                    row["sampling"],
                    row["serialization"],
                    row["reranker"],
                    row["projection"] if row["projection"] is not None else "none",
                ]
                + ["" if row[key] is None else repr(row[key]) if isinstance(row[key], float) else row[key] for key in numeric]
            )

    headers = ["sampling", "serialization", "reranker", "projection", "MRR", "Recall@GT"]
    table_rows = [
        [
            row["sampling"],
            row["serialization"],
            row["reranker"],
            row["projection"] if row["projection"] is not None else "none",
            row["mrr"],
            row["recall_at_gt"],
        ]
        for row in rows
    ]
    widths = [
        max(len(headers[i]), max((len(r[i]) for r in table_rows), default=0))
        for i in range(len(headers))
    ]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    for r in table_rows:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))))
    (out_dir / TABLE_NAME).write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_grid(grid: ExperimentGrid, out_dir) -> list:
    """Execute every (cell, pair, repetition), checkpointing as it goes.

    Completed runs found in the checkpoint are not re-executed, so a second
    invocation over a finished grid only re-derives the result files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / RECORDS_NAME
    done = {
        (r["cell"], r["pair"], r["repetition"]) for r in _load_records(records_path)
    }

    for cell in grid.cells():
        cid = _cell_id(cell)
        for pair_index, pair in enumerate(grid.suite):
            for repetition in range(grid.repetitions):
                if (cid, pair_index, repetition) in done:
                    continue
                seed = grid.seeds[repetition % len(grid.seeds)]
                record = {
                    "cell": cid,
                    "pair": pair_index,
                    "repetition": repetition,
                    "seed": seed,
                }
                try:
                    record.update(_run_one(cell, pair, seed, grid))
                except Exception as exc:  # noqa: BLE001 - cell failures must not kill the grid
                    record["error"] = f"{type(exc).__name__}: {exc}"
                    log.warning("run %s pair=%d rep=%d failed: %s", cid, pair_index, repetition, record["error"])
                _append_record(records_path, record)

    rows = aggregate(grid, _load_records(records_path))
    write_results(rows, out_dir)
    return rows
