"""Tables, columns, and ground-truth loading.

A table is an ordered list of named columns; each column keeps its cells in
file order.  Missing cells are stored as None.  Besides the empty string,
the usual NA spellings count as missing (see MISSING_MARKERS).
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, replace
from datetime import date
from pathlib import Path
from typing import Optional, Sequence

MISSING_MARKERS = frozenset({"", "na", "n/a", "null", "none"})

TYPE_LABELS = ("numerical", "categorical", "date", "binary", "key", "unknown")

# distinct/non-missing ratio above which a column is treated as a key
KEY_DISTINCT_RATIO = 0.90
# fraction of non-missing cells that must parse for numerical/date labels
PARSE_FRACTION = 0.95

_NUMBER_RE = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_DATE_RE = re.compile(
    r"(\d{4}-\d{2}-\d{2})"
    r"([T ]\d{2}:\d{2}(:\d{2}(\.\d+)?)?(Z|[+-]\d{2}:?\d{2})?)?$"
)

GROUND_TRUTH_HEADER = ("source_column", "target_column")


def is_missing(cell: Optional[str]) -> bool:
    """True for None, whitespace-only cells, and NA spellings (any case)."""
    return cell is None or cell.strip().lower() in MISSING_MARKERS


def _is_number(cell: str) -> bool:
    return _NUMBER_RE.fullmatch(cell.strip()) is not None


def _is_date(cell: str) -> bool:
    m = _DATE_RE.fullmatch(cell.strip())
    if m is None:
        return False
    try:
        date.fromisoformat(m.group(1))
    except ValueError:
        return False
    return True


@dataclass(frozen=True)
class Column:
    """A named column with its cell values (None marks a missing cell)."""

    name: str
    values: tuple
    inferred_type: str = "unknown"

    def __post_init__(self) -> None:
        if not self.name.strip():
            raise ValueError("column name must be non-empty")
        if self.inferred_type not in TYPE_LABELS:
            raise ValueError(f"unknown type label: {self.inferred_type!r}")
        object.__setattr__(self, "values", tuple(self.values))

    def non_missing(self) -> list:
        return [v for v in self.values if not is_missing(v)]


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "columns", tuple(self.columns))
        seen = set()
        for col in self.columns:
            if col.name in seen:
                raise ValueError(f"duplicate column name: {col.name!r}")
            seen.add(col.name)

    def column(self, name: str) -> Column:
        for col in self.columns:
            if col.name == name:
                return col
        raise KeyError(name)

    def column_names(self) -> list:
        return [col.name for col in self.columns]


@dataclass(frozen=True)
class GroundTruth:
    """Curated correspondences; a source may map to several targets."""

    pairs: frozenset

    def __post_init__(self) -> None:
        object.__setattr__(self, "pairs", frozenset(self.pairs))

    def sources(self) -> set:
        return {src for src, _ in self.pairs}

    def targets_for(self, source: str) -> set:
        return {dst for src, dst in self.pairs if src == source}


def infer_type(column: Column) -> str:
    """Classify a column by its non-missing cells.

    Precedence: unknown (no usable cells), key (distinct ratio > 0.90),
    binary (exactly 2 distinct), numerical (>= 95% decimal), date (>= 95%
    ISO-8601 calendar date, optional time suffix), else categorical.
    """
    cells = column.non_missing()
    if not cells:
        return "unknown"
    distinct = set(cells)
    if len(distinct) / len(cells) > KEY_DISTINCT_RATIO:
        return "key"
    if len(distinct) == 2:
        return "binary"
    if sum(1 for c in cells if _is_number(c)) / len(cells) >= PARSE_FRACTION:
        return "numerical"
    if sum(1 for c in cells if _is_date(c)) / len(cells) >= PARSE_FRACTION:
        return "date"
    return "categorical"


def load_table(path, name: Optional[str] = None) -> Table:
    """Read a UTF-8 CSV with a header row into a Table.

    Cells equal to a missing marker become None.  Short rows are padded
    with missing cells; rows wider than the header are rejected.  The
    table name defaults to the file stem.
    """
    p = Path(path)
    if name is None:
        name = p.stem
    if not p.is_file():
        raise FileNotFoundError(f"table file not found: {p}")
    try:
        with open(p, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except UnicodeDecodeError as exc:
        raise ValueError(f"{p}: not valid UTF-8 ({exc.reason})") from None
    if not rows:
        raise ValueError(f"{p}: empty file, expected a header row")
    header = rows[0]
    seen = set()
    for cell in header:
        if not cell.strip():
            raise ValueError(f"{p}: empty header cell")
        if cell in seen:
            raise ValueError(f"{p}: duplicate header {cell!r}")
        seen.add(cell)

    cells_by_col: list = [[] for _ in header]
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) > len(header):
            raise ValueError(
                f"{p}: row {lineno} has {len(row)} cells, header has {len(header)}"
            )
        row = row + [""] * (len(header) - len(row))
        for i, cell in enumerate(row):
            cells_by_col[i].append(None if is_missing(cell) else cell)

    columns = []
    for cname, cells in zip(header, cells_by_col):
        col = Column(cname, tuple(cells))
        columns.append(replace(col, inferred_type=infer_type(col)))
    return Table(name, tuple(columns))


def load_ground_truth(path) -> GroundTruth:
    """Read a two-column CSV of (source_column, target_column) pairs."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"ground truth file not found: {p}")
    with open(p, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != GROUND_TRUTH_HEADER:
        raise ValueError(
            f"{p}: expected header {','.join(GROUND_TRUTH_HEADER)!r}"
        )
    pairs = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise ValueError(f"{p}: row {lineno} has {len(row)} cells, expected 2")
        src, dst = row
        if not src:
            raise ValueError(f"{p}: row {lineno} has an empty source cell")
        if not dst:
            raise ValueError(f"{p}: row {lineno} has an empty target cell")
        pairs.add((src, dst))
    return GroundTruth(frozenset(pairs))
