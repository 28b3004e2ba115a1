"""Candidate retrieval.

Builds the full source x target cosine matrix from column embeddings, emits
the top-k candidates per source column (ties broken by target name), and
applies the exact-name override that pins trivially-matching names to a
perfect score of 1.0.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .embedding import EmbeddingProviderConfig, get_provider
from .sampling import SamplerConfig, sample_values
from .serialization import SerializationConfig, serialize
from .tables import Table

DEFAULT_K = 20

_NAME_JUNK_RE = re.compile(r"[^a-z0-9]")


@dataclass(frozen=True)
class MatchCandidate:
    source: str
    target: str
    score: float
    rank: int


@dataclass
class MatchList:
    """Ranked candidates per source column, in source-table column order."""

    source_table: str
    target_table: str
    per_source: dict
    k: int

    def candidates(self, source: str) -> list:
        return self.per_source[source]

    def flat(self) -> list:
        return [cand for ranked in self.per_source.values() for cand in ranked]


def normalize_name(name: str) -> str:
    """Lowercase, then drop every character outside [a-z0-9]."""
    return _NAME_JUNK_RE.sub("", name.lower())


def column_texts(
    table: Table,
    sampling: Optional[SamplerConfig] = None,
    serialization: Optional[SerializationConfig] = None,
) -> list:
    """Serialized text for each column, in table order."""
    sampling = sampling or SamplerConfig()
    texts = []
    for col in table.columns:
        sample = sample_values(col, sampling)
        texts.append(serialize(col.name, col.inferred_type, sample, serialization))
    return texts


def embed_table(
    table: Table,
    sampling: Optional[SamplerConfig] = None,
    serialization: Optional[SerializationConfig] = None,
    provider=None,
) -> np.ndarray:
    """Stack the table's column embeddings into an (n_columns, D) matrix."""
    provider = provider if provider is not None else get_provider(EmbeddingProviderConfig())
    vectors = provider.embed(column_texts(table, sampling, serialization))
    return np.vstack([np.asarray(v, dtype=np.float64) for v in vectors])


def _ranked(source_name: str, target_names: Sequence[str], scores, k: int) -> list:
    order = sorted(range(len(target_names)), key=lambda j: (-scores[j], target_names[j]))
    return [
        MatchCandidate(source_name, target_names[j], float(scores[j]), rank)
        for rank, j in enumerate(order[:k], start=1)
    ]


def retrieve_from_vectors(
    source: Table,
    target: Table,
    source_vectors: np.ndarray,
    target_vectors: np.ndarray,
    k: int = DEFAULT_K,
) -> MatchList:
    """Top-k candidates per source column from precomputed unit vectors."""
    if k < 1:
        raise ValueError("k must be >= 1")
    sim = np.asarray(source_vectors) @ np.asarray(target_vectors).T
    target_names = target.column_names()
    per_source = {}
    for i, col in enumerate(source.columns):
        per_source[col.name] = _ranked(col.name, target_names, sim[i], k)
    return MatchList(source.name, target.name, per_source, k)


def retrieve(
    source: Table,
    target: Table,
    k: int = DEFAULT_K,
    sampling: Optional[SamplerConfig] = None,
    serialization: Optional[SerializationConfig] = None,
    provider=None,
) -> MatchList:
    """Embed both tables and rank candidate targets for every source column."""
    if not source.columns or not target.columns:
        raise ValueError("both tables must have at least one column")
    provider = provider if provider is not None else get_provider(EmbeddingProviderConfig())
    src_vecs = embed_table(source, sampling, serialization, provider)
    dst_vecs = embed_table(target, sampling, serialization, provider)
    return retrieve_from_vectors(source, target, src_vecs, dst_vecs, k)


def exact_name_override(matches: MatchList, source: Table, target: Table) -> MatchList:
    """Pin name-equal pairs (case/punctuation-insensitive) to score 1.0, rank 1.

    Pinned pairs are inserted when retrieval missed them, which may extend a
    list beyond k.  Multiple pinned targets order lexicographically; all
    other candidates keep their relative order.
    """
    norm_targets = {}
    for tcol in target.columns:
        norm_targets.setdefault(normalize_name(tcol.name), []).append(tcol.name)

    per_source = {}
    for scol in source.columns:
        ranked = matches.per_source.get(scol.name, [])
        pinned_names = sorted(norm_targets.get(normalize_name(scol.name), []))
        if not pinned_names:
            per_source[scol.name] = list(ranked)
            continue
        pinned_set = set(pinned_names)
        rebuilt = [
            MatchCandidate(scol.name, tname, 1.0, rank)
            for rank, tname in enumerate(pinned_names, start=1)
        ]
        for cand in ranked:
            if cand.target in pinned_set:
                continue
            rebuilt.append(
                MatchCandidate(cand.source, cand.target, cand.score, len(rebuilt) + 1)
            )
        per_source[scol.name] = rebuilt
    return MatchList(matches.source_table, matches.target_table, per_source, matches.k)


def match_list_as_dict(matches: MatchList) -> dict:
    return {
        "source_table": matches.source_table,
        "target_table": matches.target_table,
        "matches": [
            {
                "source": cand.source,
                "target": cand.target,
                "score": cand.score,
                "rank": cand.rank,
            }
            for cand in matches.flat()
        ],
    }


def write_match_json(matches: MatchList, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(match_list_as_dict(matches), fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def write_match_csv(matches: MatchList, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source", "target", "score", "rank"])
        for cand in matches.flat():
            writer.writerow([cand.source, cand.target, repr(cand.score), cand.rank])
