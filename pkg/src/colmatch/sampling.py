"""Column value sampling.

Picks up to m representative distinct values per column.  The default
strategy ranks values by priority R = freq(v) / h(v) where h is a stable
per-value hash in (0, 1]; because h depends only on (seed, value), two
columns sharing values rank them consistently, which keeps samples
coordinated across tables.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass

from .tables import Column, is_missing

STRATEGIES = ("priority", "coordinated", "weighted", "frequency", "random")

DEFAULT_SAMPLE_SIZE = 10

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1
_UNIT_BUCKETS = 1 << 53


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def hash_unit(seed: int, value: str) -> float:
    """Stable hash of (seed, value) folded into (0, 1], never exactly 0."""
    data = (seed & _MASK64).to_bytes(8, "little") + value.encode("utf-8")
    return ((fnv1a64(data) % _UNIT_BUCKETS) + 1) / _UNIT_BUCKETS


@dataclass(frozen=True)
class SamplerConfig:
    strategy: str = "priority"
    sample_size: int = DEFAULT_SAMPLE_SIZE
    seed: int = 0

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown sampling strategy: {self.strategy!r}")
        if self.sample_size < 1:
            raise ValueError("sample_size must be >= 1")


def _byte_order(value: str) -> bytes:
    # lexicographic UTF-8 byte order, the tie-break everywhere below
    return value.encode("utf-8")


def sample_values(column: Column, config: SamplerConfig) -> list:
    """Select up to config.sample_size distinct non-missing values.

    Ranked strategies (priority, coordinated, frequency) return values in
    descending rank order; weighted and random return them in selection
    order.  Rank ties break by ascending byte order of the value.
    """
    freq = Counter(v for v in column.values if not is_missing(v))
    if not freq:
        return []
    values = sorted(freq, key=_byte_order)
    m = config.sample_size

    if config.strategy == "priority":
        rank = lambda v: freq[v] / hash_unit(config.seed, v)
    elif config.strategy == "coordinated":
        rank = lambda v: 1.0 / hash_unit(config.seed, v)
    elif config.strategy == "frequency":
        rank = lambda v: float(freq[v])
    else:
        return _draw(values, freq, config)

    ranked = sorted(values, key=lambda v: (-rank(v), _byte_order(v)))
    return ranked[:m]


def _draw(values: list, freq: Counter, config: SamplerConfig) -> list:
    """Seeded without-replacement draws in selection order."""
    rng = random.Random(config.seed)
    pool = list(values)
    picked = []
    while pool and len(picked) < config.sample_size:
        if config.strategy == "weighted":
            total = sum(freq[v] for v in pool)
            r = rng.random() * total
            acc = 0.0
            idx = len(pool) - 1
            for i, v in enumerate(pool):
                acc += freq[v]
                if r < acc:
                    idx = i
                    break
        else:
            idx = rng.randrange(len(pool))
        picked.append(pool.pop(idx))
    return picked
