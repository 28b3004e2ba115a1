"""Embedding providers.

Two kinds: a built-in deterministic feature-hashing embedder (`hash`), which
is the offline default, and a JSON-over-HTTP provider (`remote`).  Both
return unit-norm vectors; degenerate all-zero embeddings fall back to the
basis vector e_0.  Results can be cached on disk keyed by (provider, text).
"""

from __future__ import annotations

import base64
import hashlib
import threading
import time
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import requests

from .sampling import fnv1a64

PROVIDER_KINDS = ("hash", "remote")

DEFAULT_DIMENSION = 256
DEFAULT_BATCH_SIZE = 32
RETRY_ATTEMPTS = 3
RETRY_BACKOFF_SECONDS = 0.5  # doubled after each failed attempt
REQUEST_TIMEOUT_SECONDS = 30.0


class ProviderError(RuntimeError):
    """Raised when an embedding provider cannot produce vectors."""


@dataclass(frozen=True)
class EmbeddingProviderConfig:
    kind: str = "hash"
    dimension: Optional[int] = None  # None: 256 for hash, provider-reported for remote
    endpoint: Optional[str] = None
    batch_size: int = DEFAULT_BATCH_SIZE
    cache_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in PROVIDER_KINDS:
            raise ValueError(f"unknown provider kind: {self.kind!r}")
        if self.dimension is not None and self.dimension < 2:
            raise ValueError("dimension must be >= 2")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote provider requires an endpoint")

    def provider_id(self) -> str:
        if self.kind == "hash":
            return f"hash:{self.dimension or DEFAULT_DIMENSION}"
        return f"remote:{self.endpoint}"


@lru_cache(maxsize=1 << 16)
def _trigram_hashes(gram: str):
    raw = gram.encode("utf-8")
    # two independent draws: plain FNV-1a and a reseeded variant
    return fnv1a64(raw), fnv1a64(b"\xa5" + raw)


def normalized(vec: np.ndarray) -> np.ndarray:
    """L2-normalize; an all-zero vector becomes e_0."""
    vec = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        out = np.zeros(vec.shape[0], dtype=np.float64)
        out[0] = 1.0
        return out
    return vec / norm


def hash_embed(text: str, dimension: int = DEFAULT_DIMENSION) -> np.ndarray:
    """Character-trigram feature hashing with signed buckets.

    Lowercases the text, pads inputs shorter than 3 characters with the
    sentinels \\x01/\\x02, hashes each trigram to a bucket of `dimension`
    and a +/-1 sign, then L2-normalizes the accumulated counts.
    """
    if dimension < 2:
        raise ValueError("dimension must be >= 2")
    t = text.lower()
    if len(t) < 3:
        t = "\x01" + t + "\x02"
    acc = np.zeros(dimension, dtype=np.float64)
    for i in range(len(t) - 2):
        bucket_hash, sign_hash = _trigram_hashes(t[i : i + 3])
        acc[bucket_hash % dimension] += 1.0 if sign_hash % 2 == 0 else -1.0
    return normalized(acc)


class VectorCache:
    """On-disk vector cache: one "hexkey  base64(float32 LE)" line each.

    Values are stored as little-endian float32, so a cache miss returns the
    float32-rounded vector too; cold and warm runs then agree bit for bit.
    """

    def __init__(self, path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self._mem = {}
        if self.path.exists():
            for line in self.path.read_text(encoding="ascii").splitlines():
                if not line.strip():
                    continue
                key, b64 = line.split()
                self._mem[key] = self._decode(b64)

    @staticmethod
    def _decode(b64: str) -> np.ndarray:
        raw = np.frombuffer(base64.b64decode(b64), dtype="<f4")
        return raw.astype(np.float64)

    @staticmethod
    def key(provider_id: str, text: str) -> str:
        digest = hashlib.sha256()
        digest.update(provider_id.encode("utf-8"))
        digest.update(b"\x00")
        digest.update(text.encode("utf-8"))
        return digest.hexdigest()

    def get(self, key: str) -> Optional[np.ndarray]:
        with self._lock:
            vec = self._mem.get(key)
        return None if vec is None else vec.copy()

    def put(self, key: str, vec: np.ndarray) -> np.ndarray:
        """Store and return the float32-rounded vector actually persisted."""
        stored = np.asarray(vec, dtype="<f4")
        rounded = stored.astype(np.float64)
        with self._lock:
            if key not in self._mem:
                self._mem[key] = rounded
                b64 = base64.b64encode(stored.tobytes()).decode("ascii")
                with open(self.path, "a", encoding="ascii") as fh:
                    fh.write(f"{key}  {b64}\n")
        return rounded.copy()


class HashProvider:
    """Deterministic offline provider built on hash_embed."""

    def __init__(self, config: EmbeddingProviderConfig) -> None:
        self.dimension = config.dimension or DEFAULT_DIMENSION
        self._id = config.provider_id()
        self._cache = VectorCache(config.cache_path) if config.cache_path else None

    def embed(self, texts: Sequence[str]) -> list:
        out = []
        for text in texts:
            if self._cache is not None:
                key = VectorCache.key(self._id, text)
                vec = self._cache.get(key)
                if vec is None:
                    vec = self._cache.put(key, hash_embed(text, self.dimension))
                out.append(vec)
            else:
                out.append(hash_embed(text, self.dimension))
        return out


class RemoteProvider:
    """JSON-over-HTTP provider: POST {"texts": [...]} to the /embed route.

    The response must carry {"dimension": D, "vectors": [...]} with vectors
    order-aligned to the request.  Transport failures are retried up to
    RETRY_ATTEMPTS times with exponential backoff; a dimension mismatch is
    a protocol violation and fails immediately.
    """

    def __init__(self, config: EmbeddingProviderConfig) -> None:
        self.config = config
        endpoint = config.endpoint.rstrip("/")
        self.url = endpoint if endpoint.endswith("/embed") else endpoint + "/embed"
        self.dimension = config.dimension  # None until first response
        self._id = config.provider_id()
        self._cache = VectorCache(config.cache_path) if config.cache_path else None

    def embed(self, texts: Sequence[str]) -> list:
        out: list = [None] * len(texts)
        pending = []
        for i, text in enumerate(texts):
            if self._cache is not None:
                vec = self._cache.get(VectorCache.key(self._id, text))
                if vec is not None:
                    out[i] = vec
                    continue
            pending.append(i)
        for start in range(0, len(pending), self.config.batch_size):
            chunk = pending[start : start + self.config.batch_size]
            vectors = self._request([texts[i] for i in chunk])
            for i, vec in zip(chunk, vectors):
                vec = normalized(vec)
                if self._cache is not None:
                    vec = self._cache.put(VectorCache.key(self._id, texts[i]), vec)
                out[i] = vec
        return out

    def _request(self, batch: list) -> list:
        delay = RETRY_BACKOFF_SECONDS
        last_error = None
        for attempt in range(RETRY_ATTEMPTS):
            if attempt:
                time.sleep(delay)
                delay *= 2
            try:
                resp = requests.post(
                    self.url, json={"texts": batch}, timeout=REQUEST_TIMEOUT_SECONDS
                )
                resp.raise_for_status()
                payload = resp.json()
                dimension = int(payload["dimension"])
                vectors = [np.asarray(v, dtype=np.float64) for v in payload["vectors"]]
            except (requests.RequestException, ValueError, KeyError, TypeError) as exc:
                last_error = exc
                continue
            if len(vectors) != len(batch):
                raise ProviderError(
                    f"embedding endpoint {self.url} returned {len(vectors)} vectors "
                    f"for {len(batch)} texts"
                )
            if self.dimension is None:
                self.dimension = dimension
            if dimension != self.dimension or any(len(v) != dimension for v in vectors):
                raise ProviderError(
                    f"embedding endpoint {self.url} dimension mismatch: "
                    f"expected {self.dimension}, got {dimension}"
                )
            return vectors
        raise ProviderError(
            f"embedding endpoint {self.url} unreachable after "
            f"{RETRY_ATTEMPTS} attempts: {last_error}"
        )


def get_provider(config: Optional[EmbeddingProviderConfig] = None):
    config = config or EmbeddingProviderConfig()
    if config.kind == "hash":
        return HashProvider(config)
    return RemoteProvider(config)


def embed_batch(texts: Sequence[str], config: Optional[EmbeddingProviderConfig] = None) -> list:
    """Embed texts in order with the configured provider."""
    if not texts:
        raise ValueError("texts must be non-empty")
    return get_provider(config).embed(list(texts))
