"""Self-supervised projection head trained with a batch-hard triplet loss.

The base embedding provider stays frozen; we learn a square matrix W and
re-normalize W.v.  Batches hold P classes with K members each.  Per anchor
the hardest positive (max distance) and hardest negative (min distance)
form one hinge term; the gradient is analytic, treating the hardest-pair
selection as constant.  Model selection keeps the W with the best
validation score, where validation is a small matching task over held-out
classes (identity W from epoch 0 is always a candidate, so training can
never make the returned head worse than no head).
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .metrics import mrr, recall_at_gt
from .retrieval import MatchCandidate, MatchList
from .sampling import fnv1a64
from .serialization import SerializationConfig, serialize
from .tables import Column, GroundTruth, infer_type

log = logging.getLogger(__name__)

MINE_CATEGORIES = ("semi_hard_negative", "hardest_negative", "hard_positive_pair", "easy")

SCORE_TOLERANCE = 1e-9
REQUIRED_PATIENCE = 5
MIN_CLASSES = 4


@dataclass
class ProjectionHead:
    """Square projection applied on top of a frozen embedding provider."""

    matrix: np.ndarray
    seed: int = 0
    score: float = 0.0

    def __post_init__(self) -> None:
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError("projection matrix must be square")

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def apply(self, vector: np.ndarray) -> np.ndarray:
        vector = np.asarray(vector, dtype=np.float64)
        projected = self.matrix @ vector
        norm = float(np.linalg.norm(projected))
        if norm == 0.0:
            return vector.copy()
        return projected / norm


class ProjectedProvider:
    """Embedding provider that runs a head on top of a base provider."""

    def __init__(self, base, head: ProjectionHead):
        if head.dimension != base.dimension:
            raise ValueError(
                f"head dimension {head.dimension} does not match provider dimension {base.dimension}"
            )
        self.base = base
        self.head = head

    @property
    def dimension(self) -> int:
        return self.base.dimension

    @property
    def provider_id(self) -> str:
        return self.base.provider_id

    def embed(self, texts: Sequence[str]) -> list:
        return [self.head.apply(v) for v in self.base.embed(texts)]


@dataclass(eq=False)
class TripletBatch:
    """P*K unit vectors with integer class labels, K per class."""

    embeddings: np.ndarray
    labels: tuple

    def __post_init__(self) -> None:
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        self.labels = tuple(int(l) for l in self.labels)
        if self.embeddings.ndim != 2:
            raise ValueError("embeddings must be a 2-D array")
        if len(self.labels) != self.embeddings.shape[0]:
            raise ValueError("one label per embedding row required")
        counts = {}
        for l in self.labels:
            counts[l] = counts.get(l, 0) + 1
        if len(counts) < 2:
            raise ValueError("a batch needs at least 2 classes")
        sizes = set(counts.values())
        if len(sizes) != 1 or min(sizes) < 2:
            raise ValueError("every class in a batch needs the same K >= 2 members")

    @property
    def p(self) -> int:
        return len(set(self.labels))

    @property
    def k(self) -> int:
        return len(self.labels) // self.p


@dataclass(frozen=True)
class TrainConfig:
    margin: float = 0.5
    learning_rate: float = 0.05
    epochs: int = 30
    batch_p: int = 4
    batch_k: int = 3
    patience: int = REQUIRED_PATIENCE
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_p < 2 or self.batch_k < 2:
            raise ValueError("batch shape needs P >= 2 and K >= 2")
        if self.patience != REQUIRED_PATIENCE:
            raise ValueError(f"patience is fixed at {REQUIRED_PATIENCE}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cosine similarity; in [0, 2] for unit vectors."""
    return 1.0 - float(np.dot(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)))


def _distance_matrix(embeddings: np.ndarray) -> np.ndarray:
    return 1.0 - embeddings @ embeddings.T


def _hardest_pairs(distances: np.ndarray, labels: Sequence[int]) -> list:
    labels = np.asarray(labels)
    pairs = []
    for a in range(len(labels)):
        same = (labels == labels[a]) & (np.arange(len(labels)) != a)
        diff = labels != labels[a]
        pos_idx = np.flatnonzero(same)
        neg_idx = np.flatnonzero(diff)
        # np.argmax/argmin take the first occurrence, so ties resolve to the
        # smallest index deterministically
        p = int(pos_idx[np.argmax(distances[a, pos_idx])])
        n = int(neg_idx[np.argmin(distances[a, neg_idx])])
        pairs.append((p, n))
    return pairs


def batch_hard_loss(batch: TripletBatch, margin: float):
    """Sum over anchors of max(0, margin + d(a, hardest pos) - d(a, hardest neg)).

    Returns (loss, hardest) where hardest[a] = (positive index, negative index).
    """
    distances = _distance_matrix(batch.embeddings)
    hardest = _hardest_pairs(distances, batch.labels)
    loss = 0.0
    for a, (p, n) in enumerate(hardest):
        loss += max(0.0, margin + distances[a, p] - distances[a, n])
    return loss, hardest


def mine_category(a: int, p: int, n: int, batch: TripletBatch, margin: float) -> str:
    """Classify a (anchor, positive, negative) triplet for diagnostics."""
    labels = batch.labels
    if a == p:
        raise ValueError("anchor and positive must differ")
    if labels[a] != labels[p]:
        raise ValueError("positive must share the anchor's class")
    if labels[a] == labels[n]:
        raise ValueError("negative must come from a different class")
    distances = _distance_matrix(batch.embeddings)
    d_ap = distances[a, p]
    d_an = distances[a, n]
    hardest_p, hardest_n = _hardest_pairs(distances, labels)[a]
    if d_ap < d_an < d_ap + margin:
        return "semi_hard_negative"
    if n == hardest_n and d_an > d_ap + margin:
        return "hardest_negative"
    if p == hardest_p and d_ap < d_an:
        return "hard_positive_pair"
    return "easy"


def _project_rows(matrix: np.ndarray, vectors: np.ndarray):
    raw = vectors @ matrix.T
    norms = np.linalg.norm(raw, axis=1)
    unit = np.empty_like(raw)
    zero = norms == 0.0
    unit[zero] = vectors[zero]
    nz = ~zero
    unit[nz] = raw[nz] / norms[nz, None]
    return unit, norms


def loss_gradient(batch: TripletBatch, margin: float, matrix: np.ndarray) -> np.ndarray:
    """Analytic d(loss)/dW at W=matrix, batch rows being pre-projection vectors.

    Hardest-pair selection is held constant; the hinge is non-differentiable
    exactly at 0 and we take the zero subgradient there.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    vectors = batch.embeddings
    unit, norms = _project_rows(matrix, vectors)
    distances = _distance_matrix(unit)
    hardest = _hardest_pairs(distances, batch.labels)

    grad_unit = np.zeros_like(unit)
    for a, (p, n) in enumerate(hardest):
        term = margin + distances[a, p] - distances[a, n]
        if term <= 0.0:
            continue
        # term = margin - u_a.u_p + u_a.u_n
        grad_unit[a] += unit[n] - unit[p]
        grad_unit[p] -= unit[a]
        grad_unit[n] += unit[a]

    grad = np.zeros_like(matrix)
    for i in range(len(vectors)):
        if norms[i] == 0.0:
            continue  # zero projection falls back to the input, constant in W
        g = grad_unit[i]
        tangent = (g - unit[i] * float(unit[i] @ g)) / norms[i]
        grad += np.outer(tangent, vectors[i])
    return grad


def _member_text(name: str, values: Sequence[str]) -> str:
    deduped = []
    seen = set()
    for v in values:
        if v not in seen:
            seen.add(v)
            deduped.append(v)
    type_label = infer_type(Column(name, tuple(deduped)))
    return serialize(name, type_label, deduped, SerializationConfig())


def _validation_score(unit: np.ndarray, labels: Sequence[int]) -> float:
    """Mean of MRR and recall on the all-pairs intra-class matching task."""
    ids = [f"m{i}" for i in range(len(labels))]
    pairs = set()
    for i, li in enumerate(labels):
        for j, lj in enumerate(labels):
            if i != j and li == lj:
                pairs.add((ids[i], ids[j]))
    if not pairs:
        return 0.0
    gt = GroundTruth(frozenset(pairs))
    similarity = unit @ unit.T
    per_source = {}
    for i in range(len(labels)):
        order = sorted(
            (j for j in range(len(labels)) if j != i),
            key=lambda j: (-similarity[i, j], ids[j]),
        )
        per_source[ids[i]] = tuple(
            MatchCandidate(ids[i], ids[j], float(similarity[i, j]), rank)
            for rank, j in enumerate(order, start=1)
        )
    matches = MatchList("validation", "validation", per_source, k=max(1, len(labels) - 1))
    return 0.5 * (mrr(matches, gt) + recall_at_gt(matches, gt))


def _split_classes(class_ids: Sequence[int], val_fraction: float, rng: random.Random):
    ids = list(class_ids)
    pool = list(ids)
    shuffled = []
    while pool:
        shuffled.append(pool.pop(rng.randrange(len(pool))))
    n_val = int(round(val_fraction * len(ids)))
    n_val = max(2, min(n_val, len(ids) - 2))
    return sorted(shuffled[n_val:]), sorted(shuffled[:n_val])


def _make_batches(train_ids, members_by_class, config, rng):
    """Chunk shuffled class ids into (P, K) batches of member indices."""
    pool = list(train_ids)
    shuffled = []
    while pool:
        shuffled.append(pool.pop(rng.randrange(len(pool))))
    batches = []
    for start in range(0, len(shuffled), config.batch_p):
        chunk = shuffled[start : start + config.batch_p]
        if len(chunk) < 2:
            continue
        rows, labels = [], []
        for cid in chunk:
            members = members_by_class[cid]
            if len(members) >= config.batch_k:
                take = list(members)
                picked = [take.pop(rng.randrange(len(take))) for _ in range(config.batch_k)]
            else:
                picked = [members[rng.randrange(len(members))] for _ in range(config.batch_k)]
            rows.extend(picked)
            labels.extend([cid] * config.batch_k)
        batches.append((rows, labels))
    return batches


def train(
    classes: Sequence,
    provider,
    config: Optional[TrainConfig] = None,
    history: Optional[list] = None,
) -> ProjectionHead:
    """Learn a projection head from training classes via plain gradient descent.

    Raises ValueError with fewer than 4 classes; the split needs at least 2
    classes on each side to form batches and validation pairs.  When a list
    is passed as `history`, one {epoch, loss, score} record per epoch is
    appended (epoch 0 is the identity baseline and has no loss).
    """
    config = config or TrainConfig()
    classes = list(classes)
    if len(classes) < MIN_CLASSES:
        raise ValueError(f"need at least {MIN_CLASSES} classes to train, got {len(classes)}")

    texts, owners = [], []
    for cls in classes:
        for member in cls.members:
            texts.append(_member_text(member.name, member.values))
            owners.append(cls.class_id)
    base = np.vstack(provider.embed(texts))
    dimension = base.shape[1]

    members_by_class = {}
    for row, cid in enumerate(owners):
        members_by_class.setdefault(cid, []).append(row)
    for cid, rows in members_by_class.items():
        if len(rows) < 2:
            raise ValueError(f"class {cid} has fewer than 2 members")

    rng = random.Random(fnv1a64(f"{config.seed}/train".encode("utf-8")))
    train_ids, val_ids = _split_classes(sorted(members_by_class), config.val_fraction, rng)
    val_rows = [r for cid in val_ids for r in members_by_class[cid]]
    val_vectors = base[val_rows]
    val_labels = [owners[r] for r in val_rows]

    matrix = np.eye(dimension)
    unit, _ = _project_rows(matrix, val_vectors)
    best_score = _validation_score(unit, val_labels)
    best_matrix = matrix.copy()
    log.debug("epoch 0 (identity): validation score %.6f", best_score)
    if history is not None:
        history.append({"epoch": 0, "loss": None, "score": best_score})

    previous_score = best_score
    unchanged_streak = 0
    for epoch in range(1, config.epochs + 1):
        epoch_loss = 0.0
        for rows, labels in _make_batches(train_ids, members_by_class, config, rng):
            batch = TripletBatch(base[rows], tuple(labels))
            unit, _ = _project_rows(matrix, batch.embeddings)
            loss, _ = batch_hard_loss(TripletBatch(unit, batch.labels), config.margin)
            epoch_loss += loss
            matrix = matrix - config.learning_rate * loss_gradient(batch, config.margin, matrix)

        unit, _ = _project_rows(matrix, val_vectors)
        score = _validation_score(unit, val_labels)
        log.debug("epoch %d: training loss %.6f, validation score %.6f", epoch, epoch_loss, score)
        if history is not None:
            history.append({"epoch": epoch, "loss": epoch_loss, "score": score})
        if score > best_score:
            best_score = score
            best_matrix = matrix.copy()
        if abs(score - previous_score) <= SCORE_TOLERANCE:
            unchanged_streak += 1
            if unchanged_streak >= config.patience:
                log.debug("early stop at epoch %d", epoch)
                break
        else:
            unchanged_streak = 0
        previous_score = score

    return ProjectionHead(best_matrix, seed=config.seed, score=best_score)


def save_head(head: ProjectionHead, path) -> None:
    """Header line {dimension, seed, score}, then row-major float32 weights."""
    header = {"dimension": head.dimension, "seed": head.seed, "score": head.score}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(head.matrix, dtype="<f4").tobytes())


def load_head(path) -> ProjectionHead:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        dimension = int(header["dimension"])
        payload = fh.read()
    expected = dimension * dimension * 4
    if len(payload) != expected:
        raise ValueError(f"projection file holds {len(payload)} weight bytes, expected {expected}")
    matrix = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dimension, dimension)
    return ProjectionHead(matrix, seed=int(header["seed"]), score=float(header["score"]))
