import math
import random

import numpy as np
import pytest

from colmatch.rerank_bipartite import Assignment, rerank_bipartite, solve_assignment
from colmatch.retrieval import MatchCandidate, MatchList

from oracles import best_partial_assignment, canonical_total


def _matches(per_source, k=20):
    built = {}
    for src, pairs in per_source.items():
        built[src] = [
            MatchCandidate(src, tgt, score, rank)
            for rank, (tgt, score) in enumerate(pairs, start=1)
        ]
    return MatchList("s", "t", built, k)


def _order(matches, src):
    return [c.target for c in matches.candidates(src)]


class TestSolveAssignment:
    def test_identity_optimum(self):
        out = solve_assignment([[1.0, 0.0], [0.0, 1.0]])
        assert {(r, c) for r, c, _ in out.edges} == {(0, 0), (1, 1)}
        assert out.total == pytest.approx(2.0)

    def test_cross_beats_greedy(self):
        out = solve_assignment([[0.9, 0.8], [0.7, 0.1]])
        assert {(r, c) for r, c, _ in out.edges} == {(0, 1), (1, 0)}
        assert out.total == pytest.approx(1.5)

    def test_single_row_takes_max(self):
        out = solve_assignment([[0.2, 0.9]])
        assert {(r, c) for r, c, _ in out.edges} == {(0, 1)}
        assert out.total == pytest.approx(0.9)

    def test_missing_entries_unassignable(self):
        nan = float("nan")
        # greedy full matching (a->y, b->x) totals 0.95; leaving b out wins
        out = solve_assignment([[1.0, 0.9], [0.05, nan]])
        assert {(r, c) for r, c, _ in out.edges} == {(0, 0)}
        assert out.total == pytest.approx(1.0)

    def test_negative_edges_left_out(self):
        out = solve_assignment([[-0.5]])
        assert out.edges == ()
        assert out.total == 0.0

    def test_empty_matrix(self):
        assert solve_assignment(np.zeros((0, 3))) == Assignment((), 0.0)

    def test_matches_brute_force_on_random_instances(self):
        rng = random.Random(1234)
        for trial in range(50):
            n = rng.randint(1, 6)
            m = rng.randint(1, 6)
            weights = []
            for i in range(n):
                row = []
                for j in range(m):
                    if rng.random() < 0.25:
                        row.append(None)
                    else:
                        # mostly positive, some negatives mixed in
                        row.append(rng.uniform(-0.2, 1.0))
                weights.append(row)
            matrix = np.array(
                [[np.nan if w is None else w for w in row] for row in weights]
            )
            got = solve_assignment(matrix)
            _, want_total = best_partial_assignment(weights)
            assert canonical_total(got.edges) == want_total, (trial, weights)


class TestRerankBipartite:
    def test_worked_example(self):
        matches = _matches(
            {"a": [("x", 0.9), ("y", 0.8)], "b": [("x", 0.85), ("y", 0.2)]}
        )
        out = rerank_bipartite(matches)
        assert _order(out, "a") == ["y", "x"]
        assert _order(out, "b") == ["x", "y"]
        a_top = out.candidates("a")[0]
        assert a_top.score == 0.8  # assigned edges keep their score
        a_second = out.candidates("a")[1]
        assert a_second.score == pytest.approx(0.9 * (0.8 - 1e-9) / 0.9)
        assert a_second.score < 0.8

    def test_consistent_top1_unchanged(self):
        matches = _matches(
            {"a": [("x", 0.9), ("y", 0.3)], "b": [("y", 0.8), ("x", 0.2)]}
        )
        out = rerank_bipartite(matches)
        assert _order(out, "a") == ["x", "y"]
        assert _order(out, "b") == ["y", "x"]
        # f = 1: no non-assigned score reaches w_low = 0.8
        assert [c.score for c in out.candidates("a")] == [0.9, 0.3]

    def test_single_candidate_unchanged(self):
        matches = _matches({"a": [("x", 0.42)]})
        out = rerank_bipartite(matches)
        assert [(c.target, c.score, c.rank) for c in out.candidates("a")] == [
            ("x", 0.42, 1)
        ]

    def test_all_negative_scores_unchanged(self):
        matches = _matches({"a": [("x", -0.1), ("y", -0.5)]})
        out = rerank_bipartite(matches)
        assert [(c.target, c.score) for c in out.candidates("a")] == [
            ("x", -0.1),
            ("y", -0.5),
        ]

    def test_candidate_sets_and_ranks(self):
        rng = random.Random(7)
        targets = [f"t{j}" for j in range(8)]
        per_source = {}
        for i in range(5):
            cands = rng.sample(targets, k=rng.randint(1, 8))
            per_source[f"s{i}"] = [(t, 0.1 + 0.89 * rng.random()) for t in cands]
        matches = _matches(per_source)
        out = rerank_bipartite(matches)
        for src in per_source:
            before = {c.target for c in matches.candidates(src)}
            after = {c.target for c in out.candidates(src)}
            assert before == after
            assert [c.rank for c in out.candidates(src)] == list(
                range(1, len(before) + 1)
            )

    def test_non_assigned_order_preserved(self):
        rng = random.Random(99)
        for _ in range(40):
            n_src, n_tgt = rng.randint(1, 5), rng.randint(1, 6)
            sources = [f"s{i}" for i in range(n_src)]
            targets = [f"t{j}" for j in range(n_tgt)]
            weights = [
                [0.1 + 0.9 * rng.random() for _ in targets] for _ in sources
            ]
            per_source = {
                src: sorted(
                    zip(targets, weights[i]), key=lambda p: (-p[1], p[0])
                )
                for i, src in enumerate(sources)
            }
            matches = _matches(per_source)
            out = rerank_bipartite(matches)
            edges, _ = best_partial_assignment(weights)
            assigned = {(sources[r], targets[c]) for r, c, _ in edges}
            for src, pairs in per_source.items():
                reranked = out.candidates(src)
                non_assigned_out = [
                    c.target for c in reranked if (src, c.target) not in assigned
                ]
                non_assigned_in = [
                    t for t, _ in pairs if (src, t) not in assigned
                ]
                assert non_assigned_out == non_assigned_in
                assigned_ranks = [
                    c.rank for c in reranked if (src, c.target) in assigned
                ]
                if assigned_ranks and non_assigned_out:
                    other_ranks = [
                        c.rank for c in reranked if (src, c.target) not in assigned
                    ]
                    assert max(assigned_ranks) < min(other_ranks)
