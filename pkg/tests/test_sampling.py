from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

import colmatch.sampling as sampling
from colmatch.sampling import SamplerConfig, hash_unit, sample_values
from colmatch.tables import Column


def _col(values, name="c"):
    return Column(name, tuple(values))


class TestHashUnit:
    def test_deterministic(self):
        assert hash_unit(12345, "alpha") == hash_unit(12345, "alpha")

    def test_range_on_many_inputs(self):
        for i in range(100_000):
            h = hash_unit(7, f"value-{i}")
            assert 0.0 < h <= 1.0

    def test_seed_sensitivity(self):
        n = 10_000
        changed = sum(
            1 for i in range(n) if hash_unit(1, f"v{i}") != hash_unit(2, f"v{i}")
        )
        assert changed / n >= 0.99

    def test_large_seed_accepted(self):
        assert 0.0 < hash_unit(2**64 - 1, "x") <= 1.0


class TestConfig:
    def test_bad_strategy(self):
        with pytest.raises(ValueError):
            SamplerConfig(strategy="stratified")

    def test_bad_sample_size(self):
        with pytest.raises(ValueError):
            SamplerConfig(sample_size=0)


class TestPriority:
    def test_hand_case_with_pinned_hash(self, monkeypatch):
        fixed = {"a": 0.5, "b": 0.25, "c": 1.0}
        monkeypatch.setattr(sampling, "hash_unit", lambda seed, v: fixed[v])
        col = _col(["a", "a", "b", "c", "c", "c"])
        # R = freq/h -> a: 4.0, b: 4.0, c: 3.0; tie a/b resolved lexicographically
        out = sample_values(col, SamplerConfig("priority", sample_size=2, seed=0))
        assert out == ["a", "b"]

    def test_matches_brute_force(self):
        col = _col([f"v{i % 13}" for i in range(50)] + ["w", "w", "z"])
        cfg = SamplerConfig("priority", sample_size=5, seed=21)
        freq = Counter(v for v in col.values)
        expected = sorted(
            freq,
            key=lambda v: (-(freq[v] / hash_unit(cfg.seed, v)), v.encode("utf-8")),
        )[:5]
        assert sample_values(col, cfg) == expected

    def test_coordination_across_columns(self):
        # same distinct values and frequencies, different cell order
        a = _col(["x", "y", "z", "x", "y", "x"], name="a")
        b = _col(["y", "x", "x", "z", "y", "x"], name="b")
        cfg = SamplerConfig("priority", sample_size=2, seed=5)
        assert sample_values(a, cfg) == sample_values(b, cfg)

    def test_fewer_distinct_than_m(self):
        out = sample_values(_col(["p", "q", "r"]), SamplerConfig(sample_size=10))
        assert sorted(out) == ["p", "q", "r"]


class TestCoordinated:
    def test_frequency_is_ignored(self):
        a = _col(["x"] * 9 + ["y", "z"], name="a")
        b = _col(["x", "y", "y", "y", "z"], name="b")
        cfg = SamplerConfig("coordinated", sample_size=2, seed=3)
        assert sample_values(a, cfg) == sample_values(b, cfg)


class TestFrequency:
    def test_most_frequent_win(self):
        col = _col(["a"] * 3 + ["b"] * 5 + ["c"] * 4 + ["d"])
        out = sample_values(col, SamplerConfig("frequency", sample_size=2, seed=0))
        assert out == ["b", "c"]

    def test_ties_lexicographic(self):
        col = _col(["b", "a", "c", "a", "b", "c"])
        out = sample_values(col, SamplerConfig("frequency", sample_size=3, seed=0))
        assert out == ["a", "b", "c"]


class TestSeededDraws:
    def test_weighted_prefers_heavy_value(self):
        col = _col(["heavy"] * 10_000 + ["l1", "l2", "l3"])
        hits = sum(
            1
            for seed in range(20)
            if sample_values(col, SamplerConfig("weighted", 1, seed)) == ["heavy"]
        )
        assert hits >= 18

    def test_random_full_draw_is_permutation(self):
        col = _col(list("fedcba"))
        out = sample_values(col, SamplerConfig("random", sample_size=6, seed=11))
        assert sorted(out) == sorted("abcdef")

    def test_seed_changes_order(self):
        col = _col([f"v{i}" for i in range(30)])
        outs = {
            tuple(sample_values(col, SamplerConfig("random", 5, seed)))
            for seed in range(10)
        }
        assert len(outs) > 1


values_lists = st.lists(st.text(min_size=1, max_size=5), min_size=0, max_size=60)
strategies = st.sampled_from(sampling.STRATEGIES)


@settings(max_examples=60)
@given(values=values_lists, strategy=strategies, m=st.integers(1, 8), seed=st.integers(0, 2**32))
def test_common_properties(values, strategy, m, seed):
    col = _col(values, name="h")
    cfg = SamplerConfig(strategy, m, seed)
    out = sample_values(col, cfg)
    assert len(out) == len(set(out))
    assert len(out) <= m
    distinct = set(col.non_missing())
    assert set(out) <= distinct
    if len(distinct) <= m:
        assert set(out) == distinct
    # determinism
    assert sample_values(col, cfg) == out
