import pytest
from hypothesis import given, strategies as st

from colmatch.serialization import SerializationConfig, serialize


class TestCanonicalForms:
    def test_default(self):
        out = serialize("age", "numerical", ["1", "2"], SerializationConfig("default"))
        assert out == "[CLS]age[SEP]numerical[SEP]1[SEP]2"

    def test_verbose(self):
        out = serialize("age", "numerical", ["1", "2"], SerializationConfig("verbose"))
        assert out == "[CLS]Column: age[SEP]Type: numerical[SEP]Values: 1[SEP]2"

    def test_repeat_empty_sample(self):
        out = serialize(
            "age", "numerical", [], SerializationConfig("repeat", repeat_count=3)
        )
        assert out == "[CLS]age[SEP]age[SEP]age[SEP]numerical"

    def test_header_only(self):
        out = serialize("age", "numerical", ["1", "2"], SerializationConfig("header_only"))
        assert out == "[CLS]age"

    def test_default_empty_sample(self):
        out = serialize("age", "numerical", [])
        assert out == "[CLS]age[SEP]numerical"

    def test_verbose_empty_sample_drops_values_prefix(self):
        out = serialize("age", "numerical", [], SerializationConfig("verbose"))
        assert out == "[CLS]Column: age[SEP]Type: numerical"

    def test_sep_in_value_is_escaped(self):
        out = serialize("a", "categorical", ["x[SEP]y"])
        assert out == "[CLS]a[SEP]categorical[SEP]x(SEP)y"


class TestConfig:
    def test_bad_format(self):
        with pytest.raises(ValueError):
            SerializationConfig(format="json")

    def test_bad_repeat_count(self):
        with pytest.raises(ValueError):
            SerializationConfig(repeat_count=0)


clean_text = st.text(min_size=1, max_size=8).filter(
    lambda s: "[SEP]" not in s and "[CLS]" not in s
)
samples = st.lists(clean_text, max_size=6)


@given(name=clean_text, type_label=clean_text, sample=samples)
def test_repeat_k1_equals_default(name, type_label, sample):
    k1 = serialize(name, type_label, sample, SerializationConfig("repeat", 1))
    default = serialize(name, type_label, sample, SerializationConfig("default"))
    assert k1 == default


@given(
    name=clean_text,
    type_label=clean_text,
    sample=samples,
    fmt=st.sampled_from(["default", "verbose", "repeat", "header_only"]),
)
def test_single_cls_at_front(name, type_label, sample, fmt):
    out = serialize(name, type_label, sample, SerializationConfig(fmt))
    assert out.startswith("[CLS]")
    assert out.count("[CLS]") == 1


@given(
    a=st.tuples(clean_text, clean_text, samples),
    b=st.tuples(clean_text, clean_text, samples),
    fmt=st.sampled_from(["default", "verbose", "repeat"]),
)
def test_injective_without_sep_in_inputs(a, b, fmt):
    cfg = SerializationConfig(fmt)
    if a != b:
        assert serialize(a[0], a[1], list(a[2]), cfg) != serialize(
            b[0], b[1], list(b[2]), cfg
        )
