import hashlib
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentgit.canonical import CanonicalError, canonical_serialize, parse, state_hash, with_reserved_sections

# sha256 of the two bytes "{}", from `printf '{}' | sha256sum`
EMPTY_DOC_SHA256 = "44136fa355b3678a1146ad16f7e8649e94fb4fc21fe77e8310c060f61caaff8a"

scalars = st.one_of(
    st.none(),
    st.booleans(),
    st.integers(min_value=-(2**70), max_value=2**70),
    st.floats(allow_nan=False, allow_infinity=False),
    st.text(max_size=8),
)
values = st.recursive(
    scalars,
    lambda inner: st.one_of(
        st.lists(inner, max_size=4),
        st.dictionaries(st.text(max_size=6), inner, max_size=4),
    ),
    max_leaves=20,
)
docs = st.dictionaries(st.text(max_size=6), values, max_size=6)


def test_empty_document():
    assert canonical_serialize({}) == b"{}"


def test_keys_sorted():
    assert canonical_serialize({"b": 1, "a": 2}) == b'{"a":2,"b":1}'


def test_nested_sort_and_no_whitespace():
    doc = {"z": {"y": [1, {"b": None, "a": True}], "x": "é"}}
    assert canonical_serialize(doc) == '{"z":{"x":"é","y":[1,{"a":true,"b":null}]}}'.encode()


def test_code_point_order():
    # "B" (0x42) < "a" (0x61) < "é" (0xe9)
    assert canonical_serialize({"é": 1, "a": 2, "B": 3}) == '{"B":3,"a":2,"é":1}'.encode()


def test_number_forms():
    assert canonical_serialize({"a": 1.0, "b": 0.1, "c": 1e300, "d": -0.0}) == b'{"a":1,"b":0.1,"c":1e+300,"d":0}'


def test_state_hash_of_empty_doc():
    assert state_hash({}) == EMPTY_DOC_SHA256
    assert state_hash({}).startswith("44136fa3")


@pytest.mark.parametrize("bad", [float("nan"), float("inf"), float("-inf")])
def test_non_finite_number_names_key_path(bad):
    with pytest.raises(CanonicalError, match=r"env\.vals\[1\]"):
        canonical_serialize({"env": {"vals": [0, bad]}})


def test_non_utf8_key_rejected():
    with pytest.raises(CanonicalError, match="UTF-8"):
        canonical_serialize({"ok": {"\udcff": 1}})


def test_unsupported_type():
    with pytest.raises(CanonicalError, match="set"):
        canonical_serialize({"a": {1, 2}})


def test_parse_rejects_duplicate_keys():
    with pytest.raises(ValueError, match="duplicate"):
        parse('{"a":1,"a":2}')


def test_reserved_sections():
    doc = with_reserved_sections({"env": {"task": "t"}})
    assert doc == {"env": {"task": "t"}, "messages": [], "tool_calls": [], "reasoning": [], "artifacts": {}}


@settings(max_examples=200)
@given(docs)
def test_round_trip(doc):
    once = canonical_serialize(doc)
    assert canonical_serialize(parse(once)) == once


@settings(max_examples=200)
@given(docs)
def test_matches_stdlib_reference_encoding(doc):
    # json.dumps with sorted keys is an independent encoder; it differs only
    # in float spelling, so compare after parsing back.
    ours = parse(canonical_serialize(doc))
    ref = json.loads(json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False))
    assert canonical_serialize(ours) == canonical_serialize(ref)


@settings(max_examples=200)
@given(docs, st.text(min_size=1, max_size=6), st.integers())
def test_one_value_change_changes_hash(doc, key, value):
    other = dict(doc)
    other[key] = value
    if key in doc and canonical_serialize(doc[key]) == canonical_serialize(value):
        return
    assert state_hash(doc) != state_hash(other)


def test_hash_is_sha256_of_bytes():
    doc = {"messages": [{"role": "user", "content": "hi"}]}
    assert state_hash(doc) == hashlib.sha256(canonical_serialize(doc)).hexdigest()
