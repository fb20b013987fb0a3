import copy
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentgit.canonical import canonical_serialize
from agentgit.docdiff import ABSENT, apply_diff, diff_states, three_way_merge

SECTIONS = ("env", "artifacts", "reasoning_notes")
LEAVES = ("model", "temperature", "draft", "score")
_MISSING = object()


# -- independent oracle ---------------------------------------------------------------
# Walks the nested maps directly rather than flattening them. For each key:
# a side that changed it wins; both changing it identically agrees; both
# changing it differently is a conflict, settled by the preferred side.


def overlay(base, ours, theirs, prefer):
    conflicts = []

    def walk(b, o, t, path):
        out = {}
        for key in sorted(set(b) | set(o) | set(t)):
            bv, ov, tv = b.get(key, _MISSING), o.get(key, _MISSING), t.get(key, _MISSING)
            if all(isinstance(v, dict) for v in (bv, ov, tv)):
                out[key] = walk(bv, ov, tv, path + [key])
                continue
            o_changed = not _eq(ov, bv)
            t_changed = not _eq(tv, bv)
            if o_changed and t_changed and not _eq(ov, tv):
                conflicts.append(".".join(path + [key]))
                chosen = ov if prefer == "ours" else tv
            elif o_changed:
                chosen = ov
            elif t_changed:
                chosen = tv
            else:
                chosen = bv
            if chosen is not _MISSING:
                out[key] = copy.deepcopy(chosen)
        return out

    return walk(base, ours, theirs, []), conflicts


def _eq(a, b):
    if a is _MISSING or b is _MISSING:
        return a is b
    return canonical_serialize({"v": a}) == canonical_serialize({"v": b})


# -- case generation ---------------------------------------------------------------------

leaf_values = st.one_of(st.integers(-3, 3), st.sampled_from(["a", "b", "gpt-4o-mini", "gpt-4o"]), st.booleans())


@st.composite
def documents(draw):
    return {
        s: {k: draw(leaf_values) for k in LEAVES if draw(st.booleans())}
        for s in SECTIONS
    }


@st.composite
def edited(draw, base):
    doc = copy.deepcopy(base)
    for s in SECTIONS:
        for k in LEAVES:
            action = draw(st.sampled_from(["keep", "keep", "set", "delete"]))
            if action == "set":
                doc[s][k] = draw(leaf_values)
            elif action == "delete":
                doc[s].pop(k, None)
    return doc


@st.composite
def merge_cases(draw):
    base = draw(documents())
    return base, draw(edited(base)), draw(edited(base))


# -- unit cases ------------------------------------------------------------------------------


def test_disjoint_union():
    base = {"env": {"model": "gpt-4o-mini"}, "artifacts": {}}
    ours = {"env": {"model": "gpt-4o-mini"}, "artifacts": {"intro": "x"}}
    theirs = {"env": {"model": "gpt-4o-mini", "temperature": 0}, "artifacts": {}}
    result = three_way_merge(base, ours, theirs)
    assert result.ok
    assert result.merged == {"env": {"model": "gpt-4o-mini", "temperature": 0}, "artifacts": {"intro": "x"}}


def test_forced_conflict_reports_exact_key_path():
    base = {"env": {"model": "gpt-4o-mini"}, "messages": []}
    ours = {"env": {"model": "gpt-4o"}, "messages": []}
    theirs = {"env": {"model": "llama"}, "messages": []}
    result = three_way_merge(base, ours, theirs)
    assert not result.ok and result.merged is None
    assert [c.key for c in result.conflicts] == ["env.model"]
    c = result.conflicts[0]
    assert (c.base, c.ours, c.theirs) == ("gpt-4o-mini", "gpt-4o", "llama")


def test_identical_change_is_agreement():
    base = {"a": 1}
    assert three_way_merge(base, {"a": 2}, {"a": 2}).merged == {"a": 2}


def test_delete_vs_modify_conflicts():
    result = three_way_merge({"a": 1, "b": 0}, {"b": 0}, {"a": 2, "b": 0})
    assert [c.key for c in result.conflicts] == ["a"]
    assert result.conflicts[0].ours is ABSENT


def test_lists_are_atomic():
    result = three_way_merge({"m": [1]}, {"m": [1, 2]}, {"m": [1, 3]})
    assert [c.key for c in result.conflicts] == ["m"]


def test_structural_clash():
    base = {"env": {"cfg": {"a": 1}}}
    ours = {"env": {"cfg": "flat"}}
    theirs = {"env": {"cfg": {"a": 1, "b": 2}}}
    result = three_way_merge(base, ours, theirs)
    assert [c.key for c in result.conflicts] == ["env.cfg"]
    assert three_way_merge(base, ours, theirs, "prefer-ours").merged == ours
    assert three_way_merge(base, ours, theirs, "prefer-theirs").merged == theirs


def test_bool_is_not_int():
    result = three_way_merge({"a": 0}, {"a": 1}, {"a": True})
    assert [c.key for c in result.conflicts] == ["a"]


@pytest.mark.parametrize("strategy,expected", [("prefer-ours", "gpt-4o"), ("prefer-theirs", "llama")])
def test_preference_strategies(strategy, expected):
    base = {"env": {"model": "m", "t": 0}}
    ours = {"env": {"model": "gpt-4o", "t": 0}}
    theirs = {"env": {"model": "llama", "t": 1}}
    result = three_way_merge(base, ours, theirs, strategy)
    assert result.merged == {"env": {"model": expected, "t": 1}}


def test_unknown_strategy():
    with pytest.raises(ValueError, match="unknown merge strategy"):
        three_way_merge({}, {}, {}, "octopus")


# -- randomized cases against the oracle -------------------------------------------------------


@settings(max_examples=100, deadline=None)
@given(merge_cases())
def test_prefer_ours_matches_overlay_oracle(case):
    base, ours, theirs = case
    expected, _ = overlay(base, ours, theirs, "ours")
    result = three_way_merge(base, ours, theirs, "prefer-ours")
    assert canonical_serialize(result.merged) == canonical_serialize(expected)


@settings(max_examples=100, deadline=None)
@given(merge_cases())
def test_prefer_theirs_matches_overlay_oracle(case):
    base, ours, theirs = case
    expected, _ = overlay(base, ours, theirs, "theirs")
    result = three_way_merge(base, ours, theirs, "prefer-theirs")
    assert canonical_serialize(result.merged) == canonical_serialize(expected)


@settings(max_examples=100, deadline=None)
@given(merge_cases())
def test_conflict_set_matches_oracle(case):
    base, ours, theirs = case
    expected, conflicts = overlay(base, ours, theirs, "ours")
    result = three_way_merge(base, ours, theirs)
    assert [c.key for c in result.conflicts] == conflicts
    if not conflicts:
        assert canonical_serialize(result.merged) == canonical_serialize(expected)


def run_randomized_store_cases(store, count=100, seed=7):
    """Merge through the store for ``count`` seeded cases; returns mismatch count."""
    rng = random.Random(seed)
    values = [-1, 0, 1, 2, "a", "b", True, False]
    mismatches = 0
    for i in range(count):
        base = {s: {k: rng.choice(values) for k in LEAVES if rng.random() < 0.6} for s in SECTIONS}

        def edit():
            doc = copy.deepcopy(base)
            for s in SECTIONS:
                for k in LEAVES:
                    r = rng.random()
                    if r < 0.25:
                        doc[s][k] = rng.choice(values)
                    elif r < 0.35:
                        doc[s].pop(k, None)
            return doc

        ours, theirs = edit(), edit()
        root = store.commit(None, {"case": i, **base}, f"case{i}/ours")
        store.create_branch(f"case{i}/theirs", root)
        o = store.commit(root, {"case": i, **ours}, f"case{i}/ours")
        t = store.commit(root, {"case": i, **theirs}, f"case{i}/theirs")
        result = store.merge(o, t, "prefer-ours")
        expected, _ = overlay(base, ours, theirs, "ours")
        expected["case"] = i
        got = store.checkout(result.checkpoint)
        cp = store.get(result.checkpoint)
        if canonical_serialize(got) != canonical_serialize(expected) or cp.parent != o or cp.merged_from != t:
            mismatches += 1
    return mismatches


def test_store_merge_matches_oracle(store):
    assert run_randomized_store_cases(store) == 0


def test_store_merge_conflict_leaves_store_untouched(store):
    root = store.commit(None, {"env": {"model": "a"}}, "main")
    store.create_branch("other", root)
    o = store.commit(root, {"env": {"model": "b"}}, "main")
    t = store.commit(root, {"env": {"model": "c"}}, "other")
    before = set(store.checkpoints())
    result = store.merge(o, t)
    assert [c.key for c in result.conflicts] == ["env.model"]
    assert set(store.checkpoints()) == before and store.branch_head("main") == o


@settings(max_examples=100, deadline=None)
@given(merge_cases())
def test_diff_apply_round_trip(case):
    base, ours, _ = case
    assert canonical_serialize(apply_diff(diff_states(base, ours), base)) == canonical_serialize(ours)
