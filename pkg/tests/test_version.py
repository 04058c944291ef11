import time

import pytest
from hypothesis import given, strategies as st

from ccenv.errors import VersionParseError
from ccenv.version import (
    Constraint,
    DebVersion,
    VersionRelation,
    compare_versions,
    parse_constraint,
    parse_version,
    satisfies,
)

from conftest import DATA


def load_pairs():
    pairs = []
    for line in (DATA / "version_pairs.tsv").read_text().splitlines():
        if line.startswith("#") or not line.strip():
            continue
        left, right, expected = line.split("\t")
        pairs.append((left, right, int(expected)))
    return pairs


PAIRS = load_pairs()


def test_frozen_corpus_shape():
    assert len(PAIRS) >= 500
    text = " ".join(a + " " + b for a, b, _ in PAIRS)
    assert "~" in text and ":" in text
    assert {e for _, _, e in PAIRS} == {-1, 0, 1}


def test_agrees_with_dpkg_on_frozen_pairs():
    start = time.perf_counter()
    mismatches = [(a, b, e) for a, b, e in PAIRS if compare_versions(a, b) != e]
    assert not mismatches
    assert time.perf_counter() - start < 5


@pytest.mark.parametrize("a,b,expected", [
    ("1.0~rc1", "1.0", -1),
    ("1.0~~", "1.0~", -1),
    ("1:0.9", "2.0", 1),
    ("3.0.4-1", "3.3", -1),
    ("1.1.34", "1.1.35", -1),
    ("1.0", "1.0-0", 0),
    ("1.00", "1.0", 0),
    ("1.0a", "1.0", 1),
    ("1.0+dfsg", "1.0", 1),
    ("2.9.4+dfsg1-7+deb10u1", "2.9.4+dfsg1-7", 1),
    ("0:1.2", "1.2", 0),
])
def test_known_orderings(a, b, expected):
    assert compare_versions(a, b) == expected
    assert compare_versions(b, a) == -expected


def test_equality_and_hash_follow_ordering():
    assert DebVersion.parse("1.0") == "1.0-0"
    assert hash(parse_version("1.0")) == hash(parse_version("1.00-0"))
    assert len({parse_version(v) for v in ("1.0", "1.00", "0:1.0", "1.0-0")}) == 1


@pytest.mark.parametrize("text,bad", [
    ("", "empty"),
    ("a:1.0", "epoch"),
    ("1.0-", "revision"),
    ("-1", "upstream"),
    ("_1.0", "alphanumeric"),
    ("1.0 beta", "illegal"),
    ("1.0-r_1", "illegal"),
])
def test_parse_errors_carry_spans(text, bad):
    with pytest.raises(VersionParseError) as info:
        parse_version(text)
    assert bad in info.value.reason
    start, end = info.value.span
    assert 0 <= start <= end <= max(len(text), 1)


def test_relations_and_legacy_operators():
    assert VersionRelation.from_operator("<") is VersionRelation.EARLIER_OR_EQUAL
    assert VersionRelation.from_operator(">") is VersionRelation.LATER_OR_EQUAL
    assert satisfies("3.3.2-1", parse_constraint(">= 3.3"))
    assert not satisfies("3.0.4-1", parse_constraint(">= 3.3"))
    assert satisfies("5.29", parse_constraint("< 5.29"))
    assert not satisfies("1.0", Constraint(VersionRelation.STRICTLY_EARLIER, parse_version("1.0")))
    assert str(parse_constraint(">>  2:1.0-1")) == ">> 2:1.0-1"


# -- properties ------------------------------------------------------------

_alnum = "0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
upstream_st = st.builds(lambda h, t: h + t, st.sampled_from(_alnum), st.text(_alnum + ".+~", max_size=8))
revision_st = st.text(_alnum + ".+~", min_size=1, max_size=6)
version_st = st.builds(
    lambda e, u, r: (f"{e}:" if e is not None else "") + u + (f"-{r}" if r else ""),
    st.one_of(st.none(), st.integers(0, 5)), upstream_st, st.one_of(st.none(), revision_st),
)


@given(version_st)
def test_render_parse_round_trip(text):
    v = parse_version(text)
    assert parse_version(str(v)) == v
    assert str(parse_version(str(v))) == str(v)


@given(version_st, version_st)
def test_antisymmetry(a, b):
    assert compare_versions(a, b) == -compare_versions(b, a)


@given(version_st, version_st, version_st)
def test_transitivity(a, b, c):
    va, vb, vc = sorted([parse_version(a), parse_version(b), parse_version(c)])
    assert va <= vb <= vc
    assert compare_versions(va, vc) <= 0


@given(version_st, version_st)
def test_hash_consistent_with_equality(a, b):
    va, vb = parse_version(a), parse_version(b)
    if va == vb:
        assert hash(va) == hash(vb)


@given(version_st)
def test_tilde_sorts_before_release(text):
    v = parse_version(text)
    if not v.revision and "~" not in v.upstream:
        assert parse_version(v.upstream + "~pre") < parse_version(v.upstream)
