import pytest
from hypothesis import given, strategies as st

from ccenv.control import (
    DependencyAtom,
    Paragraph,
    is_valid_package_name,
    parse_depends,
    parse_package_index,
    parse_paragraphs,
    parse_provides,
    render_depends,
    strip_source_version,
)
from ccenv.errors import ControlParseError, DependsParseError
from ccenv.version import VersionRelation


def test_paragraphs_with_continuations_and_comments():
    text = ("# leading comment\nPackage: glow\nVersion: 3.3.2-1\nDescription: short\n long line\n .\n"
            " more\n\n\nPackage: libglow3\nversion: 3.3.2-1\n")
    first, second = parse_paragraphs(text)
    assert first["Description"] == "short\n long line\n .\n more"
    assert second["Version"] == "3.3.2-1"
    assert first.line == 2 and second.line == 10
    assert parse_paragraphs(first.render()) == [first]


@pytest.mark.parametrize("text,line", [
    (" continuation\nPackage: x\n", 1),
    ("Package: x\nno colon here\n", 2),
    ("Package: x\nVersion: 1\npackage: y\n", 3),
    ("Package: x\n: empty name\n", 2),
])
def test_malformed_paragraphs_report_line(text, line):
    with pytest.raises(ControlParseError) as info:
        parse_paragraphs(text)
    assert info.value.line == line


def test_depends_grammar():
    clauses = parse_depends("libc6 (>= 2.31), exim4 | mail-transport-agent, make:any (>= 4.3) [amd64 arm64], "
                            "perl-base (< 5.29)")
    assert len(clauses) == 4
    assert clauses[0].alternatives[0].constraint.relation is VersionRelation.LATER_OR_EQUAL
    assert [a.package for a in clauses[1]] == ["exim4", "mail-transport-agent"]
    make = clauses[2].alternatives[0]
    assert make.multiarch == "any" and make.arch_qualifiers == ("amd64", "arm64")
    assert clauses[3].alternatives[0].constraint.relation is VersionRelation.EARLIER_OR_EQUAL
    assert parse_depends(render_depends(clauses)) == clauses


def test_short_names_are_rejected():
    # package names need at least two characters
    with pytest.raises(DependsParseError):
        parse_depends("a | b (= 1.0), c")
    clauses = parse_depends("aa | bb (= 1.0), cc")
    assert [len(c.alternatives) for c in clauses] == [2, 1]


@pytest.mark.parametrize("bad", [
    "libfoo (~ 1.0)", "libfoo (>= )", "libfoo (>= 1.0", "libfoo,, libbar", "libfoo | ", "${shlibs:Depends}",
    "libfoo (>= 1.0) (<< 2.0)", "libfoo []", "Libfoo", "libfoo )",
])
def test_depends_errors(bad):
    with pytest.raises(DependsParseError):
        parse_depends(bad)


def test_provides_forbids_alternatives():
    assert parse_provides("mail-transport-agent, foo-api (= 1.0)")[1].constraint is not None
    with pytest.raises(DependsParseError):
        parse_provides("aa | bb")


def test_package_index_diagnostics_and_duplicates():
    text = ("Package: good\nVersion: 1.0\nArchitecture: amd64\nDepends: libc6 (>= 2.31)\n\n"
            "Package: bad-version\nVersion: 1.0-\n\n"
            "Package: bad-depends\nVersion: 1.0\nDepends: foo (~ 1)\n\n"
            "Version: 2.0\n\n"
            "Package: dup\nVersion: 1.0\nDescription: first\n\n"
            "Package: dup\nVersion: 1.0\nDescription: second\n")
    records, diagnostics = parse_package_index(text)
    assert [r.name for r in records] == ["good", "dup"]
    assert records[1].description == "second"
    assert len(diagnostics) == 4
    assert {d.line for d in diagnostics} >= {6, 9, 13}


def test_source_and_record_fields():
    text = ("Package: libc-bin\nSource: glibc (2.31-13)\nVersion: 2.31-13\nArchitecture: amd64\n"
            "Pre-Depends: libc6 (>= 2.31)\nDepends: libc6 (= 2.31-13)\nProvides: c-runtime\n"
            "Filename: pool/x.deb\nSize: 12\nSHA256: " + "0" * 64 + "\n")
    (rec,), diags = parse_package_index(text)
    assert not diags
    assert strip_source_version(rec.source_name) == "glibc"
    assert [c.alternatives[0].package for c in rec.relationships()] == ["libc6", "libc6"]
    assert rec.size == 12 and rec.filename == "pool/x.deb"
    assert rec.provides == [DependencyAtom("c-runtime")]
    assert parse_package_index(rec.to_paragraph().render()).records[0].key == rec.key


# -- round-trip properties ---------------------------------------------------

name_st = st.from_regex(r"[a-z0-9][a-z0-9+.-]{1,12}", fullmatch=True)
ver_st = st.from_regex(r"([0-9]:)?[0-9][0-9a-z.+~]{0,6}(-[0-9a-z.+~]{1,4})?", fullmatch=True)
op_st = st.sampled_from(["<<", "<=", "=", ">=", ">>"])
atom_st = st.builds(
    lambda n, c, a, ma: n + (f":{ma}" if ma else "") + (f" ({c[0]} {c[1]})" if c else "")
    + (f" [{' '.join(a)}]" if a else ""),
    name_st, st.one_of(st.none(), st.tuples(op_st, ver_st)),
    st.one_of(st.none(), st.lists(st.sampled_from(["amd64", "arm64", "!i386", "linux-any"]), min_size=1,
                                  max_size=3)),
    st.one_of(st.none(), st.sampled_from(["any", "native"])),
)
depends_st = st.lists(st.lists(atom_st, min_size=1, max_size=3).map(" | ".join), min_size=1, max_size=6).map(", ".join)


@given(depends_st)
def test_depends_render_parse_fixpoint(text):
    clauses = parse_depends(text)
    rendered = render_depends(clauses)
    assert parse_depends(rendered) == clauses
    assert render_depends(parse_depends(rendered)) == rendered
    for clause in clauses:
        for atom in clause:
            assert is_valid_package_name(atom.package)


field_name_st = st.from_regex(r"[A-Za-z][A-Za-z0-9-]{0,15}", fullmatch=True)
line_st = st.text(st.characters(min_codepoint=33, max_codepoint=126), min_size=1, max_size=20)
value_st = st.builds(
    lambda first, rest: first + "".join("\n " + r for r in rest),
    st.one_of(st.just(""), line_st), st.lists(st.one_of(line_st, st.just(".")), max_size=3),
)
paragraph_st = st.lists(st.tuples(field_name_st, value_st), min_size=1, max_size=8,
                        unique_by=lambda f: f[0].lower()).map(Paragraph)


@given(st.lists(paragraph_st, min_size=1, max_size=4))
def test_paragraph_render_parse_fixpoint(paragraphs):
    text = "\n".join(p.render() for p in paragraphs)
    parsed = parse_paragraphs(text)
    assert parsed == paragraphs
    assert "\n".join(p.render() for p in parsed) == text
