"""deb822 paragraphs, ``Packages`` indices and the dependency-field grammar."""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, TextIO, Union

from .errors import ControlParseError, DependsParseError, VersionParseError
from .version import Constraint, DebVersion, VersionRelation, parse_version

__all__ = [
    "Paragraph",
    "DependencyAtom",
    "DependencyClause",
    "PackageRecord",
    "Diagnostic",
    "IndexParseResult",
    "parse_paragraphs",
    "parse_package_index",
    "parse_depends",
    "render_depends",
    "is_valid_package_name",
]

TextSource = Union[str, bytes, TextIO, Iterable[str]]

_PACKAGE_NAME = re.compile(r"[a-z0-9][a-z0-9+.-]+")
_FIELD_NAME = re.compile(r"[!-9;-~]+")  # printable ASCII except ':' and space


def is_valid_package_name(name: str) -> bool:
    return bool(_PACKAGE_NAME.fullmatch(name))


class Paragraph:
    """Ordered ``(name, value)`` fields with case-insensitive lookup."""

    __slots__ = ("fields", "_index", "line")

    def __init__(self, fields: Iterable[tuple[str, str]] = (), line: int | None = None):
        self.fields: list[tuple[str, str]] = []
        self._index: dict[str, int] = {}
        self.line = line
        for name, value in fields:
            self.add(name, value)

    def add(self, name: str, value: str) -> None:
        if not name:
            raise ControlParseError("empty field name", self.line)
        key = name.lower()
        if key in self._index:
            raise ControlParseError(f"duplicate field {name!r}", self.line)
        self._index[key] = len(self.fields)
        self.fields.append((name, value))

    def get(self, name: str, default: str | None = None) -> str | None:
        pos = self._index.get(name.lower())
        return default if pos is None else self.fields[pos][1]

    def __getitem__(self, name: str) -> str:
        pos = self._index.get(name.lower())
        if pos is None:
            raise KeyError(name)
        return self.fields[pos][1]

    def __contains__(self, name: object) -> bool:
        return isinstance(name, str) and name.lower() in self._index

    def __len__(self) -> int:
        return len(self.fields)

    def __iter__(self) -> Iterator[str]:
        return (name for name, _ in self.fields)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Paragraph):
            return NotImplemented
        return self.fields == other.fields

    def __repr__(self) -> str:
        return f"Paragraph({self.fields!r})"

    def render(self) -> str:
        out = []
        for name, value in self.fields:
            sep = ":" if value.startswith("\n") or not value else ": "
            out.append(f"{name}{sep}{value}\n")
        return "".join(out)


def _lines(source: TextSource) -> Iterator[str]:
    if isinstance(source, bytes):
        source = source.decode("utf-8", errors="replace")
    if isinstance(source, str):
        source = io.StringIO(source)
    for line in source:
        if isinstance(line, bytes):
            line = line.decode("utf-8", errors="replace")
        yield line.rstrip("\r\n")


def _blocks(source: TextSource) -> Iterator[tuple[int, list[tuple[int, str]]]]:
    """Yield (first line number, [(lineno, text), ...]) for each non-blank block."""
    block: list[tuple[int, str]] = []
    for lineno, line in enumerate(_lines(source), start=1):
        if not line.strip():
            if block:
                yield block[0][0], block
                block = []
            continue
        if line.startswith("#"):
            continue
        block.append((lineno, line))
    if block:
        yield block[0][0], block


def _parse_block(start: int, block: list[tuple[int, str]]) -> Paragraph:
    fields: list[tuple[int, str, list[str]]] = []
    for lineno, line in block:
        if line[0] in " \t":
            if not fields:
                raise ControlParseError("continuation line before any field", lineno)
            fields[-1][2].append(line.rstrip())
            continue
        colon = line.find(":")
        if colon <= 0:
            raise ControlParseError(f"field line without ':' ({line[:40]!r})", lineno)
        name = line[:colon]
        if not _FIELD_NAME.fullmatch(name) or name[0] == "-":
            raise ControlParseError(f"invalid field name {name!r}", lineno)
        fields.append((lineno, name, [line[colon + 1:].strip()]))
    para = Paragraph(line=start)
    for lineno, name, value in fields:
        if name in para:
            raise ControlParseError(f"duplicate field {name!r}", lineno)
        para.add(name, "\n".join(value))
    return para


def parse_paragraphs(stream: TextSource) -> list[Paragraph]:
    """Split deb822 text into paragraphs, raising on the first malformed line."""
    return [_parse_block(start, block) for start, block in _blocks(stream)]


# -- dependency fields -------------------------------------------------------


@dataclass(frozen=True)
class DependencyAtom:
    package: str
    constraint: Constraint | None = None
    arch_qualifiers: tuple[str, ...] | None = None
    multiarch: str | None = None

    def __str__(self) -> str:
        out = self.package
        if self.multiarch:
            out += f":{self.multiarch}"
        if self.constraint is not None:
            out += f" ({self.constraint})"
        if self.arch_qualifiers is not None:
            out += " [" + " ".join(self.arch_qualifiers) + "]"
        return out

    @property
    def relation(self) -> VersionRelation | None:
        return self.constraint.relation if self.constraint else None


@dataclass(frozen=True)
class DependencyClause:
    alternatives: tuple[DependencyAtom, ...]

    def __post_init__(self):
        if not self.alternatives:
            raise ValueError("a dependency clause needs at least one alternative")

    def __str__(self) -> str:
        return " | ".join(str(a) for a in self.alternatives)

    def __iter__(self):
        return iter(self.alternatives)


_ATOM_RE = re.compile(
    r"""^\s*
    (?P<name>[^\s:(\[]+)
    (?::(?P<ma>[a-z0-9-]+))?
    \s*
    (?:\(\s*(?P<op><<|<=|>=|>>|=|<|>)?\s*(?P<ver>[^\s)]*)\s*\))?
    \s*
    (?:\[(?P<arch>[^\]]*)\])?
    \s*$""",
    re.VERBOSE,
)


def _split_top_level(text: str, sep: str) -> list[str]:
    parts, depth_paren, depth_bracket, cur = [], 0, 0, []
    for ch in text:
        if ch == "(":
            depth_paren += 1
        elif ch == ")":
            depth_paren -= 1
            if depth_paren < 0:
                raise DependsParseError(text, "unbalanced ')'")
        elif ch == "[":
            depth_bracket += 1
        elif ch == "]":
            depth_bracket -= 1
            if depth_bracket < 0:
                raise DependsParseError(text, "unbalanced ']'")
        if ch == sep and depth_paren == 0 and depth_bracket == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if depth_paren:
        raise DependsParseError(text, "unbalanced '('")
    if depth_bracket:
        raise DependsParseError(text, "unbalanced '['")
    parts.append("".join(cur))
    return parts


def _parse_atom(text: str, clause: str) -> DependencyAtom:
    if "${" in text:
        raise DependsParseError(clause, "substitution variables are not allowed in binary indices")
    if text.count("(") > 1 or text.count("[") > 1:
        raise DependsParseError(clause, "repeated version or architecture restriction")
    m = _ATOM_RE.match(text)
    paren = re.search(r"\(\s*([^\s\d\w)]*)", text)
    if paren and paren.group(1) not in ("<<", "<=", "=", ">=", ">>", "<", ">"):
        raise DependsParseError(clause, f"unknown relation operator {paren.group(1)!r}")
    if not m:
        raise DependsParseError(clause, f"cannot parse {text.strip()!r}")
    name = m.group("name")
    if not is_valid_package_name(name):
        raise DependsParseError(clause, f"invalid package name {name!r}")
    constraint = None
    if "(" in text:
        op, ver = m.group("op"), m.group("ver")
        if not op:
            raise DependsParseError(clause, "missing or unknown relation operator")
        if not ver:
            raise DependsParseError(clause, "missing version in restriction")
        try:
            constraint = Constraint(VersionRelation.from_operator(op), parse_version(ver))
        except VersionParseError as exc:
            raise DependsParseError(clause, str(exc)) from exc
    archs = None
    if m.group("arch") is not None:
        archs = tuple(m.group("arch").split())
        if not archs:
            raise DependsParseError(clause, "empty architecture list")
    return DependencyAtom(name, constraint, archs, m.group("ma"))


def parse_depends(text: str | None) -> list[DependencyClause]:
    """Parse a relationship field (Depends, Pre-Depends, Recommends, ...)."""
    if text is None or not text.strip():
        return []
    clauses = []
    for raw in _split_top_level(text, ","):
        if not raw.strip():
            raise DependsParseError(text.strip(), "empty clause")
        alternatives = []
        for alt in _split_top_level(raw, "|"):
            if not alt.strip():
                raise DependsParseError(raw.strip(), "empty alternative")
            alternatives.append(_parse_atom(alt, raw.strip()))
        clauses.append(DependencyClause(tuple(alternatives)))
    return clauses


def render_depends(clauses: Iterable[DependencyClause]) -> str:
    return ", ".join(str(c) for c in clauses)


def parse_provides(text: str | None) -> list[DependencyAtom]:
    atoms = []
    for clause in parse_depends(text):
        if len(clause.alternatives) != 1:
            raise DependsParseError(str(clause), "alternatives are not allowed in Provides")
        atoms.append(clause.alternatives[0])
    return atoms


# -- package records ---------------------------------------------------------


@dataclass
class PackageRecord:
    name: str
    version: DebVersion
    architecture: str = "all"
    source_name: str | None = None
    depends: list[DependencyClause] = field(default_factory=list)
    pre_depends: list[DependencyClause] = field(default_factory=list)
    provides: list[DependencyAtom] = field(default_factory=list)
    filename: str | None = None
    description: str | None = None
    tags: list[str] | None = None
    recommends: list[DependencyClause] = field(default_factory=list)
    suggests: list[DependencyClause] = field(default_factory=list)
    size: int | None = None
    sha256: str | None = None
    paragraph: Paragraph | None = field(default=None, repr=False, compare=False)

    def relationships(self, include_recommends: bool = False) -> list[DependencyClause]:
        """Clauses that count as dependencies: Pre-Depends and Depends, optionally Recommends."""
        out = list(self.pre_depends) + list(self.depends)
        if include_recommends:
            out += list(self.recommends)
        return out

    @property
    def key(self) -> tuple[str, DebVersion]:
        return (self.name, self.version)

    def to_paragraph(self) -> Paragraph:
        para = Paragraph([("Package", self.name)])
        if self.source_name:
            para.add("Source", self.source_name)
        para.add("Version", str(self.version))
        para.add("Architecture", self.architecture)
        for label, clauses in (("Pre-Depends", self.pre_depends), ("Depends", self.depends),
                               ("Recommends", self.recommends), ("Suggests", self.suggests)):
            if clauses:
                para.add(label, render_depends(clauses))
        if self.provides:
            para.add("Provides", ", ".join(str(a) for a in self.provides))
        if self.filename:
            para.add("Filename", self.filename)
        if self.size is not None:
            para.add("Size", str(self.size))
        if self.sha256:
            para.add("SHA256", self.sha256)
        if self.tags:
            para.add("Tag", ", ".join(self.tags))
        if self.description:
            para.add("Description", self.description)
        return para


@dataclass(frozen=True)
class Diagnostic:
    line: int | None
    message: str
    package: str | None = None

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line is not None else ""
        who = f"{self.package}: " if self.package else ""
        return f"{where}{who}{self.message}"


@dataclass
class IndexParseResult:
    records: list[PackageRecord]
    diagnostics: list[Diagnostic]

    def __iter__(self):
        # allows ``records, diagnostics = parse_package_index(...)``
        return iter((self.records, self.diagnostics))


def strip_source_version(source: str) -> str:
    """``"glibc (2.28-10)"`` -> ``"glibc"``."""
    return source.split("(", 1)[0].strip()


def record_from_paragraph(para: Paragraph) -> PackageRecord:
    name = para.get("Package")
    version = para.get("Version")
    if not name:
        raise ControlParseError("missing Package field", para.line)
    name = name.strip()
    if not is_valid_package_name(name):
        raise ControlParseError(f"invalid package name {name!r}", para.line)
    if not version:
        raise ControlParseError(f"{name}: missing Version field", para.line)
    try:
        parsed_version = parse_version(version)
    except VersionParseError as exc:
        raise ControlParseError(f"{name}: {exc}", para.line) from exc
    try:
        depends = parse_depends(para.get("Depends"))
        pre_depends = parse_depends(para.get("Pre-Depends"))
        recommends = parse_depends(para.get("Recommends"))
        suggests = parse_depends(para.get("Suggests"))
        provides = parse_provides(para.get("Provides"))
    except DependsParseError as exc:
        raise ControlParseError(f"{name}: {exc}", para.line) from exc
    source = para.get("Source")
    size = para.get("Size")
    tag = para.get("Tag")
    return PackageRecord(
        name=name,
        version=parsed_version,
        architecture=(para.get("Architecture") or "all").strip(),
        source_name=strip_source_version(source) if source else None,
        depends=depends,
        pre_depends=pre_depends,
        provides=provides,
        filename=(para.get("Filename") or "").strip() or None,
        description=para.get("Description"),
        tags=[t.strip() for t in tag.replace("\n", " ").split(",") if t.strip()] if tag else None,
        recommends=recommends,
        suggests=suggests,
        size=int(size) if size and size.strip().isdigit() else None,
        sha256=(para.get("SHA256") or "").strip().lower() or None,
        paragraph=para,
    )


def parse_package_index(stream: TextSource) -> IndexParseResult:
    """Parse a decompressed ``Packages`` index.

    Malformed paragraphs are dropped individually and reported as
    diagnostics; duplicated (name, version) pairs keep the last paragraph.
    """
    by_key: dict[tuple[str, DebVersion], PackageRecord] = {}
    diagnostics: list[Diagnostic] = []
    for start, block in _blocks(stream):
        try:
            para = _parse_block(start, block)
            record = record_from_paragraph(para)
        except ControlParseError as exc:
            diagnostics.append(Diagnostic(exc.line if exc.line is not None else start, exc.message))
            continue
        if record.key in by_key:
            diagnostics.append(Diagnostic(start, f"duplicate {record.name} {record.version}, keeping the later entry",
                                          record.name))
            del by_key[record.key]
        by_key[record.key] = record
    return IndexParseResult(list(by_key.values()), diagnostics)
