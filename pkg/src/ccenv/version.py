"""Debian version strings: parsing, total ordering and relational constraints.

Ordering follows the dpkg algorithm: epochs compare numerically, then the
upstream part and the revision are compared by alternating runs of
non-digits (lexically, letters before non-letters, ``~`` before everything
including the end of the string) and digits (numerically).
"""

from __future__ import annotations

import enum
import functools
import re
from dataclasses import dataclass
from typing import Union

from .errors import VersionParseError

__all__ = [
    "DebVersion",
    "VersionRelation",
    "Constraint",
    "parse_version",
    "parse_constraint",
    "compare_versions",
    "satisfies",
]

_DIGITS = frozenset("0123456789")
_UPSTREAM_OK = re.compile(r"[A-Za-z0-9.+~-]")
_REVISION_OK = re.compile(r"[A-Za-z0-9.+~]")


def _order(ch: str) -> int:
    if ch == "~":
        return -1
    if ch.isascii() and ch.isalpha():
        return ord(ch)
    return ord(ch) + 256


def _verrevcmp(a: str, b: str) -> int:
    i = j = 0
    la, lb = len(a), len(b)
    while i < la or j < lb:
        # non-digit run, character by character; end of string weighs 0
        while (i < la and a[i] not in _DIGITS) or (j < lb and b[j] not in _DIGITS):
            ac = _order(a[i]) if i < la and a[i] not in _DIGITS else 0
            bc = _order(b[j]) if j < lb and b[j] not in _DIGITS else 0
            if ac != bc:
                return -1 if ac < bc else 1
            i += 1
            j += 1
        si = i
        while i < la and a[i] in _DIGITS:
            i += 1
        sj = j
        while j < lb and b[j] in _DIGITS:
            j += 1
        na = int(a[si:i]) if i > si else 0
        nb = int(b[sj:j]) if j > sj else 0
        if na != nb:
            return -1 if na < nb else 1
    return 0


def _canonical_runs(part: str) -> tuple:
    """Runs of (non-digits, number) with trailing empty/zero runs dropped.

    Two parts compare equal exactly when their canonical runs are equal,
    which makes this a valid hash key.
    """
    runs = [(m.group(1), int(m.group(2) or 0)) for m in re.finditer(r"([^0-9]*)([0-9]*)", part) if m.group(0)]
    while runs and runs[-1] == ("", 0):
        runs.pop()
    return tuple(runs)


@functools.total_ordering
@dataclass(frozen=True, eq=False)
class DebVersion:
    """An ``[epoch:]upstream[-revision]`` version.

    Equality and hashing follow the ordering, so ``1.0`` equals ``1.0-0``
    and ``0:1.00``.
    """

    epoch: int = 0
    upstream: str = "0"
    revision: str = ""

    @classmethod
    def parse(cls, text: str) -> "DebVersion":
        return parse_version(text)

    def __str__(self) -> str:
        out = self.upstream
        if self.epoch:
            out = f"{self.epoch}:{out}"
        if self.revision:
            out = f"{out}-{self.revision}"
        return out

    def __repr__(self) -> str:
        return f"DebVersion({str(self)!r})"

    def _cmp(self, other: "DebVersion") -> int:
        if self.epoch != other.epoch:
            return -1 if self.epoch < other.epoch else 1
        return _verrevcmp(self.upstream, other.upstream) or _verrevcmp(self.revision, other.revision)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, str):
            other = parse_version(other)
        if not isinstance(other, DebVersion):
            return NotImplemented
        return self._cmp(other) == 0

    def __lt__(self, other: object) -> bool:
        if isinstance(other, str):
            other = parse_version(other)
        if not isinstance(other, DebVersion):
            return NotImplemented
        return self._cmp(other) < 0

    def __hash__(self) -> int:
        return hash((self.epoch, _canonical_runs(self.upstream), _canonical_runs(self.revision)))


VersionLike = Union[DebVersion, str]


def parse_version(text: str) -> DebVersion:
    if not isinstance(text, str):
        raise TypeError(f"expected str, got {type(text).__name__}")
    lead = len(text) - len(text.lstrip())
    body = text.strip()
    if not body:
        raise VersionParseError(text, (0, len(text)), "empty version")

    epoch = 0
    rest_start = 0
    colon = body.find(":")
    if colon >= 0:
        epoch_text = body[:colon]
        if not epoch_text or not epoch_text.isascii() or not epoch_text.isdigit():
            raise VersionParseError(text, (lead, lead + colon), "epoch is not a non-negative integer")
        epoch = int(epoch_text)
        rest_start = colon + 1

    rest = body[rest_start:]
    dash = rest.rfind("-")
    if dash >= 0:
        upstream, revision = rest[:dash], rest[dash + 1:]
        if not revision:
            pos = lead + rest_start + dash
            raise VersionParseError(text, (pos, pos + 1), "empty revision after '-'")
    else:
        upstream, revision = rest, ""

    up_off = lead + rest_start
    if not upstream:
        raise VersionParseError(text, (up_off, up_off), "empty upstream version")
    if not (upstream[0].isascii() and upstream[0].isalnum()):
        raise VersionParseError(text, (up_off, up_off + 1), "upstream must start with an alphanumeric")
    for k, ch in enumerate(upstream):
        if not _UPSTREAM_OK.fullmatch(ch):
            raise VersionParseError(text, (up_off + k, up_off + k + 1), "illegal character in upstream version")
    rev_off = up_off + len(upstream) + 1
    for k, ch in enumerate(revision):
        if not _REVISION_OK.fullmatch(ch):
            raise VersionParseError(text, (rev_off + k, rev_off + k + 1), "illegal character in revision")
    return DebVersion(epoch, upstream, revision)


def _coerce(v: VersionLike) -> DebVersion:
    return v if isinstance(v, DebVersion) else parse_version(v)


def compare_versions(a: VersionLike, b: VersionLike) -> int:
    """Return -1, 0 or 1 as ``a`` sorts before, equal to, or after ``b``."""
    return _coerce(a)._cmp(_coerce(b))


class VersionRelation(enum.Enum):
    STRICTLY_EARLIER = "<<"
    EARLIER_OR_EQUAL = "<="
    EXACTLY_EQUAL = "="
    LATER_OR_EQUAL = ">="
    STRICTLY_LATER = ">>"

    @classmethod
    def from_operator(cls, op: str) -> "VersionRelation":
        op = op.strip()
        # obsolete single-character forms mean "or equal"
        if op == "<":
            return cls.EARLIER_OR_EQUAL
        if op == ">":
            return cls.LATER_OR_EQUAL
        return cls(op)

    @property
    def operator(self) -> str:
        return self.value

    def admits(self, ordering: int) -> bool:
        return ordering in _ADMISSIBLE[self]


_ADMISSIBLE = {
    VersionRelation.STRICTLY_EARLIER: {-1},
    VersionRelation.EARLIER_OR_EQUAL: {-1, 0},
    VersionRelation.EXACTLY_EQUAL: {0},
    VersionRelation.LATER_OR_EQUAL: {0, 1},
    VersionRelation.STRICTLY_LATER: {1},
}


@dataclass(frozen=True)
class Constraint:
    relation: VersionRelation
    version: DebVersion

    def __str__(self) -> str:
        return f"{self.relation.value} {self.version}"

    def admits(self, candidate: VersionLike) -> bool:
        return satisfies(candidate, self)


_CONSTRAINT_RE = re.compile(r"^\s*(<<|<=|>=|>>|=|<|>)\s*(\S+)\s*$")


def parse_constraint(text: str) -> Constraint:
    """Parse ``">= 3.3"`` (no surrounding parentheses)."""
    m = _CONSTRAINT_RE.match(text)
    if not m:
        raise ValueError(f"invalid version constraint {text!r}")
    return Constraint(VersionRelation.from_operator(m.group(1)), parse_version(m.group(2)))


def satisfies(candidate: VersionLike, c: Constraint) -> bool:
    return c.relation.admits(compare_versions(candidate, c.version))
