"""Cross-release compatibility: project differences and unsatisfiable dependencies.

``incompatible_projects(a, b)`` asks whether the packages of release ``b``
could have their dependencies met by what release ``a`` ships. Matrices are
indexed ``[row A][column B]``.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

from .control import DependencyAtom, DependencyClause, PackageRecord
from .errors import ContractViolation
from .graph import EDGraph, project_of
from .snapshot import MirrorSnapshot
from .version import DebVersion, VersionRelation, satisfies

__all__ = [
    "ReleaseInventory",
    "IncompatReason",
    "IncompatFinding",
    "IncompatResult",
    "IncompatMatrix",
    "ProjectDiff",
    "inventory_from_graph",
    "project_diff",
    "diff_matrix",
    "atom_satisfied",
    "clause_satisfied",
    "classify_reason",
    "incompatible_projects",
    "incompat_matrix",
]


@dataclass
class ReleaseInventory:
    """What a release offers on one date: a single version per package name."""

    release: str
    at_date: dt.date | None
    packages: dict[str, PackageRecord]
    diagnostics: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.providers: dict[str, set[str]] = {}
        for rec in self.packages.values():
            for atom in rec.provides:
                self.providers.setdefault(atom.package, set()).add(rec.name)

    @classmethod
    def from_records(cls, release: str, at_date: dt.date | None, records: Iterable[PackageRecord]
                     ) -> "ReleaseInventory":
        packages: dict[str, PackageRecord] = {}
        diagnostics = []
        for rec in records:
            prev = packages.get(rec.name)
            if prev is not None:
                diagnostics.append(f"{release}: {rec.name} has {prev.version} and {rec.version}; keeping the higher")
                if rec.version <= prev.version:
                    continue
            packages[rec.name] = rec
        return cls(release, at_date, packages, diagnostics)

    @classmethod
    def from_snapshot(cls, snapshot: MirrorSnapshot) -> "ReleaseInventory":
        return cls.from_records(snapshot.key.release, snapshot.key.date, snapshot.records)

    def version_of(self, name: str) -> DebVersion | None:
        rec = self.packages.get(name)
        return rec.version if rec else None

    def is_provided(self, name: str) -> bool:
        return name in self.providers

    def project_of(self, name: str) -> str:
        return project_of(self.packages[name])

    def projects(self) -> set[str]:
        return {project_of(r) for r in self.packages.values()}


def inventory_from_graph(graph: EDGraph, release: str, day: dt.date | None = None) -> ReleaseInventory:
    """Inventory at ``day`` (default: the release's last sampled date). Needs a graph built from records."""
    if day is None:
        day = graph.dates[release][-1]
    records = []
    for node in graph.packages_at(release, day):
        if node.record is None:
            raise ValueError("inventory_from_graph needs a graph built from snapshots, not an imported one")
        records.append(node.record)
    records.sort(key=lambda r: r.name)
    return ReleaseInventory.from_records(release, day, records)


def latest_inventories(snapshots: Iterable[MirrorSnapshot]) -> list[ReleaseInventory]:
    """One inventory per release from its final snapshot, ordered by that snapshot's date."""
    last: dict[str, MirrorSnapshot] = {}
    for snap in snapshots:
        cur = last.get(snap.key.release)
        if cur is None or snap.key.date > cur.key.date:
            last[snap.key.release] = snap
    snaps = sorted(last.values(), key=lambda s: (s.key.date, s.key.release))
    return [ReleaseInventory.from_snapshot(s) for s in snaps]


# -- project differences --------------------------------------------------------


@dataclass(frozen=True)
class ProjectDiff:
    added: frozenset[str]
    removed: frozenset[str]
    common: frozenset[str]


def _projects(inv: ReleaseInventory, graph: EDGraph | None) -> set[str]:
    if graph is None:
        return inv.projects()
    # prefer the graph's project attribution when the inventory came from the same build
    out = set()
    for rec in inv.packages.values():
        nodes = [n for n in graph.nodes_named(inv.release, rec.name) if n.version == rec.version]
        out.add(nodes[0].project if nodes else project_of(rec))
    return out


def project_diff(a: ReleaseInventory, b: ReleaseInventory, graph: EDGraph | None = None) -> ProjectDiff:
    pa, pb = _projects(a, graph), _projects(b, graph)
    return ProjectDiff(frozenset(pb - pa), frozenset(pa - pb), frozenset(pa & pb))


def diff_matrix(inventories: Sequence[ReleaseInventory], graph: EDGraph | None = None
                ) -> dict[tuple[str, str], ProjectDiff]:
    """Cell (A, B): diff going from A to B; ``len(cell.added)`` is "exists on B but not on A"."""
    return {(a.release, b.release): project_diff(a, b, graph)
            for a in inventories for b in inventories if a.release != b.release}


# -- satisfaction and reasons ----------------------------------------------------


class IncompatReason(enum.Enum):
    NEWER_REQUIRED = ">"
    OLDER_REQUIRED = "<"
    EXACT_MISMATCH = "="
    MISSING = "no"

    @property
    def label(self) -> str:
        return self.value


_REASON_BY_RELATION = {
    VersionRelation.STRICTLY_LATER: IncompatReason.NEWER_REQUIRED,
    VersionRelation.LATER_OR_EQUAL: IncompatReason.NEWER_REQUIRED,
    VersionRelation.STRICTLY_EARLIER: IncompatReason.OLDER_REQUIRED,
    VersionRelation.EARLIER_OR_EQUAL: IncompatReason.OLDER_REQUIRED,
    VersionRelation.EXACTLY_EQUAL: IncompatReason.EXACT_MISMATCH,
}


def atom_satisfied(atom: DependencyAtom, inv: ReleaseInventory) -> bool:
    rec = inv.packages.get(atom.package)
    if rec is not None and (atom.constraint is None or satisfies(rec.version, atom.constraint)):
        return True
    # virtual packages carry no version, so only unversioned atoms can use them
    return atom.constraint is None and inv.is_provided(atom.package)


def clause_satisfied(clause: DependencyClause, inv: ReleaseInventory) -> bool:
    return any(atom_satisfied(atom, inv) for atom in clause.alternatives)


def classify_reason(atom: DependencyAtom, inv: ReleaseInventory) -> IncompatReason:
    """Why ``atom`` fails on ``inv``. Raises ContractViolation if it does not fail."""
    if atom_satisfied(atom, inv):
        raise ContractViolation(f"{atom} is satisfied on {inv.release}")
    if atom.package not in inv.packages:
        return IncompatReason.MISSING
    return _REASON_BY_RELATION[atom.constraint.relation]


@dataclass(frozen=True)
class IncompatFinding:
    release_a: str
    release_b: str
    project: str
    package: str
    package_version: DebVersion
    clause: DependencyClause
    reason: IncompatReason
    available_version: DebVersion | None
    all_reasons: tuple[tuple[DependencyAtom, IncompatReason, DebVersion | None], ...] = ()

    @property
    def atom(self) -> DependencyAtom:
        return self.clause.alternatives[0]

    def __post_init__(self):
        if (self.reason is IncompatReason.MISSING) != (self.available_version is None):
            raise ValueError("MISSING findings have no available version and vice versa")


@dataclass
class IncompatResult:
    release_a: str
    release_b: str
    projects: set[str]
    findings: list[IncompatFinding]

    def clause_histogram(self) -> Counter:
        """One count per unsatisfied clause."""
        return Counter(f.reason for f in self.findings)

    def project_histogram(self) -> Counter:
        """One count per (project, reason) pair."""
        return Counter(reason for _, reason in {(f.project, f.reason) for f in self.findings})


def incompatible_projects(a: ReleaseInventory, b: ReleaseInventory, graph: EDGraph | None = None
                          ) -> IncompatResult:
    """Common projects of ``b`` with at least one package whose dependencies ``a`` cannot satisfy."""
    common = project_diff(a, b, graph).common
    findings: list[IncompatFinding] = []
    for name in sorted(b.packages):
        rec = b.packages[name]
        project = project_of(rec)
        if project not in common:
            continue
        for clause in rec.relationships():
            if clause_satisfied(clause, a):
                continue
            details = tuple((atom, classify_reason(atom, a), a.version_of(atom.package))
                            for atom in clause.alternatives)
            _, reason, available = details[0]
            findings.append(IncompatFinding(a.release, b.release, project, rec.name, rec.version, clause,
                                            reason, available if reason is not IncompatReason.MISSING else None,
                                            details))
    return IncompatResult(a.release, b.release, {f.project for f in findings}, findings)


@dataclass
class IncompatMatrix:
    releases: list[str]
    cells: dict[tuple[str, str], IncompatResult]

    def count(self, a: str, b: str) -> int | None:
        cell = self.cells.get((a, b))
        return None if cell is None else len(cell.projects)

    def findings(self) -> list[IncompatFinding]:
        out = []
        for a in self.releases:
            for b in self.releases:
                if (a, b) in self.cells:
                    out.extend(self.cells[(a, b)].findings)
        return out


def incompat_matrix(inventories: Sequence[ReleaseInventory], graph: EDGraph | None = None) -> IncompatMatrix:
    releases = [inv.release for inv in inventories]
    cells = {}
    for a in inventories:
        for b in inventories:
            if a.release != b.release:
                cells[(a.release, b.release)] = incompatible_projects(a, b, graph)
    return IncompatMatrix(releases, cells)


# -- reports -----------------------------------------------------------------------

_REASONS = list(IncompatReason)


def _write_csv(path: Union[str, Path], header: list[str], rows: Iterable[list]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_diff_csv(releases: Sequence[str], cells: dict[tuple[str, str], ProjectDiff],
                   path: Union[str, Path]) -> Path:
    rows = [[a] + ["/" if a == b else len(cells[(a, b)].added) for b in releases] for a in releases]
    return _write_csv(path, ["release"] + list(releases), rows)


def write_matrix_csv(matrix: IncompatMatrix, path: Union[str, Path]) -> Path:
    rows = [[a] + ["/" if a == b else matrix.count(a, b) for b in matrix.releases] for a in matrix.releases]
    return _write_csv(path, ["release"] + matrix.releases, rows)


def write_reasons_csv(matrix: IncompatMatrix, path: Union[str, Path]) -> Path:
    """Per-cell reason counts, both per unsatisfied clause and per project."""
    rows = []
    for a in matrix.releases:
        for b in matrix.releases:
            cell = matrix.cells.get((a, b))
            if cell is None:
                continue
            clauses, projects = cell.clause_histogram(), cell.project_histogram()
            for reason in _REASONS:
                rows.append([a, b, reason.label, clauses.get(reason, 0), projects.get(reason, 0)])
    return _write_csv(path, ["release_a", "release_b", "reason", "clause_count", "project_count"], rows)


def write_findings_csv(findings: Iterable[IncompatFinding], path: Union[str, Path]) -> Path:
    rows = [[f.release_a, f.release_b, f.project, f.package, str(f.clause), f.reason.label] for f in findings]
    return _write_csv(path, ["releaseA", "releaseB", "project", "package", "atom", "reason"], rows)
