"""Evolutionary dependency graph over dated index snapshots.

Package nodes are distinct ``(name, version, release)`` triples carrying the
runs of sampled dates on which they were present. Dependency edges are kept
unresolved: each points from a package node to a target *name* and keeps
the clause constraint, so analyses can resolve them under their own policy.
Project nodes and edges are derived from the package level.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import re
from collections import defaultdict, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Union

from .control import PackageRecord, strip_source_version
from .errors import NodeNotFoundError
from .snapshot import MirrorSnapshot
from .version import Constraint, DebVersion, VersionRelation, parse_version

__all__ = [
    "PackageNode",
    "ProjectNode",
    "PackageEdge",
    "ProjectEdge",
    "EDGraph",
    "UpdateEvent",
    "SemverSpan",
    "build_graph",
    "project_of",
    "lift_to_projects",
    "detect_updates",
    "semver_span",
    "transitive_dependents",
    "transitive_dependencies",
    "export_graph",
    "import_graph",
    "dependency_stats",
]

NODE_COLUMNS = ["id", "kind", "name", "version", "release", "project", "first_seen", "last_seen", "spans"]
EDGE_COLUMNS = ["src", "dst", "level", "clause_id", "relation", "constraint_version", "dangling"]

RELATION_FIELDS = ("pre-depends", "depends", "recommends")


def project_of(record: PackageRecord) -> str:
    """Source package name if the record names one, else the binary package name."""
    if record.source_name:
        return strip_source_version(record.source_name)
    return record.name


@dataclass
class PackageNode:
    name: str
    version: DebVersion
    release: str
    first_seen: dt.date
    last_seen: dt.date
    project: str
    spans: list[tuple[dt.date, dt.date]] = field(default_factory=list)
    record: PackageRecord | None = field(default=None, repr=False, compare=False)

    @property
    def id(self) -> str:
        return f"pkg:{self.release}:{self.name}:{self.version}"

    def present_on(self, day: dt.date) -> bool:
        return any(a <= day <= b for a, b in self.spans)


@dataclass
class ProjectNode:
    name: str
    release: str
    packages: set[str] = field(default_factory=set)

    @property
    def id(self) -> str:
        return f"proj:{self.release}:{self.name}"


@dataclass(frozen=True)
class PackageEdge:
    src: str
    target: str
    release: str
    relation_field: str
    clause_index: int
    alternative: int
    constraint: Constraint | None
    dangling: bool = False

    @property
    def clause_id(self) -> str:
        return f"{self.relation_field}:{self.clause_index}:{self.alternative}"

    @property
    def clause_key(self) -> tuple[str, str, int]:
        """Identifies the clause shared by all its alternatives."""
        return (self.src, self.relation_field, self.clause_index)


@dataclass(frozen=True, order=True)
class ProjectEdge:
    release: str
    src: str
    dst: str


@dataclass(frozen=True)
class UpdateEvent:
    release: str
    name: str
    old_version: DebVersion
    new_version: DebVersion
    date: dt.date
    level: str = "package"


@dataclass(frozen=True)
class SemverSpan:
    d_major: int
    d_minor: int
    d_patch: int
    semver: bool = True

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.d_major, self.d_minor, self.d_patch)


class EDGraph:
    """Two-level temporal dependency graph. Treat as immutable once built."""

    def __init__(self):
        self.package_nodes: dict[str, PackageNode] = {}
        self.project_nodes: dict[str, ProjectNode] = {}
        self.package_edges: list[PackageEdge] = []
        self.project_edges: set[ProjectEdge] = set()
        # release -> virtual name -> ids of providing package nodes
        self.provides: dict[str, dict[str, set[str]]] = defaultdict(lambda: defaultdict(set))
        self.dates: dict[str, list[dt.date]] = {}
        self.diagnostics: list[str] = []
        self._by_name: dict[tuple[str, str], list[str]] | None = None
        self._adjacency: dict[str, tuple[dict, dict]] = {}

    # -- lookups -------------------------------------------------------------

    @property
    def releases(self) -> list[str]:
        return sorted(self.dates)

    def date_range(self, release: str) -> tuple[dt.date, dt.date]:
        days = self.dates[release]
        return days[0], days[-1]

    def _name_index(self) -> dict[tuple[str, str], list[str]]:
        if self._by_name is None:
            index: dict[tuple[str, str], list[str]] = defaultdict(list)
            for node in self.package_nodes.values():
                index[(node.release, node.name)].append(node.id)
            self._by_name = dict(index)
        return self._by_name

    def nodes_named(self, release: str, name: str) -> list[PackageNode]:
        return [self.package_nodes[i] for i in self._name_index().get((release, name), [])]

    def has_package(self, release: str, name: str) -> bool:
        return (release, name) in self._name_index()

    def providers(self, release: str, name: str) -> list[PackageNode]:
        ids = self.provides.get(release, {}).get(name, ())
        return [self.package_nodes[i] for i in sorted(ids)]

    def target_nodes(self, edge: PackageEdge) -> list[PackageNode]:
        """Nodes an edge may resolve to: packages of that name plus those providing it."""
        seen = {n.id: n for n in self.nodes_named(edge.release, edge.target)}
        for n in self.providers(edge.release, edge.target):
            seen.setdefault(n.id, n)
        return list(seen.values())

    def package_names(self, release: str) -> set[str]:
        return {name for rel, name in self._name_index() if rel == release}

    def project_names(self, release: str) -> set[str]:
        return {p.name for p in self.project_nodes.values() if p.release == release}

    def project(self, release: str, name: str) -> ProjectNode:
        try:
            return self.project_nodes[f"proj:{release}:{name}"]
        except KeyError:
            raise NodeNotFoundError(f"no project {name!r} in {release}") from None

    def packages_at(self, release: str, day: dt.date) -> list[PackageNode]:
        return [n for n in self.package_nodes.values() if n.release == release and n.present_on(day)]

    def edges_from(self, node_id: str) -> list[PackageEdge]:
        return [e for e in self.package_edges if e.src == node_id]

    # -- adjacency at the two levels -------------------------------------------

    def adjacency(self, level: str) -> tuple[dict, dict]:
        """(forward, reverse) maps over ``(release, name)`` keys for a level."""
        if level not in ("package", "project"):
            raise ValueError(f"unknown level {level!r}")
        if level not in self._adjacency:
            fwd: dict[tuple[str, str], set] = defaultdict(set)
            rev: dict[tuple[str, str], set] = defaultdict(set)
            if level == "package":
                for edge in self.package_edges:
                    if edge.dangling:
                        continue
                    src = self.package_nodes[edge.src]
                    for tgt in self.target_nodes(edge):
                        fwd[(src.release, src.name)].add((tgt.release, tgt.name))
                        rev[(tgt.release, tgt.name)].add((src.release, src.name))
            else:
                for pe in self.project_edges:
                    fwd[(pe.release, pe.src)].add((pe.release, pe.dst))
                    rev[(pe.release, pe.dst)].add((pe.release, pe.src))
            self._adjacency[level] = (dict(fwd), dict(rev))
        return self._adjacency[level]

    def invalidate_caches(self) -> None:
        self._by_name = None
        self._adjacency.clear()


# -- construction -----------------------------------------------------------


def _runs(indices: list[int], days: list[dt.date]) -> list[tuple[dt.date, dt.date]]:
    runs = []
    start = prev = indices[0]
    for i in indices[1:]:
        if i != prev + 1:
            runs.append((days[start], days[prev]))
            start = i
        prev = i
    runs.append((days[start], days[prev]))
    return runs


def _clauses(record: PackageRecord, include_recommends: bool):
    yield "pre-depends", record.pre_depends
    yield "depends", record.depends
    if include_recommends:
        yield "recommends", record.recommends


def build_graph(snapshots: Iterable[MirrorSnapshot], include_recommends: bool = False) -> EDGraph:
    """Build an EDGraph from dated snapshots of one or more releases."""
    snapshots = sorted(snapshots, key=lambda s: (s.key.release, s.key.date))
    if not snapshots:
        raise ValueError("build_graph needs at least one snapshot")
    graph = EDGraph()

    by_release: dict[str, list[MirrorSnapshot]] = defaultdict(list)
    for snap in snapshots:
        by_release[snap.key.release].append(snap)

    for release, snaps in by_release.items():
        days = sorted({s.key.date for s in snaps})
        if len(days) != len(snaps):
            graph.diagnostics.append(f"{release}: several snapshots share a date; merging them")
        graph.dates[release] = days
        day_index = {d: i for i, d in enumerate(days)}
        presence: dict[tuple[str, DebVersion], list[int]] = defaultdict(list)
        records: dict[tuple[str, DebVersion], PackageRecord] = {}
        for snap in snaps:
            i = day_index[snap.key.date]
            for rec in snap.records:
                key = (rec.name, rec.version)
                if not presence[key] or presence[key][-1] != i:
                    presence[key].append(i)
                records.setdefault(key, rec)

        for (name, version), idx in presence.items():
            rec = records[(name, version)]
            runs = _runs(idx, days)
            node = PackageNode(name=name, version=version, release=release, first_seen=runs[0][0],
                               last_seen=runs[-1][1], project=project_of(rec), spans=runs, record=rec)
            graph.package_nodes[node.id] = node
            proj = graph.project_nodes.setdefault(f"proj:{release}:{node.project}",
                                                  ProjectNode(node.project, release))
            proj.packages.add(name)
            for atom in rec.provides:
                graph.provides[release][atom.package].add(node.id)

        names = {name for name, _ in presence}
        virtual = set(graph.provides[release])
        for (name, version) in presence:
            rec = records[(name, version)]
            src_id = f"pkg:{release}:{name}:{version}"
            for label, clauses in _clauses(rec, include_recommends):
                for ci, clause in enumerate(clauses):
                    for ai, atom in enumerate(clause.alternatives):
                        dangling = atom.package not in names and atom.package not in virtual
                        if dangling:
                            graph.diagnostics.append(f"{release}: {name} {version} depends on unknown {atom.package}")
                        graph.package_edges.append(PackageEdge(src_id, atom.package, release, label, ci, ai,
                                                               atom.constraint, dangling))

    graph.package_edges.sort(key=lambda e: (e.src, RELATION_FIELDS.index(e.relation_field), e.clause_index,
                                            e.alternative))
    graph.project_edges = lift_to_projects(graph)
    return graph


def lift_to_projects(graph: EDGraph) -> set[ProjectEdge]:
    """Project A depends on B when some package of A depends on some package of B (A != B)."""
    out: set[ProjectEdge] = set()
    for edge in graph.package_edges:
        if edge.dangling:
            continue
        src_project = graph.package_nodes[edge.src].project
        for tgt in graph.target_nodes(edge):
            if tgt.project != src_project:
                out.add(ProjectEdge(edge.release, src_project, tgt.project))
    return out


# -- temporal analyses --------------------------------------------------------


def version_timeline(graph: EDGraph, release: str, name: str, level: str = "package"
                     ) -> list[tuple[dt.date, DebVersion | None]]:
    """Version of ``name`` on every sampled date of ``release`` (None when absent).

    At project level the highest version among the project's packages is used.
    """
    if level == "package":
        nodes = graph.nodes_named(release, name)
    else:
        nodes = [n for n in graph.package_nodes.values() if n.release == release and n.project == name]
    out = []
    for day in graph.dates[release]:
        present = [n.version for n in nodes if n.present_on(day)]
        out.append((day, max(present) if present else None))
    return out


def detect_updates(graph: EDGraph, release: str, level: str = "package") -> list[UpdateEvent]:
    """One event per sampled date on which a name's version differs from its previous known version."""
    if release not in graph.dates:
        raise NodeNotFoundError(f"release {release!r} not in graph")
    if level == "package":
        names = sorted(graph.package_names(release))
    else:
        names = sorted(graph.project_names(release))
    events = []
    for name in names:
        last: DebVersion | None = None
        for day, version in version_timeline(graph, release, name, level):
            if version is None:
                continue
            if last is not None and version != last:
                events.append(UpdateEvent(release, name, last, version, day, level))
            last = version
    events.sort(key=lambda e: (e.date, e.name))
    return events


_LEADING_INT = re.compile(r"^(\d+)")


def _semver_fields(version: DebVersion) -> tuple[tuple[int, int, int], bool]:
    parts = version.upstream.split(".")
    values, clean = [], True
    for part in parts[:3]:
        m = _LEADING_INT.match(part)
        if m:
            values.append(int(m.group(1)))
        else:
            values.append(0)
            clean = False
    while len(values) < 3:
        values.append(0)
    return (values[0], values[1], values[2]), clean


def semver_span(v1: Union[DebVersion, str], v2: Union[DebVersion, str]) -> SemverSpan:
    """Per-field MAJOR.MINOR.PATCH difference ``v2 - v1`` of the upstream parts."""
    a = v1 if isinstance(v1, DebVersion) else parse_version(v1)
    b = v2 if isinstance(v2, DebVersion) else parse_version(v2)
    fa, ca = _semver_fields(a)
    fb, cb = _semver_fields(b)
    return SemverSpan(fb[0] - fa[0], fb[1] - fa[1], fb[2] - fa[2], ca and cb)


def mean_span(events: Iterable[UpdateEvent]) -> tuple[float, float, float] | None:
    """Average span over events whose versions both look semver-like; None if there are none."""
    spans = [semver_span(e.old_version, e.new_version) for e in events]
    spans = [s for s in spans if s.semver]
    if not spans:
        return None
    n = len(spans)
    return (sum(s.d_major for s in spans) / n, sum(s.d_minor for s in spans) / n,
            sum(s.d_patch for s in spans) / n)


# -- reachability -------------------------------------------------------------


def _resolve_key(graph: EDGraph, node, level: str) -> tuple[str, str]:
    if isinstance(node, PackageNode):
        key = (node.release, node.name) if level == "package" else (node.release, node.project)
    elif isinstance(node, ProjectNode):
        if level != "project":
            raise ValueError("a ProjectNode needs level='project'")
        key = (node.release, node.name)
    elif isinstance(node, str) and node.startswith(("pkg:", "proj:")):
        if node in graph.package_nodes:
            return _resolve_key(graph, graph.package_nodes[node], level)
        if node in graph.project_nodes:
            return _resolve_key(graph, graph.project_nodes[node], level)
        raise NodeNotFoundError(f"unknown node {node!r}")
    else:
        key = tuple(node)
    release, name = key
    known = graph.has_package(release, name) if level == "package" else (
        f"proj:{release}:{name}" in graph.project_nodes)
    if not known:
        raise NodeNotFoundError(f"unknown {level} {name!r} in release {release!r}")
    return key


def _closure(adj: dict, start) -> set:
    seen = {start}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for nxt in adj.get(cur, ()):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    seen.discard(start)
    return seen


def transitive_dependents(graph: EDGraph, node, level: str = "package") -> set[tuple[str, str]]:
    """Every ``(release, name)`` that reaches ``node`` through dependency edges."""
    key = _resolve_key(graph, node, level)
    return _closure(graph.adjacency(level)[1], key)


def transitive_dependencies(graph: EDGraph, node, level: str = "package") -> set[tuple[str, str]]:
    key = _resolve_key(graph, node, level)
    return _closure(graph.adjacency(level)[0], key)


def dependents_of_set(graph: EDGraph, keys: Iterable[tuple[str, str]], level: str = "project") -> set:
    """Union of the dependents closures of several start keys, minus the start keys."""
    rev = graph.adjacency(level)[1]
    starts = set(keys)
    seen = set(starts)
    queue = deque(starts)
    while queue:
        cur = queue.popleft()
        for nxt in rev.get(cur, ()):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen - starts


def dependency_stats(graph: EDGraph, release: str) -> dict[str, float]:
    """Average clause count and distinct-target count per package node."""
    nodes = [n for n in graph.package_nodes.values() if n.release == release]
    if not nodes:
        return {"nodes": 0, "mean_clauses": 0.0, "mean_distinct_targets": 0.0}
    clauses: dict[str, set] = defaultdict(set)
    targets: dict[str, set] = defaultdict(set)
    for e in graph.package_edges:
        if e.release == release:
            clauses[e.src].add((e.relation_field, e.clause_index))
            targets[e.src].add(e.target)
    n = len(nodes)
    return {
        "nodes": n,
        "mean_clauses": sum(len(clauses[x.id]) for x in nodes) / n,
        "mean_distinct_targets": sum(len(targets[x.id]) for x in nodes) / n,
    }


# -- exchange formats ---------------------------------------------------------


def _node_rows(graph: EDGraph) -> Iterator[dict]:
    rows = []
    for release, days in graph.dates.items():
        for d in days:
            rows.append({"id": f"snap:{release}:{d.isoformat()}", "kind": "snapshot", "name": "", "version": "",
                         "release": release, "project": "", "first_seen": d.isoformat(),
                         "last_seen": d.isoformat(), "spans": ""})
    for node in graph.package_nodes.values():
        rows.append({"id": node.id, "kind": "package", "name": node.name, "version": str(node.version),
                     "release": node.release, "project": node.project,
                     "first_seen": node.first_seen.isoformat(), "last_seen": node.last_seen.isoformat(),
                     "spans": ";".join(f"{a.isoformat()}/{b.isoformat()}" for a, b in node.spans)})
    for proj in graph.project_nodes.values():
        rows.append({"id": proj.id, "kind": "project", "name": proj.name, "version": "", "release": proj.release,
                     "project": proj.name, "first_seen": "", "last_seen": "", "spans": ""})
    rows.sort(key=lambda r: (r["kind"], r["id"]))
    return iter(rows)


def _edge_rows(graph: EDGraph) -> Iterator[dict]:
    rows = []
    for e in graph.package_edges:
        rows.append({"src": e.src, "dst": e.target, "level": "package", "clause_id": e.clause_id,
                     "relation": e.constraint.relation.value if e.constraint else "",
                     "constraint_version": str(e.constraint.version) if e.constraint else "",
                     "dangling": "1" if e.dangling else "0"})
    for pe in graph.project_edges:
        rows.append({"src": f"proj:{pe.release}:{pe.src}", "dst": f"proj:{pe.release}:{pe.dst}",
                     "level": "project", "clause_id": "", "relation": "", "constraint_version": "",
                     "dangling": "0"})
    for release, virtuals in graph.provides.items():
        for virtual, ids in virtuals.items():
            for node_id in ids:
                rows.append({"src": node_id, "dst": virtual, "level": "provides", "clause_id": "",
                             "relation": "", "constraint_version": "", "dangling": "0"})
    rows.sort(key=lambda r: (r["level"], r["src"], r["clause_id"], r["dst"]))
    return iter(rows)


def export_graph(graph: EDGraph, out_dir: Union[str, Path], fmt: str = "csv") -> list[Path]:
    """Write ``nodes``/``edges`` as CSV or line-delimited JSON with a deterministic row order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        paths = [out / "nodes.csv", out / "edges.csv"]
        for path, columns, rows in ((paths[0], NODE_COLUMNS, _node_rows(graph)),
                                    (paths[1], EDGE_COLUMNS, _edge_rows(graph))):
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
                writer.writeheader()
                writer.writerows(rows)
    elif fmt in ("jsonl", "json"):
        paths = [out / "nodes.jsonl", out / "edges.jsonl"]
        for path, rows in ((paths[0], _node_rows(graph)), (paths[1], _edge_rows(graph))):
            with open(path, "w", encoding="utf-8") as fh:
                for row in rows:
                    fh.write(json.dumps(row, sort_keys=False) + "\n")
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    return paths


def _read_rows(path: Path) -> list[dict]:
    if path.suffix == ".csv":
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def import_graph(in_dir: Union[str, Path]) -> EDGraph:
    """Rebuild a graph written by :func:`export_graph` (records are not restored)."""
    base = Path(in_dir)
    ext = ".csv" if (base / "nodes.csv").exists() else ".jsonl"
    graph = EDGraph()
    dates: dict[str, list[dt.date]] = defaultdict(list)
    for row in _read_rows(base / f"nodes{ext}"):
        kind = row["kind"]
        if kind == "snapshot":
            dates[row["release"]].append(dt.date.fromisoformat(row["first_seen"]))
        elif kind == "package":
            spans = [tuple(dt.date.fromisoformat(x) for x in s.split("/")) for s in row["spans"].split(";") if s]
            node = PackageNode(row["name"], parse_version(row["version"]), row["release"],
                               dt.date.fromisoformat(row["first_seen"]), dt.date.fromisoformat(row["last_seen"]),
                               row["project"], spans)
            graph.package_nodes[node.id] = node
        elif kind == "project":
            graph.project_nodes[row["id"]] = ProjectNode(row["name"], row["release"])
    for node in graph.package_nodes.values():
        graph.project_nodes.setdefault(f"proj:{node.release}:{node.project}",
                                       ProjectNode(node.project, node.release)).packages.add(node.name)
    graph.dates = {r: sorted(d) for r, d in dates.items()}
    for row in _read_rows(base / f"edges{ext}"):
        level = row["level"]
        if level == "package":
            label, ci, ai = row["clause_id"].split(":")
            constraint = None
            if row["relation"]:
                constraint = Constraint(VersionRelation(row["relation"]), parse_version(row["constraint_version"]))
            release = graph.package_nodes[row["src"]].release
            graph.package_edges.append(PackageEdge(row["src"], row["dst"], release, label, int(ci), int(ai),
                                                   constraint, row["dangling"] in ("1", 1, True, "True")))
        elif level == "project":
            _, release, src = row["src"].split(":", 2)
            dst = row["dst"].split(":", 2)[2]
            graph.project_edges.add(ProjectEdge(release, src, dst))
        elif level == "provides":
            release = graph.package_nodes[row["src"]].release
            graph.provides[release][row["dst"]].add(row["src"])
    graph.package_edges.sort(key=lambda e: (e.src, RELATION_FIELDS.index(e.relation_field), e.clause_index,
                                            e.alternative))
    return graph
