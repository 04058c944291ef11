"""CVE ingestion, graph annotation and security analytics.

Two feed shapes are accepted:

* security-tracker JSON: ``{source: {cve: {"releases": {codename: {"status",
  "fixed_version", "urgency"}}}}}``
* vuln-list per-CVE documents: ``{"Header": {"ID": cve}, "Annotations":
  [{"Package", "Release", "Kind", "Version", "Severity"}, ...]}`` (a single
  document or a list of them). An empty ``Release`` means unstable.

Publish dates come from a separate ``{cve: "YYYY-MM-DD"}`` table.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Generic, Iterable, Mapping, TypeVar, Union

from .errors import ContractViolation, VersionParseError
from .graph import EDGraph, dependents_of_set
from .version import DebVersion, parse_version

__all__ = [
    "Severity",
    "Status",
    "ReleaseStatus",
    "CveRecord",
    "VulnAnnotation",
    "Annotations",
    "LagKind",
    "LagResult",
    "PropagationReport",
    "ReleaseMilestones",
    "StagePartition",
    "ingest_cves",
    "load_publish_dates",
    "annotate_graph",
    "open_fixed_counts",
    "fix_lag",
    "lag_summary",
    "propagation",
    "stage_partition",
    "load_milestones",
]

CVE_ID = re.compile(r"CVE-\d{4}-\d{4,}")


class Severity(enum.Enum):
    HIGH = "high"
    MEDIUM = "medium"
    LOW = "low"
    UNASSIGNED = "unassigned"

    @classmethod
    def from_urgency(cls, urgency: str | None) -> "Severity":
        value = (urgency or "").strip().strip("*").lower()
        try:
            sev = cls(value)
        except ValueError:
            return cls.UNASSIGNED
        return sev

    @property
    def rank(self) -> int:
        return {"high": 3, "medium": 2, "low": 1, "unassigned": 0}[self.value]


class Status(enum.Enum):
    OPEN = "open"
    FIXED = "fixed"


@dataclass(frozen=True)
class ReleaseStatus:
    status: Status
    fixed_version: DebVersion | None = None

    def __post_init__(self):
        if (self.status is Status.FIXED) != (self.fixed_version is not None):
            raise ValueError("FIXED statuses carry a fixed version, OPEN ones do not")


@dataclass
class CveRecord:
    id: str
    source_project: str
    severity: Severity = Severity.UNASSIGNED
    published: dt.date | None = None
    releases: dict[str, ReleaseStatus] = field(default_factory=dict)

    def __post_init__(self):
        if not CVE_ID.fullmatch(self.id):
            raise ValueError(f"not a CVE identifier: {self.id!r}")


@dataclass
class IngestResult:
    records: list[CveRecord]
    diagnostics: list[str]

    def __iter__(self):
        return iter((self.records, self.diagnostics))


def load_publish_dates(source: Union[str, Path, Mapping[str, str]]) -> dict[str, dt.date]:
    """Read a ``{cve: date}`` lookup from a mapping, a JSON file or a two-column CSV."""
    if isinstance(source, Mapping):
        raw = dict(source)
    else:
        path = Path(source)
        if path.suffix == ".csv":
            with open(path, newline="", encoding="utf-8") as fh:
                raw = {row[0]: row[1] for row in csv.reader(fh) if row and CVE_ID.fullmatch(row[0])}
        else:
            raw = json.loads(path.read_text(encoding="utf-8"))
    return {cve: dt.date.fromisoformat(str(day)[:10]) for cve, day in raw.items()}


def _merge(records: dict[tuple[str, str], CveRecord], cve: str, project: str, release: str,
           status: ReleaseStatus, severity: Severity) -> None:
    rec = records.get((cve, project))
    if rec is None:
        rec = records[(cve, project)] = CveRecord(cve, project, severity)
    elif severity.rank > rec.severity.rank:
        rec.severity = severity
    prev = rec.releases.get(release)
    # a known fix wins over an open report from the other feed
    if prev is None or (prev.status is Status.OPEN and status.status is Status.FIXED):
        rec.releases[release] = status


def _ingest_tracker(data: Mapping[str, Any], out, diagnostics: list[str]) -> None:
    for project, cves in data.items():
        if not isinstance(cves, Mapping):
            diagnostics.append(f"{project}: expected an object of CVEs")
            continue
        for cve, entry in cves.items():
            if not CVE_ID.fullmatch(cve):
                diagnostics.append(f"{project}/{cve}: not a CVE identifier, skipped")
                continue
            releases = entry.get("releases") if isinstance(entry, Mapping) else None
            if not isinstance(releases, Mapping):
                diagnostics.append(f"{project}/{cve}: missing releases, skipped")
                continue
            for release, info in releases.items():
                status = str(info.get("status", "")).lower()
                severity = Severity.from_urgency(info.get("urgency"))
                fixed = info.get("fixed_version")
                if status == "open":
                    _merge(out, cve, project, release, ReleaseStatus(Status.OPEN), severity)
                elif status == "resolved":
                    if fixed in (None, "", "0"):
                        continue  # not affected in this release
                    try:
                        version = parse_version(str(fixed))
                    except VersionParseError as exc:
                        diagnostics.append(f"{project}/{cve}/{release}: {exc}")
                        continue
                    _merge(out, cve, project, release, ReleaseStatus(Status.FIXED, version), severity)
                else:
                    diagnostics.append(f"{project}/{cve}/{release}: status {status or 'missing'!r} ignored")


_OPEN_KINDS = {"unfixed", "postponed", "no-dsa", "ignored", "end-of-life", "open"}


def _ingest_vuln_list(docs: Iterable[Mapping[str, Any]], out, diagnostics: list[str]) -> None:
    for doc in docs:
        header = doc.get("Header") or {}
        cve = header.get("ID") or doc.get("Candidate") or ""
        if not CVE_ID.fullmatch(str(cve)):
            diagnostics.append(f"vuln-list entry {cve!r}: not a CVE identifier, skipped")
            continue
        for ann in doc.get("Annotations") or []:
            if ann.get("Type", "package") != "package" or not ann.get("Package"):
                continue
            project = ann["Package"]
            release = ann.get("Release") or "unstable"
            kind = str(ann.get("Kind", "")).lower()
            severity = Severity.from_urgency(ann.get("Severity"))
            if kind == "fixed":
                try:
                    version = parse_version(str(ann.get("Version", "")))
                except VersionParseError as exc:
                    diagnostics.append(f"{cve}/{project}/{release}: {exc}")
                    continue
                _merge(out, cve, project, release, ReleaseStatus(Status.FIXED, version), severity)
            elif kind in _OPEN_KINDS:
                _merge(out, cve, project, release, ReleaseStatus(Status.OPEN), severity)
            elif kind != "not-affected":
                diagnostics.append(f"{cve}/{project}/{release}: kind {kind!r} ignored")


def ingest_cves(*feeds: Any, published: Mapping[str, dt.date] | None = None) -> IngestResult:
    """Normalise one or more feeds into CveRecords, one per (CVE, source project)."""
    records: dict[tuple[str, str], CveRecord] = {}
    diagnostics: list[str] = []
    for feed in feeds:
        if feed is None:
            continue
        if isinstance(feed, list):
            _ingest_vuln_list(feed, records, diagnostics)
        elif isinstance(feed, Mapping) and "Annotations" in feed:
            _ingest_vuln_list([feed], records, diagnostics)
        elif isinstance(feed, Mapping):
            _ingest_tracker(feed, records, diagnostics)
        else:
            diagnostics.append(f"unrecognised feed of type {type(feed).__name__}")
    published = published or {}
    out = []
    for key in sorted(records):
        rec = records[key]
        rec.published = published.get(rec.id)
        out.append(rec)
    return IngestResult(out, diagnostics)


def load_feed(path: Union[str, Path]) -> Any:
    """Load a feed file, or a directory of vuln-list ``CVE-*.json`` documents."""
    path = Path(path)
    if path.is_dir():
        return [json.loads(p.read_text(encoding="utf-8")) for p in sorted(path.glob("*.json"))]
    return json.loads(path.read_text(encoding="utf-8"))


# -- annotation ------------------------------------------------------------------


class PointKind(enum.Enum):
    VULNERABLE_POINT = "vulnerable"
    FIXED_POINT = "fixed"


@dataclass(frozen=True)
class VulnAnnotation:
    node: str
    cve: str
    kind: PointKind
    release: str
    project: str
    status: Status
    severity: Severity


@dataclass
class Annotations:
    items: list[VulnAnnotation]
    records: list[CveRecord]
    diagnostics: list[str] = field(default_factory=list)

    def for_release(self, release: str) -> list[VulnAnnotation]:
        return [a for a in self.items if a.release == release]

    def vulnerable_point_counts(self, release: str) -> dict[str, int]:
        """Vulnerable points counted per (CVE, version node) and per (CVE, project)."""
        vuln = [a for a in self.for_release(release) if a.kind is PointKind.VULNERABLE_POINT]
        return {"cve_node": len({(a.cve, a.node) for a in vuln}),
                "cve_project": len({(a.cve, a.project) for a in vuln})}


def annotate_graph(graph: EDGraph, cves: Iterable[CveRecord]) -> Annotations:
    """Mark versions before a fix as vulnerable points and the fixing version as the fixed point."""
    by_project: dict[tuple[str, str], list] = defaultdict(list)
    for node in graph.package_nodes.values():
        by_project[(node.release, node.project)].append(node)
    cves = list(cves)
    items: list[VulnAnnotation] = []
    diagnostics: list[str] = []
    for rec in cves:
        matched = False
        for release, status in sorted(rec.releases.items()):
            nodes = by_project.get((release, rec.source_project))
            if release not in graph.dates or not nodes:
                continue
            matched = True
            for node in sorted(nodes, key=lambda n: n.id):
                if status.status is Status.OPEN:
                    kind = PointKind.VULNERABLE_POINT
                elif node.version < status.fixed_version:
                    kind = PointKind.VULNERABLE_POINT
                elif node.version == status.fixed_version:
                    kind = PointKind.FIXED_POINT
                else:
                    continue
                items.append(VulnAnnotation(node.id, rec.id, kind, release, rec.source_project, status.status,
                                            rec.severity))
        if not matched:
            diagnostics.append(f"{rec.id}: project {rec.source_project!r} not found in any graph release")
    return Annotations(items, cves, diagnostics)


def open_fixed_counts(annotations: Annotations, release: str) -> tuple[int, int]:
    """Distinct annotated CVE ids that are open / fixed in ``release``."""
    opened = {a.cve for a in annotations.for_release(release) if a.status is Status.OPEN}
    fixed = {a.cve for a in annotations.for_release(release) if a.status is Status.FIXED}
    return len(opened), len(fixed)


# -- fix lag -------------------------------------------------------------------------


class LagKind(enum.Enum):
    LAGGED = "lagged"
    FIXED_BEFORE_PUBLICATION = "fixed_before_publication"
    NOT_COMPUTABLE = "not_computable"


@dataclass(frozen=True)
class LagResult:
    cve: str
    project: str
    release: str
    kind: LagKind
    days: int | None = None
    fix_date: dt.date | None = None
    reason: str = ""


def fix_lag(cve: CveRecord, graph: EDGraph, release: str) -> LagResult:
    """Days from publication to the first sampled appearance of the fixed version."""
    status = cve.releases.get(release)
    if status is None or status.status is not Status.FIXED:
        raise ContractViolation(f"{cve.id} is not fixed in {release}")
    points = [n for n in graph.package_nodes.values()
              if n.release == release and n.project == cve.source_project and n.version == status.fixed_version]
    fix_date = min((n.first_seen for n in points), default=None)
    if fix_date is None:
        return LagResult(cve.id, cve.source_project, release, LagKind.NOT_COMPUTABLE, reason="fixed point not found")
    if cve.published is None:
        return LagResult(cve.id, cve.source_project, release, LagKind.NOT_COMPUTABLE, fix_date=fix_date,
                         reason="publish date unknown")
    days = (fix_date - cve.published).days
    kind = LagKind.FIXED_BEFORE_PUBLICATION if days < 0 else LagKind.LAGGED
    return LagResult(cve.id, cve.source_project, release, kind, days, fix_date)


def all_fix_lags(cves: Iterable[CveRecord], graph: EDGraph, release: str) -> list[LagResult]:
    return [fix_lag(c, graph, release) for c in cves
            if c.releases.get(release) and c.releases[release].status is Status.FIXED]


def lag_summary(results: Iterable[LagResult]) -> dict[str, float]:
    """Counts and fractions of the three lag kinds and the mean of non-negative lags."""
    results = list(results)
    n = len(results)
    counts = {kind: sum(1 for r in results if r.kind is kind) for kind in LagKind}
    lags = [r.days for r in results if r.kind is LagKind.LAGGED]
    out: dict[str, float] = {"total": n, "mean_lag": (sum(lags) / len(lags)) if lags else float("nan")}
    for kind, c in counts.items():
        out[kind.value] = c
        out[f"{kind.value}_fraction"] = (c / n) if n else 0.0
    return out


# -- release stages -------------------------------------------------------------------


@dataclass(frozen=True)
class ReleaseMilestones:
    release: str
    release_date: dt.date
    eol: dt.date | None = None
    eol_lts: dt.date | None = None
    dev_start: dt.date | None = None

    def __post_init__(self):
        seq = [d for d in (self.dev_start, self.release_date, self.eol, self.eol_lts) if d is not None]
        if seq != sorted(seq) or len(set(seq)) != len(seq):
            raise ValueError(f"{self.release}: milestones must be strictly increasing")

    def stage_of(self, day: dt.date) -> str | None:
        """``development``, ``formal``, ``lts`` or None when outside every stage.

        Stages are half-open: the release day starts formal life, the eol day starts LTS.
        """
        if day < self.release_date:
            if self.dev_start is not None and day < self.dev_start:
                return None
            return "development"
        if self.eol is None or day < self.eol:
            return "formal"
        if self.eol_lts is None or day < self.eol_lts:
            return "lts" if self.eol_lts is not None else None
        return None


def load_milestones(path: Union[str, Path, None] = None) -> dict[str, ReleaseMilestones]:
    """Read milestone dates; the packaged Debian table is used when ``path`` is None."""
    if path is None:
        text = resources.files("ccenv.data").joinpath("milestones.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    raw = json.loads(text)

    def day(value):
        return dt.date.fromisoformat(value) if value else None

    return {name: ReleaseMilestones(name, day(m["release"]), day(m.get("eol")), day(m.get("eol_lts")),
                                    day(m.get("dev_start")))
            for name, m in raw.items()}


T = TypeVar("T")


@dataclass
class StagePartition(Generic[T]):
    development: list[T] = field(default_factory=list)
    formal: list[T] = field(default_factory=list)
    lts: list[T] = field(default_factory=list)
    outside: list[T] = field(default_factory=list)

    def sizes(self) -> dict[str, int]:
        return {"development": len(self.development), "formal": len(self.formal), "lts": len(self.lts),
                "outside": len(self.outside)}


def _default_date(item) -> dt.date | None:
    for attr in ("fix_date", "date"):
        value = getattr(item, attr, None)
        if isinstance(value, dt.date):
            return value
    if isinstance(item, dt.date):
        return item
    return None


def stage_partition(items: Iterable[T], milestones: ReleaseMilestones,
                    date_of: Callable[[T], dt.date | None] = _default_date) -> StagePartition[T]:
    """Assign each dated item to exactly one stage; undated or out-of-range items go to ``outside``."""
    part: StagePartition[T] = StagePartition()
    for item in items:
        day = date_of(item)
        stage = milestones.stage_of(day) if day is not None else None
        getattr(part, stage or "outside").append(item)
    return part


def lag_table(results_by_release: Mapping[str, list[LagResult]],
              milestones: Mapping[str, ReleaseMilestones]) -> list[dict]:
    """Fixed points and mean lag in formal life, LTS and both, per release."""
    rows = []
    for release in sorted(results_by_release):
        results = [r for r in results_by_release[release] if r.kind is not LagKind.NOT_COMPUTABLE]
        if release not in milestones:
            continue
        part = stage_partition(results, milestones[release])
        row: dict = {"release": release}
        for stage, bucket in (("formal", part.formal), ("lts", part.lts), ("average", part.formal + part.lts)):
            summary = lag_summary(bucket)
            row[f"{stage}_fixed_points"] = len(bucket)
            row[f"{stage}_before_publication"] = int(summary[LagKind.FIXED_BEFORE_PUBLICATION.value])
            row[f"{stage}_mean_lag"] = summary["mean_lag"]
        rows.append(row)
    return rows


# -- propagation ----------------------------------------------------------------------


@dataclass
class PropagationReport:
    release: str
    original: set[str]
    transitive: set[str]
    total_projects: int

    @property
    def affected(self) -> set[str]:
        return self.original | self.transitive

    def _pct(self, n: int) -> float:
        return 100.0 * n / self.total_projects if self.total_projects else 0.0

    @property
    def original_pct(self) -> float:
        return self._pct(len(self.original))

    @property
    def transitive_pct(self) -> float:
        return self._pct(len(self.transitive))

    @property
    def affected_pct(self) -> float:
        return self._pct(len(self.affected))


def propagation(graph: EDGraph, annotations: Annotations, release: str,
                severity: Union[Severity, Iterable[Severity], None] = None,
                status: Status | None = None) -> PropagationReport:
    """Projects owning vulnerable points and the projects reaching them through dependencies.

    ``transitive`` excludes the original projects; ``affected`` is their union.
    """
    if isinstance(severity, Severity):
        severity = {severity}
    elif severity is not None:
        severity = set(severity)
    original = {a.project for a in annotations.for_release(release)
                if a.kind is PointKind.VULNERABLE_POINT
                and (severity is None or a.severity in severity)
                and (status is None or a.status is status)}
    reached = dependents_of_set(graph, {(release, p) for p in original}, level="project")
    transitive = {name for _, name in reached}
    return PropagationReport(release, original, transitive, len(graph.project_names(release)))


# -- reports -----------------------------------------------------------------------------


def _write(path: Union[str, Path], header: list[str], rows: Iterable[list]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_annotations_csv(annotations: Annotations, path: Union[str, Path]) -> Path:
    rows = sorted([a.release, a.cve, a.project, a.node, a.kind.value, a.status.value, a.severity.value]
                  for a in annotations.items)
    return _write(path, ["release", "cve", "project", "node", "kind", "status", "severity"], rows)


def write_open_fixed_csv(annotations: Annotations, releases: Iterable[str], path: Union[str, Path]) -> Path:
    releases = list(releases)
    counts = {r: open_fixed_counts(annotations, r) for r in releases}
    rows = [["open"] + [counts[r][0] for r in releases], ["fixed"] + [counts[r][1] for r in releases]]
    return _write(path, ["status"] + releases, rows)


def write_propagation_csv(reports: Iterable[tuple[str, PropagationReport]], path: Union[str, Path]) -> Path:
    rows = []
    for label, rep in reports:
        rows.append([rep.release, label, len(rep.original), f"{rep.original_pct:.2f}", len(rep.transitive),
                     f"{rep.transitive_pct:.2f}", len(rep.affected), f"{rep.affected_pct:.2f}", rep.total_projects])
    return _write(path, ["release", "column", "original", "original_pct", "transitive_only", "transitive_pct",
                         "affected", "affected_pct", "total_projects"], rows)


def write_lag_csv(rows: list[dict], path: Union[str, Path]) -> Path:
    header = ["release"] + [f"{s}_{m}" for s in ("formal", "lts", "average")
                            for m in ("fixed_points", "before_publication", "mean_lag")]

    def fmt(v):
        return "" if isinstance(v, float) and v != v else (f"{v:.2f}" if isinstance(v, float) else v)

    return _write(path, header, [[fmt(row[h]) for h in header] for row in rows])
