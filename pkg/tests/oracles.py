"""Independent reference implementations used by the tests.

Nothing here imports ccenv. Index files and feeds are read by hand and
version comparisons go through ``dpkg --compare-versions``.
"""

from __future__ import annotations

import functools
import gzip
import json
import lzma
import re
import subprocess
from pathlib import Path

import networkx as nx

CORPUS = Path(__file__).parent / "fixtures" / "corpus"
VULN = Path(__file__).parent / "fixtures" / "vuln"

ATOM = re.compile(r"^([a-z0-9][a-z0-9+.-]+)(?::\S+)?\s*(?:\((<<|<=|=|>=|>>|<|>)\s*([^)\s]+)\))?\s*(?:\[[^]]*\])?$")


def read_index_file(path: Path) -> dict[str, dict[str, str]]:
    raw = path.read_bytes()
    if path.suffix == ".gz":
        raw = gzip.decompress(raw)
    elif path.suffix == ".xz":
        raw = lzma.decompress(raw)
    out = {}
    for block in raw.decode().split("\n\n"):
        fields = {}
        for line in block.splitlines():
            if line and not line[0].isspace() and ":" in line:
                key, _, value = line.partition(":")
                fields[key] = value.strip()
        if "Package" in fields:
            out[fields["Package"]] = fields
    return out


def release_days(release: str) -> list[Path]:
    return sorted(p for p in (CORPUS / release).iterdir() if p.is_dir())


def read_day(day: Path) -> dict[str, dict[str, str]]:
    (path,) = day.glob("Packages*")
    return read_index_file(path)


def read_last_day(release: str) -> dict[str, dict[str, str]]:
    return read_day(release_days(release)[-1])


@functools.lru_cache(maxsize=None)
def dpkg_holds(left: str, op: str, right: str) -> bool:
    return subprocess.run(["dpkg", "--compare-versions", left, op, right]).returncode == 0


def project_of(fields: dict[str, str]) -> str:
    return fields.get("Source", fields["Package"]).split()[0]


def clauses_of(fields: dict[str, str], keys=("Pre-Depends", "Depends")) -> list[list[tuple]]:
    """Each clause as a list of (name, op, version) tuples."""
    out = []
    for key in keys:
        for clause in fields.get(key, "").split(","):
            if clause.strip():
                out.append([ATOM.match(alt.strip()).groups() for alt in clause.split("|")])
    return out


def provided_names(index: dict[str, dict[str, str]]) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {}
    for name, fields in index.items():
        for p in fields.get("Provides", "").split(","):
            if p.strip():
                out.setdefault(p.strip().split()[0], set()).add(name)
    return out


# relationship operator -> incompatibility reason label
REASON_OF_OP = {"<<": "<", "<=": "<", "<": "<", ">>": ">", ">=": ">", ">": ">", "=": "="}


def oracle_findings(rel_a: str, rel_b: str) -> set[tuple]:
    a, b = read_last_day(rel_a), read_last_day(rel_b)
    provided = provided_names(a)
    common = {project_of(f) for f in a.values()} & {project_of(f) for f in b.values()}
    found = set()
    for name, fields in b.items():
        if project_of(fields) not in common:
            continue
        for atoms in clauses_of(fields):
            ok = False
            for pkg, op, ver in atoms:
                if pkg in a and (op is None or dpkg_holds(a[pkg]["Version"], op, ver)):
                    ok = True
                elif op is None and pkg in provided:
                    ok = True
            if ok:
                continue
            pkg, op, _ = atoms[0]
            reason = "no" if pkg not in a else REASON_OF_OP[op]
            found.add((rel_a, rel_b, project_of(fields), name, tuple(x[0] for x in atoms), reason))
    return found


def oracle_statuses():
    """{(cve, project, release): ("open", None) | ("fixed", version)} merged straight from the JSON."""
    out = {}

    def put(key, status):
        if key not in out or (out[key][0] == "open" and status[0] == "fixed"):
            out[key] = status

    tracker = json.loads((VULN / "tracker.json").read_text())
    for project, entries in tracker.items():
        for cve, entry in entries.items():
            for release, info in entry["releases"].items():
                if info["status"] == "open":
                    put((cve, project, release), ("open", None))
                elif info.get("fixed_version") not in (None, "", "0"):
                    put((cve, project, release), ("fixed", info["fixed_version"]))
    for path in sorted((VULN / "vuln-list").glob("*.json")):
        doc = json.loads(path.read_text())
        for ann in doc["Annotations"]:
            key = (doc["Header"]["ID"], ann["Package"], ann["Release"] or "unstable")
            if ann["Kind"] == "fixed":
                put(key, ("fixed", ann["Version"]))
            elif ann["Kind"] != "not-affected":
                put(key, ("open", None))
    return out


def oracle_versions(release):
    """{project: {version strings seen on any sampled day}}."""
    out = {}
    for day in release_days(release):
        for fields in read_day(day).values():
            out.setdefault(project_of(fields), set()).add(fields["Version"])
    return out


def oracle_points(release):
    """{(cve, project, version, kind, status)} computed with dpkg comparisons."""
    versions = oracle_versions(release)
    points = set()
    for (cve, project, rel), (status, fixed) in oracle_statuses().items():
        if rel != release:
            continue
        for v in versions.get(project, ()):
            if status == "open" or dpkg_holds(v, "lt", fixed):
                points.add((cve, project, v, "vulnerable", status))
            elif dpkg_holds(v, "eq", fixed):
                points.add((cve, project, v, "fixed", status))
    return points


def oracle_project_graph(release) -> nx.DiGraph:
    graph = nx.DiGraph()
    days = [read_day(d) for d in release_days(release)]
    names = {}
    for index in days:
        for fields in index.values():
            names.setdefault(fields["Package"], set()).add(project_of(fields))
            graph.add_node(project_of(fields))
    providers = {}
    for index in days:
        for virt, owners in provided_names(index).items():
            for owner in owners:
                providers.setdefault(virt, set()).update(names[owner])
    for index in days:
        for fields in index.values():
            src = project_of(fields)
            for key in ("Pre-Depends", "Depends"):
                for clause in fields.get(key, "").split(","):
                    for alt in filter(None, (a.strip() for a in clause.split("|"))):
                        target = ATOM.match(alt).group(1)
                        for dst in names.get(target, set()) | providers.get(target, set()):
                            if dst != src:
                                graph.add_edge(src, dst)
    return graph
