"""Command-line entry point.

Configuration precedence: flags, then ``CCENV_*`` environment variables,
then the key=value config file (``$XDG_CONFIG_HOME/ccenv/config``, default
``~/.config/ccenv/config``), then built-in defaults.

Exit status: 0 on success, 1 when an operation fails, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import math
import os
import shutil
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from .compat import (
    IncompatReason,
    diff_matrix,
    incompat_matrix,
    latest_inventories,
    ReleaseInventory,
    write_diff_csv,
    write_findings_csv,
    write_matrix_csv,
    write_reasons_csv,
)
from .errors import CcenvError
from .graph import build_graph, export_graph
from .snapshot import IndexCache, detect_format, fetch_range, scan_local_mirror, snapshots_by_release
from .vuln import (
    Severity,
    all_fix_lags,
    annotate_graph,
    ingest_cves,
    lag_summary,
    lag_table,
    load_feed,
    load_milestones,
    load_publish_dates,
    open_fixed_counts,
    propagation,
    write_annotations_csv,
    write_lag_csv,
    write_open_fixed_csv,
    write_propagation_csv,
)

log = logging.getLogger("ccenv")

DEFAULT_SNAPSHOT_URL = "https://snapshot.debian.org/archive/debian"
ENV_KEYS = {"cache": "CCENV_CACHE", "mirror": "CCENV_MIRROR", "snapshot_url": "CCENV_SNAPSHOT_URL",
            "corpus": "CCENV_CORPUS", "config": "CCENV_CONFIG"}


class UsageError(Exception):
    pass


@dataclass
class CliConfig:
    mirror: str | None = None
    snapshot_url: str = DEFAULT_SNAPSHOT_URL
    cache: str = ""
    corpus: str | None = None
    milestones: str | None = None
    release: str | None = None
    architecture: str = "amd64"
    format: str = "table"


def default_config_path() -> Path:
    base = os.environ.get("XDG_CONFIG_HOME") or os.path.join(os.path.expanduser("~"), ".config")
    return Path(base) / "ccenv" / "config"


def default_cache_dir() -> str:
    base = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
    return os.path.join(base, "ccenv")


def read_config_file(path: Path) -> dict[str, str]:
    values: dict[str, str] = {}
    if not path.is_file():
        return values
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def load_config(args: argparse.Namespace) -> CliConfig:
    path = Path(getattr(args, "config", None) or os.environ.get(ENV_KEYS["config"]) or default_config_path())
    cfg = CliConfig(cache=default_cache_dir())
    known = set(asdict(cfg))
    for key, value in read_config_file(path).items():
        if key not in known:
            raise UsageError(f"{path}: unknown key {key!r}")
        setattr(cfg, key, value)
    for key, env in ENV_KEYS.items():
        if key in known and os.environ.get(env):
            setattr(cfg, key, os.environ[env])
    for key in known:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if cfg.format not in ("table", "csv", "json"):
        raise UsageError(f"unknown output format {cfg.format!r}")
    return cfg


# -- output helpers --------------------------------------------------------------------


def _table(header: Sequence, rows: Sequence[Sequence]) -> str:
    cells = [[str(c) for c in header]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    return "\n".join(lines) + "\n"


def _clean_json(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, dict):
        return {str(k): _clean_json(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean_json(v) for v in value]
    return value


def _write_json(path: str, payload) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(_clean_json(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def _need_out(cfg: CliConfig, args) -> str:
    if cfg.format != "table" and not args.out:
        raise UsageError(f"--format {cfg.format} writes a file; pass --out")
    return args.out


# -- corpus helpers -----------------------------------------------------------------------


def _snapshots(cfg: CliConfig):
    if not cfg.corpus:
        raise UsageError("no corpus: pass --corpus or set CCENV_CORPUS")
    snaps, diagnostics = scan_local_mirror(cfg.corpus, architecture=cfg.architecture)
    for message in diagnostics:
        log.info("%s", message)
    if not snaps:
        raise CcenvError(f"{cfg.corpus}: no snapshots found")
    return snaps


def _release_order(snaps) -> list[str]:
    first: dict[str, dt.date] = {}
    for s in snaps:
        first.setdefault(s.key.release, s.key.date)
        first[s.key.release] = min(first[s.key.release], s.key.date)
    return sorted(first, key=lambda r: (first[r], r))


def _inventories(snaps, releases: Sequence[str] | None = None) -> list[ReleaseInventory]:
    order = _release_order(snaps)
    by_release = {inv.release: inv for inv in latest_inventories(snaps)}
    wanted = list(releases) if releases else order
    missing = [r for r in wanted if r not in by_release]
    if missing:
        raise CcenvError(f"release(s) not in corpus: {', '.join(missing)}")
    return [by_release[r] for r in wanted]


def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a YYYY-MM-DD date: {text!r}") from None


# -- subcommands ------------------------------------------------------------------------------


def cmd_fetch(cfg: CliConfig, args) -> int:
    if args.end < args.start:
        raise UsageError("--end is before --start")
    snaps = fetch_range(args.release, args.start, args.end, cfg.snapshot_url, cfg.cache,
                        component=args.component, architecture=cfg.architecture, jobs=args.jobs)
    cache = IndexCache(cfg.cache)
    for snap in snaps:
        line = f"{snap.key.release} {snap.key.date} {len(snap.records)} packages"
        if cfg.corpus:
            hit = cache.get(snap.key)
            if hit is not None:
                data, _ = hit
                suffix = {"gzip": ".gz", "xz": ".xz"}.get(detect_format(data), "")
                dest = Path(cfg.corpus) / snap.key.release / snap.key.date.isoformat() / f"Packages{suffix}"
                dest.parent.mkdir(parents=True, exist_ok=True)
                dest.write_bytes(data)
                line += f" -> {dest}"
        print(line)
    return 0


def cmd_graph(cfg: CliConfig, args) -> int:
    snaps = _snapshots(cfg)
    graph = build_graph(snaps, include_recommends=args.recommends)
    if args.graph_cmd == "export":
        if not args.out:
            raise UsageError("graph export needs --out DIR")
        for path in export_graph(graph, args.out, fmt=args.graph_format):
            print(path)
        return 0
    rows = []
    for release in _release_order(snaps):
        first, last = graph.date_range(release)
        nodes = sum(1 for n in graph.package_nodes.values() if n.release == release)
        edges = sum(1 for e in graph.package_edges if e.release == release)
        dangling = sum(1 for e in graph.package_edges if e.release == release and e.dangling)
        rows.append([release, first, last, len(graph.dates[release]), nodes, edges, dangling,
                     len(graph.project_names(release))])
    sys.stdout.write(_table(["release", "first", "last", "snapshots", "package_nodes", "edges", "dangling",
                             "projects"], rows))
    if args.out:
        for path in export_graph(graph, args.out, fmt=args.graph_format):
            print(path)
    return 0


def cmd_diff(cfg: CliConfig, args) -> int:
    out = _need_out(cfg, args)
    invs = _inventories(_snapshots(cfg), args.releases)
    releases = [i.release for i in invs]
    cells = diff_matrix(invs)
    if cfg.format == "csv":
        write_diff_csv(releases, cells, out)
    elif cfg.format == "json":
        _write_json(out, {"releases": releases,
                          "cells": {f"{a}->{b}": {"added": sorted(d.added), "removed": sorted(d.removed)}
                                    for (a, b), d in sorted(cells.items())}})
    else:
        rows = [[a] + ["/" if a == b else len(cells[(a, b)].added) for b in releases] for a in releases]
        sys.stdout.write(_table(["added (row -> col)"] + releases, rows))
    return 0


def cmd_incompat(cfg: CliConfig, args) -> int:
    out = _need_out(cfg, args)
    snaps = _snapshots(cfg)
    if bool(args.from_release) != bool(args.to_release):
        raise UsageError("--from and --to go together")
    names = [args.from_release, args.to_release] if args.from_release else args.releases
    matrix = incompat_matrix(_inventories(snaps, names))
    if args.from_release:
        # keep only the requested direction
        matrix.cells = {k: v for k, v in matrix.cells.items() if k == (args.from_release, args.to_release)}
    if cfg.format == "csv":
        write_matrix_csv(matrix, out)
        write_reasons_csv(matrix, args.reasons_out or str(Path(out).with_suffix("")) + "_reasons.csv")
    elif cfg.format == "json":
        _write_json(out, {
            "releases": matrix.releases,
            "cells": {f"{a}->{b}": {"projects": sorted(c.projects),
                                    "reasons": {r.label: c.clause_histogram().get(r, 0) for r in IncompatReason},
                                    "project_reasons": {r.label: c.project_histogram().get(r, 0)
                                                        for r in IncompatReason}}
                      for (a, b), c in sorted(matrix.cells.items())},
        })
    else:
        rows = [[a] + ["/" if a == b else ("" if matrix.count(a, b) is None else matrix.count(a, b))
                       for b in matrix.releases] for a in matrix.releases]
        sys.stdout.write(_table(["incompatible (A row, B col)"] + matrix.releases, rows))
        hist_rows = []
        for (a, b), cell in sorted(matrix.cells.items()):
            clauses, projects = cell.clause_histogram(), cell.project_histogram()
            hist_rows.append([f"{a}->{b}"] + [f"{clauses.get(r, 0)}/{projects.get(r, 0)}" for r in IncompatReason])
        sys.stdout.write("\n" + _table(["cell (clauses/projects)"] + [r.label for r in IncompatReason], hist_rows))
    if args.findings_out:
        write_findings_csv(matrix.findings(), args.findings_out)
    return 0


def _vuln_inputs(cfg: CliConfig, args):
    snaps = _snapshots(cfg)
    graph = build_graph(snaps)
    published = load_publish_dates(args.published) if args.published else None
    result = ingest_cves(*(load_feed(f) for f in args.feed), published=published)
    for message in result.diagnostics:
        log.info("%s", message)
    return snaps, graph, result.records


def cmd_vuln(cfg: CliConfig, args) -> int:
    out = _need_out(cfg, args)
    snaps, graph, cves = _vuln_inputs(cfg, args)
    releases = _release_order(snaps)
    if args.vuln_cmd == "annotate":
        ann = annotate_graph(graph, cves)
        if cfg.format == "csv":
            write_annotations_csv(ann, out)
        elif cfg.format == "json":
            _write_json(out, sorted([asdict(a) | {"kind": a.kind.value, "status": a.status.value,
                                                  "severity": a.severity.value} for a in ann.items],
                                    key=lambda d: (d["release"], d["cve"], d["node"])))
        else:
            rows = []
            for r in releases:
                counts = ann.vulnerable_point_counts(r)
                o, f = open_fixed_counts(ann, r)
                rows.append([r, o, f, counts["cve_node"], counts["cve_project"]])
            sys.stdout.write(_table(["release", "open", "fixed", "vuln_points(cve,node)",
                                     "vuln_points(cve,project)"], rows))
        return 0
    if args.vuln_cmd == "report":
        ann = annotate_graph(graph, cves)
        columns = [("all", None)] + [(s.value, s) for s in Severity]
        reports = [(label, propagation(graph, ann, r, severity=sev)) for r in releases for label, sev in columns]
        if cfg.format == "csv":
            write_propagation_csv(reports, out)
            write_open_fixed_csv(ann, releases, args.counts_out or str(Path(out).with_suffix("")) + "_counts.csv")
        elif cfg.format == "json":
            _write_json(out, {
                "open_fixed": {r: dict(zip(("open", "fixed"), open_fixed_counts(ann, r))) for r in releases},
                "propagation": [{"release": rep.release, "column": label, "original": sorted(rep.original),
                                 "transitive_only": sorted(rep.transitive), "total_projects": rep.total_projects}
                                for label, rep in reports],
            })
        else:
            rows = [[rep.release, label, len(rep.original), len(rep.transitive), len(rep.affected),
                     f"{rep.affected_pct:.1f}%"] for label, rep in reports]
            sys.stdout.write(_table(["release", "severity", "original", "transitive_only", "affected", "pct"],
                                    rows))
        return 0
    # lag
    milestones = load_milestones(cfg.milestones)
    by_release = {r: all_fix_lags(cves, graph, r) for r in releases}
    table = lag_table(by_release, milestones)
    if cfg.format == "csv":
        write_lag_csv(table, out)
    elif cfg.format == "json":
        _write_json(out, {"stages": table,
                          "summary": {r: lag_summary(v) for r, v in by_release.items()}})
    else:
        rows = []
        for r, results in by_release.items():
            s = lag_summary(results)
            rows.append([r, int(s["total"]), int(s["lagged"]), int(s["fixed_before_publication"]),
                         int(s["not_computable"]), "-" if math.isnan(s["mean_lag"]) else f"{s['mean_lag']:.1f}"])
        sys.stdout.write(_table(["release", "fixed", "lagged", "before_publication", "not_computable",
                                 "mean_lag_days"], rows))
    return 0


def cmd_install(cfg: CliConfig, args) -> int:
    from .workspace import install, install_from_sbom

    mirror = cfg.mirror or cfg.corpus
    if not mirror:
        raise UsageError("no mirror: pass --mirror, set CCENV_MIRROR, or give --corpus")
    if args.from_sbom:
        root = Path(args.root or f"{Path(args.from_sbom).resolve().parent.name}-replay")
        ws = install_from_sbom(args.from_sbom, mirror, root, cfg.cache, jobs=args.jobs)
    else:
        if not args.package or not (args.release or cfg.release):
            raise UsageError("install needs a package and --release (or --from-sbom)")
        release = args.release or cfg.release
        snaps = snapshots_by_release(_snapshots(cfg)).get(release)
        if not snaps:
            raise CcenvError(f"release {release!r} not in corpus")
        if args.date:
            snaps = [s for s in snaps if s.key.date <= args.date]
            if not snaps:
                raise CcenvError(f"no {release} snapshot on or before {args.date}")
        index = ReleaseInventory.from_snapshot(snaps[-1])
        root = Path(args.root or f"{args.package}-{release}")
        ws = install(args.package, index, mirror, root, cfg.cache, entry_command=args.entry, jobs=args.jobs)
    print(f"workspace: {ws.root_dir}")
    print(f"launcher:  {ws.launcher}")
    print(f"sbom:      {ws.sbom}")
    for pin in ws.plan.pins:
        print(f"  {pin.name} {pin.version} ({pin.release})")
    return 0


def cmd_run(cfg: CliConfig, args) -> int:
    from .workspace import run_workspace

    return run_workspace(args.workspace, args.args)


def cmd_sbom(cfg: CliConfig, args) -> int:
    from .workspace import open_workspace

    ws = open_workspace(args.workspace)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(ws.sbom, args.out)
    else:
        sys.stdout.write(ws.sbom.read_text(encoding="utf-8"))
    return 0


def cmd_remove(cfg: CliConfig, args) -> int:
    from .workspace import remove_workspace

    removed = remove_workspace(args.workspace)
    print(f"removed {args.workspace}" if removed else f"{args.workspace} does not exist")
    return 0


def cmd_config(cfg: CliConfig, args) -> int:
    for key, value in asdict(cfg).items():
        print(f"{key}={'' if value is None else value}")
    return 0


# -- parser ------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--cache", help="cache directory ($CCENV_CACHE)")
    common.add_argument("--corpus", help="local corpus <release>/<date>/Packages[.gz|.xz]")
    common.add_argument("--mirror", help="base path or URL for .deb downloads ($CCENV_MIRROR)")
    common.add_argument("--snapshot-url", dest="snapshot_url", help="snapshot archive base ($CCENV_SNAPSHOT_URL)")
    common.add_argument("--milestones", help="release milestone JSON")
    common.add_argument("--arch", dest="architecture")
    common.add_argument("--format", choices=("table", "csv", "json"))
    common.add_argument("--out", help="output file (or directory for graph export)")
    common.add_argument("--jobs", type=int, default=4, help="parallel downloads")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ccenv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ccenv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("fetch", parents=[common], help="download daily indices from the snapshot archive")
    p.add_argument("--release", required=True)
    p.add_argument("--start", type=_date, required=True)
    p.add_argument("--end", type=_date, required=True)
    p.add_argument("--component", default="main")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("graph", parents=[common], help="build or export the dependency graph")
    p.add_argument("graph_cmd", choices=("build", "export"))
    p.add_argument("--graph-format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--recommends", action="store_true", help="include Recommends edges")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("diff", parents=[common], help="added/removed projects between releases")
    p.add_argument("--releases", type=lambda s: [r for r in s.split(",") if r])
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("incompat", parents=[common], help="cross-release incompatibility matrix")
    p.add_argument("--from", dest="from_release")
    p.add_argument("--to", dest="to_release")
    p.add_argument("--releases", type=lambda s: [r for r in s.split(",") if r])
    p.add_argument("--reasons-out")
    p.add_argument("--findings-out")
    p.set_defaults(func=cmd_incompat)

    p = sub.add_parser("vuln", parents=[common], help="CVE annotation, propagation and fix lag")
    p.add_argument("vuln_cmd", choices=("annotate", "report", "lag"))
    p.add_argument("--feed", action="append", required=True, help="tracker JSON or vuln-list directory")
    p.add_argument("--published", help="CVE publish dates (JSON or CSV)")
    p.add_argument("--counts-out")
    p.set_defaults(func=cmd_vuln)

    p = sub.add_parser("install", parents=[common], help="install a package into an isolated workspace")
    p.add_argument("package", nargs="?")
    p.add_argument("--release")
    p.add_argument("--date", type=_date)
    p.add_argument("--root", help="workspace directory (default ./<package>-<release>)")
    p.add_argument("--entry", help="entry command (default: from .desktop files)")
    p.add_argument("--from-sbom", help="replay the pins of an SBOM")
    p.set_defaults(func=cmd_install)

    p = sub.add_parser("run", help="run a workspace's launcher")
    p.add_argument("workspace")
    p.add_argument("args", nargs=argparse.REMAINDER)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sbom", parents=[common], help="print or copy a workspace SBOM")
    p.add_argument("workspace")
    p.set_defaults(func=cmd_sbom)

    p = sub.add_parser("remove", help="delete a workspace")
    p.add_argument("workspace")
    p.set_defaults(func=cmd_remove)

    p = sub.add_parser("config", parents=[common], help="show the effective configuration")
    p.add_argument("config_cmd", choices=("show",))
    p.set_defaults(func=cmd_config)
    return parser


def run_cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="ccenv: %(levelname)s: %(message)s")
    try:
        cfg = load_config(args)
        return args.func(cfg, args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ccenv: error: {exc}", file=sys.stderr)
        return 2
    except (CcenvError, OSError, ValueError) as exc:
        print(f"ccenv: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
