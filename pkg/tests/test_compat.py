import csv
from collections import Counter
from pathlib import Path

import pytest

from ccenv.compat import (
    IncompatReason,
    ReleaseInventory,
    classify_reason,
    diff_matrix,
    incompat_matrix,
    incompatible_projects,
    inventory_from_graph,
    project_diff,
    write_diff_csv,
    write_findings_csv,
    write_matrix_csv,
    write_reasons_csv,
)
from ccenv.control import parse_depends
from ccenv.errors import ContractViolation
from ccenv.version import parse_version

from oracles import oracle_findings

RELEASES = ["r1", "r2", "r3"]


@pytest.fixture(scope="module")
def matrix(inventories):
    return incompat_matrix([inventories[r] for r in RELEASES])


def as_tuples(findings):
    return {(f.release_a, f.release_b, f.project, f.package, tuple(x.package for x in f.clause), f.reason.label)
            for f in findings}


def test_matrix_matches_bruteforce(matrix):
    for a in RELEASES:
        for b in RELEASES:
            if a == b:
                assert matrix.count(a, b) is None
                continue
            expected = oracle_findings(a, b)
            assert as_tuples(matrix.cells[(a, b)].findings) == expected
            assert matrix.count(a, b) == len({t[2] for t in expected})


def test_every_reason_class_is_exercised(matrix):
    totals = Counter(f.reason for f in matrix.findings())
    assert all(totals[r] >= 3 for r in IncompatReason), totals


def test_glow_finding(matrix):
    demo = [f for f in matrix.cells[("r1", "r2")].findings if f.package == "demo-app"]
    (finding,) = [f for f in demo if f.atom.package == "glow"]
    assert finding.reason is IncompatReason.NEWER_REQUIRED
    assert str(finding.available_version) == "3.0.4-1"
    assert finding.project == "demo-app"
    assert str(finding.atom) == "glow (>= 3.3)"


def test_exact_pin_and_legacy_operator(matrix):
    r1_r2 = {(f.package, f.atom.package): f for f in matrix.cells[("r1", "r2")].findings}
    assert r1_r2[("glow", "libglow3")].reason is IncompatReason.EXACT_MISMATCH
    olds = [f for f in matrix.findings()
            if f.atom.package in ("python3", "perl-base") and f.atom.constraint.relation.operator in ("<<", "<=")]
    assert len(olds) >= 3 and all(f.reason is IncompatReason.OLDER_REQUIRED for f in olds)


def test_reason_classification_contract(inventories):
    r1 = inventories["r1"]
    glow = parse_depends("glow (>= 3.3)")[0].alternatives[0]
    assert classify_reason(glow, r1) is IncompatReason.NEWER_REQUIRED
    with pytest.raises(ContractViolation):
        classify_reason(parse_depends("glow (>= 3.0)")[0].alternatives[0], r1)
    # a versioned requirement cannot be met by a virtual provider
    mta = parse_depends("mail-transport-agent (>= 1)")[0].alternatives[0]
    assert classify_reason(mta, inventories["r2"]) is IncompatReason.MISSING


def test_project_diff(inventories, corpus_graph):
    cells = diff_matrix([inventories[r] for r in RELEASES], corpus_graph)
    r1_r3 = cells[("r1", "r3")]
    assert r1_r3.added == {"borealis", "diamond", "gcc-12", "libnew", "lua5.4"}
    assert cells[("r3", "r2")].added == {"broken-pkg", "gcc-10", "lua5.1", "tsgl"}
    for (a, b), cell in cells.items():
        assert cell.added == cells[(b, a)].removed
        assert not (cell.added & cell.common)
    plain = project_diff(inventories["r1"], inventories["r3"])
    assert plain == r1_r3


def test_inventory_from_graph_matches_snapshot(corpus_graph, inventories):
    inv = inventory_from_graph(corpus_graph, "r2")
    assert {n: str(r.version) for n, r in inv.packages.items()} == \
        {n: str(r.version) for n, r in inventories["r2"].packages.items()}


def test_duplicate_names_keep_highest():
    from ccenv.control import PackageRecord
    recs = [PackageRecord("aa", parse_version(v), "amd64", None, []) for v in ("1.0", "2.0", "1.5")]
    inv = ReleaseInventory.from_records("rx", None, recs)
    assert str(inv.version_of("aa")) == "2.0"
    assert len(inv.diagnostics) == 2


def test_identical_releases_only_report_dangling(inventories):
    (finding,) = incompatible_projects(inventories["r2"], inventories["r2"]).findings
    assert (finding.package, finding.reason) == ("broken-pkg", IncompatReason.MISSING)
    assert finding.available_version is None


def test_csv_reports(matrix, inventories, tmp_path):
    path = write_matrix_csv(matrix, tmp_path / "matrix.csv")
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["release"] + RELEASES
    assert rows[1][1] == "/" and int(rows[1][2]) == matrix.count("r1", "r2")
    reasons = list(csv.DictReader(write_reasons_csv(matrix, tmp_path / "reasons.csv").open()))
    assert len(reasons) == 6 * 4
    assert sum(int(r["clause_count"]) for r in reasons) == len(matrix.findings())
    findings = list(csv.DictReader(write_findings_csv(matrix.findings(), tmp_path / "f.csv").open()))
    assert {r["reason"] for r in findings} == {">", "<", "=", "no"}
    cells = diff_matrix([inventories[r] for r in RELEASES])
    diff_rows = list(csv.reader(write_diff_csv(RELEASES, cells, tmp_path / "d.csv").open()))
    assert int(diff_rows[1][3]) == len(cells[("r1", "r3")].added)
    first = Path(tmp_path / "matrix.csv").read_bytes()
    assert write_matrix_csv(matrix, tmp_path / "again.csv").read_bytes() == first
