import csv
import shutil
import subprocess
import sys

import pytest

from ccenv.cli import run_cli

from conftest import CORPUS, FIXTURES, VULN
from oracles import oracle_findings

RELEASES = ["r1", "r2", "r3"]


@pytest.fixture
def cli(isolated_env, capsys):
    def run(*argv):
        code = run_cli([str(a) for a in argv])
        out, err = capsys.readouterr()
        return code, out, err
    return run


def test_help_and_usage_errors(cli):
    assert cli("--help")[0] == 0
    assert cli()[0] == 2
    assert cli("frobnicate")[0] == 2
    assert cli("incompat", "--corpus", CORPUS, "--format", "csv")[0] == 2
    assert cli("incompat", "--corpus", CORPUS, "--from", "r1")[0] == 2
    assert cli("diff")[0] == 2  # no corpus configured
    assert cli("graph", "export", "--corpus", CORPUS)[0] == 2
    assert cli("install", "demo-app", "--corpus", CORPUS)[0] == 2  # no release
    code, _, err = cli("diff", "--corpus", CORPUS, "--releases", "r1,r9")
    assert code == 1 and "r9" in err


def test_console_script_is_installed():
    exe = shutil.which("ccenv")
    cmd = [exe] if exe else [sys.executable, "-m", "ccenv.cli"]
    result = subprocess.run([*cmd, "--version"], capture_output=True, text=True)
    assert result.returncode == 0 and result.stdout.startswith("ccenv ")


def test_incompat_csv_matches_bruteforce(cli, isolated_env):
    out = isolated_env / "m.csv"
    code, _, _ = cli("incompat", "--corpus", CORPUS, "--format", "csv", "--out", out,
                     "--findings-out", isolated_env / "f.csv")
    assert code == 0
    rows = {r["release"]: r for r in csv.DictReader(out.open())}
    for a in RELEASES:
        for b in RELEASES:
            expected = "/" if a == b else str(len({t[2] for t in oracle_findings(a, b)}))
            assert rows[a][b] == expected
    findings = {(r["releaseA"], r["releaseB"], r["project"], r["package"], r["reason"])
                for r in csv.DictReader((isolated_env / "f.csv").open())}
    oracle = set()
    for a in RELEASES:
        for b in RELEASES:
            if a != b:
                oracle |= {(t[0], t[1], t[2], t[3], t[5]) for t in oracle_findings(a, b)}
    assert findings == oracle
    assert (isolated_env / "m_reasons.csv").is_file()


def test_incompat_single_direction_table(cli):
    code, out, _ = cli("incompat", "--corpus", CORPUS, "--from", "r1", "--to", "r2")
    assert code == 0
    assert "r1->r2" in out and "r2->r1" not in out


def test_reruns_are_byte_identical(cli, isolated_env):
    jobs = [
        ("incompat", "--format", "json"),
        ("diff", "--format", "csv"),
        ("vuln", "report", "--format", "csv", "--feed", VULN / "tracker.json", "--feed", VULN / "vuln-list",
         "--published", VULN / "published.csv"),
        ("vuln", "lag", "--format", "json", "--feed", VULN / "tracker.json", "--published", VULN / "published.csv",
         "--milestones", FIXTURES / "milestones.json"),
        ("vuln", "annotate", "--format", "json", "--feed", VULN / "tracker.json"),
    ]
    for i, job in enumerate(jobs):
        outputs = []
        for attempt in range(2):
            path = isolated_env / f"job{i}-{attempt}.out"
            assert cli(*job, "--corpus", CORPUS, "--out", path)[0] == 0
            outputs.append(path.read_bytes())
        assert outputs[0] == outputs[1], job
    exports = []
    for attempt in range(2):
        assert cli("graph", "export", "--corpus", CORPUS, "--out", isolated_env / f"g{attempt}")[0] == 0
        exports.append(sorted((p.name, p.read_bytes()) for p in (isolated_env / f"g{attempt}").iterdir()))
    assert exports[0] == exports[1]


def test_vuln_tables(cli):
    feeds = ["--feed", VULN / "tracker.json", "--feed", VULN / "vuln-list", "--published", VULN / "published.csv"]
    code, out, _ = cli("vuln", "annotate", "--corpus", CORPUS, *feeds)
    assert code == 0
    assert out.splitlines()[1].split()[:3] == ["r1", "8", "5"]
    code, out, _ = cli("vuln", "lag", "--corpus", CORPUS, *feeds, "--milestones", FIXTURES / "milestones.json")
    assert code == 0 and "before_publication" in out
    code, out, _ = cli("graph", "build", "--corpus", CORPUS)
    assert code == 0 and out.splitlines()[1].split()[0] == "r1"


def test_install_run_sbom_remove(cli, isolated_env):
    root = isolated_env / "ws"
    code, out, err = cli("install", "demo-app", "--release", "r2", "--corpus", CORPUS, "--root", root)
    assert code == 0, err
    assert (root / "run.sh").is_file() and (root / "sbom.json").is_file()
    assert "glow 3.3.2-1 (r2)" in out
    assert (isolated_env / "xdg-cache" / "ccenv" / "debs").is_dir()  # default cache honours XDG
    result = subprocess.run(["/bin/sh", str(root / "run.sh")], capture_output=True, text=True)
    assert result.stdout.splitlines()[-1] == "glow 3.3.2"
    code, out, _ = cli("sbom", root)
    assert code == 0 and out == (root / "sbom.json").read_text()
    assert cli("sbom", root, "--out", isolated_env / "copy.json")[0] == 0
    code, _, err = cli("install", "--from-sbom", isolated_env / "copy.json", "--corpus", CORPUS,
                       "--root", isolated_env / "replay")
    assert code == 0, err
    assert (isolated_env / "replay" / "sbom.json").read_bytes() == (root / "sbom.json").read_bytes()
    assert cli("run", root)[0] == 0
    assert cli("remove", root)[0] == 0 and not root.exists()
    assert cli("remove", root)[0] == 0
    (isolated_env / "plain").mkdir()
    assert cli("remove", isolated_env / "plain")[0] == 1


def test_install_with_date_and_entry(cli, isolated_env):
    root = isolated_env / "old"
    code, _, err = cli("install", "demo-app", "--release", "r1", "--date", "2020-01-01", "--corpus", CORPUS,
                       "--root", root, "--entry", "glow")
    assert code == 0, err
    result = subprocess.run(["/bin/sh", str(root / "run.sh")], capture_output=True, text=True)
    assert result.stdout.strip() == "glow 3.0.4"
    assert cli("install", "demo-app", "--release", "r1", "--date", "2019-01-01", "--corpus", CORPUS,
               "--root", isolated_env / "none")[0] == 1


def test_config_precedence(cli, isolated_env, monkeypatch):
    conf = isolated_env / "xdg-config" / "ccenv" / "config"
    conf.parent.mkdir(parents=True)
    conf.write_text("# comment\ncache = /from/file\nmirror=/mirror/file\nformat=csv\n")

    def show(*extra):
        code, out, _ = cli("config", "show", *extra)
        assert code == 0
        return dict(line.split("=", 1) for line in out.splitlines())

    values = show()
    assert (values["cache"], values["mirror"], values["format"]) == ("/from/file", "/mirror/file", "csv")
    monkeypatch.setenv("CCENV_CACHE", "/from/env")
    assert show()["cache"] == "/from/env"
    assert show("--cache", "/from/flag")["cache"] == "/from/flag"
    other = isolated_env / "other.conf"
    other.write_text("release=r9\n")
    assert show("--config", other)["release"] == "r9"
    other.write_text("bogus=1\n")
    assert cli("config", "show", "--config", other)[0] == 2
    monkeypatch.delenv("CCENV_CACHE")
    conf.unlink()
    assert show()["cache"] == str(isolated_env / "xdg-cache" / "ccenv")


def test_fetch_writes_into_corpus(cli, isolated_env, archive_server):
    base, _, _ = archive_server
    corpus = isolated_env / "fetched"
    code, out, err = cli("fetch", "--release", "r2", "--start", "2021-01-02", "--end", "2021-01-03",
                         "--snapshot-url", base, "--corpus", corpus)
    assert code == 0, err
    assert len(out.splitlines()) == 2
    assert (corpus / "r2" / "2021-01-03" / "Packages.gz").is_file()
    code, out, _ = cli("graph", "build", "--corpus", corpus)
    assert code == 0 and out.splitlines()[1].split()[3] == "2"
    assert cli("fetch", "--release", "r2", "--start", "2021-01-03", "--end", "2021-01-02",
               "--snapshot-url", base)[0] == 2


def test_analysis_commands_leave_cache_alone(cli, isolated_env):
    cache = isolated_env / "cache"
    feeds = ["--feed", VULN / "tracker.json"]
    for argv in (("diff",), ("incompat",), ("graph", "build"), ("vuln", "annotate", *feeds),
                 ("vuln", "report", *feeds), ("config", "show")):
        assert cli(*argv, "--corpus", CORPUS, "--cache", cache)[0] == 0
    assert not cache.exists()
