from __future__ import annotations

import functools
import gzip
import http.server
import os
import threading
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from ccenv.compat import latest_inventories
from ccenv.graph import build_graph
from ccenv.snapshot import decompress_index, scan_local_mirror

FIXTURES = Path(__file__).parent / "fixtures"
DATA = Path(__file__).parent / "data"
CORPUS = FIXTURES / "corpus"
VULN = FIXTURES / "vuln"

settings.register_profile("ci", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture(autouse=True)
def _no_source_date_epoch(monkeypatch):
    monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)


@pytest.fixture(scope="session")
def corpus_snapshots():
    snaps, diagnostics = scan_local_mirror(CORPUS)
    assert snaps, diagnostics
    return snaps


@pytest.fixture(scope="session")
def corpus_graph(corpus_snapshots):
    return build_graph(corpus_snapshots)


@pytest.fixture(scope="session")
def inventories(corpus_snapshots):
    return {inv.release: inv for inv in latest_inventories(corpus_snapshots)}


@pytest.fixture
def isolated_env(monkeypatch, tmp_path):
    """Point every ccenv path knob into tmp_path so nothing leaks into $HOME."""
    monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path / "xdg-config"))
    monkeypatch.setenv("XDG_CACHE_HOME", str(tmp_path / "xdg-cache"))
    for var in ("CCENV_CACHE", "CCENV_MIRROR", "CCENV_SNAPSHOT_URL", "CCENV_CORPUS", "CCENV_CONFIG"):
        monkeypatch.delenv(var, raising=False)
    monkeypatch.chdir(tmp_path)
    return tmp_path


class _Handler(http.server.SimpleHTTPRequestHandler):
    hits: list = []

    def log_message(self, *args):
        pass

    def do_GET(self):
        type(self).hits.append(self.path)
        super().do_GET()


@pytest.fixture
def archive_server(tmp_path):
    """A snapshot-style archive with two timestamps on 2021-01-02 and one on 2021-01-03."""
    root = tmp_path / "archive"
    sources = {"20210102T000000Z": "2021-01-02", "20210102T060000Z": "2021-01-01", "20210103T000000Z": "2021-01-03"}
    for stamp, corpus_day in sources.items():
        d = root / stamp / "dists" / "r2" / "main" / "binary-amd64"
        d.mkdir(parents=True)
        src = CORPUS / "r2" / corpus_day
        raw = next(src.glob("Packages*")).read_bytes()
        text = decompress_index(raw).read().encode()
        (d / "Packages.gz").write_bytes(gzip.compress(text, mtime=0))
    handler = type("Handler", (_Handler,), {"hits": []})
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0),
                                             functools.partial(handler, directory=str(root)))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}", handler, root
    server.shutdown()
    server.server_close()


def pytest_report_header(config):
    return f"ccenv fixtures: {FIXTURES} (cwd {os.getcwd()})"
