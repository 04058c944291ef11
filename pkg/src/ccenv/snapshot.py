"""Daily ``Packages`` indices from a snapshot archive or a local corpus.

Cache layout under ``cache_dir``::

    objects/<sha256[:2]>/<sha256>                          raw compressed bytes
    indices/<release>/<component>/binary-<arch>/<date>.json  sidecar metadata
    locks/<release>_<component>_<arch>_<date>.lock           per-key writer lock

Parsing always re-runs from the cached bytes.
"""

from __future__ import annotations

import datetime as dt
import gzip
import hashlib
import io
import json
import logging
import lzma
import os
import re
import threading
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Union

import requests
from filelock import FileLock
from requests.adapters import HTTPAdapter
from urllib3.util.retry import Retry

from .control import Diagnostic, PackageRecord, parse_package_index
from .errors import CorruptArtifactError, FetchError, FormatError

log = logging.getLogger(__name__)

__all__ = [
    "SnapshotKey",
    "MirrorSnapshot",
    "IndexCache",
    "SnapshotArchive",
    "fetch_index",
    "fetch_range",
    "decompress_index",
    "detect_format",
    "load_local_mirror",
    "scan_local_mirror",
]

GZIP_MAGIC = b"\x1f\x8b"
XZ_MAGIC = b"\xfd7zXZ\x00"
DEFAULT_TIMEOUT = 30.0
_TIMESTAMP_RE = re.compile(r'href="(?:\./)?(\d{8}T\d{6}Z)/?"')


@dataclass(frozen=True, order=True)
class SnapshotKey:
    release: str
    date: dt.date
    component: str = "main"
    architecture: str = "amd64"

    def __post_init__(self):
        if not self.release:
            raise ValueError("release codename must be non-empty")
        if isinstance(self.date, str):
            object.__setattr__(self, "date", dt.date.fromisoformat(self.date))

    def check_window(self, window: tuple[dt.date, dt.date] | None) -> None:
        if window is not None and not (window[0] <= self.date <= window[1]):
            raise ValueError(f"{self.date} is outside the study window {window[0]}..{window[1]}")

    @property
    def slug(self) -> str:
        return f"{self.release}_{self.component}_{self.architecture}_{self.date.isoformat()}"


@dataclass
class MirrorSnapshot:
    key: SnapshotKey
    records: list[PackageRecord]
    fetched_at: dt.datetime
    source_url_or_path: str
    archive_timestamp: str | None = None
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def release(self) -> str:
        return self.key.release

    @property
    def date(self) -> dt.date:
        return self.key.date


# -- decompression -----------------------------------------------------------


def detect_format(data: bytes) -> str:
    if data.startswith(GZIP_MAGIC):
        return "gzip"
    if data.startswith(XZ_MAGIC):
        return "xz"
    return "plain"


class _GuardedRaw(io.RawIOBase):
    """Turns decompressor failures (truncation, bad CRC) into CorruptArtifactError."""

    def __init__(self, inner: BinaryIO):
        self._inner = inner

    def readable(self) -> bool:
        return True

    def readinto(self, buf) -> int:
        try:
            chunk = self._inner.read(len(buf))
        except (EOFError, OSError, lzma.LZMAError, zlib.error) as exc:
            raise CorruptArtifactError(f"index decompression failed: {exc}") from exc
        n = len(chunk)
        buf[:n] = chunk
        return n

    def close(self) -> None:
        self._inner.close()
        super().close()


def decompress_index(data: Union[bytes, BinaryIO], fmt: str | None = None) -> io.TextIOWrapper:
    """Return a streaming text view of a (possibly compressed) index.

    ``fmt`` is ``"gzip"``, ``"xz"`` or ``"plain"``; ``None`` sniffs the magic.
    A declared format whose magic does not match raises FormatError.
    """
    raw: BinaryIO = io.BytesIO(data) if isinstance(data, (bytes, bytearray)) else data
    head = raw.read(6)
    raw.seek(0)
    sniffed = detect_format(head)
    fmt = fmt or sniffed
    if fmt not in ("gzip", "xz", "plain"):
        raise FormatError(f"unsupported index format {fmt!r}")
    if fmt != "plain" and sniffed != fmt:
        raise FormatError(f"declared {fmt} but magic bytes are {head[:6]!r}")
    if fmt == "plain" and sniffed != "plain":
        raise FormatError(f"declared plain text but found {sniffed} data")
    if fmt == "gzip":
        inner: BinaryIO = gzip.GzipFile(fileobj=raw)
    elif fmt == "xz":
        inner = lzma.LZMAFile(raw)
    else:
        inner = raw
    return io.TextIOWrapper(io.BufferedReader(_GuardedRaw(inner)), encoding="utf-8", errors="replace")


def _parse_bytes(data: bytes, fmt: str | None = None):
    with decompress_index(data, fmt) as text:
        return parse_package_index(text)


# -- cache ---------------------------------------------------------------------


class IndexCache:
    """Content-addressed store of raw index bytes with a JSON sidecar per key."""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    def _sidecar(self, key: SnapshotKey) -> Path:
        return (self.root / "indices" / key.release / key.component / f"binary-{key.architecture}"
                / f"{key.date.isoformat()}.json")

    def _object(self, digest: str) -> Path:
        return self.root / "objects" / digest[:2] / digest

    def lock(self, key: SnapshotKey) -> FileLock:
        path = self.root / "locks" / f"{key.slug}.lock"
        path.parent.mkdir(parents=True, exist_ok=True)
        return FileLock(str(path))

    def get(self, key: SnapshotKey) -> tuple[bytes, dict] | None:
        sidecar = self._sidecar(key)
        if not sidecar.exists():
            return None
        meta = json.loads(sidecar.read_text())
        obj = self._object(meta["sha256"])
        try:
            data = obj.read_bytes()
        except FileNotFoundError:
            self.invalidate(key)
            raise CorruptArtifactError(f"cache object missing for {key.slug}") from None
        if hashlib.sha256(data).hexdigest() != meta["sha256"]:
            self.invalidate(key)
            raise CorruptArtifactError(f"cache object checksum mismatch for {key.slug}")
        return data, meta

    def put(self, key: SnapshotKey, data: bytes, meta: dict) -> dict:
        digest = hashlib.sha256(data).hexdigest()
        obj = self._object(digest)
        if not obj.exists():
            _atomic_write(obj, data)
        meta = {**meta, "sha256": digest, "size": len(data)}
        _atomic_write(self._sidecar(key), json.dumps(meta, sort_keys=True, indent=2).encode() + b"\n")
        return meta

    def invalidate(self, key: SnapshotKey) -> None:
        try:
            self._sidecar(key).unlink()
        except FileNotFoundError:
            pass


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


# -- network -------------------------------------------------------------------


def make_session(retries: int = 2) -> requests.Session:
    session = requests.Session()
    retry = Retry(total=retries, backoff_factor=0.5, status_forcelist=(500, 502, 503, 504),
                  allowed_methods=("GET", "HEAD"))
    adapter = HTTPAdapter(max_retries=retry)
    session.mount("http://", adapter)
    session.mount("https://", adapter)
    return session


def http_get(session: requests.Session, url: str, timeout: float = DEFAULT_TIMEOUT) -> bytes:
    try:
        resp = session.get(url, timeout=timeout)
    except (requests.ConnectionError, requests.Timeout) as exc:
        raise FetchError(f"GET {url} failed: {exc}", url, retriable=True) from exc
    except requests.RequestException as exc:
        raise FetchError(f"GET {url} failed: {exc}", url, retriable=False) from exc
    if resp.status_code != 200:
        retriable = resp.status_code == 404 or resp.status_code >= 500 or resp.status_code == 429
        raise FetchError(f"GET {url} returned HTTP {resp.status_code}", url, retriable=retriable)
    return resp.content


def _parse_timestamp(ts: str) -> dt.datetime:
    return dt.datetime.strptime(ts, "%Y%m%dT%H%M%SZ")


class SnapshotArchive:
    """Client for a dated snapshot archive (``<base>/<YYYYMMDDTHHMMSSZ>/dists/...``)."""

    def __init__(self, base_url: str, cache_dir: Union[str, Path], session: requests.Session | None = None,
                 timeout: float = DEFAULT_TIMEOUT):
        self.base_url = base_url.rstrip("/")
        self.cache = IndexCache(cache_dir)
        self.session = session or make_session()
        self.timeout = timeout
        self._listings: dict[tuple[int, int], list[str]] = {}
        self._listing_lock = threading.Lock()

    def month_timestamps(self, year: int, month: int) -> list[str]:
        with self._listing_lock:
            if (year, month) in self._listings:
                return self._listings[(year, month)]
        body = http_get(self.session, f"{self.base_url}/?year={year}&month={month}", self.timeout)
        stamps = sorted(set(_TIMESTAMP_RE.findall(body.decode("utf-8", errors="replace"))))
        with self._listing_lock:
            self._listings[(year, month)] = stamps
        return stamps

    def resolve_timestamp(self, day: dt.date) -> str:
        """Earliest archive timestamp on or after ``day``."""
        nxt = (day.replace(day=1) + dt.timedelta(days=32)).replace(day=1)
        for year, month in ((day.year, day.month), (nxt.year, nxt.month)):
            for ts in self.month_timestamps(year, month):
                if _parse_timestamp(ts).date() >= day:
                    return ts
        raise FetchError(f"no snapshot on or after {day} in {self.base_url}", retriable=True)

    def index_url(self, key: SnapshotKey, timestamp: str) -> str:
        return (f"{self.base_url}/{timestamp}/dists/{key.release}/{key.component}"
                f"/binary-{key.architecture}/Packages.gz")

    def fetch(self, key: SnapshotKey) -> MirrorSnapshot:
        with self.cache.lock(key):
            cached = self.cache.get(key)
            if cached is None:
                timestamp = self.resolve_timestamp(key.date)
                url = self.index_url(key, timestamp)
                data = http_get(self.session, url, self.timeout)
                meta = self.cache.put(key, data, {
                    "release": key.release, "date": key.date.isoformat(), "component": key.component,
                    "architecture": key.architecture, "url": url, "timestamp": timestamp,
                    "fetched_at": dt.datetime.now(dt.timezone.utc).replace(microsecond=0).isoformat(),
                })
            else:
                data, meta = cached
            try:
                result = _parse_bytes(data)
            except (CorruptArtifactError, FormatError) as exc:
                self.cache.invalidate(key)
                raise CorruptArtifactError(f"{key.slug}: {exc}") from exc
        return MirrorSnapshot(
            key=key,
            records=result.records,
            fetched_at=dt.datetime.fromisoformat(meta["fetched_at"]),
            source_url_or_path=meta["url"],
            archive_timestamp=meta["timestamp"],
            diagnostics=result.diagnostics,
        )


def fetch_index(key: SnapshotKey, base_url: str, cache_dir: Union[str, Path],
                session: requests.Session | None = None) -> MirrorSnapshot:
    return SnapshotArchive(base_url, cache_dir, session=session).fetch(key)


def fetch_range(release: str, start: dt.date, end: dt.date, base_url: str, cache_dir: Union[str, Path],
                component: str = "main", architecture: str = "amd64", jobs: int = 4,
                session: requests.Session | None = None,
                window: tuple[dt.date, dt.date] | None = None) -> list[MirrorSnapshot]:
    """Fetch one snapshot per day in ``[start, end]`` with at most ``jobs`` concurrent downloads."""
    archive = SnapshotArchive(base_url, cache_dir, session=session)
    keys = []
    day = start
    while day <= end:
        key = SnapshotKey(release, day, component, architecture)
        key.check_window(window)
        keys.append(key)
        day += dt.timedelta(days=1)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return list(pool.map(archive.fetch, keys))


# -- local corpus ----------------------------------------------------------------

_INDEX_NAMES = (("Packages", "plain"), ("Packages.gz", "gzip"), ("Packages.xz", "xz"))
# archive areas that may sit next to the release directories of a mirror
_NON_RELEASE_DIRS = {"pool", "dists"}


def scan_local_mirror(path: Union[str, Path], component: str = "main",
                      architecture: str = "amd64") -> tuple[list[MirrorSnapshot], list[str]]:
    """Load ``<release>/<YYYY-MM-DD>/Packages[.gz|.xz]``; return snapshots and diagnostics.

    A ``pool/`` directory beside the releases is ignored, so the same tree
    can serve as the ``.deb`` mirror for installs.
    """
    root = Path(path)
    snapshots: list[MirrorSnapshot] = []
    diagnostics: list[str] = []
    if not root.is_dir():
        return snapshots, [f"{root}: not a directory"]
    for release_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        if release_dir.name.startswith(".") or release_dir.name in _NON_RELEASE_DIRS:
            continue
        for date_dir in sorted(p for p in release_dir.iterdir() if p.is_dir()):
            try:
                day = dt.date.fromisoformat(date_dir.name)
            except ValueError:
                diagnostics.append(f"{date_dir}: not a YYYY-MM-DD directory, skipped")
                continue
            found = [(date_dir / name, fmt) for name, fmt in _INDEX_NAMES if (date_dir / name).is_file()]
            if not found:
                diagnostics.append(f"{date_dir}: no Packages index, skipped")
                continue
            if len(found) > 1:
                diagnostics.append(f"{date_dir}: several indices, using {found[0][0].name}")
            index_path, fmt = found[0]
            try:
                result = _parse_bytes(index_path.read_bytes(), fmt)
            except (CorruptArtifactError, FormatError) as exc:
                diagnostics.append(f"{index_path}: {exc}")
                continue
            diagnostics.extend(f"{index_path}: {d}" for d in result.diagnostics)
            snapshots.append(MirrorSnapshot(
                key=SnapshotKey(release_dir.name, day, component, architecture),
                records=result.records,
                fetched_at=dt.datetime.fromtimestamp(index_path.stat().st_mtime, dt.timezone.utc),
                source_url_or_path=str(index_path),
                diagnostics=result.diagnostics,
            ))
        if not any(p.is_dir() for p in release_dir.iterdir()):
            diagnostics.append(f"{release_dir}: no dated snapshots")
    snapshots.sort(key=lambda s: (s.key.date, s.key.release))
    return snapshots, diagnostics


def load_local_mirror(path: Union[str, Path], component: str = "main",
                      architecture: str = "amd64") -> list[MirrorSnapshot]:
    snapshots, diagnostics = scan_local_mirror(path, component, architecture)
    for message in diagnostics:
        log.warning("%s", message)
    return snapshots


def snapshots_by_release(snapshots: Iterable[MirrorSnapshot]) -> dict[str, list[MirrorSnapshot]]:
    out: dict[str, list[MirrorSnapshot]] = {}
    for snap in sorted(snapshots, key=lambda s: (s.key.release, s.key.date)):
        out.setdefault(snap.key.release, []).append(snap)
    return out
