"""End-to-end workspace installation, replay from an SBOM, and removal."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import stat
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union
from urllib.parse import quote, unquote, urlparse

import requests

from ..compat import ReleaseInventory
from ..errors import CorruptArtifactError, DownloadError, FetchError, WorkspaceError
from ..snapshot import http_get, make_session
from .archive import extract_archive
from .environment import LAUNCHER_NAME, DesktopEntry, create_environment, find_entry_command
from .resolver import Pin, ResolutionPlan, ResolvePolicy, resolve
from .sbom import SBOM_NAME, creation_time, emit_sbom, load_sbom, plan_from_sbom

log = logging.getLogger(__name__)

MARKER_NAME = ".ccenv-manifest"


@dataclass
class Workspace:
    root_dir: Path
    plan: ResolutionPlan
    launcher: Path
    sbom: Path
    entry_command: str | None = None
    desktop_entries: list[str] = field(default_factory=list)


# -- downloads ----------------------------------------------------------------------


def _local_base(base: str) -> Path | None:
    if base.startswith("file://"):
        return Path(unquote(urlparse(base).path))
    if "://" not in base:
        return Path(base)
    return None


def _verify(pin: Pin, data: bytes) -> None:
    if pin.size is not None and len(data) != pin.size:
        raise CorruptArtifactError(f"{pin.name}: size {len(data)} != {pin.size}")
    if pin.sha256 and hashlib.sha256(data).hexdigest() != pin.sha256:
        raise CorruptArtifactError(f"{pin.name}: sha256 mismatch")


def _cache_path(cache_dir: Path, pin: Pin) -> Path:
    if pin.sha256:
        return cache_dir / "debs" / pin.sha256[:2] / f"{pin.sha256}.deb"
    # without a checksum the entry is keyed by where it came from
    return cache_dir / "debs" / "unverified" / quote(f"{pin.release}/{pin.mirror_path}", safe="")


def fetch_pin(pin: Pin, base: str, cache_dir: Union[str, Path], session: requests.Session | None = None) -> Path:
    if not pin.mirror_path:
        raise FetchError(f"{pin.name}: no mirror path (Filename) known", retriable=False)
    target = _cache_path(Path(cache_dir), pin)
    if target.is_file():
        try:
            _verify(pin, target.read_bytes())
            return target
        except CorruptArtifactError:
            log.warning("discarding corrupt cached archive %s", target)
            target.unlink()
    local = _local_base(base)
    if local is not None:
        try:
            data = (local / pin.mirror_path).read_bytes()
        except OSError as exc:
            raise FetchError(f"{pin.name}: {exc}", str(local / pin.mirror_path), retriable=False) from exc
    else:
        data = http_get(session or make_session(), f"{base.rstrip('/')}/{pin.mirror_path}")
    _verify(pin, data)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_name(f".{target.name}.{os.getpid()}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, target)
    return target


def download(plan: ResolutionPlan, base: str, cache_dir: Union[str, Path],
             session: requests.Session | None = None, jobs: int = 4) -> dict[str, Path]:
    """Fetch one archive per pin; every failure is collected before raising DownloadError."""
    if not plan.complete:
        raise WorkspaceError("refusing to download an incomplete plan")
    session = session if session is not None or _local_base(base) is not None else make_session()
    results: dict[str, Path] = {}
    failures: dict[str, Exception] = {}

    def one(pin: Pin):
        try:
            results[pin.name] = fetch_pin(pin, base, cache_dir, session)
        except (FetchError, CorruptArtifactError, OSError) as exc:
            failures[pin.name] = exc

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        list(pool.map(one, plan.pins))
    if failures:
        raise DownloadError(failures)
    return {p.name: results[p.name] for p in plan.pins}


# -- install ------------------------------------------------------------------------


def _check_target(root: Path) -> None:
    if root.is_symlink() or (root.exists() and (not root.is_dir() or any(root.iterdir()))):
        raise WorkspaceError(f"{root} exists and is not an empty directory")


def _write_marker(root: Path, plan: ResolutionPlan, entry: str | None, entries: list[str], created: str) -> None:
    doc = {"plan": plan.to_dict(), "entry_command": entry, "desktop_entries": entries, "created": created}
    (root / MARKER_NAME).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def materialize(plan: ResolutionPlan, base: str, root_dir: Union[str, Path], cache_dir: Union[str, Path],
                entry_command: str | None = None, created: str | None = None,
                session: requests.Session | None = None, jobs: int = 4) -> Workspace:
    """Download, extract and wire up ``plan`` in a fresh ``root_dir``.

    Nothing is written under ``root_dir`` until every archive is in the
    cache; a failure after that removes the partially built workspace.
    """
    root = Path(root_dir)
    _check_target(root)
    archives = download(plan, base, cache_dir, session, jobs)
    existed = root.exists()
    root.mkdir(parents=True, exist_ok=True)
    try:
        for pin in plan.pins:
            extract_archive(archives[pin.name], root)
        choice = find_entry_command(root)
        entry = entry_command or choice.command
        if entry is None:
            log.warning("%s: no entry command found; launcher will run its arguments", plan.root_package)
        created = created or creation_time()
        libc = next((p.version.upstream for p in plan.pins if p.name == "libc6"), None)
        launcher = create_environment(root, entry, f"{plan.root_package} ({plan.target_release})", libc)
        sbom = emit_sbom(plan, root, created)
        entries = [e.path for e in choice.entries]
        _write_marker(root, plan, entry, entries, created)
    except BaseException:
        if existed:
            for child in root.iterdir():
                _remove_path(child)
        else:
            shutil.rmtree(root, ignore_errors=True)
        raise
    return Workspace(root, plan, launcher, sbom, entry, entries)


def install(package: str, index: ReleaseInventory, base: str, root_dir: Union[str, Path],
            cache_dir: Union[str, Path], policy: ResolvePolicy | None = None, entry_command: str | None = None,
            created: str | None = None, session: requests.Session | None = None, jobs: int = 4) -> Workspace:
    """Resolve ``package`` against ``index`` and build a workspace from ``base`` (path, file:// or http)."""
    plan = resolve(package, index, policy)
    return materialize(plan, base, root_dir, cache_dir, entry_command,
                       created or creation_time(index.at_date), session, jobs)


def install_from_sbom(sbom_path: Union[str, Path], base: str, root_dir: Union[str, Path],
                      cache_dir: Union[str, Path], session: requests.Session | None = None,
                      jobs: int = 4) -> Workspace:
    """Rebuild a workspace from the pins recorded in an SBOM."""
    doc = load_sbom(sbom_path)
    return materialize(plan_from_sbom(doc), base, root_dir, cache_dir,
                       created=doc["metadata"].get("created"), session=session, jobs=jobs)


def open_workspace(root_dir: Union[str, Path]) -> Workspace:
    root = Path(root_dir)
    marker = root / MARKER_NAME
    if not marker.is_file():
        raise WorkspaceError(f"{root} is not a ccenv workspace")
    doc = json.loads(marker.read_text(encoding="utf-8"))
    return Workspace(root, ResolutionPlan.from_dict(doc["plan"]), root / LAUNCHER_NAME, root / SBOM_NAME,
                     doc.get("entry_command"), list(doc.get("desktop_entries") or []))


def run_workspace(root_dir: Union[str, Path], args: Sequence[str] = ()) -> int:
    ws = open_workspace(root_dir)
    return subprocess.call(["/bin/sh", str(ws.launcher), *args])


def _remove_path(path: Path) -> None:
    if path.is_dir() and not path.is_symlink():
        shutil.rmtree(path)
    else:
        path.unlink()


def remove_workspace(root_dir: Union[str, Path]) -> bool:
    """Delete a workspace. Returns False if it was already gone."""
    root = Path(root_dir)
    if not os.path.lexists(root):
        return False
    if root.is_symlink() or not (root / MARKER_NAME).is_file():
        raise WorkspaceError(f"refusing to remove {root}: no {MARKER_NAME} marker")
    shutil.rmtree(root)
    return True


def tree_digest(root_dir: Union[str, Path]) -> str:
    """SHA-256 over paths, kinds, permission bits, contents and link targets (not timestamps)."""
    root = Path(root_dir)
    h = hashlib.sha256()
    entries = []
    for dirpath, dirs, files in os.walk(root):
        for name in dirs + files:
            entries.append(Path(dirpath, name))
    for path in sorted(entries, key=lambda p: p.relative_to(root).as_posix()):
        rel = path.relative_to(root).as_posix()
        st = path.lstat()
        if stat.S_ISLNK(st.st_mode):
            record = f"L {rel} -> {os.readlink(path)}"
        elif stat.S_ISDIR(st.st_mode):
            record = f"D {rel} {stat.S_IMODE(st.st_mode):o}"
        else:
            record = f"F {rel} {stat.S_IMODE(st.st_mode):o} {hashlib.sha256(path.read_bytes()).hexdigest()}"
        h.update(record.encode("utf-8") + b"\n")
    return h.hexdigest()


__all__ = [
    "Workspace",
    "DesktopEntry",
    "download",
    "fetch_pin",
    "install",
    "install_from_sbom",
    "materialize",
    "open_workspace",
    "remove_workspace",
    "run_workspace",
    "tree_digest",
]
