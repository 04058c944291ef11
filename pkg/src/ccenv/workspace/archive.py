"""Reading ``.deb`` archives and extracting their payload under a root directory."""

from __future__ import annotations

import io
import os
import posixpath
import tarfile
from dataclasses import dataclass
from pathlib import Path
from typing import Union

from debian.arfile import ArError, ArFile

from ..control import Paragraph, parse_paragraphs
from ..errors import ExtractionError

_TAR_MODES = {"": "r:", ".gz": "r:gz", ".xz": "r:xz", ".bz2": "r:bz2"}


@dataclass
class DebMembers:
    debian_binary: bytes
    control_name: str
    control: bytes
    data_name: str
    data: bytes


def read_deb(path: Union[str, Path]) -> DebMembers:
    try:
        ar = ArFile(str(path))
        names = ar.getnames()
        control_name = next((n for n in names if n.startswith("control.tar")), None)
        data_name = next((n for n in names if n.startswith("data.tar")), None)
        if "debian-binary" not in names or control_name is None or data_name is None:
            raise ExtractionError(f"{path}: missing debian-binary, control.tar.* or data.tar.* member")
        members = DebMembers(ar.getmember("debian-binary").read(), control_name,
                             ar.getmember(control_name).read(), data_name, ar.getmember(data_name).read())
    except (ArError, OSError, ValueError) as exc:
        raise ExtractionError(f"{path}: not a readable ar archive ({exc})") from exc
    if not members.debian_binary.startswith(b"2."):
        raise ExtractionError(f"{path}: unsupported deb format {members.debian_binary.strip()!r}")
    return members


def _open_tar(name: str, payload: bytes) -> tarfile.TarFile:
    suffix = name[len(name.split(".tar", 1)[0]) + 4:]
    if suffix == ".zst":
        try:
            import zstandard
        except ImportError:
            raise ExtractionError(f"{name}: zstd members need the 'zstandard' package") from None
        try:
            payload = zstandard.ZstdDecompressor().stream_reader(io.BytesIO(payload)).read()
        except zstandard.ZstdError as exc:
            raise ExtractionError(f"{name}: {exc}") from exc
        suffix = ""
    mode = _TAR_MODES.get(suffix)
    if mode is None:
        raise ExtractionError(f"{name}: unsupported compression {suffix!r}")
    try:
        return tarfile.open(fileobj=io.BytesIO(payload), mode=mode)
    except (tarfile.TarError, EOFError, OSError) as exc:
        raise ExtractionError(f"{name}: {exc}") from exc


def deb_control(path: Union[str, Path]) -> Paragraph:
    """The ``control`` paragraph of a ``.deb`` (read only, never extracted)."""
    members = read_deb(path)
    with _open_tar(members.control_name, members.control) as tar:
        for member in tar.getmembers():
            if posixpath.normpath(member.name) == "control":
                fh = tar.extractfile(member)
                paragraphs = parse_paragraphs(fh.read().decode("utf-8", errors="replace"))
                if paragraphs:
                    return paragraphs[0]
    raise ExtractionError(f"{path}: control member has no control file")


def _clean_name(name: str) -> str:
    """Archive member name relative to the root, or raise on absolute/escaping names."""
    if name.startswith("/"):
        raise ExtractionError(f"absolute path in archive: {name!r}")
    parts = [p for p in name.split("/") if p not in ("", ".")]
    if ".." in parts:
        raise ExtractionError(f"path escapes the root: {name!r}")
    return "/".join(parts)


def _inside(root: str, path: str) -> bool:
    return path == root or path.startswith(root + os.sep)


def list_data(path: Union[str, Path]) -> list[tarfile.TarInfo]:
    members = read_deb(path)
    with _open_tar(members.data_name, members.data) as tar:
        return tar.getmembers()


def extract_archive(deb_file: Union[str, Path], dest_root: Union[str, Path]) -> list[str]:
    """Extract the data member of ``deb_file`` under ``dest_root``.

    Returns the extracted relative paths (directories end with ``/``).
    Absolute or ``..`` names, hard links leaving the archive and writes
    through symlinks that resolve outside the root are rejected; on any
    error everything this call created is removed again.
    """
    members = read_deb(deb_file)
    root = Path(dest_root)
    root.mkdir(parents=True, exist_ok=True)
    real_root = os.path.realpath(root)
    created: list[Path] = []
    extracted: list[str] = []
    with _open_tar(members.data_name, members.data) as tar:
        try:
            infos = tar.getmembers()
        except (tarfile.TarError, EOFError, OSError) as exc:
            raise ExtractionError(f"{deb_file}: {exc}") from exc
        plan = []
        for info in infos:
            rel = _clean_name(info.name)
            if info.islnk():
                _clean_name(info.linkname)
            if not rel or not (info.isfile() or info.isdir() or info.issym() or info.islnk()):
                continue  # root entry, devices and fifos
            plan.append((rel, info))
        try:
            for rel, info in plan:
                target = root / rel
                parent = os.path.realpath(target.parent)
                if not _inside(real_root, parent):
                    raise ExtractionError(f"{info.name!r} would be written outside the root via a symlink")
                # record what is new so a failure can be rolled back
                rel_path = Path(rel)
                for anc in reversed([rel_path, *rel_path.parents]):
                    if anc == Path("."):
                        continue
                    anc_path = root / anc
                    if not os.path.lexists(anc_path) and anc_path not in created:
                        created.append(anc_path)
                # never write through an existing link or onto an existing non-directory
                if not info.isdir() and (os.path.islink(target)
                                         or (os.path.lexists(target) and not os.path.isdir(target))):
                    os.unlink(target)
                clean = info.replace(name=rel, uid=None, gid=None, uname=None, gname=None, deep=False)
                if info.islnk():
                    clean = clean.replace(linkname=_clean_name(info.linkname), deep=False)
                tar.extract(clean, path=root, set_attrs=not info.issym(), filter="tar")
                extracted.append(rel + "/" if info.isdir() else rel)
        except (ExtractionError, tarfile.TarError, OSError) as exc:
            for path in reversed(created):
                try:
                    if path.is_symlink() or path.is_file():
                        path.unlink()
                    elif path.is_dir():
                        path.rmdir()
                except OSError:
                    pass
            if isinstance(exc, ExtractionError):
                raise
            raise ExtractionError(f"{deb_file}: {exc}") from exc
    return extracted
