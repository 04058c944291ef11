"""Launcher script generation and ``.desktop`` entry parsing."""

from __future__ import annotations

import configparser
import logging
import os
import re
import shlex
import stat
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from ..errors import DesktopEntryError

log = logging.getLogger(__name__)

LAUNCHER_NAME = "run.sh"
EXEC_DIRS = ("usr/local/bin", "usr/bin", "bin", "usr/local/sbin", "usr/sbin", "sbin", "usr/games")
_SHARED_OBJECT = re.compile(r"\.so(\.\d+)*$")
_FIELD_CODE = re.compile(r"%[a-zA-Z]")
_LIBC_RELEASE = re.compile(r"^(\d+)\.(\d+)")


def library_dirs(root: Union[str, Path]) -> list[str]:
    """Relative directories under ``root`` holding shared objects, sorted."""
    root = Path(root)
    found = set()
    for dirpath, _dirs, files in os.walk(root):
        if any(_SHARED_OBJECT.search(name) for name in files):
            rel = Path(dirpath).relative_to(root).as_posix()
            if rel != ".":
                found.add(rel)
    return sorted(found)


def exec_dirs(root: Union[str, Path]) -> list[str]:
    root = Path(root)
    return [d for d in EXEC_DIRS if (root / d).is_dir() and any((root / d).iterdir())]


def _search_path(var: str, dirs: list[str]) -> list[str]:
    if not dirs:
        return []
    joined = ":".join(f"$CCENV_ROOT/{d}" for d in dirs)
    # workspace entries first, the caller's value (if any) after
    return [f'{var}="{joined}${{{var}:+:${var}}}"', f"export {var}"]


def _exec_line(root: Path, command: str) -> str:
    argv = shlex.split(command)
    program, rest = argv[0], argv[1:]
    if program.startswith("/") and os.path.lexists(root / program.lstrip("/")):
        head = '"$CCENV_ROOT"' + shlex.quote(program)
    else:
        head = shlex.quote(program)
    return " ".join([head, *(shlex.quote(a) for a in rest), '"$@"'])


def _libc_check(libc_version: str) -> list[str]:
    """Shell lines warning when the host C library is older than the workspace's.

    Libraries built against a newer glibc fail to load under an older host
    dynamic linker; this is reported, not worked around.
    """
    m = _LIBC_RELEASE.match(libc_version)
    if not m:
        return []
    want = f"{m.group(1)}.{m.group(2)}"
    return ["ccenv_host_libc=$(getconf GNU_LIBC_VERSION 2>/dev/null | awk '{print $2}')",
            'if [ -n "$ccenv_host_libc" ] && awk -v w="' + want + '" -v h="$ccenv_host_libc" '
            "'BEGIN { split(w, a, \".\"); split(h, b, \".\"); "
            "exit !(a[1] + 0 > b[1] + 0 || (a[1] + 0 == b[1] + 0 && a[2] + 0 > b[2] + 0)) }'; then",
            f'    echo "ccenv: warning: workspace expects glibc {want} but the host has $ccenv_host_libc;'
            ' the host dynamic linker may refuse to load it" >&2',
            "fi"]


def launcher_text(root: Union[str, Path], entry_command: str | None = None, title: str | None = None,
                  libc_version: str | None = None) -> str:
    root = Path(root)
    libs, bins = library_dirs(root), exec_dirs(root)
    lines = ["#!/bin/sh", f"# ccenv launcher{' for ' + title if title else ''}",
             'CCENV_ROOT=$(cd "$(dirname "$0")" && pwd -P)', "export CCENV_ROOT"]
    if not libs and not bins:
        log.warning("%s: no library or executable directories found", root)
        lines.append('echo "ccenv: warning: workspace has no library or executable directories" >&2')
    if libc_version:
        lines += _libc_check(libc_version)
    lines += _search_path("LD_LIBRARY_PATH", libs)
    lines += _search_path("PATH", bins)
    if entry_command:
        lines.append("exec " + _exec_line(root, entry_command))
    else:
        lines += ['if [ "$#" -eq 0 ]; then',
                  '    echo "ccenv: no entry command; pass a command to run" >&2',
                  "    exit 1",
                  "fi",
                  'exec "$@"']
    return "\n".join(lines) + "\n"


def create_environment(root_dir: Union[str, Path], entry_command: str | None = None,
                       title: str | None = None, libc_version: str | None = None) -> Path:
    """Write ``run.sh`` at the workspace root and return its path.

    All paths in the script are relative to the script's own location, so a
    launcher never refers to another workspace and the tree can be moved.
    """
    root = Path(root_dir)
    path = root / LAUNCHER_NAME
    path.write_text(launcher_text(root, entry_command, title, libc_version), encoding="utf-8")
    path.chmod(path.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
    return path


# -- desktop entries ---------------------------------------------------------------


@dataclass(frozen=True)
class DesktopEntry:
    path: str
    name: str | None
    command: str | None
    try_exec: str | None = None


def strip_field_codes(exec_value: str) -> str:
    out = []
    for token in shlex.split(exec_value):
        cleaned = _FIELD_CODE.sub("", token.replace("%%", "\0")).replace("\0", "%")
        if cleaned or not _FIELD_CODE.fullmatch(token):
            out.append(cleaned)
    return shlex.join(out)


def parse_desktop_entry(file: Union[str, Path]) -> DesktopEntry:
    """Parse a ``.desktop`` file. ``command`` is None when there is no Exec key."""
    parser = configparser.ConfigParser(interpolation=None, strict=False, delimiters=("=",),
                                       comment_prefixes=("#",), inline_comment_prefixes=None)
    parser.optionxform = str
    try:
        parser.read_string(Path(file).read_text(encoding="utf-8", errors="replace"), source=str(file))
    except configparser.Error as exc:
        raise DesktopEntryError(f"{file}: {exc}") from exc
    if not parser.has_section("Desktop Entry"):
        raise DesktopEntryError(f"{file}: no [Desktop Entry] group")
    group = parser["Desktop Entry"]
    raw = group.get("Exec", "").strip()
    try:
        command = strip_field_codes(raw) if raw else None
    except ValueError as exc:
        raise DesktopEntryError(f"{file}: bad Exec value {raw!r}: {exc}") from exc
    return DesktopEntry(str(file), group.get("Name"), command or None, group.get("TryExec") or None)


def _try_exec_ok(root: Path, program: str) -> bool:
    if program.startswith("/"):
        return os.path.lexists(root / program.lstrip("/"))
    return any(os.path.lexists(root / d / program) for d in EXEC_DIRS)


@dataclass
class EntryChoice:
    command: str | None
    chosen: str | None
    entries: list[DesktopEntry] = field(default_factory=list)
    skipped: dict[str, str] = field(default_factory=dict)


def find_entry_command(root_dir: Union[str, Path]) -> EntryChoice:
    """Pick the entry command from the workspace's ``.desktop`` files.

    Files are visited in lexicographic path order; the first one with a
    usable Exec wins. Every file is recorded.
    """
    root = Path(root_dir)
    apps = root / "usr" / "share" / "applications"
    choice = EntryChoice(None, None)
    if not apps.is_dir():
        return choice
    for path in sorted(apps.rglob("*.desktop"), key=lambda p: p.relative_to(root).as_posix()):
        rel = path.relative_to(root).as_posix()
        try:
            entry = parse_desktop_entry(path)
        except DesktopEntryError as exc:
            choice.skipped[rel] = str(exc)
            continue
        entry = DesktopEntry(rel, entry.name, entry.command, entry.try_exec)
        choice.entries.append(entry)
        if choice.command is not None:
            continue
        if entry.command is None:
            choice.skipped[rel] = "no Exec key"
        elif entry.try_exec and not _try_exec_ok(root, entry.try_exec):
            choice.skipped[rel] = f"TryExec {entry.try_exec} not in workspace"
        else:
            choice.command, choice.chosen = entry.command, rel
    return choice
