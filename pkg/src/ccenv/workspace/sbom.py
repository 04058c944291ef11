"""SBOM documents describing a workspace's pinned closure.

Schema (keys sorted on output)::

    {"bomFormat": "ccenv-sbom", "specVersion": 1,
     "metadata": {"tool": {...}, "created": ISO-8601 UTC, "root_package", "release"},
     "components": [{"name", "version", "release", "download_path",
                     "sha256", "size", "depends": [...]}, ...]}
"""

from __future__ import annotations

import datetime as dt
import json
import os
from pathlib import Path
from typing import Union

from ..errors import WorkspaceError
from .resolver import Pin, ResolutionPlan
from ..version import parse_version

SBOM_NAME = "sbom.json"
FORMAT = "ccenv-sbom"


def creation_time(default: dt.date | dt.datetime | None = None) -> str:
    """Timestamp for a new document: SOURCE_DATE_EPOCH, else ``default``, else the epoch."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        stamp = dt.datetime.fromtimestamp(int(epoch), dt.timezone.utc)
    elif isinstance(default, dt.datetime):
        stamp = default.astimezone(dt.timezone.utc) if default.tzinfo else default.replace(tzinfo=dt.timezone.utc)
    elif isinstance(default, dt.date):
        stamp = dt.datetime(default.year, default.month, default.day, tzinfo=dt.timezone.utc)
    else:
        stamp = dt.datetime(1970, 1, 1, tzinfo=dt.timezone.utc)
    return stamp.strftime("%Y-%m-%dT%H:%M:%SZ")


def sbom_document(plan: ResolutionPlan, created: str) -> dict:
    if not plan.complete:
        raise WorkspaceError("cannot describe an incomplete plan")
    from .. import __version__

    return {
        "bomFormat": FORMAT,
        "specVersion": 1,
        "metadata": {"tool": {"name": "ccenv", "version": __version__}, "created": created,
                     "root_package": plan.root_package, "release": plan.target_release},
        "components": [{"name": p.name, "version": str(p.version), "release": p.release,
                        "download_path": p.mirror_path, "sha256": p.sha256, "size": p.size,
                        "depends": list(p.depends)} for p in plan.pins],
    }


def render_sbom(document: dict) -> str:
    return json.dumps(document, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def emit_sbom(plan: ResolutionPlan, workspace: Union[str, Path], created: str | None = None) -> Path:
    path = Path(workspace) / SBOM_NAME
    path.write_text(render_sbom(sbom_document(plan, created or creation_time())), encoding="utf-8")
    return path


def load_sbom(path: Union[str, Path]) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / SBOM_NAME
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise WorkspaceError(f"cannot read SBOM {path}: {exc}") from exc
    if doc.get("bomFormat") != FORMAT or not isinstance(doc.get("components"), list):
        raise WorkspaceError(f"{path} is not a ccenv SBOM")
    return doc


def plan_from_sbom(document: dict) -> ResolutionPlan:
    meta = document["metadata"]
    pins = [Pin(c["name"], parse_version(c["version"]), c["release"], c.get("download_path"),
                c.get("sha256"), c.get("size"), tuple(c.get("depends") or ())) for c in document["components"]]
    return ResolutionPlan(meta["root_package"], meta["release"], pins)
