"""Isolated per-application workspaces built from a single release's mirror."""

from .archive import deb_control, extract_archive, read_deb
from .environment import DesktopEntry, create_environment, find_entry_command, parse_desktop_entry
from .install import (
    MARKER_NAME,
    Workspace,
    download,
    install,
    install_from_sbom,
    materialize,
    open_workspace,
    remove_workspace,
    run_workspace,
    tree_digest,
)
from .resolver import Pin, ResolutionPlan, ResolvePolicy, resolve, unsatisfied_clauses
from .sbom import emit_sbom, load_sbom, plan_from_sbom, sbom_document

__all__ = [
    "DesktopEntry",
    "MARKER_NAME",
    "Pin",
    "ResolutionPlan",
    "ResolvePolicy",
    "Workspace",
    "create_environment",
    "deb_control",
    "download",
    "emit_sbom",
    "extract_archive",
    "find_entry_command",
    "install",
    "install_from_sbom",
    "load_sbom",
    "materialize",
    "open_workspace",
    "parse_desktop_entry",
    "plan_from_sbom",
    "read_deb",
    "remove_workspace",
    "resolve",
    "run_workspace",
    "sbom_document",
    "tree_digest",
    "unsatisfied_clauses",
]
