"""Dependency, compatibility and vulnerability analysis for fixed-release Debian archives,
plus an installer for isolated per-application workspaces."""

__version__ = "0.1.0"

from .version import DebVersion, compare_versions, parse_version  # noqa: E402

__all__ = ["DebVersion", "compare_versions", "parse_version", "__version__"]
