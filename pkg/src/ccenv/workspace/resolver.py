"""Dependency closure against a single release index."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

from ..compat import ReleaseInventory
from ..control import DependencyAtom, DependencyClause, PackageRecord
from ..errors import PackageNotFoundError, ResolutionIncompleteError, WorkspaceError
from ..version import DebVersion, parse_version, satisfies


@dataclass(frozen=True)
class Pin:
    name: str
    version: DebVersion
    release: str
    mirror_path: str | None = None
    sha256: str | None = None
    size: int | None = None
    depends: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"name": self.name, "version": str(self.version), "release": self.release,
                "mirror_path": self.mirror_path, "sha256": self.sha256, "size": self.size,
                "depends": list(self.depends)}

    @classmethod
    def from_dict(cls, data: dict) -> "Pin":
        return cls(data["name"], parse_version(data["version"]), data["release"], data.get("mirror_path"),
                   data.get("sha256"), data.get("size"), tuple(data.get("depends") or ()))


@dataclass
class ResolutionPlan:
    root_package: str
    target_release: str
    pins: list[Pin]
    unresolved: list[DependencyAtom] = field(default_factory=list)

    def __post_init__(self):
        releases = {p.release for p in self.pins}
        if releases - {self.target_release}:
            raise WorkspaceError(f"mixed-release plan: {sorted(releases)} (target {self.target_release})")
        names = [p.name for p in self.pins]
        if len(names) != len(set(names)):
            raise WorkspaceError("a plan may pin each package name only once")

    @property
    def complete(self) -> bool:
        return not self.unresolved

    def pin(self, name: str) -> Pin:
        for p in self.pins:
            if p.name == name:
                return p
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"root_package": self.root_package, "target_release": self.target_release,
                "pins": [p.to_dict() for p in self.pins], "unresolved": [str(a) for a in self.unresolved]}

    @classmethod
    def from_dict(cls, data: dict) -> "ResolutionPlan":
        if data.get("unresolved"):
            raise WorkspaceError("stored plan has unresolved dependencies")
        return cls(data["root_package"], data["target_release"], [Pin.from_dict(p) for p in data["pins"]])


Chooser = Callable[[DependencyClause, Sequence[str]], str]


@dataclass(frozen=True)
class ResolvePolicy:
    """How to pick among satisfiable alternatives.

    ``choose`` receives the clause and the candidate package names in
    alternative order and returns one; the default takes the first.
    """

    choose: Chooser | None = None
    include_recommends: bool = False

    def pick(self, clause: DependencyClause, candidates: Sequence[str]) -> str:
        if self.choose is None:
            return candidates[0]
        choice = self.choose(clause, candidates)
        if choice not in candidates:
            raise ValueError(f"policy chose {choice!r}, not one of {list(candidates)}")
        return choice


def _satisfied_by(atom: DependencyAtom, pinned: dict[str, PackageRecord]) -> str | None:
    rec = pinned.get(atom.package)
    if rec is not None and (atom.constraint is None or satisfies(rec.version, atom.constraint)):
        return rec.name
    if atom.constraint is None:
        for name in sorted(pinned):
            if any(p.package == atom.package for p in pinned[name].provides):
                return name
    return None


def _candidates(atom: DependencyAtom, index: ReleaseInventory) -> list[str]:
    rec = index.packages.get(atom.package)
    if rec is not None and (atom.constraint is None or satisfies(rec.version, atom.constraint)):
        return [rec.name]
    if atom.constraint is None and index.is_provided(atom.package):
        return sorted(index.providers[atom.package])
    return []


def resolve(package: str, index: ReleaseInventory, policy: ResolvePolicy | None = None,
            strict: bool = True) -> ResolutionPlan:
    """Breadth-first closure of Pre-Depends and Depends from ``package`` within one release.

    The host system is never consulted. With ``strict`` an incomplete
    closure raises ResolutionIncompleteError; otherwise the plan lists the
    unresolved atoms.
    """
    policy = policy or ResolvePolicy()
    root = index.packages.get(package)
    if root is None:
        raise PackageNotFoundError(f"{package} is not in the {index.release} index")
    pinned: dict[str, PackageRecord] = {root.name: root}
    order = [root.name]
    unresolved: list[DependencyAtom] = []
    queue = deque([root.name])
    while queue:
        rec = pinned[queue.popleft()]
        for clause in rec.relationships(policy.include_recommends):
            if any(_satisfied_by(atom, pinned) for atom in clause.alternatives):
                continue
            candidates: list[str] = []
            for atom in clause.alternatives:
                for name in _candidates(atom, index):
                    if name not in candidates:
                        candidates.append(name)
            if not candidates:
                unresolved.extend(a for a in clause.alternatives if a not in unresolved)
                continue
            chosen = policy.pick(clause, candidates)
            pinned[chosen] = index.packages[chosen]
            order.append(chosen)
            queue.append(chosen)

    pins = []
    for name in order:
        rec = pinned[name]
        direct = []
        for clause in rec.relationships(policy.include_recommends):
            for atom in clause.alternatives:
                hit = _satisfied_by(atom, pinned)
                if hit is not None:
                    if hit not in direct and hit != name:
                        direct.append(hit)
                    break
        pins.append(Pin(rec.name, rec.version, index.release, rec.filename, rec.sha256, rec.size, tuple(direct)))
    plan = ResolutionPlan(package, index.release, pins, unresolved)
    if strict and unresolved:
        raise ResolutionIncompleteError(package, unresolved)
    return plan


def unsatisfied_clauses(plan: ResolutionPlan, index: ReleaseInventory,
                        include_recommends: bool = False) -> list[tuple[str, DependencyClause]]:
    """Clauses of pinned packages that no pin satisfies."""
    pinned = {p.name: index.packages[p.name] for p in plan.pins}
    missing = []
    for name, rec in pinned.items():
        for clause in rec.relationships(include_recommends):
            if not any(_satisfied_by(atom, pinned) for atom in clause.alternatives):
                missing.append((name, clause))
    return missing
