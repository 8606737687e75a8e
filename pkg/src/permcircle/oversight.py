"""Community-scope read queries: app listing with install counts, per-member
exploration, and permission grant/deny tallies.

Everything here routes each member's catalog through the one masking rule
before counting, so a hidden installation contributes to a query result
only when its owner is the viewer. The counting functions are pure over a
catalog snapshot, which lets the test suite compare them against an
independent brute-force recomputation.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .catalog import CatalogStore
from .domain import (
    CatalogEntry,
    Decision,
    PermissionDirectory,
    mask_catalog,
)
from .errors import PackageNotInScopeError, TargetNotInCommunityError
from .directory import membership_exists, require_member
from .store import Database


@dataclass(frozen=True)
class CommunityAppRow:
    package: str
    label: str
    installer_count: int
    viewer_installed: bool

    def to_json(self) -> dict:
        return {
            "package": self.package,
            "label": self.label,
            "installer_count": self.installer_count,
            "viewer_installed": self.viewer_installed,
        }


@dataclass(frozen=True)
class PermissionTallyRow:
    permission: str
    description: str
    granted_count: int
    denied_count: int
    total: int

    def to_json(self) -> dict:
        return {
            "permission": self.permission,
            "description": self.description,
            "granted_count": self.granted_count,
            "denied_count": self.denied_count,
            "total": self.total,
        }


class TallyFilter(str, Enum):
    ALL = "all"
    GRANTED = "granted"
    DENIED = "denied"


def community_app_rows(
    catalogs: Mapping[str, Sequence[CatalogEntry]], viewer: str
) -> list[CommunityAppRow]:
    """Union of every member's catalog as the viewer is allowed to see it.

    installer_count counts members whose installation is visible to this
    viewer, which includes the viewer's own hidden apps. When installers
    disagree on an app's label the lexicographically smallest wins, keeping
    the row independent of member ordering. Rows sort by descending count,
    then label, then package.
    """
    own_packages = {e.package for e in catalogs.get(viewer, ())}
    counts: Counter[str] = Counter()
    labels: defaultdict[str, list[str]] = defaultdict(list)
    for owner, entries in catalogs.items():
        for entry in mask_catalog(entries, viewer_is_owner=(viewer == owner)):
            counts[entry.package] += 1
            labels[entry.package].append(entry.label)
    rows = [
        CommunityAppRow(
            package=pkg,
            label=min(labels[pkg]),
            installer_count=counts[pkg],
            viewer_installed=pkg in own_packages,
        )
        for pkg in counts
    ]
    rows.sort(key=lambda r: (-r.installer_count, r.label, r.package))
    return rows


def tally_rows(
    catalogs: Mapping[str, Sequence[CatalogEntry]],
    viewer: str,
    package: str,
    scope_member: str | None,
    permissions: PermissionDirectory,
) -> list[PermissionTallyRow]:
    """Grant/deny counts for one app over the viewer-visible installations.

    ``total`` is the number of in-scope visible installations of the app,
    not the community size, so granted + denied never exceeds it. Rows
    cover the union of permission names those installations request,
    sorted by name.
    """
    members = [scope_member] if scope_member is not None else list(catalogs)
    installs: list[CatalogEntry] = []
    for member in members:
        for entry in mask_catalog(
            catalogs.get(member, ()), viewer_is_owner=(viewer == member)
        ):
            if entry.package == package:
                installs.append(entry)
    if not installs:
        raise PackageNotInScopeError(package)
    total = len(installs)
    names = sorted({s.permission for e in installs for s in e.permissions})
    rows = []
    for name in names:
        granted = sum(1 for e in installs if e.decision_for(name) is Decision.GRANTED)
        denied = sum(1 for e in installs if e.decision_for(name) is Decision.DENIED)
        rows.append(
            PermissionTallyRow(
                permission=name,
                description=permissions.describe(name),
                granted_count=granted,
                denied_count=denied,
                total=total,
            )
        )
    return rows


def filter_tally(
    rows: Sequence[PermissionTallyRow], tally_filter: TallyFilter
) -> list[PermissionTallyRow]:
    if tally_filter is TallyFilter.GRANTED:
        return [r for r in rows if r.granted_count >= 1]
    if tally_filter is TallyFilter.DENIED:
        return [r for r in rows if r.denied_count >= 1]
    return list(rows)


class OversightService:
    """Membership-guarded queries over a consistent catalog snapshot."""

    def __init__(self, db: Database, catalogs: CatalogStore, permissions: PermissionDirectory):
        self._db = db
        self._catalogs = catalogs
        self._permissions = permissions

    def _community_catalogs(self, conn, community_id: str) -> dict[str, list[CatalogEntry]]:
        member_ids = [
            r["member_id"]
            for r in conn.execute(
                "SELECT member_id FROM memberships WHERE community_id = ?",
                (community_id,),
            ).fetchall()
        ]
        return self._catalogs.load_all(conn, member_ids)

    def community_apps(self, caller_id: str, community_id: str) -> list[CommunityAppRow]:
        with self._db.read() as conn:
            require_member(conn, caller_id, community_id)
            catalogs = self._community_catalogs(conn, community_id)
        return community_app_rows(catalogs, caller_id)

    def member_apps(
        self, caller_id: str, community_id: str, target_member: str
    ) -> list[CatalogEntry]:
        with self._db.read() as conn:
            require_member(conn, caller_id, community_id)
            if not membership_exists(conn, target_member, community_id):
                raise TargetNotInCommunityError(target_member, community_id)
            entries = self._catalogs.load_all(conn, [target_member])[target_member]
        return mask_catalog(entries, viewer_is_owner=(caller_id == target_member))

    def permission_tally(
        self,
        caller_id: str,
        community_id: str,
        package: str,
        scope_member: str | None = None,
        tally_filter: TallyFilter = TallyFilter.ALL,
    ) -> list[PermissionTallyRow]:
        with self._db.read() as conn:
            require_member(conn, caller_id, community_id)
            if scope_member is not None and not membership_exists(
                conn, scope_member, community_id
            ):
                raise TargetNotInCommunityError(scope_member, community_id)
            catalogs = self._community_catalogs(conn, community_id)
        rows = tally_rows(catalogs, caller_id, package, scope_member, self._permissions)
        return filter_tally(rows, tally_filter)
