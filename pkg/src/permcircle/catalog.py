"""Server-side catalog reconciliation.

A device publishes either a full snapshot of its installed apps or a
precomputed diff; both paths converge on the same stored catalog. The diff
engine is pure so it can be checked against a brute-force oracle; the
store-backed service at the bottom owns versioning and per-device
linearization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .domain import CatalogEntry, Decision, PermissionState, Visibility
from .errors import DuplicatePackageError, InvalidDiffError, UnknownPackageError
from .store import Database

# ---------------------------------------------------------------------------
# Snapshot wire format: JSON array of
#   {package, label, visibility, permissions: [{name, decision}]}
# shared by the agent's state file, the PUT /v1/catalog body, and fixtures.
# ---------------------------------------------------------------------------


def entry_to_json(entry: CatalogEntry) -> dict:
    obj: dict = {"package": entry.package, "label": entry.label}
    if entry.visibility is not None:
        obj["visibility"] = entry.visibility.value
    obj["permissions"] = [
        {"name": s.permission, "decision": s.decision.value} for s in entry.permissions
    ]
    return obj


def entry_from_json(obj: Mapping) -> CatalogEntry:
    # Missing visibility means "never explicitly set": new apps default to visible.
    visibility = Visibility(obj.get("visibility", "visible"))
    states = tuple(
        PermissionState(p["name"], Decision(p["decision"]))
        for p in obj.get("permissions", ())
    )
    return CatalogEntry(
        package=obj["package"],
        label=obj["label"],
        visibility=visibility,
        permissions=states,
    )


def snapshot_to_json(entries: Sequence[CatalogEntry]) -> list[dict]:
    return [entry_to_json(e) for e in entries]


def snapshot_from_json(data: object) -> list[CatalogEntry]:
    if not isinstance(data, list):
        raise ValueError("catalog snapshot must be a JSON array")
    return [entry_from_json(obj) for obj in data]


# ---------------------------------------------------------------------------
# Diff model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CatalogDiff:
    """Minimal change set reconciling a snapshot with the stored catalog.

    ``added`` entries are upserts: they carry the full replacement state for
    a package. Label edits and permission removals are expressed this way
    because field-level changes can only add or flip permission states,
    never delete them.
    """

    added: tuple[CatalogEntry, ...] = ()
    removed: tuple[str, ...] = ()
    permission_changes: tuple[tuple[str, PermissionState], ...] = ()
    visibility_changes: tuple[tuple[str, Visibility], ...] = ()

    def is_empty(self) -> bool:
        return not (
            self.added or self.removed or self.permission_changes or self.visibility_changes
        )

    def validate(self) -> None:
        added_packages = [e.package for e in self.added]
        if len(set(added_packages)) != len(added_packages):
            raise InvalidDiffError("a package appears more than once in added")
        overlap = set(added_packages) & set(self.removed)
        if overlap:
            raise InvalidDiffError(
                f"packages present in both added and removed: {sorted(overlap)}"
            )
        for entry in self.added:
            if entry.visibility is None:
                raise InvalidDiffError(
                    f"added entry {entry.package!r} is a masked projection"
                )
        removed = set(self.removed)
        for pkg, _ in self.permission_changes:
            if pkg in removed:
                raise InvalidDiffError(f"permission change references removed {pkg!r}")
        for pkg, visibility in self.visibility_changes:
            if pkg in removed:
                raise InvalidDiffError(f"visibility change references removed {pkg!r}")
            if visibility is None:
                raise InvalidDiffError(f"visibility change for {pkg!r} has no value")

    def to_json(self) -> dict:
        return {
            "added": [entry_to_json(e) for e in self.added],
            "removed": list(self.removed),
            "permission_changes": [
                {"package": pkg, "name": s.permission, "decision": s.decision.value}
                for pkg, s in self.permission_changes
            ],
            "visibility_changes": [
                {"package": pkg, "visibility": v.value}
                for pkg, v in self.visibility_changes
            ],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "CatalogDiff":
        return cls(
            added=tuple(entry_from_json(e) for e in obj.get("added", ())),
            removed=tuple(obj.get("removed", ())),
            permission_changes=tuple(
                (c["package"], PermissionState(c["name"], Decision(c["decision"])))
                for c in obj.get("permission_changes", ())
            ),
            visibility_changes=tuple(
                (c["package"], Visibility(c["visibility"]))
                for c in obj.get("visibility_changes", ())
            ),
        )


@dataclass(frozen=True)
class StoredCatalog:
    """The server's copy of one device's catalog. ``device_key`` is hex."""

    member_id: str
    device_key: str
    entries: Mapping[str, CatalogEntry] = field(default_factory=dict)
    version: int = 0


def compute_diff(
    snapshot: Sequence[CatalogEntry], remote: Mapping[str, CatalogEntry]
) -> CatalogDiff:
    """Diff a device snapshot against the stored entries.

    Applying the result to ``remote`` reproduces the snapshot exactly, and
    nothing is listed whose state did not change.
    """
    local: dict[str, CatalogEntry] = {}
    for entry in snapshot:
        if entry.package in local:
            raise DuplicatePackageError(entry.package)
        local[entry.package] = entry

    added: list[CatalogEntry] = []
    permission_changes: list[tuple[str, PermissionState]] = []
    visibility_changes: list[tuple[str, Visibility]] = []

    for pkg in sorted(local):
        entry = local[pkg]
        old = remote.get(pkg)
        if old is None:
            added.append(entry)
            continue
        if old == entry:
            continue
        old_names = {s.permission for s in old.permissions}
        new_names = {s.permission for s in entry.permissions}
        if entry.label != old.label or not old_names <= new_names:
            added.append(entry)  # wholesale replacement, see class docstring
            continue
        for state in entry.permissions:
            if old.decision_for(state.permission) != state.decision:
                permission_changes.append((pkg, state))
        if entry.visibility != old.visibility:
            visibility_changes.append((pkg, entry.visibility))

    removed = tuple(sorted(pkg for pkg in remote if pkg not in local))
    return CatalogDiff(
        added=tuple(added),
        removed=removed,
        permission_changes=tuple(permission_changes),
        visibility_changes=tuple(visibility_changes),
    )


def apply_diff(remote: StoredCatalog, diff: CatalogDiff) -> StoredCatalog:
    """Apply a diff, bumping the version only when the entries actually change.

    Re-adding an identical entry or re-removing an absent package is a
    no-op, which is what makes applying the same diff twice equivalent to
    applying it once.
    """
    diff.validate()
    entries = dict(remote.entries)
    for entry in diff.added:
        entries[entry.package] = entry
    for pkg in diff.removed:
        entries.pop(pkg, None)
    for pkg, state in diff.permission_changes:
        if pkg not in entries:
            raise InvalidDiffError(
                f"permission change references {pkg!r}, absent after added/removed"
            )
        entries[pkg] = entries[pkg].with_permission(state)
    for pkg, visibility in diff.visibility_changes:
        if pkg not in entries:
            raise InvalidDiffError(
                f"visibility change references {pkg!r}, absent after added/removed"
            )
        entries[pkg] = replace(entries[pkg], visibility=visibility)
    if entries == dict(remote.entries):
        return remote
    return StoredCatalog(
        member_id=remote.member_id,
        device_key=remote.device_key,
        entries=entries,
        version=remote.version + 1,
    )


# ---------------------------------------------------------------------------
# Store-backed service
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyncSummary:
    """What one publish actually changed, as distinct package counts."""

    added: int
    removed: int
    changed: int
    version: int

    def to_json(self) -> dict:
        return {
            "added": self.added,
            "removed": self.removed,
            "changed": self.changed,
            "version": self.version,
        }


def _summarize(
    old: Mapping[str, CatalogEntry], new: Mapping[str, CatalogEntry], version: int
) -> SyncSummary:
    return SyncSummary(
        added=sum(1 for p in new if p not in old),
        removed=sum(1 for p in old if p not in new),
        changed=sum(1 for p in new if p in old and new[p] != old[p]),
        version=version,
    )


class CatalogStore:
    """Per-device catalogs with monotonically increasing versions.

    All mutations run inside one write transaction, so readers never observe
    a half-applied diff.
    """

    def __init__(self, db: Database):
        self._db = db

    def get(self, member_id: str) -> StoredCatalog:
        with self._db.read() as conn:
            return self._load(conn, member_id)

    def _load(self, conn, member_id: str) -> StoredCatalog:
        row = conn.execute(
            "SELECT device_key, version, entries FROM catalogs WHERE member_id = ?",
            (member_id,),
        ).fetchone()
        if row is None:
            return StoredCatalog(member_id=member_id, device_key="", entries={}, version=0)
        entries = {e.package: e for e in snapshot_from_json(json.loads(row["entries"]))}
        return StoredCatalog(
            member_id=member_id,
            device_key=row["device_key"],
            entries=entries,
            version=row["version"],
        )

    def _persist(self, conn, catalog: StoredCatalog, device_key: str) -> None:
        doc = json.dumps(
            snapshot_to_json([catalog.entries[p] for p in sorted(catalog.entries)])
        )
        conn.execute(
            "INSERT INTO catalogs (member_id, device_key, version, entries)"
            " VALUES (?, ?, ?, ?)"
            " ON CONFLICT(member_id) DO UPDATE SET"
            " device_key = excluded.device_key, version = excluded.version,"
            " entries = excluded.entries",
            (catalog.member_id, device_key, catalog.version, doc),
        )

    def replace_snapshot(
        self, member_id: str, device_key: str, snapshot: Sequence[CatalogEntry]
    ) -> SyncSummary:
        """Reconcile a full device snapshot against the stored catalog."""
        with self._db.write() as conn:
            old = self._load(conn, member_id)
            diff = compute_diff(snapshot, old.entries)
            new = apply_diff(old, diff)
            if new.version != old.version:
                self._persist(conn, new, device_key)
            return _summarize(old.entries, new.entries, new.version)

    def apply_member_diff(
        self, member_id: str, device_key: str, diff: CatalogDiff
    ) -> SyncSummary:
        """Apply a device-precomputed diff."""
        with self._db.write() as conn:
            old = self._load(conn, member_id)
            new = apply_diff(old, diff)
            if new.version != old.version:
                self._persist(conn, new, device_key)
            return _summarize(old.entries, new.entries, new.version)

    def set_visibility(
        self, member_id: str, package: str, visibility: Visibility
    ) -> int:
        with self._db.write() as conn:
            old = self._load(conn, member_id)
            entry = old.entries.get(package)
            if entry is None:
                raise UnknownPackageError(package)
            if entry.visibility == visibility:
                return old.version
            new = apply_diff(old, CatalogDiff(visibility_changes=((package, visibility),)))
            self._persist(conn, new, old.device_key or "")
            return new.version

    def set_permission(
        self, member_id: str, package: str, state: PermissionState
    ) -> int:
        with self._db.write() as conn:
            old = self._load(conn, member_id)
            entry = old.entries.get(package)
            if entry is None:
                raise UnknownPackageError(package)
            if entry.decision_for(state.permission) == state.decision:
                return old.version
            new = apply_diff(old, CatalogDiff(permission_changes=((package, state),)))
            self._persist(conn, new, old.device_key or "")
            return new.version

    def entries_for(self, member_id: str) -> list[CatalogEntry]:
        catalog = self.get(member_id)
        return [catalog.entries[p] for p in sorted(catalog.entries)]

    def load_all(self, conn, member_ids: Sequence[str]) -> dict[str, list[CatalogEntry]]:
        """Catalogs for a set of members out of one read snapshot."""
        catalogs: dict[str, list[CatalogEntry]] = {}
        for member_id in member_ids:
            stored = self._load(conn, member_id)
            catalogs[member_id] = [stored.entries[p] for p in sorted(stored.entries)]
        return catalogs
