"""Shared value types and the two rules everything else leans on:
device-key derivation and visibility masking.

All types here are immutable values and all functions are pure, so they are
safe to use from any number of threads.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from typing import Iterable, Optional, Sequence

from .errors import EmptyFieldError


class Visibility(str, Enum):
    VISIBLE = "visible"
    HIDDEN = "hidden"


class Decision(str, Enum):
    GRANTED = "granted"
    DENIED = "denied"


class ProtectionLevel(str, Enum):
    NORMAL = "normal"
    DANGEROUS = "dangerous"


DEVICE_KEY_BYTES = 32
UNKNOWN_PERMISSION_DESCRIPTION = "No description available"


def derive_device_key(device_id: str, sim_serial: str, platform_id: str) -> bytes:
    """Hash the device fingerprint triple into a stable 32-byte key.

    Each field is length-prefixed before hashing, so two triples that merely
    concatenate to the same string (("ab","c","d") vs ("a","bc","d")) still
    produce different keys. Raw identifiers never leave this function.
    """
    h = hashlib.sha256()
    for name, value in (
        ("device_id", device_id),
        ("sim_serial", sim_serial),
        ("platform_id", platform_id),
    ):
        if not value:
            raise EmptyFieldError(name)
        raw = value.encode("utf-8")
        h.update(len(raw).to_bytes(8, "big"))
        h.update(raw)
    return h.digest()


@dataclass(frozen=True)
class DeviceIdentity:
    """The fingerprint triple a device registers with."""

    device_id: str
    sim_serial: str
    platform_id: str

    @property
    def device_key(self) -> bytes:
        return derive_device_key(self.device_id, self.sim_serial, self.platform_id)

    @property
    def device_key_hex(self) -> str:
        return self.device_key.hex()


@dataclass(frozen=True)
class PermissionInfo:
    """Dictionary entry for one permission name."""

    name: str
    description: str
    protection_level: ProtectionLevel


@dataclass(frozen=True)
class PermissionState:
    """One permission decision on one app. Granted or denied, never unset."""

    permission: str
    decision: Decision


@dataclass(frozen=True)
class CatalogEntry:
    """One installed app on one device.

    ``visibility`` is None only in masked projections handed to non-owners,
    where the flag has been stripped; stored entries always carry a concrete
    value. ``permissions`` is normalized to a name-sorted tuple with at most
    one state per permission name, so equal permission sets compare equal
    regardless of input order.
    """

    package: str
    label: str
    visibility: Optional[Visibility] = Visibility.VISIBLE
    permissions: tuple[PermissionState, ...] = ()

    def __post_init__(self) -> None:
        states = tuple(sorted(self.permissions, key=lambda s: s.permission))
        seen: set[str] = set()
        for state in states:
            if state.permission in seen:
                raise ValueError(
                    f"duplicate permission state {state.permission!r} on {self.package!r}"
                )
            seen.add(state.permission)
        object.__setattr__(self, "permissions", states)

    def decision_for(self, permission: str) -> Optional[Decision]:
        for state in self.permissions:
            if state.permission == permission:
                return state.decision
        return None

    def with_permission(self, state: PermissionState) -> "CatalogEntry":
        """Return a copy with ``state`` upserted."""
        kept = tuple(s for s in self.permissions if s.permission != state.permission)
        return replace(self, permissions=kept + (state,))


@dataclass(frozen=True)
class MemberRef:
    """A member as seen inside one community.

    ``community_id`` is None only for the reference returned at registration
    time, before the member has joined anything.
    """

    member_id: str
    display_name: str
    community_id: Optional[str] = None
    avatar_ref: Optional[str] = None


def mask_catalog(
    entries: Sequence[CatalogEntry], viewer_is_owner: bool
) -> list[CatalogEntry]:
    """Project a catalog for a viewer.

    Owners get every entry back unchanged, visibility flags intact. Everyone
    else gets only the visible entries, with the visibility flag stripped so
    a hidden app reads exactly like one that was never installed.
    """
    if viewer_is_owner:
        return list(entries)
    return [
        replace(entry, visibility=None)
        for entry in entries
        if entry.visibility is not Visibility.HIDDEN
    ]


class PermissionDirectory:
    """Lookup table mapping permission names to descriptions and levels.

    Lookups are total: names missing from the loaded dictionary come back
    with a placeholder description and a normal protection level, so apps
    carrying vendor-specific permissions are never rejected.
    """

    def __init__(self, infos: Iterable[PermissionInfo]):
        self._infos: dict[str, PermissionInfo] = {}
        for info in infos:
            if info.name in self._infos:
                raise ValueError(f"duplicate permission name {info.name!r}")
            if not info.description:
                raise ValueError(f"permission {info.name!r} has an empty description")
            self._infos[info.name] = info

    def lookup(self, name: str) -> PermissionInfo:
        info = self._infos.get(name)
        if info is None:
            return PermissionInfo(name, UNKNOWN_PERMISSION_DESCRIPTION, ProtectionLevel.NORMAL)
        return info

    def describe(self, name: str) -> str:
        return self.lookup(name).description

    def known_names(self) -> frozenset[str]:
        return frozenset(self._infos)

    def __len__(self) -> int:
        return len(self._infos)

    @classmethod
    def from_json(cls, data: object) -> "PermissionDirectory":
        if not isinstance(data, list):
            raise ValueError("permission dictionary must be a JSON array")
        infos = []
        for item in data:
            infos.append(
                PermissionInfo(
                    name=item["name"],
                    description=item["description"],
                    protection_level=ProtectionLevel(item["protection_level"]),
                )
            )
        return cls(infos)

    @classmethod
    def from_file(cls, path) -> "PermissionDirectory":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    @classmethod
    def bundled(cls) -> "PermissionDirectory":
        """The dictionary shipped with the package (~30 well-known names)."""
        text = resources.files("permcircle.data").joinpath("permissions.json").read_text("utf-8")
        return cls.from_json(json.loads(text))
