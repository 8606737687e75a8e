"""Simulated device agent.

Plays the role of the on-device scraper: keeps a local app catalog in a
JSON state file, reconciles it with the server on sync, and exercises the
visibility, permission, and social surfaces from the terminal. No daemon,
no background threads; every command is one deterministic step so the whole
thing can be scripted.
"""

from __future__ import annotations

import json
import signal
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import click
import httpx

from .catalog import entry_to_json, snapshot_from_json, snapshot_to_json
from .domain import CatalogEntry, Decision, PermissionState, Visibility


@dataclass
class AgentState:
    server_url: str
    device_id: str
    sim_serial: str
    platform_id: str
    display_name: str
    member_id: str = ""
    token: str = ""
    community_id: str = ""
    last_synced_version: int = 0
    catalog: list[CatalogEntry] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "server_url": self.server_url,
            "device_id": self.device_id,
            "sim_serial": self.sim_serial,
            "platform_id": self.platform_id,
            "display_name": self.display_name,
            "member_id": self.member_id,
            "token": self.token,
            "community_id": self.community_id,
            "last_synced_version": self.last_synced_version,
            "catalog": snapshot_to_json(self.catalog),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AgentState":
        return cls(
            server_url=obj["server_url"],
            device_id=obj["device_id"],
            sim_serial=obj["sim_serial"],
            platform_id=obj["platform_id"],
            display_name=obj["display_name"],
            member_id=obj.get("member_id", ""),
            token=obj.get("token", ""),
            community_id=obj.get("community_id", ""),
            last_synced_version=obj.get("last_synced_version", 0),
            catalog=snapshot_from_json(obj.get("catalog", [])),
        )

    def save(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_json(), indent=2) + "\n", "utf-8")

    @classmethod
    def load(cls, path: Path) -> "AgentState":
        if not path.exists():
            raise click.ClickException(f"no agent state at {path}; run 'init' first")
        return cls.from_json(json.loads(path.read_text("utf-8")))

    def entry(self, package: str) -> Optional[CatalogEntry]:
        for e in self.catalog:
            if e.package == package:
                return e
        return None

    def upsert(self, entry: CatalogEntry) -> None:
        self.catalog = [e for e in self.catalog if e.package != entry.package] + [entry]
        self.catalog.sort(key=lambda e: e.package)


class Ctx:
    def __init__(self, state_path: Path, as_json: bool):
        self.state_path = state_path
        self.as_json = as_json


def _request(state: AgentState, method: str, path: str, *, json_body=None, params=None):
    headers = {}
    if state.token:
        headers["Authorization"] = f"Bearer {state.token}"
    try:
        resp = httpx.request(
            method,
            state.server_url.rstrip("/") + path,
            json=json_body,
            params=params,
            headers=headers,
            timeout=60.0,
        )
    except httpx.HTTPError as exc:
        raise click.ClickException(f"cannot reach server: {exc}")
    if resp.status_code >= 400:
        try:
            err = resp.json()
            raise click.ClickException(f"{err['code']}: {err['message']}")
        except (ValueError, KeyError):
            raise click.ClickException(f"http {resp.status_code}: {resp.text}")
    return resp.json()


def _telemetry(state: AgentState, action: str) -> None:
    # Best effort; a telemetry hiccup must never fail the command.
    try:
        _request(state, "POST", "/v1/telemetry", json_body={"action": action})
    except click.ClickException:
        pass


def _emit(ctx: Ctx, data, text: str) -> None:
    if ctx.as_json:
        click.echo(json.dumps(data, indent=2))
    else:
        click.echo(text)


def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines)


def _community_id(state: AgentState, override: Optional[str]) -> str:
    community = override or state.community_id
    if not community:
        raise click.ClickException("no community selected; create or join one first")
    return community


def _resolve_member(state: AgentState, community_id: str, who: str) -> str:
    """Accept a member_id or a unique display name."""
    data = _request(state, "GET", f"/v1/communities/{community_id}/members")
    members = data["members"]
    for m in members:
        if m["member_id"] == who:
            return who
    named = [m for m in members if m["display_name"] == who]
    if len(named) == 1:
        return named[0]["member_id"]
    if len(named) > 1:
        raise click.ClickException(f"display name {who!r} is ambiguous; use a member id")
    raise click.ClickException(f"no member {who!r} in community {community_id}")


def _parse_perm(spec: str) -> PermissionState:
    name, sep, decision = spec.rpartition(":")
    if not sep:
        return PermissionState(spec, Decision.GRANTED)
    if decision not in (Decision.GRANTED.value, Decision.DENIED.value):
        raise click.ClickException(
            f"bad permission spec {spec!r}; use NAME or NAME:granted|denied"
        )
    return PermissionState(name, Decision(decision))


def _sync(ctx: Ctx, state: AgentState) -> dict:
    summary = _request(
        state, "PUT", "/v1/catalog", json_body=snapshot_to_json(state.catalog)
    )
    state.last_synced_version = summary["version"]
    state.save(ctx.state_path)
    return summary


def _print_sync(ctx: Ctx, summary: dict) -> None:
    _emit(
        ctx,
        summary,
        "added {added} removed {removed} changed {changed} (version {version})".format(
            **summary
        ),
    )


@click.group()
@click.option(
    "--state",
    "state_path",
    type=click.Path(path_type=Path),
    default=Path("agent_state.json"),
    envvar="PERMCIRCLE_AGENT_STATE",
    show_default=True,
    help="Agent state file.",
)
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@click.pass_context
def main(ctx, state_path: Path, as_json: bool):
    """Simulated device for the community oversight server."""
    ctx.obj = Ctx(state_path, as_json)


@main.command()
@click.option("--server", required=True, help="Server base URL.")
@click.option("--device-id", required=True)
@click.option("--sim", "sim_serial", required=True)
@click.option("--platform-id", required=True)
@click.option("--name", "display_name", required=True)
@click.pass_obj
def init(ctx: Ctx, server, device_id, sim_serial, platform_id, display_name):
    """Register this device with the server and persist the session."""
    state = AgentState(server, device_id, sim_serial, platform_id, display_name)
    data = _request(
        state,
        "POST",
        "/v1/auth/register",
        json_body={
            "device_id": device_id,
            "sim_serial": sim_serial,
            "platform_id": platform_id,
            "display_name": display_name,
        },
    )
    state.member_id = data["member_id"]
    state.token = data["token"]
    me = _request(state, "GET", "/v1/me")
    if me["communities"]:
        state.community_id = me["communities"][0]["community_id"]
    state.save(ctx.state_path)
    _emit(ctx, data, f"registered as {display_name} ({state.member_id})")


@main.command()
@click.option(
    "--catalog",
    "catalog_path",
    required=True,
    type=click.Path(exists=True, path_type=Path),
)
@click.pass_obj
def load(ctx: Ctx, catalog_path: Path):
    """Replace the local catalog from a snapshot file (local only; sync to publish)."""
    state = AgentState.load(ctx.state_path)
    entries = snapshot_from_json(json.loads(catalog_path.read_text("utf-8")))
    state.catalog = sorted(entries, key=lambda e: e.package)
    state.save(ctx.state_path)
    _emit(ctx, snapshot_to_json(state.catalog), f"loaded {len(entries)} apps")


@main.command()
@click.argument("package")
@click.argument("label")
@click.argument("perms", nargs=-1)
@click.pass_obj
def install(ctx: Ctx, package, label, perms):
    """Install an app locally. PERMS are NAME or NAME:granted|denied."""
    state = AgentState.load(ctx.state_path)
    existing = state.entry(package)
    visibility = existing.visibility if existing else Visibility.VISIBLE
    entry = CatalogEntry(
        package=package,
        label=label,
        visibility=visibility,
        permissions=tuple(_parse_perm(p) for p in perms),
    )
    state.upsert(entry)
    state.save(ctx.state_path)
    _emit(ctx, entry_to_json(entry), f"installed {package}")


@main.command()
@click.argument("package")
@click.pass_obj
def uninstall(ctx: Ctx, package):
    """Remove an app locally (sync to publish)."""
    state = AgentState.load(ctx.state_path)
    if state.entry(package) is None:
        raise click.ClickException(f"{package} is not installed")
    state.catalog = [e for e in state.catalog if e.package != package]
    state.save(ctx.state_path)
    _emit(ctx, {"package": package}, f"uninstalled {package}")


@main.command()
@click.pass_obj
def sync(ctx: Ctx):
    """Publish the local catalog; prints what changed on the server."""
    state = AgentState.load(ctx.state_path)
    _print_sync(ctx, _sync(ctx, state))


def _set_visibility(ctx: Ctx, package: str, visibility: Visibility) -> None:
    state = AgentState.load(ctx.state_path)
    entry = state.entry(package)
    if entry is None:
        raise click.ClickException(f"{package} is not installed")
    state.upsert(
        CatalogEntry(entry.package, entry.label, visibility, entry.permissions)
    )
    state.save(ctx.state_path)
    summary = _sync(ctx, state)
    _telemetry(state, "toggle_visibility")
    _print_sync(ctx, summary)


@main.command()
@click.argument("package")
@click.pass_obj
def hide(ctx: Ctx, package):
    """Hide an app from other community members, then sync."""
    _set_visibility(ctx, package, Visibility.HIDDEN)


@main.command()
@click.argument("package")
@click.pass_obj
def show(ctx: Ctx, package):
    """Make an app visible again, then sync."""
    _set_visibility(ctx, package, Visibility.VISIBLE)


def _set_decision(ctx: Ctx, package: str, permission: str, decision: Decision) -> None:
    state = AgentState.load(ctx.state_path)
    entry = state.entry(package)
    if entry is None:
        raise click.ClickException(f"{package} is not installed")
    state.upsert(entry.with_permission(PermissionState(permission, decision)))
    state.save(ctx.state_path)
    summary = _sync(ctx, state)
    _telemetry(state, "change_permission")
    _print_sync(ctx, summary)


@main.command()
@click.argument("package")
@click.argument("permission")
@click.pass_obj
def grant(ctx: Ctx, package, permission):
    """Grant a permission to an installed app, then sync."""
    _set_decision(ctx, package, permission, Decision.GRANTED)


@main.command()
@click.argument("package")
@click.argument("permission")
@click.pass_obj
def deny(ctx: Ctx, package, permission):
    """Deny a permission on an installed app, then sync."""
    _set_decision(ctx, package, permission, Decision.DENIED)


# -- community -----------------------------------------------------------------


@main.group()
def community():
    """Community membership and oversight views."""


@community.command("create")
@click.argument("name")
@click.pass_obj
def community_create(ctx: Ctx, name):
    state = AgentState.load(ctx.state_path)
    data = _request(state, "POST", "/v1/communities", json_body={"name": name})
    state.community_id = data["community_id"]
    state.save(ctx.state_path)
    _emit(ctx, data, f"created community {name}: invite code {data['invite_code']}")


@community.command("join")
@click.argument("invite_code")
@click.pass_obj
def community_join(ctx: Ctx, invite_code):
    state = AgentState.load(ctx.state_path)
    data = _request(
        state, "POST", "/v1/communities/join", json_body={"invite_code": invite_code}
    )
    state.community_id = data["community_id"]
    state.save(ctx.state_path)
    _emit(ctx, data, f"joined community {data['community_id']}")


@community.command("members")
@click.option("--community", "community_override", default=None)
@click.pass_obj
def community_members(ctx: Ctx, community_override):
    state = AgentState.load(ctx.state_path)
    community_id = _community_id(state, community_override)
    data = _request(state, "GET", f"/v1/communities/{community_id}/members")
    _telemetry(state, "open_community_members")
    rows = [[m["display_name"], m["member_id"]] for m in data["members"]]
    _emit(ctx, data, _table(["Name", "Member ID"], rows))


@community.command("apps")
@click.option("--community", "community_override", default=None)
@click.pass_obj
def community_apps(ctx: Ctx, community_override):
    """All apps visible across the community, with install counts."""
    state = AgentState.load(ctx.state_path)
    community_id = _community_id(state, community_override)
    data = _request(state, "GET", f"/v1/communities/{community_id}/apps")
    _telemetry(state, "open_community_apps")
    rows = [
        [
            a["package"],
            a["label"],
            str(a["installer_count"]),
            "Installed" if a["viewer_installed"] else "",
        ]
        for a in data["apps"]
    ]
    _emit(ctx, data, _table(["Package", "Label", "Installers", ""], rows))


@community.command("explore")
@click.argument("member")
@click.option("--community", "community_override", default=None)
@click.pass_obj
def community_explore(ctx: Ctx, member, community_override):
    """Apps installed by one member, as that member lets you see them."""
    state = AgentState.load(ctx.state_path)
    community_id = _community_id(state, community_override)
    member_id = _resolve_member(state, community_id, member)
    data = _request(
        state, "GET", f"/v1/communities/{community_id}/members/{member_id}/apps"
    )
    _telemetry(state, "open_member_apps")
    rows = [
        [a["package"], a["label"], a.get("visibility", "")]
        for a in data["apps"]
    ]
    _emit(ctx, data, _table(["Package", "Label", "Visibility"], rows))


@community.command("permissions")
@click.argument("package")
@click.option("--scope", default="community", show_default=True,
              help="'community' or a member id / display name.")
@click.option("--filter", "tally_filter", default="all", show_default=True,
              type=click.Choice(["all", "granted", "denied"]))
@click.option("--community", "community_override", default=None)
@click.pass_obj
def community_permissions(ctx: Ctx, package, scope, tally_filter, community_override):
    """Grant/deny tallies for one app across visible installations."""
    state = AgentState.load(ctx.state_path)
    community_id = _community_id(state, community_override)
    if scope != "community":
        scope = _resolve_member(state, community_id, scope)
    data = _request(
        state,
        "GET",
        f"/v1/communities/{community_id}/apps/{package}/permissions",
        params={"scope": scope, "filter": tally_filter},
    )
    _telemetry(state, "open_app_permissions")
    rows = [
        [
            p["permission"],
            f"{p['granted_count']}/{p['total']} granted",
            f"{p['denied_count']}/{p['total']} denied",
            p["description"],
        ]
        for p in data["permissions"]
    ]
    _emit(ctx, data, _table(["Permission", "Granted", "Denied", "Description"], rows))


# -- feed ------------------------------------------------------------------


@main.group()
def feed():
    """Community feed: posts, likes, replies."""


@feed.command("post")
@click.argument("body")
@click.option("--community", "community_override", default=None)
@click.pass_obj
def feed_post(ctx: Ctx, body, community_override):
    state = AgentState.load(ctx.state_path)
    community_id = _community_id(state, community_override)
    data = _request(
        state, "POST", f"/v1/communities/{community_id}/feed", json_body={"body": body}
    )
    _telemetry(state, "create_post")
    _emit(ctx, data, f"posted #{data['post_id']}")


@feed.command("list")
@click.option("--community", "community_override", default=None)
@click.pass_obj
def feed_list(ctx: Ctx, community_override):
    state = AgentState.load(ctx.state_path)
    community_id = _community_id(state, community_override)
    data = _request(state, "GET", f"/v1/communities/{community_id}/feed")
    _telemetry(state, "open_community_feed")
    lines = []
    for p in data["posts"]:
        tag = " [pro tip]" if p["is_pro_tip"] else ""
        lines.append(
            f"#{p['post_id']}{tag} {p['author']} ({p['like_count']} likes): {p['body']}"
        )
        for r in p["replies"]:
            lines.append(f"    #{r['reply_id']} {r['author']}: {r['body']}")
    _emit(ctx, data, "\n".join(lines) if lines else "(empty feed)")


@feed.command("like")
@click.argument("post_id", type=int)
@click.pass_obj
def feed_like(ctx: Ctx, post_id):
    state = AgentState.load(ctx.state_path)
    data = _request(state, "POST", f"/v1/feed/{post_id}/likes")
    _telemetry(state, "like_post")
    verb = "liked" if data["liked"] else "unliked"
    _emit(ctx, data, f"{verb} #{post_id} ({data['like_count']} likes)")


@feed.command("reply")
@click.argument("post_id", type=int)
@click.argument("body")
@click.pass_obj
def feed_reply(ctx: Ctx, post_id, body):
    state = AgentState.load(ctx.state_path)
    data = _request(state, "POST", f"/v1/feed/{post_id}/replies", json_body={"body": body})
    _telemetry(state, "reply_post")
    _emit(ctx, data, f"replied #{data['reply_id']} to post #{post_id}")


# -- messages ------------------------------------------------------------------


@main.group()
def msg():
    """Direct messages with members you share a community with."""


@msg.command("send")
@click.argument("member")
@click.argument("body")
@click.option("--community", "community_override", default=None)
@click.pass_obj
def msg_send(ctx: Ctx, member, body, community_override):
    state = AgentState.load(ctx.state_path)
    member_id = member
    if state.community_id or community_override:
        try:
            member_id = _resolve_member(
                state, _community_id(state, community_override), member
            )
        except click.ClickException:
            member_id = member
    data = _request(state, "POST", f"/v1/messages/{member_id}", json_body={"body": body})
    _telemetry(state, "send_message")
    _emit(ctx, data, f"sent message #{data['message_id']} to {member_id}")


@msg.command("list")
@click.argument("member")
@click.option("--community", "community_override", default=None)
@click.pass_obj
def msg_list(ctx: Ctx, member, community_override):
    state = AgentState.load(ctx.state_path)
    member_id = member
    if state.community_id or community_override:
        try:
            member_id = _resolve_member(
                state, _community_id(state, community_override), member
            )
        except click.ClickException:
            member_id = member
    data = _request(state, "GET", f"/v1/messages/{member_id}")
    lines = []
    for m in data["messages"]:
        who = "me" if m["sender"] == state.member_id else m["sender"]
        lines.append(f"#{m['message_id']} {who}: {m['body']}")
    _emit(ctx, data, "\n".join(lines) if lines else "(no messages)")


# -- notifications ------------------------------------------------------------------


@main.command()
@click.option("--after", type=int, default=0, show_default=True)
@click.option("--wait-ms", type=int, default=20000, show_default=True)
@click.option("--once", is_flag=True, help="Poll a single time and exit.")
@click.option("--no-ack", is_flag=True, help="Leave events unacked (they will redeliver).")
@click.pass_obj
def watch(ctx: Ctx, after, wait_ms, once, no_ack):
    """Stream notifications; Ctrl-C to stop."""
    state = AgentState.load(ctx.state_path)
    signal.signal(signal.SIGINT, lambda *_: sys.exit(0))
    while True:
        data = _request(
            state, "GET", "/v1/notifications",
            params={"after": after, "wait_ms": 0 if once else wait_ms},
        )
        events = data["events"]
        if ctx.as_json:
            if events or once:
                click.echo(json.dumps(events))
        else:
            for e in events:
                click.echo(
                    f"[{e['event_id']}] {e['kind']} {json.dumps(e['payload'], sort_keys=True)}"
                )
        if events:
            after = events[-1]["event_id"]
            if not no_ack:
                _request(
                    state, "POST", "/v1/notifications/ack",
                    json_body={"up_to_event_id": after},
                )
        if once:
            return


if __name__ == "__main__":
    main()
