"""Acceptance gate: one test per release criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines alongside the pytest verdicts.
"""

import json
import random
import subprocess
import sys
import time

import httpx
import pytest
from click.testing import CliRunner

from permcircle.agent import main as agent_main
from permcircle.catalog import StoredCatalog, apply_diff, compute_diff, entry_to_json
from permcircle.domain import PermissionDirectory, mask_catalog
from permcircle.oversight import TallyFilter, community_app_rows, filter_tally, tally_rows
from permcircle.errors import PackageNotInScopeError

from .conftest import auth, free_port, raw_to_domain, register
from .oracles import (
    oracle_community_apps,
    oracle_filter,
    oracle_member_apps,
    oracle_tally,
    random_community,
)

DIRECTORY = PermissionDirectory.bundled()


def _to_domain(raw):
    return {m: [raw_to_domain(e) for e in es] for m, es in raw.items()}


def test_acceptance_masking_no_leak_suite(services):
    """1,000 randomized communities; every viewer's three query outputs equal
    the brute-force oracle, and no hidden entry of another member ever
    appears anywhere. 100 of the communities are additionally replayed
    through the persistent store."""
    started = time.monotonic()
    rng = random.Random(2026)
    for round_no in range(1000):
        raw = random_community(rng, max_members=5, max_apps=20, max_perms=10)
        catalogs = _to_domain(raw)
        for viewer in raw:
            got_apps = [r.to_json() for r in community_app_rows(catalogs, viewer)]
            assert got_apps == oracle_community_apps(raw, viewer)

            app_rows = {r["package"] for r in got_apps}
            for target in raw:
                masked = mask_catalog(catalogs[target], viewer == target)
                got_entries = [entry_to_json(e) for e in masked]
                assert got_entries == oracle_member_apps(raw, viewer, target)
                if target != viewer:
                    hidden = {
                        e["package"] for e in raw[target] if e["visibility"] == "hidden"
                    }
                    # Another member's hidden apps are absent from their
                    # explored catalog, full stop.
                    assert hidden.isdisjoint({e["package"] for e in got_entries})
                    # And absent from the app union unless someone this viewer
                    # can see also installs them.
                    for pkg in hidden:
                        visible_elsewhere = any(
                            e["package"] == pkg
                            and (owner == viewer or e["visibility"] == "visible")
                            for owner, entries in raw.items()
                            if owner != target
                            for e in entries
                        )
                        assert (pkg in app_rows) == visible_elsewhere

            for row in got_apps:
                package = row["package"]
                expected = oracle_tally(raw, viewer, package, None)
                got = [
                    r.to_json()
                    for r in tally_rows(catalogs, viewer, package, None, DIRECTORY)
                ]
                assert got == expected
                flt = rng.choice(["granted", "denied"])
                got_f = [
                    r.to_json()
                    for r in filter_tally(
                        tally_rows(catalogs, viewer, package, None, DIRECTORY),
                        TallyFilter(flt),
                    )
                ]
                assert got_f == oracle_filter(expected, flt)

            if app_rows:
                package = rng.choice(sorted(app_rows))
                target = rng.choice(sorted(raw))
                expected = oracle_tally(raw, viewer, package, target)
                try:
                    got = [
                        r.to_json()
                        for r in tally_rows(catalogs, viewer, package, target, DIRECTORY)
                    ]
                except PackageNotInScopeError:
                    got = None
                assert got == expected

        if round_no < 100:
            _replay_through_store(services, raw, round_no)

    elapsed = time.monotonic() - started
    assert elapsed < 120, f"masking suite took {elapsed:.1f}s"
    print(f"\nACCEPTANCE masking/no-leak suite (1000 communities, {elapsed:.1f}s): PASS")


def _replay_through_store(services, raw, round_no):
    """Load one random community into sqlite and re-check via the services."""
    refs = {}
    for member in raw:
        session, ref = register(services, f"acc{round_no}-{member}", f"N {member}")
        refs[member] = (session, ref)
    first = next(iter(raw))
    caller = services.directory.authenticate(refs[first][0].token)
    community = services.directory.create_community(caller, f"acc{round_no}")
    for member in list(raw)[1:]:
        services.directory.join_community(
            services.directory.authenticate(refs[member][0].token),
            community.invite_code,
        )
    for member, entries in raw.items():
        services.catalogs.replace_snapshot(
            refs[member][1].member_id,
            refs[member][0].device_key,
            [raw_to_domain(e) for e in entries],
        )
    alias = {member: refs[member][1].member_id for member in raw}
    for viewer in raw:
        got = [
            r.to_json()
            for r in services.oversight.community_apps(
                alias[viewer], community.community_id
            )
        ]
        assert got == oracle_community_apps(raw, viewer)
        for target in raw:
            entries = services.oversight.member_apps(
                alias[viewer], community.community_id, alias[target]
            )
            assert [entry_to_json(e) for e in entries] == oracle_member_apps(
                raw, viewer, target
            )


def test_acceptance_diff_round_trip(services):
    """1,000 random (snapshot, remote) pairs: apply-after-diff reproduces the
    snapshot exactly and double apply equals single apply."""
    rng = random.Random(777)
    for _ in range(1000):
        snapshot = [raw_to_domain(e) for e in random_community(rng, max_members=1)["member0"]]
        remote_entries = {
            e.package: e
            for e in (raw_to_domain(x) for x in random_community(rng, max_members=1)["member0"])
        }
        remote = StoredCatalog("m", "k", remote_entries, version=rng.randint(0, 9))
        diff = compute_diff(snapshot, remote.entries)
        once = apply_diff(remote, diff)
        assert dict(once.entries) == {e.package: e for e in snapshot}
        twice = apply_diff(once, diff)
        assert dict(twice.entries) == dict(once.entries)
        assert twice.version == once.version
    print("\nACCEPTANCE diff round-trip and idempotence (1000 pairs): PASS")


def test_acceptance_pro_tip_schedule(services, clock):
    """21 days of daily ticks: exactly floor(21/7) tips per community, in
    rotation order."""
    for seed, name in [("pt1", "Pam"), ("pt2", "Quil")]:
        session, _ = register(services, seed, name)
        caller = services.directory.authenticate(session.token)
        services.directory.create_community(caller, f"community-{seed}")
    tips = services.social._tips.tips
    created = []
    for _ in range(21):
        clock.advance(days=1)
        created.extend(services.social.tick_pro_tips())
    per_community: dict = {}
    for post in created:
        per_community.setdefault(post.community_id, []).append(post.body)
    assert len(per_community) == 2
    for bodies in per_community.values():
        assert len(bodies) == 21 // 7
        assert bodies == tips[:3]
    print("\nACCEPTANCE pro-tip schedule (21 days, 3 tips, rotation order): PASS")


# -- end-to-end over a real server ------------------------------------------------


@pytest.fixture
def server_process(tmp_path):
    port = free_port()
    data_dir = tmp_path / "server-data"
    proc = subprocess.Popen(
        [
            sys.executable,
            "-m",
            "permcircle.server",
            "--port",
            str(port),
            "--data-dir",
            str(data_dir),
        ],
        env={
            "PATH": "/usr/bin:/bin",
            "PERMCIRCLE_PRO_TIP_CHECK_INTERVAL_S": "0",
            "PERMCIRCLE_TELEMETRY_SALT": "acceptance-salt",
        },
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    url = f"http://127.0.0.1:{port}"
    deadline = time.monotonic() + 20
    while True:
        try:
            if httpx.get(url + "/v1/health", timeout=1.0).status_code == 200:
                break
        except httpx.HTTPError:
            pass
        if time.monotonic() > deadline or proc.poll() is not None:
            proc.kill()
            raise RuntimeError("server process did not come up")
        time.sleep(0.1)
    yield url, data_dir
    proc.terminate()
    proc.wait(timeout=10)


def _agent(runner, state, *args):
    result = runner.invoke(agent_main, ["--state", str(state), *args])
    assert result.exit_code == 0, f"{args}: {result.output}"
    return result


def test_acceptance_end_to_end_scenario(server_process, tmp_path):
    """Three agents, one community, one hidden app, hand-computed tallies,
    and the notification chain with redelivery. Must finish inside 30s."""
    url, data_dir = server_process
    started = time.monotonic()
    runner = CliRunner()
    states = {name: tmp_path / f"{name}.json" for name in ("able", "baker", "verity")}
    names = {"able": "Agent Able", "baker": "Agent Baker", "verity": "Agent Verity"}
    for key, state in states.items():
        _agent(
            runner, state, "init",
            "--server", url,
            "--device-id", f"device-of-{key}",
            "--sim", f"simcard-of-{key}",
            "--platform-id", f"platform-of-{key}",
            "--name", names[key],
        )
    ids = {k: json.loads(s.read_text())["member_id"] for k, s in states.items()}

    # Catalogs: a shared app with disagreeing decisions, plus Baker's secret.
    _agent(runner, states["able"], "install", "com.shared.weather", "Weather",
           "android.permission.CAMERA:granted", "android.permission.READ_CONTACTS:granted")
    _agent(runner, states["baker"], "install", "com.shared.weather", "Weather",
           "android.permission.CAMERA:granted")
    _agent(runner, states["baker"], "install", "com.private.journal", "Journal")
    _agent(runner, states["verity"], "install", "com.shared.weather", "Weather",
           "android.permission.CAMERA:denied")
    for state in states.values():
        _agent(runner, state, "sync")

    created = _agent(runner, states["able"], "--json", "community", "create", "Oversight Crew")
    invite = json.loads(created.output)["invite_code"]
    _agent(runner, states["baker"], "community", "join", invite)
    _agent(runner, states["verity"], "community", "join", invite)

    # Baker hides the journal.
    _agent(runner, states["baker"], "hide", "com.private.journal")

    for other in ("able", "verity"):
        apps = _agent(runner, states[other], "--json", "community", "apps")
        packages = {r["package"] for r in json.loads(apps.output)["apps"]}
        assert "com.private.journal" not in packages
        explored = _agent(runner, states[other], "--json", "community", "explore", ids["baker"])
        assert all(
            a["package"] != "com.private.journal"
            for a in json.loads(explored.output)["apps"]
        )
    own = _agent(runner, states["baker"], "--json", "community", "explore", ids["baker"])
    own_rows = {a["package"]: a for a in json.loads(own.output)["apps"]}
    assert own_rows["com.private.journal"]["visibility"] == "hidden"
    # In Baker's own community view the hidden app still counts (for Baker
    # alone), and the shared app counts all three installers.
    baker_apps = _agent(runner, states["baker"], "--json", "community", "apps")
    baker_rows = {r["package"]: r for r in json.loads(baker_apps.output)["apps"]}
    assert baker_rows["com.private.journal"]["installer_count"] == 1
    assert baker_rows["com.private.journal"]["viewer_installed"] is True
    assert baker_rows["com.shared.weather"]["installer_count"] == 3

    # Hand-computed tallies for the shared app over three visible installs:
    # CAMERA granted by Able and Baker, denied by Verity; READ_CONTACTS
    # requested only by Able.
    for key in states:
        tally = _agent(runner, states[key], "--json", "community", "permissions",
                       "com.shared.weather")
        rows = {p["permission"]: p for p in json.loads(tally.output)["permissions"]}
        camera = rows["android.permission.CAMERA"]
        contacts = rows["android.permission.READ_CONTACTS"]
        assert (camera["granted_count"], camera["denied_count"], camera["total"]) == (2, 1, 3)
        assert (contacts["granted_count"], contacts["denied_count"], contacts["total"]) == (1, 0, 3)

    # Social chain: Baker posts; Able likes (no notification kind exists for
    # likes); Verity replies; Able messages Baker.
    posted = _agent(runner, states["baker"], "--json", "feed", "post",
                    "does anyone recognize this weather app?")
    post_id = str(json.loads(posted.output)["post_id"])
    before_like = _agent(runner, states["baker"], "--json", "watch", "--once", "--no-ack")
    _agent(runner, states["able"], "feed", "like", post_id)
    after_like = _agent(runner, states["baker"], "--json", "watch", "--once", "--no-ack")
    assert json.loads(before_like.output) == json.loads(after_like.output)
    _agent(runner, states["verity"], "feed", "reply", post_id, "looks fine to me")
    _agent(runner, states["able"], "msg", "send", ids["baker"], "check its permissions")

    # Baker's queue, in order: Verity's join, the reply, the message. Each
    # notification-producing action contributed exactly one event.
    first_poll = _agent(runner, states["baker"], "--json", "watch", "--once", "--no-ack")
    events = json.loads(first_poll.output)
    assert [e["kind"] for e in events] == ["member_joined", "new_reply", "new_message"]
    assert events[0]["payload"]["member_id"] == ids["verity"]
    ids_in_order = [e["event_id"] for e in events]
    assert ids_in_order == sorted(ids_in_order)
    # Unacked events redeliver identically, then drain after an acking poll.
    second_poll = _agent(runner, states["baker"], "--json", "watch", "--once", "--no-ack")
    assert json.loads(second_poll.output) == events
    _agent(runner, states["baker"], "watch", "--once")
    drained = _agent(runner, states["baker"], "--json", "watch", "--once")
    assert json.loads(drained.output) == []

    # Able's own view of the like: involution still holds over HTTP.
    unliked = _agent(runner, states["able"], "--json", "feed", "like", post_id)
    assert json.loads(unliked.output)["like_count"] == 0

    elapsed = time.monotonic() - started
    assert elapsed < 30, f"scenario took {elapsed:.1f}s"

    # Telemetry anonymity over the same run's persisted store.
    blob = (data_dir / "telemetry.ndjson").read_bytes()
    assert blob.strip(), "scenario produced no telemetry"
    raw_identifiers = list(ids.values())
    for key in states:
        raw_identifiers += [f"device-of-{key}", f"simcard-of-{key}", f"platform-of-{key}", names[key]]
    raw_identifiers += ["com.shared.weather", "com.private.journal"]
    for identifier in raw_identifiers:
        assert identifier.encode("utf-8") not in blob, identifier
    print(f"\nACCEPTANCE end-to-end scenario ({elapsed:.1f}s): PASS")
    print("ACCEPTANCE telemetry anonymity (byte scan of run's store): PASS")


def test_acceptance_api_contract_fuzz(client):
    """At least 500 unauthorized or cross-community requests: all rejected
    with a stable JSON error envelope."""
    from .test_server_api import ROUTES, OPEN_ROUTES, register_http, snapshot

    rng = random.Random(99)
    alice = register_http(client, "fz-a", "Alice")
    bob = register_http(client, "fz-b", "Bob")
    c1 = client.post("/v1/communities", json={"name": "One"}, headers=auth(alice["token"])).json()
    client.post("/v1/communities", json={"name": "Two"}, headers=auth(bob["token"])).json()
    client.put(
        "/v1/catalog",
        json=snapshot(("com.a", "A", "visible", [("P", "granted")])),
        headers=auth(alice["token"]),
    )

    protected = sorted(ROUTES - OPEN_ROUTES)
    cross_paths = [
        "/v1/communities/{cid}/members",
        "/v1/communities/{cid}/apps",
        "/v1/communities/{cid}/feed",
        "/v1/communities/{cid}/members/{mid}/apps",
        "/v1/communities/{cid}/apps/com.a/permissions",
    ]
    attempts = rejections = 0
    for _ in range(520):
        if rng.random() < 0.5:
            method, path = rng.choice(protected)
            concrete = (
                path.replace("{community_id}", c1["community_id"])
                .replace("{member_id}", alice["member_id"])
                .replace("{package}", "com.a")
                .replace("{permission_name}", "P")
                .replace("{post_id}", "1")
            )
            headers = rng.choice([{}, auth("junk-" + str(rng.random())), {"Authorization": "Bearer"}])
            resp = client.request(method, concrete, headers=headers, json={})
            expected_code = "auth_required"
            expected_status = 401
        else:
            path = rng.choice(cross_paths).format(
                cid=c1["community_id"], mid=alice["member_id"]
            )
            resp = client.get(path, headers=auth(bob["token"]))
            expected_code = "not_a_member"
            expected_status = 403
        attempts += 1
        body = resp.json()
        assert resp.status_code == expected_status, (resp.status_code, body)
        assert body["code"] == expected_code
        assert set(body) == {"code", "message"}
        rejections += 1
    assert attempts >= 500 and rejections == attempts
    print(f"\nACCEPTANCE api contract fuzz ({attempts} attempts, 100% rejected): PASS")
