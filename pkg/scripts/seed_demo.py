#!/usr/bin/env python3
"""Seed a data directory with a two-member community for demos and UI tests.

Writes straight through the service layer (no server needed), then prints a
JSON blob with the tokens and ids a client needs. Start the server on the
same data directory afterwards:

    python3 scripts/seed_demo.py --data-dir ./demo-data
    permcircle-server --data-dir ./demo-data --webui-dir frontend/dist
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from permcircle.config import ServerConfig
from permcircle.domain import DeviceIdentity
from permcircle.server import build_services

ALICE_APPS = [
    {"package": "com.example.maps", "label": "Maps", "visibility": "visible",
     "permissions": [
         {"name": "android.permission.ACCESS_FINE_LOCATION", "decision": "granted"},
         {"name": "android.permission.INTERNET", "decision": "granted"},
     ]},
    {"package": "com.example.chat", "label": "Chatter", "visibility": "visible",
     "permissions": [
         {"name": "android.permission.CAMERA", "decision": "granted"},
         {"name": "android.permission.READ_CONTACTS", "decision": "denied"},
     ]},
    {"package": "com.example.diary", "label": "Dear Diary", "visibility": "hidden",
     "permissions": [{"name": "android.permission.CAMERA", "decision": "denied"}]},
]

BOB_APPS = [
    {"package": "com.example.maps", "label": "Maps", "visibility": "visible",
     "permissions": [
         {"name": "android.permission.ACCESS_FINE_LOCATION", "decision": "denied"},
         {"name": "android.permission.INTERNET", "decision": "granted"},
     ]},
    {"package": "com.example.torch", "label": "Torch", "visibility": "visible",
     "permissions": [{"name": "android.permission.CAMERA", "decision": "granted"}]},
]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data-dir", type=Path, default=Path("demo-data"))
    args = parser.parse_args()

    from permcircle.catalog import snapshot_from_json

    services = build_services(ServerConfig(data_dir=args.data_dir, pro_tip_check_interval_s=0))
    alice_session, alice = services.directory.register(
        DeviceIdentity("demo-device-alice", "demo-sim-alice", "demo-plat-alice"), "Alice"
    )
    bob_session, bob = services.directory.register(
        DeviceIdentity("demo-device-bob", "demo-sim-bob", "demo-plat-bob"), "Bob"
    )
    caller_alice = services.directory.authenticate(alice_session.token)
    caller_bob = services.directory.authenticate(bob_session.token)
    community = services.directory.create_community(caller_alice, "Demo Household")
    services.directory.join_community(caller_bob, community.invite_code)

    services.catalogs.replace_snapshot(
        alice.member_id, alice_session.device_key, snapshot_from_json(ALICE_APPS)
    )
    services.catalogs.replace_snapshot(
        bob.member_id, bob_session.device_key, snapshot_from_json(BOB_APPS)
    )

    post = services.social.create_post(
        bob.member_id, community.community_id, "Torch wants the camera. Thoughts?"
    )
    services.social.toggle_like(alice.member_id, post.post_id)
    services.social.reply(alice.member_id, post.post_id, "Deny it, flashlights don't film.")
    services.social.send_message(alice.member_id, bob.member_id, "Nice catch on Torch.")
    services.social.tick_pro_tips()

    print(json.dumps(
        {
            "community_id": community.community_id,
            "invite_code": community.invite_code,
            "alice": {"member_id": alice.member_id, "token": alice_session.token},
            "bob": {"member_id": bob.member_id, "token": bob_session.token},
        },
        indent=2,
    ))


if __name__ == "__main__":
    main()
