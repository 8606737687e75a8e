#!/usr/bin/env python3
"""Run the full three-agent walkthrough against a freshly spawned server.

Everything is a real subprocess: one server, three agent CLIs. Prints each
step; exits nonzero on the first failed check. Useful as a smoke test of an
installed build:

    python3 scripts/e2e_scenario.py
"""

from __future__ import annotations

import json
import os
import socket
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import httpx


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def agent(state: Path, *args: str, as_json: bool = False) -> str:
    cmd = [sys.executable, "-m", "permcircle.agent", "--state", str(state)]
    if as_json:
        cmd.append("--json")
    cmd += list(args)
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        print(f"FAIL: {' '.join(args)}\n{proc.stdout}{proc.stderr}", file=sys.stderr)
        sys.exit(1)
    return proc.stdout


def check(label: str, ok: bool) -> None:
    print(f"  [{'ok' if ok else 'FAIL'}] {label}")
    if not ok:
        sys.exit(1)


def main() -> None:
    port = free_port()
    url = f"http://127.0.0.1:{port}"
    with tempfile.TemporaryDirectory(prefix="permcircle-e2e-") as tmp:
        tmp_path = Path(tmp)
        env = dict(os.environ)
        env["PERMCIRCLE_PRO_TIP_CHECK_INTERVAL_S"] = "0"
        server = subprocess.Popen(
            [
                sys.executable, "-m", "permcircle.server",
                "--port", str(port), "--data-dir", str(tmp_path / "server"),
            ],
            env=env,
            stdout=subprocess.DEVNULL,
            stderr=subprocess.DEVNULL,
        )
        try:
            deadline = time.monotonic() + 20
            while True:
                try:
                    if httpx.get(url + "/v1/health", timeout=1.0).status_code == 200:
                        break
                except httpx.HTTPError:
                    pass
                if time.monotonic() > deadline:
                    print("server did not start", file=sys.stderr)
                    sys.exit(1)
                time.sleep(0.1)
            print(f"server up on {url}")

            states = {k: tmp_path / f"{k}.json" for k in ("a", "b", "c")}
            names = {"a": "Alice", "b": "Bob", "c": "Carol"}
            for k, state in states.items():
                agent(state, "init", "--server", url,
                      "--device-id", f"dev-{k}", "--sim", f"sim-{k}",
                      "--platform-id", f"plat-{k}", "--name", names[k])
            print("registered three agents")

            agent(states["a"], "install", "com.shared.weather", "Weather",
                  "android.permission.CAMERA:granted")
            agent(states["b"], "install", "com.shared.weather", "Weather",
                  "android.permission.CAMERA:granted")
            agent(states["b"], "install", "com.private.journal", "Journal")
            agent(states["c"], "install", "com.shared.weather", "Weather",
                  "android.permission.CAMERA:denied")
            for state in states.values():
                agent(state, "sync")

            created = json.loads(agent(states["a"], "community", "create", "Crew", as_json=True))
            for k in ("b", "c"):
                agent(states[k], "community", "join", created["invite_code"])
            print(f"community formed, invite code {created['invite_code']}")

            agent(states["b"], "hide", "com.private.journal")
            apps_a = json.loads(agent(states["a"], "community", "apps", as_json=True))
            check(
                "hidden app invisible to others",
                all(r["package"] != "com.private.journal" for r in apps_a["apps"]),
            )
            bob_id = json.loads(states["b"].read_text())["member_id"]
            own = json.loads(agent(states["b"], "community", "explore", bob_id, as_json=True))
            check(
                "owner still sees it marked hidden",
                any(
                    a["package"] == "com.private.journal" and a.get("visibility") == "hidden"
                    for a in own["apps"]
                ),
            )

            tally = json.loads(agent(states["a"], "community", "permissions",
                                     "com.shared.weather", as_json=True))
            camera = next(
                p for p in tally["permissions"]
                if p["permission"] == "android.permission.CAMERA"
            )
            check(
                "camera tally is 2 granted / 1 denied of 3",
                (camera["granted_count"], camera["denied_count"], camera["total"]) == (2, 1, 3),
            )

            post = json.loads(agent(states["b"], "feed", "post", "anyone know this app?", as_json=True))
            agent(states["a"], "feed", "like", str(post["post_id"]))
            agent(states["c"], "feed", "reply", str(post["post_id"]), "looks fine")
            agent(states["a"], "msg", "send", bob_id, "check its permissions")

            events = json.loads(agent(states["b"], "watch", "--once", "--no-ack", as_json=True))
            kinds = [e["kind"] for e in events]
            check("notification chain in order", kinds == ["member_joined", "new_reply", "new_message"])
            redelivered = json.loads(agent(states["b"], "watch", "--once", "--no-ack", as_json=True))
            check("unacked events redeliver", redelivered == events)
            agent(states["b"], "watch", "--once")
            drained = json.loads(agent(states["b"], "watch", "--once", as_json=True))
            check("acked queue drains", drained == [])

            print("scenario complete")
        finally:
            server.terminate()
            server.wait(timeout=10)


if __name__ == "__main__":
    main()
