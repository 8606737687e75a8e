from __future__ import annotations

import socket
import threading
from datetime import datetime, timedelta, timezone

import pytest
import uvicorn
from fastapi.testclient import TestClient
from hypothesis import settings

from permcircle.catalog import CatalogStore
from permcircle.config import ServerConfig
from permcircle.directory import DirectoryService
from permcircle.domain import (
    CatalogEntry,
    Decision,
    DeviceIdentity,
    PermissionDirectory,
    PermissionState,
    Visibility,
)
from permcircle.events import NotificationQueue, TelemetryLog
from permcircle.oversight import OversightService
from permcircle.server import AppServices, build_services, create_app
from permcircle.social import ProTipSource, SocialService
from permcircle.store import Database

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


class FakeClock:
    def __init__(self, start: datetime | None = None):
        self.now = start or datetime(2026, 1, 1, 12, 0, tzinfo=timezone.utc)

    def __call__(self) -> datetime:
        return self.now

    def advance(self, **kwargs) -> None:
        self.now += timedelta(**kwargs)


@pytest.fixture
def clock() -> FakeClock:
    return FakeClock()


@pytest.fixture
def db(tmp_path) -> Database:
    return Database(tmp_path / "test.db")


@pytest.fixture
def services(tmp_path, db, clock) -> AppServices:
    config = ServerConfig(data_dir=tmp_path / "data", pro_tip_check_interval_s=0)
    permissions = PermissionDirectory.bundled()
    queue = NotificationQueue(db, clock)
    telemetry = TelemetryLog(config.telemetry_path, "test-salt", clock)
    directory = DirectoryService(db, queue, clock)
    catalogs = CatalogStore(db)
    return AppServices(
        config=config,
        db=db,
        permissions=permissions,
        queue=queue,
        telemetry=telemetry,
        directory=directory,
        catalogs=catalogs,
        oversight=OversightService(db, catalogs, permissions),
        social=SocialService(db, ProTipSource.bundled(), queue, clock),
    )


@pytest.fixture
def client(services) -> TestClient:
    app = create_app(services)
    with TestClient(app, raise_server_exceptions=False) as c:
        yield c


def identity(seed: str) -> DeviceIdentity:
    return DeviceIdentity(f"dev-{seed}", f"sim-{seed}", f"plat-{seed}")


def register(services: AppServices, seed: str, name: str):
    session, ref = services.directory.register(identity(seed), name)
    return session, ref


def auth(token: str) -> dict:
    return {"Authorization": f"Bearer {token}"}


def entry(package: str, label: str | None = None, visibility: str = "visible", **perms) -> CatalogEntry:
    return CatalogEntry(
        package=package,
        label=label or package.rsplit(".", 1)[-1],
        visibility=Visibility(visibility),
        permissions=tuple(
            PermissionState(name, Decision(decision)) for name, decision in perms.items()
        ),
    )


def raw_to_domain(raw: dict) -> CatalogEntry:
    return CatalogEntry(
        package=raw["package"],
        label=raw["label"],
        visibility=Visibility(raw["visibility"]),
        permissions=tuple(
            PermissionState(name, Decision(decision))
            for name, decision in sorted(raw["permissions"].items())
        ),
    )


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class LiveServer:
    """A real uvicorn server on a local port, run from a background thread."""

    def __init__(self, tmp_path, **config_kwargs):
        self.port = free_port()
        self.config = ServerConfig(
            host="127.0.0.1",
            port=self.port,
            data_dir=tmp_path / "server-data",
            pro_tip_check_interval_s=0,
            telemetry_salt="live-salt",
            **config_kwargs,
        )
        self.services = build_services(self.config)
        app = create_app(self.services)
        self._server = uvicorn.Server(
            uvicorn.Config(app, host="127.0.0.1", port=self.port, log_level="warning")
        )
        self._thread = threading.Thread(target=self._server.run, daemon=True)

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def start(self) -> "LiveServer":
        self._thread.start()
        import time

        deadline = time.monotonic() + 10
        while not self._server.started:
            if time.monotonic() > deadline:
                raise RuntimeError("server did not start")
            time.sleep(0.02)
        return self

    def stop(self) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=5)


@pytest.fixture
def live_server(tmp_path):
    server = LiveServer(tmp_path).start()
    yield server
    server.stop()
