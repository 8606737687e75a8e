"""The HTTP surface binding every module together.

The route table is a fixed public contract. All responses are JSON with
snake_case field names; every error body is ``{code, message}`` with a
stable machine code from the errors module.
"""

from __future__ import annotations

import logging
import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass
from datetime import timedelta
from typing import Optional

import click
import uvicorn
from fastapi import Depends, FastAPI, Header, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel
from starlette.exceptions import HTTPException as StarletteHTTPException

from . import catalog as catalog_mod
from .catalog import CatalogStore
from .config import ServerConfig, load_config, resolve_telemetry_salt
from .directory import Caller, DirectoryService
from .domain import DeviceIdentity, PermissionDirectory, PermissionState, Visibility, Decision
from .errors import InvalidRequestError, ServiceError
from .events import NotificationQueue, TelemetryLog
from .oversight import OversightService, TallyFilter
from .social import ProTipSource, SocialService
from .store import Database
from .timeutil import Clock, utcnow

log = logging.getLogger("permcircle.server")

MAX_POLL_WAIT_MS = 25_000


@dataclass
class AppServices:
    config: ServerConfig
    db: Database
    permissions: PermissionDirectory
    queue: NotificationQueue
    telemetry: TelemetryLog
    directory: DirectoryService
    catalogs: CatalogStore
    oversight: OversightService
    social: SocialService


def build_services(config: ServerConfig, clock: Clock = utcnow) -> AppServices:
    config.data_dir.mkdir(parents=True, exist_ok=True)
    db = Database(config.db_path)
    permissions = (
        PermissionDirectory.from_file(config.permissions_path)
        if config.permissions_path
        else PermissionDirectory.bundled()
    )
    tip_period = timedelta(days=config.pro_tip_period_days)
    pro_tips = (
        ProTipSource.from_file(config.pro_tips_path, tip_period)
        if config.pro_tips_path
        else ProTipSource.bundled(tip_period)
    )
    queue = NotificationQueue(db, clock)
    telemetry = TelemetryLog(config.telemetry_path, resolve_telemetry_salt(config), clock)
    directory = DirectoryService(
        db, queue, clock, token_ttl=timedelta(days=config.token_ttl_days)
    )
    catalogs = CatalogStore(db)
    oversight = OversightService(db, catalogs, permissions)
    social = SocialService(db, pro_tips, queue, clock)
    return AppServices(
        config=config,
        db=db,
        permissions=permissions,
        queue=queue,
        telemetry=telemetry,
        directory=directory,
        catalogs=catalogs,
        oversight=oversight,
        social=social,
    )


# -- request bodies ----------------------------------------------------------
# String fields default to "" so emptiness is reported by the domain layer
# with its stable empty_field code instead of a generic validation error.


class RegisterBody(BaseModel):
    device_id: str = ""
    sim_serial: str = ""
    platform_id: str = ""
    display_name: str = ""


class CreateCommunityBody(BaseModel):
    name: str = ""


class JoinBody(BaseModel):
    invite_code: str = ""


class VisibilityBody(BaseModel):
    visibility: str = ""


class DecisionBody(BaseModel):
    decision: str = ""


class TextBody(BaseModel):
    body: str = ""


class AckBody(BaseModel):
    up_to_event_id: int = 0


class TelemetryBody(BaseModel):
    action: str = ""


def create_app(services: AppServices) -> FastAPI:
    config = services.config

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        stop = threading.Event()
        ticker = None
        interval = config.pro_tip_check_interval_s
        if interval > 0:

            def run():
                while not stop.wait(interval):
                    try:
                        created = services.social.tick_pro_tips()
                        if created:
                            log.info("posted %d pro tip(s)", len(created))
                    except Exception:
                        log.exception("pro-tip tick failed")

            ticker = threading.Thread(target=run, name="pro-tip-ticker", daemon=True)
            ticker.start()
        try:
            yield
        finally:
            stop.set()
            if ticker is not None:
                ticker.join(timeout=2)

    app = FastAPI(title="permcircle", lifespan=lifespan, openapi_url=None)

    # -- error envelope -------------------------------------------------------

    @app.exception_handler(ServiceError)
    async def on_service_error(request: Request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.http_status,
            content={"code": exc.code, "message": exc.message},
        )

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"code": "invalid_request", "message": "malformed request"},
        )

    @app.exception_handler(StarletteHTTPException)
    async def on_http_error(request: Request, exc: StarletteHTTPException):
        codes = {404: "not_found", 405: "method_not_allowed"}
        code = codes.get(exc.status_code, "http_error")
        return JSONResponse(
            status_code=exc.status_code,
            content={"code": code, "message": str(exc.detail)},
        )

    # -- auth ------------------------------------------------------------------

    def require_caller(authorization: Optional[str] = Header(default=None)) -> Caller:
        token = None
        if authorization:
            scheme, _, rest = authorization.partition(" ")
            if scheme.lower() == "bearer":
                token = rest.strip()
        return services.directory.authenticate(token)

    # -- directory ---------------------------------------------------------------

    @app.post("/v1/auth/register")
    def register(body: RegisterBody):
        identity = DeviceIdentity(body.device_id, body.sim_serial, body.platform_id)
        session, member = services.directory.register(identity, body.display_name)
        return {
            "token": session.token,
            "expires_at": session.expires_at,
            "member_id": member.member_id,
            "display_name": member.display_name,
        }

    @app.get("/v1/me")
    def me(caller: Caller = Depends(require_caller)):
        communities = services.directory.communities_for(caller.member_id)
        return {
            "member_id": caller.member_id,
            "display_name": caller.display_name,
            "communities": [
                {
                    "community_id": c.community_id,
                    "name": c.name,
                    "invite_code": c.invite_code,
                    "created_at": c.created_at,
                }
                for c in communities
            ],
        }

    @app.post("/v1/communities")
    def create_community(body: CreateCommunityBody, caller: Caller = Depends(require_caller)):
        community = services.directory.create_community(caller, body.name)
        return {
            "community_id": community.community_id,
            "name": community.name,
            "invite_code": community.invite_code,
            "created_at": community.created_at,
        }

    @app.post("/v1/communities/join")
    def join_community(body: JoinBody, caller: Caller = Depends(require_caller)):
        ref = services.directory.join_community(caller, body.invite_code)
        return {
            "member_id": ref.member_id,
            "display_name": ref.display_name,
            "community_id": ref.community_id,
        }

    @app.get("/v1/communities/{community_id}/members")
    def list_members(community_id: str, caller: Caller = Depends(require_caller)):
        members = services.directory.list_members(caller, community_id)
        return {
            "members": [
                {
                    "member_id": m.member_id,
                    "display_name": m.display_name,
                    "community_id": m.community_id,
                    "avatar_ref": m.avatar_ref,
                }
                for m in members
            ]
        }

    # -- catalog -----------------------------------------------------------------

    @app.put("/v1/catalog")
    def put_catalog(snapshot: list[dict], caller: Caller = Depends(require_caller)):
        try:
            entries = catalog_mod.snapshot_from_json(snapshot)
        except (ValueError, KeyError, TypeError) as exc:
            raise InvalidRequestError(f"bad snapshot: {exc}") from exc
        summary = services.catalogs.replace_snapshot(
            caller.member_id, caller.device_key, entries
        )
        return summary.to_json()

    @app.patch("/v1/catalog")
    def patch_catalog(diff: dict, caller: Caller = Depends(require_caller)):
        try:
            parsed = catalog_mod.CatalogDiff.from_json(diff)
        except (ValueError, KeyError, TypeError) as exc:
            raise InvalidRequestError(f"bad diff: {exc}") from exc
        summary = services.catalogs.apply_member_diff(
            caller.member_id, caller.device_key, parsed
        )
        return summary.to_json()

    @app.put("/v1/catalog/{package}/visibility")
    def put_visibility(
        package: str, body: VisibilityBody, caller: Caller = Depends(require_caller)
    ):
        try:
            visibility = Visibility(body.visibility)
        except ValueError as exc:
            raise InvalidRequestError("visibility must be 'visible' or 'hidden'") from exc
        version = services.catalogs.set_visibility(caller.member_id, package, visibility)
        return {"package": package, "visibility": visibility.value, "version": version}

    @app.put("/v1/catalog/{package}/permissions/{permission_name}")
    def put_permission(
        package: str,
        permission_name: str,
        body: DecisionBody,
        caller: Caller = Depends(require_caller),
    ):
        try:
            decision = Decision(body.decision)
        except ValueError as exc:
            raise InvalidRequestError("decision must be 'granted' or 'denied'") from exc
        version = services.catalogs.set_permission(
            caller.member_id, package, PermissionState(permission_name, decision)
        )
        return {
            "package": package,
            "permission": permission_name,
            "decision": decision.value,
            "version": version,
        }

    # -- oversight ------------------------------------------------------------------

    @app.get("/v1/communities/{community_id}/apps")
    def community_apps(community_id: str, caller: Caller = Depends(require_caller)):
        rows = services.oversight.community_apps(caller.member_id, community_id)
        return {"apps": [r.to_json() for r in rows]}

    @app.get("/v1/communities/{community_id}/members/{member_id}/apps")
    def member_apps(
        community_id: str, member_id: str, caller: Caller = Depends(require_caller)
    ):
        entries = services.oversight.member_apps(caller.member_id, community_id, member_id)
        return {
            "member_id": member_id,
            "apps": [catalog_mod.entry_to_json(e) for e in entries],
        }

    @app.get("/v1/communities/{community_id}/apps/{package}/permissions")
    def permission_tally(
        community_id: str,
        package: str,
        scope: str = Query(default="community"),
        filter: str = Query(default="all"),
        caller: Caller = Depends(require_caller),
    ):
        try:
            tally_filter = TallyFilter(filter)
        except ValueError as exc:
            raise InvalidRequestError("filter must be all, granted, or denied") from exc
        scope_member = None if scope in ("", "community") else scope
        rows = services.oversight.permission_tally(
            caller.member_id, community_id, package, scope_member, tally_filter
        )
        return {
            "package": package,
            "scope": scope,
            "filter": tally_filter.value,
            "permissions": [r.to_json() for r in rows],
        }

    # -- social ------------------------------------------------------------------

    @app.post("/v1/communities/{community_id}/feed")
    def create_post(
        community_id: str, body: TextBody, caller: Caller = Depends(require_caller)
    ):
        post = services.social.create_post(caller.member_id, community_id, body.body)
        return post.to_json()

    @app.get("/v1/communities/{community_id}/feed")
    def list_feed(community_id: str, caller: Caller = Depends(require_caller)):
        items = services.social.list_feed(caller.member_id, community_id)
        return {"posts": [item.to_json() for item in items]}

    @app.post("/v1/feed/{post_id}/likes")
    def toggle_like(post_id: int, caller: Caller = Depends(require_caller)):
        count, liked = services.social.toggle_like(caller.member_id, post_id)
        return {"post_id": post_id, "like_count": count, "liked": liked}

    @app.post("/v1/feed/{post_id}/replies")
    def reply(post_id: int, body: TextBody, caller: Caller = Depends(require_caller)):
        created = services.social.reply(caller.member_id, post_id, body.body)
        return created.to_json()

    @app.post("/v1/messages/{member_id}")
    def send_message(member_id: str, body: TextBody, caller: Caller = Depends(require_caller)):
        message = services.social.send_message(caller.member_id, member_id, body.body)
        return message.to_json()

    @app.get("/v1/messages/{member_id}")
    def list_conversation(
        member_id: str,
        limit: int = Query(default=50, ge=1, le=500),
        offset: int = Query(default=0, ge=0),
        caller: Caller = Depends(require_caller),
    ):
        messages = services.social.list_conversation(
            caller.member_id, member_id, limit=limit, offset=offset
        )
        return {"messages": [m.to_json() for m in messages]}

    # -- events ------------------------------------------------------------------

    @app.get("/v1/notifications")
    def poll_notifications(
        after: int = Query(default=0, ge=0),
        wait_ms: int = Query(default=0, ge=0, le=MAX_POLL_WAIT_MS),
        caller: Caller = Depends(require_caller),
    ):
        events = services.queue.poll(caller.member_id, after, wait=wait_ms / 1000.0)
        return {"events": [e.to_json() for e in events]}

    @app.post("/v1/notifications/ack")
    def ack_notifications(body: AckBody, caller: Caller = Depends(require_caller)):
        acked = services.queue.ack(caller.member_id, body.up_to_event_id)
        return {"acked": acked}

    @app.post("/v1/telemetry")
    def record_usage(body: TelemetryBody, caller: Caller = Depends(require_caller)):
        services.telemetry.record(caller.member_id, caller.token, body.action)
        return {"recorded": True}

    # -- misc ------------------------------------------------------------------

    @app.get("/v1/health")
    def health():
        return {"status": "ok"}

    if config.webui_dir is not None and config.webui_dir.is_dir():
        app.mount("/app", StaticFiles(directory=config.webui_dir, html=True), name="webui")

    return app


def serve(config: ServerConfig) -> None:
    """Run the service until interrupted; shuts down cleanly on SIGINT/SIGTERM."""
    services = build_services(config)
    app = create_app(services)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")


@click.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file; PERMCIRCLE_* env vars override it.")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--data-dir", type=click.Path(), default=None)
@click.option("--webui-dir", type=click.Path(), default=None)
def main(config_path, host, port, data_dir, webui_dir):
    """Run the community oversight server."""
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    try:
        config = load_config(
            config_path, host=host, port=port, data_dir=data_dir, webui_dir=webui_dir
        )
    except (ValueError, OSError) as exc:
        raise click.ClickException(f"bad config: {exc}")
    try:
        serve(config)
    except OSError as exc:
        raise click.ClickException(f"cannot bind {config.host}:{config.port}: {exc}")


if __name__ == "__main__":
    main()
