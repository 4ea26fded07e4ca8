"""The sole network surface: HTTP+JSON endpoints for all fourteen operations.

Endpoint map:

    POST   /services            register (no auth; admin flag needs an admin caller)
    POST   /services/login      login (no auth)
    DELETE /services/{id}       delete service (cascades queue + mappings)
    GET    /services/{id}       find service
    GET    /services/all        list every service (admin)
    GET    /services            list own + mapped services
    PUT    /services/{id}       update username/password
    POST   /validate            validate a message (no auth)
    POST   /publish/{eventType} validate, resolve mappings, fan out to queues
    POST   /mappings            set queue mappings
    GET    /mappings            get visible mappings
    PUT    /mappings            replace mappings for an event type
    DELETE /mappings[?eventType=] delete mappings
    GET    /consume             long-poll fetch from own queue
    POST   /consume/ack         acknowledge delivered messages
    GET    /consume/stream      upgrade to a streaming channel (NDJSON both ways)

Authentication is HTTP Basic (TLS termination is assumed external).  Error
responses share one shape: {"error": code, "detail": text, "requestId": id}.
"""

from __future__ import annotations

import base64
import binascii
import json
import logging
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from ..broker import Broker
from ..domain import ServiceRole, assemble_envelope, parse_envelope, serialize_envelope
from ..errors import (
    BrokerStorageFailure,
    BrokerUnavailable,
    EnvelopeError,
    EventTypeMismatch,
    InvalidCredentials,
    InvalidEventType,
    LeisaError,
    MalformedJson,
    MissingEventType,
    NotAConsumer,
    NotAnObject,
    NotAProducer,
    NotDelivered,
    PermissionDenied,
    QueueConflict,
    UnknownConsumer,
    UnknownMessage,
    UnknownQueue,
    UnknownService,
    UserConflict,
    UsernameTaken,
    WeakPassword,
)
from ..registry import Registry, ServiceRecord
from ..routing import Routing
from ..schemas import load_schemas, validate
from ..store import Store
from .config import GatewayConfig

log = logging.getLogger(__name__)

MAX_BODY = 8 * 1024 * 1024

STREAM_PROTOCOL = "leisa-stream/1"

# Which routes demand authentication.  Registration, login and the validator
# are open; everything else requires Basic credentials.
ROUTE_AUTH_REQUIRED: dict[str, bool] = {
    "register": False,
    "login": False,
    "delete_service": True,
    "find_service": True,
    "list_all_services": True,
    "list_services": True,
    "validate": False,
    "publish": True,
    "update_service": True,
    "set_mapping": True,
    "get_mapping": True,
    "update_mapping": True,
    "delete_mapping": True,
    "consume": True,
}

_ERROR_STATUS: dict[type, int] = {
    MalformedJson: 400,
    NotAnObject: 400,
    MissingEventType: 400,
    InvalidEventType: 400,
    EventTypeMismatch: 400,
    InvalidCredentials: 401,
    PermissionDenied: 403,
    NotAProducer: 403,
    NotAConsumer: 403,
    UnknownService: 404,
    UnknownQueue: 404,
    UnknownMessage: 404,
    UsernameTaken: 409,
    QueueConflict: 409,
    UserConflict: 409,
    NotDelivered: 409,
    WeakPassword: 422,
    UnknownConsumer: 422,
    BrokerUnavailable: 503,
    BrokerStorageFailure: 503,
}


class ApiError(Exception):
    def __init__(self, status: int, code: str, detail: str, extra: dict | None = None):
        super().__init__(detail)
        self.status = status
        self.code = code
        self.detail = detail
        self.extra = extra or {}


def _status_for(exc: LeisaError) -> int:
    for klass, status in _ERROR_STATUS.items():
        if isinstance(exc, klass):
            return status
    return 500


@dataclass
class RequestContext:
    service: ServiceRecord | None
    request_id: str
    received_at: datetime


class GatewayApp:
    """Wires the store, broker, registry, routing and schema registry together
    and implements one method per endpoint."""

    def __init__(self, config: GatewayConfig):
        self.config = config
        self.broker = Broker(config.broker_root)
        self.store = Store(config.registry_db)
        self.registry = Registry(self.store, self.broker,
                                 pbkdf2_iterations=config.pbkdf2_iterations)
        self.routing = Routing(self.store)
        self.schemas = load_schemas(config.schema_dir)
        if config.admin_username and config.admin_password:
            self.registry.ensure_bootstrap_admin(config.admin_username, config.admin_password)

    def close(self) -> None:
        self.broker.close()
        self.store.close()

    # -- service lifecycle --------------------------------------------------

    def register(self, ctx: RequestContext, body: dict) -> tuple[int, dict]:
        role_raw = body.get("role")
        if role_raw not in ("producer", "consumer"):
            raise ApiError(400, "BadRequest", "role must be 'producer' or 'consumer'")
        record = self.registry.register_service(
            username=str(body.get("username", "")),
            password=str(body.get("password", "")),
            role=ServiceRole(role_raw),
            is_admin=bool(body.get("isAdmin", False)),
            caller=ctx.service,
        )
        return 201, record.as_dict()

    def login(self, ctx: RequestContext, body: dict) -> tuple[int, dict]:
        if ctx.service is not None and not body:
            return 200, ctx.service.as_dict()
        record = self.registry.login(str(body.get("username", "")), str(body.get("password", "")))
        return 200, record.as_dict()

    def delete_service(self, ctx: RequestContext, service_id: int) -> tuple[int, dict]:
        self.registry.delete_service(ctx.service, service_id)
        return 200, {"deleted": service_id}

    def find_service(self, ctx: RequestContext, service_id: int) -> tuple[int, dict]:
        return 200, self.registry.find_service(ctx.service, service_id).as_dict()

    def list_all_services(self, ctx: RequestContext) -> tuple[int, dict]:
        records = self.registry.list_all_services(ctx.service)
        return 200, {"services": [r.as_dict() for r in records]}

    def list_services(self, ctx: RequestContext) -> tuple[int, dict]:
        records = self.registry.list_services(ctx.service)
        return 200, {"services": [r.as_dict() for r in records]}

    def update_service(self, ctx: RequestContext, service_id: int, body: dict) -> tuple[int, dict]:
        record = self.registry.update_service(
            ctx.service, service_id,
            new_password=body.get("password"),
            new_username=body.get("username"),
        )
        return 200, record.as_dict()

    # -- validation and publishing -------------------------------------------

    def validate_message(self, ctx: RequestContext, raw: bytes, event_type: str | None) -> tuple[int, dict]:
        env = assemble_envelope(raw, event_type)
        result = validate(env, self.schemas)
        return (200 if result.valid else 422), result.as_dict()

    def publish(self, ctx: RequestContext, event_type: str, raw: bytes) -> tuple[int, dict]:
        service = ctx.service
        if service.role is not ServiceRole.PRODUCER and not service.is_admin:
            raise NotAProducer(f"service {service.service_id} is not a producer")
        env = assemble_envelope(raw, event_type)
        result = validate(env, self.schemas)
        receipt = {
            "eventType": env.event_type,
            "validation": result.as_dict(),
            "deliveredTo": [],
            "messageIds": {},
        }
        if not result.valid:
            raise ApiError(422, "SchemaViolation", "message failed validation", extra=receipt)
        queues = self.routing.resolve(service.service_id, env.event_type)
        body = serialize_envelope(env)
        failed: dict[str, str] = {}
        for queue in queues:
            try:
                mid = self.broker.publish(service.username, queue, body)
                receipt["deliveredTo"].append(queue)
                receipt["messageIds"][queue] = mid
            except LeisaError as exc:
                failed[queue] = exc.code
        if failed:
            receipt["failed"] = failed
            raise ApiError(502, "PartialDelivery",
                           f"delivery failed for {sorted(failed)}", extra=receipt)
        return 200, receipt

    # -- consumption ---------------------------------------------------------

    def _consumer_queue(self, ctx: RequestContext) -> str:
        service = ctx.service
        if service.role is not ServiceRole.CONSUMER or service.queue_name is None:
            raise NotAConsumer(f"service {service.service_id} is not a consumer")
        return service.queue_name

    def consume(self, ctx: RequestContext, max_messages: int, wait: float) -> tuple[int, dict]:
        queue = self._consumer_queue(ctx)
        max_messages = max(1, min(max_messages, self.config.consume_max_limit))
        wait = max(0.0, min(wait, self.config.consume_wait_max))
        messages = self.broker.consume(ctx.service.username, queue, max_messages, wait)
        return 200, {"messages": [
            {
                "messageId": m.message_id,
                "queue": queue,
                "enqueuedAt": m.enqueued_at,
                "body": json.loads(m.body),
            }
            for m in messages
        ]}

    def ack(self, ctx: RequestContext, body: dict) -> tuple[int, dict]:
        queue = self._consumer_queue(ctx)
        ids = body.get("messageIds")
        if ids is None:
            single = body.get("messageId")
            ids = [single] if single is not None else []
        if not isinstance(ids, list) or not all(isinstance(i, int) for i in ids):
            raise ApiError(400, "BadRequest", "messageIds must be a list of integers")
        acked = []
        for mid in ids:
            self.broker.ack(ctx.service.username, queue, mid)
            acked.append(mid)
        return 200, {"acked": acked}


class GatewayServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, app: GatewayApp):
        self.app = app
        super().__init__((app.config.listen_host, app.config.listen_port), GatewayHandler)

    @property
    def port(self) -> int:
        return self.server_address[1]


class GatewayHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    disable_nagle_algorithm = True
    wbufsize = 64 * 1024
    server: GatewayServer

    # -- plumbing ------------------------------------------------------------

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)

    def _send_json(self, status: int, doc: dict) -> None:
        payload = json.dumps(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)
        self.wfile.flush()

    def _send_error_json(self, status: int, code: str, detail: str,
                         request_id: str, extra: dict | None = None) -> None:
        doc = {"error": code, "detail": detail, "requestId": request_id}
        if extra:
            doc.update(extra)
        if status == 401:
            # ask for Basic credentials explicitly
            payload = json.dumps(doc).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.send_header("WWW-Authenticate", 'Basic realm="leisa"')
            self.end_headers()
            self.wfile.write(payload)
            self.wfile.flush()
            return
        self._send_json(status, doc)

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY:
            raise ApiError(413, "PayloadTooLarge", f"body exceeds {MAX_BODY} bytes")
        return self.rfile.read(length) if length else b""

    def _json_body(self) -> dict:
        raw = self._read_body()
        if not raw:
            return {}
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedJson(f"invalid JSON at offset {exc.pos}: {exc.msg}", offset=exc.pos)
        if not isinstance(doc, dict):
            raise NotAnObject("request body must be a JSON object")
        return doc

    def _authenticate(self, required: bool) -> ServiceRecord | None:
        header = self.headers.get("Authorization")
        if header is None:
            if required:
                raise ApiError(401, "Unauthenticated", "missing Authorization header")
            return None
        scheme, _, value = header.partition(" ")
        if scheme.lower() != "basic":
            raise ApiError(401, "Unauthenticated", "only Basic authentication is supported")
        try:
            decoded = base64.b64decode(value.strip(), validate=True).decode("utf-8")
            username, _, password = decoded.partition(":")
        except (binascii.Error, UnicodeDecodeError):
            raise ApiError(401, "Unauthenticated", "malformed Basic credentials")
        return self.server.app.registry.login(username, password)

    def _query(self) -> dict[str, str]:
        parts = urlsplit(self.path)
        return {k: v[-1] for k, v in parse_qs(parts.query).items()}

    # -- routing ---------------------------------------------------------------

    def _route(self, method: str) -> tuple[str, tuple]:
        segs = [s for s in urlsplit(self.path).path.split("/") if s]
        if segs[:1] == ["services"]:
            if method == "POST" and len(segs) == 1:
                return "register", ()
            if method == "POST" and segs[1:] == ["login"]:
                return "login", ()
            if method == "GET" and segs[1:] == ["all"]:
                return "list_all_services", ()
            if method == "GET" and len(segs) == 1:
                return "list_services", ()
            if len(segs) == 2 and segs[1].isdigit():
                sid = (int(segs[1]),)
                if method == "GET":
                    return "find_service", sid
                if method == "DELETE":
                    return "delete_service", sid
                if method == "PUT":
                    return "update_service", sid
        elif segs[:1] == ["validate"] and len(segs) == 1 and method == "POST":
            return "validate", ()
        elif segs[:1] == ["publish"] and len(segs) == 2 and method == "POST":
            return "publish", (segs[1],)
        elif segs[:1] == ["mappings"] and len(segs) == 1:
            if method == "POST":
                return "set_mapping", ()
            if method == "GET":
                return "get_mapping", ()
            if method == "PUT":
                return "update_mapping", ()
            if method == "DELETE":
                return "delete_mapping", ()
        elif segs[:1] == ["consume"]:
            if method == "GET" and len(segs) == 1:
                return "consume", ()
            if method == "POST" and segs[1:] == ["ack"]:
                return "consume_ack", ()
            if method == "GET" and segs[1:] == ["stream"]:
                return "consume_stream", ()
        raise ApiError(404, "NotFound", f"no route for {method} {self.path}")

    def _handle(self, method: str) -> None:
        app = self.server.app
        request_id = uuid.uuid4().hex[:12]
        try:
            route, args = self._route(method)
            auth_key = {"consume_ack": "consume", "consume_stream": "consume"}.get(route, route)
            service = self._authenticate(ROUTE_AUTH_REQUIRED[auth_key])
            ctx = RequestContext(service=service, request_id=request_id,
                                 received_at=datetime.now(timezone.utc))
            query = self._query()

            if route == "register":
                status, doc = app.register(ctx, self._json_body())
            elif route == "login":
                status, doc = app.login(ctx, self._json_body())
            elif route == "delete_service":
                status, doc = app.delete_service(ctx, args[0])
            elif route == "find_service":
                status, doc = app.find_service(ctx, args[0])
            elif route == "list_all_services":
                status, doc = app.list_all_services(ctx)
            elif route == "list_services":
                status, doc = app.list_services(ctx)
            elif route == "update_service":
                status, doc = app.update_service(ctx, args[0], self._json_body())
            elif route == "validate":
                status, doc = app.validate_message(ctx, self._read_body(), query.get("eventType"))
            elif route == "publish":
                status, doc = app.publish(ctx, args[0], self._read_body())
            elif route == "set_mapping":
                body = self._json_body()
                records = app.routing.set_queue_mapping(
                    ctx.service, _field(body, "eventType", str), _id_list(body))
                status, doc = 200, {"mappings": [m.as_dict() for m in records]}
            elif route == "get_mapping":
                records = app.routing.get_queue_mapping(ctx.service)
                status, doc = 200, {"mappings": [m.as_dict() for m in records]}
            elif route == "update_mapping":
                body = self._json_body()
                records = app.routing.update_queue_mapping(
                    ctx.service, _field(body, "eventType", str), _id_list(body))
                status, doc = 200, {"mappings": [m.as_dict() for m in records]}
            elif route == "delete_mapping":
                removed = app.routing.delete_queue_mapping(ctx.service, query.get("eventType"))
                status, doc = 200, {"removed": removed}
            elif route == "consume":
                status, doc = app.consume(
                    ctx,
                    max_messages=int(query.get("max", app.config.consume_max_default)),
                    wait=float(query.get("wait", app.config.consume_wait_default)),
                )
            elif route == "consume_ack":
                status, doc = app.ack(ctx, self._json_body())
            elif route == "consume_stream":
                self._stream(ctx)
                return
            else:  # pragma: no cover
                raise ApiError(404, "NotFound", "unreachable")
            self._send_json(status, doc)
        except ApiError as exc:
            self._send_error_json(exc.status, exc.code, exc.detail, request_id, exc.extra)
        except LeisaError as exc:
            self._send_error_json(_status_for(exc), exc.code, exc.detail, request_id)
        except (BrokenPipeError, ConnectionResetError):
            self.close_connection = True
        except Exception:
            log.exception("request %s failed", request_id)
            self._send_error_json(500, "InternalError", "internal error", request_id)

    # -- streaming consume -------------------------------------------------------

    def _stream(self, ctx: RequestContext) -> None:
        """Upgrade the connection and push messages as NDJSON lines; the client
        sends {"ack": <id>} lines back on the same channel."""
        app = self.server.app
        if self.headers.get("Upgrade", "").lower() != STREAM_PROTOCOL:
            raise ApiError(426, "UpgradeRequired",
                           f"set 'Upgrade: {STREAM_PROTOCOL}' to open a stream")
        queue = app._consumer_queue(ctx)
        username = ctx.service.username

        self.send_response(101, "Switching Protocols")
        self.send_header("Upgrade", STREAM_PROTOCOL)
        self.send_header("Connection", "Upgrade")
        self.end_headers()
        self.wfile.flush()

        stop = threading.Event()

        def read_acks():
            try:
                while not stop.is_set():
                    line = self.rfile.readline()
                    if not line:
                        break
                    try:
                        doc = json.loads(line)
                        mid = doc.get("ack")
                        if isinstance(mid, int):
                            app.broker.ack(username, queue, mid)
                    except (json.JSONDecodeError, LeisaError) as exc:
                        log.debug("stream ack ignored: %s", exc)
            except OSError:
                pass
            finally:
                stop.set()

        reader = threading.Thread(target=read_acks, daemon=True)
        reader.start()
        try:
            while not stop.is_set():
                try:
                    messages = app.broker.consume(username, queue, max_messages=32, wait=0.25)
                except LeisaError:
                    break  # queue deleted under our feet
                for m in messages:
                    line = json.dumps({
                        "messageId": m.message_id,
                        "queue": queue,
                        "enqueuedAt": m.enqueued_at,
                        "body": json.loads(m.body),
                    }) + "\n"
                    self.wfile.write(line.encode("utf-8"))
                if messages:
                    self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            stop.set()
            self.close_connection = True

    def do_GET(self):
        self._handle("GET")

    def do_POST(self):
        self._handle("POST")

    def do_PUT(self):
        self._handle("PUT")

    def do_DELETE(self):
        self._handle("DELETE")


def _field(body: dict, name: str, kind: type) -> str:
    value = body.get(name)
    if not isinstance(value, kind):
        raise ApiError(400, "BadRequest", f"{name} must be a {kind.__name__}")
    return value


def _id_list(body: dict) -> list[int]:
    ids = body.get("consumerIds")
    if not isinstance(ids, list) or not all(isinstance(i, int) for i in ids):
        raise ApiError(400, "BadRequest", "consumerIds must be a list of integers")
    return ids
