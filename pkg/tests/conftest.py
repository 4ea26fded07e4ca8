"""Shared fixtures: an in-process gateway stack on an ephemeral port."""

from __future__ import annotations

import threading
from dataclasses import dataclass

import pytest

from leisa.broker import Broker
from leisa.gateway import GatewayApp, GatewayConfig, GatewayServer
from leisa.httpclient import HttpJsonClient
from leisa.registry import Registry
from leisa.routing import Routing
from leisa.store import Store

# keep hashing cheap in tests; production default is much higher
TEST_ITERATIONS = 1000

PASSWORD = "secret-pass-1"
ADMIN = ("admin", "admin-pass-123")

GOOD_WEIGHT = {
    "eventType": "weightEvent",
    "payload": {
        "animalId": "AU000123",
        "eventDateTime": "2024-01-05T06:00:00Z",
        "weightKg": 412.5,
    },
}


@dataclass
class Stack:
    app: GatewayApp
    server: GatewayServer
    base_url: str
    client: HttpJsonClient

    def register(self, username: str, role: str, password: str = PASSWORD,
                 expect: int = 201) -> dict:
        status, doc = self.client.request(
            "POST", "/services",
            body={"username": username, "password": password, "role": role},
        )
        assert status == expect, doc
        return doc

    def publish(self, auth: tuple[str, str], body: dict, event_type: str = "weightEvent",
                expect: int = 200) -> dict:
        status, doc = self.client.request(
            "POST", f"/publish/{event_type}", body=body, auth=auth)
        assert status == expect, doc
        return doc

    def drain(self, auth: tuple[str, str], batch: int = 200, wait: float = 0.2) -> list[dict]:
        messages = []
        while True:
            status, doc = self.client.request(
                "GET", f"/consume?max={batch}&wait={wait}", auth=auth)
            assert status == 200, doc
            if not doc["messages"]:
                return messages
            ids = [m["messageId"] for m in doc["messages"]]
            status, _ = self.client.request(
                "POST", "/consume/ack", body={"messageIds": ids}, auth=auth)
            assert status == 200
            messages.extend(doc["messages"])


def start_stack(storage_root, schema_dir=None, admin=ADMIN) -> Stack:
    config = GatewayConfig(
        listen_port=0,
        storage_root=str(storage_root),
        schema_dir=str(schema_dir) if schema_dir else None,
        admin_username=admin[0] if admin else None,
        admin_password=admin[1] if admin else None,
        pbkdf2_iterations=TEST_ITERATIONS,
    )
    app = GatewayApp(config)
    server = GatewayServer(app)
    threading.Thread(
        target=lambda: server.serve_forever(poll_interval=0.05), daemon=True).start()
    base_url = f"http://127.0.0.1:{server.port}"
    return Stack(app=app, server=server, base_url=base_url,
                 client=HttpJsonClient(base_url))


def stop_stack(stack: Stack) -> None:
    stack.client.close()
    stack.server.shutdown()
    stack.server.server_close()
    stack.app.close()


@pytest.fixture
def stack(tmp_path):
    s = start_stack(tmp_path / "data")
    yield s
    stop_stack(s)


@pytest.fixture
def broker(tmp_path):
    b = Broker(tmp_path / "broker")
    yield b
    b.close()


@pytest.fixture
def registry_env(tmp_path):
    """(store, broker, registry, routing) wired together, no HTTP."""
    broker = Broker(tmp_path / "broker")
    store = Store(tmp_path / "registry.db")
    registry = Registry(store, broker, pbkdf2_iterations=TEST_ITERATIONS)
    routing = Routing(store)
    yield store, broker, registry, routing
    broker.close()
    store.close()
