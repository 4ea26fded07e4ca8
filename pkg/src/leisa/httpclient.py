"""Minimal keep-alive JSON client over http.client.

The benchmark harness issues hundreds of thousands of requests; a persistent
connection with no per-request session machinery keeps the client side out of
the measurement.  Not thread-safe: use one instance per worker thread.
"""

from __future__ import annotations

import base64
import http.client
import json
import socket
from urllib.parse import urlsplit

from .errors import TargetUnreachable


class HttpJsonClient:
    def __init__(self, base_url: str, timeout: float = 330.0):
        parts = urlsplit(base_url)
        if parts.scheme not in ("http", ""):
            raise ValueError(f"unsupported scheme in {base_url!r}")
        self.host = parts.hostname or "127.0.0.1"
        self.port = parts.port or 80
        self.timeout = timeout
        self._conn: http.client.HTTPConnection | None = None
        self._auth_header: str | None = None

    def set_basic_auth(self, username: str, password: str) -> None:
        token = base64.b64encode(f"{username}:{password}".encode("utf-8")).decode("ascii")
        self._auth_header = f"Basic {token}"

    def clear_auth(self) -> None:
        self._auth_header = None

    def _connection(self) -> http.client.HTTPConnection:
        if self._conn is None:
            self._conn = http.client.HTTPConnection(self.host, self.port, timeout=self.timeout)
        return self._conn

    def request(self, method: str, path: str,
                body: dict | list | bytes | None = None,
                auth: tuple[str, str] | None = None) -> tuple[int, dict | list | None]:
        """Send one request; returns (status, parsed JSON body or None).

        Reconnects once on a dropped keep-alive connection.
        """
        if isinstance(body, (dict, list)):
            payload = json.dumps(body).encode("utf-8")
        else:
            payload = body
        headers = {"Content-Type": "application/json"} if payload is not None else {}
        if auth is not None:
            token = base64.b64encode(f"{auth[0]}:{auth[1]}".encode("utf-8")).decode("ascii")
            headers["Authorization"] = f"Basic {token}"
        elif self._auth_header is not None:
            headers["Authorization"] = self._auth_header

        for attempt in (0, 1):
            conn = self._connection()
            try:
                conn.request(method, path, body=payload, headers=headers)
                response = conn.getresponse()
                raw = response.read()
                break
            except (http.client.HTTPException, ConnectionError, socket.timeout, OSError) as exc:
                self.close()
                if attempt == 1:
                    raise TargetUnreachable(f"{method} {path}: {exc}") from exc
        doc = None
        if raw:
            try:
                doc = json.loads(raw)
            except json.JSONDecodeError:
                doc = None
        return response.status, doc

    def close(self) -> None:
        if self._conn is not None:
            self._conn.close()
            self._conn = None
