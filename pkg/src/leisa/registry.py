"""Service lifecycle: registration, login, lookup, update, delete.

Registration orchestrates the broker in a fixed order — consumer queue
first, then broker user, then the registry row — with compensating rollback
so a failure at any step leaves no partial record, no orphan queue and no
orphan broker user.

Passwords are stored as salted PBKDF2 hashes.  Login failure is identical
for an unknown username and a wrong password, including the hashing work.
"""

from __future__ import annotations

import hashlib
import hmac
import logging
import os
import threading
from dataclasses import dataclass

from .broker import Broker, BrokerUser
from .domain import ServiceRole, utc_now_iso
from .errors import (
    BrokerUnavailable,
    InvalidCredentials,
    PermissionDenied,
    UnknownService,
    UsernameTaken,
    WeakPassword,
)
from .store import Store

log = logging.getLogger(__name__)

MIN_PASSWORD_LENGTH = 8
DEFAULT_PBKDF2_ITERATIONS = 50_000

_AUTH_CACHE_MAX = 10_000


def hash_password(password: str, iterations: int) -> str:
    salt = os.urandom(16)
    digest = hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, iterations)
    return f"pbkdf2-sha256${iterations}${salt.hex()}${digest.hex()}"


def verify_password(password: str, stored: str) -> bool:
    try:
        _, iterations, salt_hex, digest_hex = stored.split("$")
        digest = hashlib.pbkdf2_hmac(
            "sha256", password.encode("utf-8"), bytes.fromhex(salt_hex), int(iterations)
        )
        return hmac.compare_digest(digest.hex(), digest_hex)
    except (ValueError, TypeError):
        return False


@dataclass(frozen=True)
class ServiceRecord:
    """A registered service, as exposed to callers (never carries the hash)."""

    service_id: int
    username: str
    role: ServiceRole
    queue_name: str | None
    is_admin: bool
    created_at: str

    def as_dict(self) -> dict:
        return {
            "serviceId": self.service_id,
            "username": self.username,
            "role": self.role.value,
            "queueName": self.queue_name,
            "isAdmin": self.is_admin,
            "createdAt": self.created_at,
        }


def _record(row) -> ServiceRecord:
    return ServiceRecord(
        service_id=row["service_id"],
        username=row["username"],
        role=ServiceRole(row["role"]),
        queue_name=row["queue_name"],
        is_admin=bool(row["is_admin"]),
        created_at=row["created_at"],
    )


class Registry:
    def __init__(self, store: Store, broker: Broker,
                 pbkdf2_iterations: int = DEFAULT_PBKDF2_ITERATIONS):
        self.store = store
        self.broker = broker
        self.iterations = pbkdf2_iterations
        # memoizes "this cleartext matches this stored hash"; keys are
        # (sha256(cleartext), stored hash) so entries can never go stale
        self._auth_cache: dict[tuple[str, str], bool] = {}
        self._auth_lock = threading.Lock()
        self._dummy_hash = hash_password(os.urandom(8).hex(), pbkdf2_iterations)

    def queue_name_for(self, service_id: int) -> str:
        return f"svc-{service_id}"

    # -- registration -----------------------------------------------------

    def register_service(self, username: str, password: str, role: ServiceRole,
                         is_admin: bool = False,
                         caller: ServiceRecord | None = None) -> ServiceRecord:
        if len(password) < MIN_PASSWORD_LENGTH:
            raise WeakPassword(f"password must be at least {MIN_PASSWORD_LENGTH} characters")
        if not username:
            raise UsernameTaken("username must be non-empty")
        if is_admin and (caller is None or not caller.is_admin):
            raise PermissionDenied("only an admin may grant the admin flag")

        with self.store.lock:
            if self.store.query_one(
                "SELECT 1 FROM service WHERE username = ?", (username,)
            ):
                raise UsernameTaken(f"username {username!r} is taken")
            service_id = self.store.allocate_service_id()
            queue_name = self.queue_name_for(service_id) if role is ServiceRole.CONSUMER else None

            undo: list = []
            try:
                if role is ServiceRole.CONSUMER:
                    self.broker.create_queue(queue_name)
                    undo.append(lambda: self.broker.delete_queue(queue_name))
                self.broker.create_user(
                    BrokerUser(username=username, role=role,
                               readable_queue=queue_name, is_admin=is_admin),
                    secret=password,
                )
                undo.append(lambda: self.broker.delete_user(username))
                self.store.execute(
                    "INSERT INTO service (service_id, username, password_hash, role,"
                    " queue_name, is_admin, created_at) VALUES (?, ?, ?, ?, ?, ?, ?)",
                    (service_id, username, hash_password(password, self.iterations),
                     role.value, queue_name, int(is_admin), utc_now_iso()),
                )
            except Exception as exc:
                for step in reversed(undo):
                    try:
                        step()
                    except Exception:
                        log.exception("rollback step failed for %s", username)
                log.warning("registration of %r rolled back: %s", username, exc)
                raise BrokerUnavailable(f"registration failed: {exc}") from exc

        return self.find_by_username(username)

    def find_by_username(self, username: str) -> ServiceRecord:
        row = self.store.query_one("SELECT * FROM service WHERE username = ?", (username,))
        if row is None:
            raise UnknownService(f"no service named {username!r}")
        return _record(row)

    # -- authentication ------------------------------------------------------

    def login(self, username: str, password: str) -> ServiceRecord:
        row = self.store.query_one("SELECT * FROM service WHERE username = ?", (username,))
        if row is None:
            verify_password(password, self._dummy_hash)  # same work as a real miss
            raise InvalidCredentials("invalid username or password")
        stored = row["password_hash"]
        key = (hashlib.sha256(password.encode("utf-8")).hexdigest(), stored)
        with self._auth_lock:
            hit = self._auth_cache.get(key, False)
        if not hit:
            if not verify_password(password, stored):
                raise InvalidCredentials("invalid username or password")
            with self._auth_lock:
                if len(self._auth_cache) >= _AUTH_CACHE_MAX:
                    self._auth_cache.clear()
                self._auth_cache[key] = True
        return _record(row)

    # -- lookup -----------------------------------------------------------------

    def find_service(self, caller: ServiceRecord, service_id: int) -> ServiceRecord:
        row = self.store.query_one("SELECT * FROM service WHERE service_id = ?", (service_id,))
        if row is None:
            raise UnknownService(f"no service {service_id}")
        return _record(row)

    def list_all_services(self, caller: ServiceRecord) -> list[ServiceRecord]:
        if not caller.is_admin:
            raise PermissionDenied("listing all services requires admin")
        rows = self.store.query("SELECT * FROM service ORDER BY service_id")
        return [_record(r) for r in rows]

    def list_services(self, caller: ServiceRecord) -> list[ServiceRecord]:
        """The caller's own record plus every service it shares a mapping with."""
        if caller.role is ServiceRole.PRODUCER:
            rows = self.store.query(
                "SELECT DISTINCT s.* FROM service s"
                " JOIN queue_mapping m ON m.consumer_queue = s.queue_name"
                " WHERE m.producer_id = ?",
                (caller.service_id,),
            )
        else:
            rows = self.store.query(
                "SELECT DISTINCT s.* FROM service s"
                " JOIN queue_mapping m ON m.producer_id = s.service_id"
                " WHERE m.consumer_queue = ?",
                (caller.queue_name,),
            )
        records = {r["service_id"]: _record(r) for r in rows}
        records[caller.service_id] = caller
        return [records[k] for k in sorted(records)]

    # -- mutation ------------------------------------------------------------------

    def update_service(self, caller: ServiceRecord, service_id: int,
                       new_password: str | None = None,
                       new_username: str | None = None) -> ServiceRecord:
        if not (caller.is_admin or caller.service_id == service_id):
            raise PermissionDenied("may only update yourself")
        with self.store.lock:
            row = self.store.query_one(
                "SELECT * FROM service WHERE service_id = ?", (service_id,)
            )
            if row is None:
                raise UnknownService(f"no service {service_id}")
            username = row["username"]
            if new_username is not None and new_username != username:
                if self.store.query_one(
                    "SELECT 1 FROM service WHERE username = ?", (new_username,)
                ):
                    raise UsernameTaken(f"username {new_username!r} is taken")
            if new_password is not None and len(new_password) < MIN_PASSWORD_LENGTH:
                raise WeakPassword(f"password must be at least {MIN_PASSWORD_LENGTH} characters")

            # broker credentials move in lockstep with the registry row
            try:
                self.broker.update_user(
                    username, new_username=new_username, new_secret=new_password
                )
            except Exception as exc:
                raise BrokerUnavailable(f"broker update failed: {exc}") from exc
            if new_username is not None:
                self.store.execute(
                    "UPDATE service SET username = ? WHERE service_id = ?",
                    (new_username, service_id),
                )
            if new_password is not None:
                self.store.execute(
                    "UPDATE service SET password_hash = ? WHERE service_id = ?",
                    (hash_password(new_password, self.iterations), service_id),
                )
        row = self.store.query_one("SELECT * FROM service WHERE service_id = ?", (service_id,))
        return _record(row)

    def delete_service(self, caller: ServiceRecord, service_id: int) -> None:
        if not (caller.is_admin or caller.service_id == service_id):
            raise PermissionDenied("may only delete yourself")
        with self.store.lock:
            row = self.store.query_one(
                "SELECT * FROM service WHERE service_id = ?", (service_id,)
            )
            if row is None:
                raise UnknownService(f"no service {service_id}")
            username, queue_name = row["username"], row["queue_name"]
            try:
                self.broker.delete_user(username)
            except Exception:
                log.warning("broker user %r already absent during delete", username)
            if queue_name is not None:
                try:
                    self.broker.delete_queue(queue_name)
                except Exception:
                    log.warning("queue %r already absent during delete", queue_name)
            # cascade: mappings owned by or targeting the service
            self.store.execute(
                "DELETE FROM queue_mapping WHERE producer_id = ? OR consumer_queue = ?",
                (service_id, queue_name or ""),
            )
            self.store.execute("DELETE FROM service WHERE service_id = ?", (service_id,))

    # -- bootstrap --------------------------------------------------------------------

    def ensure_bootstrap_admin(self, username: str, password: str) -> ServiceRecord:
        """Create the configured admin on first start; idempotent afterwards."""
        try:
            return self.find_by_username(username)
        except UnknownService:
            pass
        admin = ServiceRecord(0, "", ServiceRole.PRODUCER, None, True, "")
        record = self.register_service(
            username, password, ServiceRole.PRODUCER, is_admin=True, caller=admin
        )
        log.info("bootstrap admin %r created (service %d)", username, record.service_id)
        return record
