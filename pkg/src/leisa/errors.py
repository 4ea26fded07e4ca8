"""Exception hierarchy shared across the package.

Every error a caller is expected to handle has its own class; the gateway
maps these onto HTTP status codes in one place.
"""

from __future__ import annotations


class LeisaError(Exception):
    """Base class for all errors raised by this package."""

    code = "InternalError"

    def __init__(self, detail: str = ""):
        super().__init__(detail or self.code)
        self.detail = detail or self.code


# --- envelope / wire format ---------------------------------------------

class EnvelopeError(LeisaError):
    code = "EnvelopeError"


class MalformedJson(EnvelopeError):
    code = "MalformedJson"

    def __init__(self, detail: str, offset: int | None = None):
        super().__init__(detail)
        self.offset = offset


class NotAnObject(EnvelopeError):
    code = "NotAnObject"


class MissingEventType(EnvelopeError):
    code = "MissingEventType"


class InvalidEventType(EnvelopeError):
    code = "InvalidEventType"


class EventTypeMismatch(EnvelopeError):
    code = "EventTypeMismatch"


# --- schema validator ----------------------------------------------------

class UnreadableSchema(LeisaError):
    code = "UnreadableSchema"


# --- broker ---------------------------------------------------------------

class BrokerError(LeisaError):
    code = "BrokerError"


class UnknownQueue(BrokerError):
    code = "UnknownQueue"


class QueueConflict(BrokerError):
    code = "QueueConflict"


class UserConflict(BrokerError):
    code = "UserConflict"


class UnknownUser(BrokerError):
    code = "UnknownUser"


class PermissionDenied(BrokerError):
    code = "PermissionDenied"


class UnknownMessage(BrokerError):
    code = "UnknownMessage"


class NotDelivered(BrokerError):
    code = "NotDelivered"


class BrokerStorageFailure(BrokerError):
    code = "BrokerStorageFailure"


class CorruptLog(BrokerError):
    code = "CorruptLog"


# --- registry / routing ----------------------------------------------------

class RegistryError(LeisaError):
    code = "RegistryError"


class UsernameTaken(RegistryError):
    code = "UsernameTaken"


class WeakPassword(RegistryError):
    code = "WeakPassword"


class InvalidCredentials(RegistryError):
    code = "InvalidCredentials"


class UnknownService(RegistryError):
    code = "UnknownService"


class BrokerUnavailable(RegistryError):
    code = "BrokerUnavailable"


class NotAProducer(RegistryError):
    code = "NotAProducer"


class NotAConsumer(RegistryError):
    code = "NotAConsumer"


class UnknownConsumer(RegistryError):
    code = "UnknownConsumer"


# --- converter / bench ------------------------------------------------------

class UnreadableFile(LeisaError):
    code = "UnreadableFile"


class UnknownEventType(LeisaError):
    code = "UnknownEventType"


class EmptySamples(LeisaError):
    code = "EmptySamples"


class TargetUnreachable(LeisaError):
    code = "TargetUnreachable"


class FixtureSetupFailed(LeisaError):
    code = "FixtureSetupFailed"
