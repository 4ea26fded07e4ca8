from .core import Broker, BrokerStats, BrokerUser, ConsumedMessage, QueueStats, QUEUE_NAME_RE

__all__ = [
    "Broker",
    "BrokerStats",
    "BrokerUser",
    "ConsumedMessage",
    "QueueStats",
    "QUEUE_NAME_RE",
]
