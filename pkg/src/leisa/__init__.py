"""Livestock event information sharing: broker, registry, routing, validator,
HTTP gateway, benchmark harness and CSV conversion tooling."""

__version__ = "0.1.0"
