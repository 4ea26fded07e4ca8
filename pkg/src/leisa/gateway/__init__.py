from .app import GatewayApp, GatewayServer, ROUTE_AUTH_REQUIRED
from .config import GatewayConfig, load_config

__all__ = ["GatewayApp", "GatewayServer", "GatewayConfig", "load_config", "ROUTE_AUTH_REQUIRED"]
