"""Gateway package: wire-protocol service over pluggable model adapters."""

from .app import GatewayConfig, create_app

__all__ = ["GatewayConfig", "create_app"]
