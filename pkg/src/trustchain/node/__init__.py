"""Operator-facing full node: persistent registry, keystore, HTTP server,
CLI and the scripted scenario runner."""

from .config import NodeConfig
from .node import FullNode, Keystore
from .server import serve, start_server

__all__ = ["NodeConfig", "FullNode", "Keystore", "serve", "start_server"]
