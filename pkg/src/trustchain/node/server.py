"""Wire protocol of the full node, consumed by light clients.

HTTP/1.1, canonical-JSON bodies (binary for header streams):

    GET  /did/{did}                  resolution: document, metadata, status
    GET  /bundle/{did}[?op=N]        verification bundle (default: latest op)
    GET  /chain/{did}                attestation chains plus per-element
                                     operations and bundles
    GET  /headers?from={h}           raw 80-byte headers from height h
    GET  /root/candidates?date={d}   root-shaped DIDs created on UTC day d
    POST /operations                 anchor a batch of DID operations
    GET  /chain-info                 tip height, chain id, tip timestamp

Errors are {"code", "step", "message"}; step carries the timestamp
verification stage where applicable, else null.
"""
from __future__ import annotations

import json
import logging
import threading
from datetime import date
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, unquote, urlparse

from ..anchor import DidNotFound, verification_data
from ..attestation import build_chains
from ..canonical import canonical_str
from ..didcore import DidOperation
from ..errors import TrustchainError
from ..registry import HeightBeyondTip
from .node import FullNode

logger = logging.getLogger(__name__)


class AddressInUse(TrustchainError):
    """Listen address already bound."""


def _element_payload(node: FullNode, did: str) -> dict:
    state = node.state
    entry = state.get_entry(did)
    if entry is None:
        raise DidNotFound(did)
    latest = entry.latest
    genesis = entry.genesis
    return {
        "did": did,
        "status": entry.record.status,
        "document": entry.record.document.to_dict() if entry.record.document else None,
        "metadata": entry.record.metadata.to_dict(),
        "operation": latest.operation.to_dict(),
        "batchIndex": latest.batch_index,
        "timestamp": latest.timestamp,
        "bundle": verification_data(did, state, node.store).to_dict(),
        "genesis": {
            "operation": genesis.operation.to_dict(),
            "batchIndex": genesis.batch_index,
            "timestamp": genesis.timestamp,
            "bundle": verification_data(did, state, node.store, op_index=0).to_dict(),
        },
    }


def did_payload(node: FullNode, did: str) -> dict:
    entry = node.state.get_entry(did)
    if entry is None:
        raise DidNotFound(did)
    return {
        "did": did,
        "status": entry.record.status,
        "document": entry.record.document.to_dict() if entry.record.document else None,
        "metadata": entry.record.metadata.to_dict(),
        "latestHeight": entry.latest.block_height,
    }


def chain_payload(node: FullNode, did: str) -> dict:
    state = node.state
    entry = state.get_entry(did)
    if entry is None:
        raise DidNotFound(did)
    chains = build_chains(did, state)
    element_dids = {e.did for chain in chains for e in chain.elements}
    return {
        "did": did,
        "status": entry.record.status,
        "latestHeight": entry.latest.block_height,
        "chains": [[e.did for e in chain.elements] for chain in chains],
        "elements": {d: _element_payload(node, d) for d in sorted(element_dids)},
    }


def candidates_payload(node: FullNode, day: date) -> dict:
    from ..roottrust import scan_date_window

    state = node.state
    out = []
    for entry in scan_date_window(day, state):
        genesis = entry.genesis
        out.append({
            "did": entry.record.did,
            "operation": genesis.operation.to_dict(),
            "batchIndex": genesis.batch_index,
            "timestamp": genesis.timestamp,
            "bundle": verification_data(entry.record.did, state, node.store,
                                        op_index=0).to_dict(),
        })
    return {"date": day.isoformat(), "candidates": out}


class NodeRequestHandler(BaseHTTPRequestHandler):
    server_version = "trustchain-node/0.1"
    protocol_version = "HTTP/1.1"

    @property
    def node(self) -> FullNode:
        return self.server.node  # type: ignore[attr-defined]

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        logger.debug("%s %s", self.address_string(), format % args)

    def _send_json(self, payload: dict, status: int = 200) -> None:
        body = canonical_str(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_body(self, status: int, code: str, message: str,
                         step: int | None = None) -> None:
        self._send_json({"code": code, "step": step, "message": message}, status)

    def _send_bytes(self, body: bytes) -> None:
        self.send_response(200)
        self.send_header("Content-Type", "application/octet-stream")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):  # noqa: N802 - stdlib casing
        url = urlparse(self.path)
        parts = [unquote(p) for p in url.path.split("/") if p]
        query = parse_qs(url.query)
        try:
            if parts[:1] == ["did"] and len(parts) == 2:
                self._send_json(did_payload(self.node, parts[1]))
            elif parts[:1] == ["bundle"] and len(parts) == 2:
                op_index = int(query.get("op", ["-1"])[0])
                bundle = verification_data(parts[1], self.node.state,
                                           self.node.store, op_index=op_index)
                self._send_json(bundle.to_dict())
            elif parts[:1] == ["chain"] and len(parts) == 2:
                self._send_json(chain_payload(self.node, parts[1]))
            elif parts == ["headers"]:
                from_height = int(query.get("from", ["0"])[0])
                tip = self.node.chain.height
                if from_height > tip + 1:
                    raise HeightBeyondTip(f"{from_height} > tip {tip}")
                headers = (self.node.chain.headers(from_height)
                           if from_height <= tip else [])
                self._send_bytes(b"".join(h.serialize() for h in headers))
            elif parts == ["root", "candidates"]:
                day = date.fromisoformat(query["date"][0])
                self._send_json(candidates_payload(self.node, day))
            elif parts == ["chain-info"]:
                tip = self.node.chain.tip
                self._send_json({
                    "chainId": self.node.chain.chain_id,
                    "height": tip.height,
                    "tipTimestamp": tip.header.timestamp,
                    "bits": self.node.chain.bits,
                })
            else:
                self._send_error_body(404, "unknown-endpoint", self.path)
        except DidNotFound as e:
            self._send_error_body(404, "not-found", str(e))
        except HeightBeyondTip as e:
            self._send_error_body(416, "height-beyond-tip", str(e))
        except TrustchainError as e:
            self._send_error_body(422, _error_code(e), str(e))
        except (KeyError, ValueError, IndexError) as e:
            self._send_error_body(400, "bad-request", f"{type(e).__name__}: {e}")

    def do_POST(self):  # noqa: N802
        url = urlparse(self.path)
        if url.path != "/operations":
            self._send_error_body(404, "unknown-endpoint", self.path)
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length))
            operations = [DidOperation.from_dict(d) for d in body["operations"]]
            txid, height = self.node.anchor(operations, body.get("timestamp"))
            self._send_json({"txid": txid.hex(), "height": height})
        except TrustchainError as e:
            self._send_error_body(422, _error_code(e), str(e))
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
            self._send_error_body(400, "bad-request", f"{type(e).__name__}: {e}")


def _error_code(e: Exception) -> str:
    # CamelCase exception name -> kebab-case wire code
    name = type(e).__name__
    out = []
    for i, ch in enumerate(name):
        if ch.isupper() and i:
            out.append("-")
        out.append(ch.lower())
    return "".join(out)


class NodeServer(ThreadingHTTPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], node: FullNode):
        try:
            super().__init__(address, NodeRequestHandler)
        except OSError as e:
            raise AddressInUse(f"{address[0]}:{address[1]}: {e}") from e
        self.node = node


def start_server(node: FullNode, listen: str | None = None) -> tuple[NodeServer, threading.Thread]:
    """Start serving in a daemon thread; returns (server, thread). Passing
    port 0 binds an ephemeral port (see server.server_address)."""
    host, _, port = (listen or node.config.listen).rpartition(":")
    server = NodeServer((host or "127.0.0.1", int(port)), node)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread


def serve(node: FullNode, listen: str | None = None) -> None:
    """Blocking variant for the CLI."""
    server, thread = start_server(node, listen)
    host, port = server.server_address[:2]
    logger.info("serving on %s:%s", host, port)
    try:
        thread.join()
    except KeyboardInterrupt:
        server.shutdown()
