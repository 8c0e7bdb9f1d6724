"""Canonical encodings: deterministic JSON bytes and Crockford base32.

Everything that gets hashed or signed in this package goes through
canonical_bytes, so that semantically equal values always produce identical
bytes regardless of construction order, process, or platform.
"""
from __future__ import annotations

import json
from typing import Any

from .errors import TrustchainError


class NonCanonicalizable(TrustchainError):
    """Value cannot be canonically serialized."""


# Crockford's base32: no i, l, o, u. Lowercase, unpadded.
B32_ALPHABET = "0123456789abcdefghjkmnpqrstvwxyz"


def _check(value: Any, path: str) -> None:
    if value is None or isinstance(value, (bool, int, str)):
        return
    if isinstance(value, float):
        # Floats round-trip differently across writers; all wire values
        # in this protocol are integers or strings.
        raise NonCanonicalizable(f"float at {path} is not canonical")
    if isinstance(value, list):
        for i, item in enumerate(value):
            _check(item, f"{path}[{i}]")
        return
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise NonCanonicalizable(f"non-string key {key!r} at {path}")
            _check(item, f"{path}.{key}")
        return
    raise NonCanonicalizable(f"unsupported type {type(value).__name__} at {path}")


def canonical_str(value: Any) -> str:
    """Serialize to the canonical text form: sorted keys, no insignificant
    whitespace, control characters escaped, UTF-8 passthrough otherwise."""
    _check(value, "$")
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def canonical_bytes(value: Any) -> bytes:
    return canonical_str(value).encode("utf-8")


def parse_canonical(data: bytes | str) -> Any:
    """Parse canonical text back into plain values.

    Raises NonCanonicalizable on malformed input (including duplicate keys,
    which json would otherwise silently collapse).
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise NonCanonicalizable(f"invalid UTF-8: {e}") from e
    try:
        return json.loads(data, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as e:
        raise NonCanonicalizable(f"invalid JSON: {e}") from e


def _reject_duplicates(pairs):
    out = {}
    for key, value in pairs:
        if key in out:
            raise NonCanonicalizable(f"duplicate key {key!r}")
        out[key] = value
    return out


def b32encode(data: bytes) -> str:
    """Unpadded lowercase Crockford base32."""
    acc = 0
    bits = 0
    out = []
    for byte in data:
        acc = (acc << 8) | byte
        bits += 8
        while bits >= 5:
            bits -= 5
            out.append(B32_ALPHABET[(acc >> bits) & 0x1F])
    if bits:
        out.append(B32_ALPHABET[(acc << (5 - bits)) & 0x1F])
    return "".join(out)
