"""Persistent full node: registry on disk, scanned-state cache, keystore.

Data directory layout:

    cas/           one file per stored content, named by its hex ContentId
    chain.dat      append-only file of u32-length-prefixed serialized blocks
    keystore.json  operator identities (private keys and commitment secrets)
    node.conf      saved configuration (written by `init`)
"""
from __future__ import annotations

import json
import secrets
import struct
import threading
import time
from pathlib import Path

from ..anchor import RegistryState, anchor_batch, scan
from ..attestation import Identity
from ..didcore import DidOperation
from ..errors import TrustchainError
from ..keys import SigningKey
from ..registry import Block, BlockChain, ContentStore, Transaction
from .config import NodeConfig

PAD_MAGIC = b"XX"  # payload tag for content-free padding transactions


class CorruptDataDir(TrustchainError):
    """Data directory is missing pieces or fails validation."""


class KeystoreError(TrustchainError):
    """Missing or malformed keystore entry."""


class Keystore:
    """Operator identities on disk, addressed by alias: private key seeds,
    recovery secrets and the update secrets held for attested DIDs. An
    identity with an empty DID is pending (keys generated, not yet
    anchored)."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.identities: dict[str, Identity] = {}

    @classmethod
    def open(cls, path: Path) -> "Keystore":
        store = cls(path)
        if store.path.exists():
            store._load()
        return store

    def _load(self) -> None:
        try:
            data = json.loads(self.path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise CorruptDataDir(f"keystore unreadable: {e}") from e
        for alias, entry in data.get("identities", {}).items():
            self.identities[alias] = Identity(
                did=entry.get("did", ""),
                keys={kid: SigningKey.from_seed(bytes.fromhex(seed))
                      for kid, seed in entry["keys"].items()},
                key_id=entry["keyId"],
                recovery_secret=(bytes.fromhex(entry["recoverySecret"])
                                 if entry.get("recoverySecret") else None),
                update_secrets={target: bytes.fromhex(secret)
                                for target, secret in entry.get("updateSecrets", {}).items()},
            )

    def save(self) -> None:
        data = {
            "identities": {
                alias: {
                    "did": identity.did,
                    "keys": {kid: key.seed().hex() for kid, key in identity.keys.items()},
                    "keyId": identity.key_id,
                    "recoverySecret": (identity.recovery_secret.hex()
                                       if identity.recovery_secret else None),
                    "updateSecrets": {t: s.hex() for t, s in identity.update_secrets.items()},
                }
                for alias, identity in self.identities.items()
            },
        }
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(data, indent=2, sort_keys=True))

    def add(self, alias: str, identity: Identity) -> None:
        self.identities[alias] = identity

    def resolve(self, name: str) -> Identity:
        """Look an identity up by alias, falling back to DID."""
        if name in self.identities:
            return self.identities[name]
        for identity in self.identities.values():
            if identity.did == name:
                return identity
        raise KeystoreError(f"no identity {name!r} in keystore")


class FullNode:
    """Registry + content store + scanned state behind one facade.

    Mining/anchoring is explicit and serialized; the scanned state is cached
    per chain height, so reads never mutate anything.
    """

    def __init__(self, config: NodeConfig, create: bool = False):
        self.config = config
        data_dir = Path(config.data_dir)
        self.chain_path = data_dir / "chain.dat"
        if create:
            data_dir.mkdir(parents=True, exist_ok=True)
            if self.chain_path.exists():
                raise CorruptDataDir(f"{self.chain_path} already exists")
            self.chain = BlockChain(config.chain_id, bits=config.bits)
            self.chain.save(self.chain_path)
        else:
            if not self.chain_path.exists():
                raise CorruptDataDir(f"no chain at {self.chain_path}; run init first")
            try:
                self.chain = BlockChain.load(self.chain_path, chain_id=config.chain_id)
            except TrustchainError as e:
                raise CorruptDataDir(str(e)) from e
        self.store = ContentStore(data_dir / "cas")
        self.keystore = Keystore.open(Path(config.keystore))
        self._persisted_height = self.chain.height
        self._state_cache: tuple[int, RegistryState] | None = None
        self._lock = threading.Lock()

    # -- time -----------------------------------------------------------

    def next_timestamp(self, requested: int | None = None) -> int:
        floor = self.chain.tip.header.timestamp + 1
        if requested is not None:
            if requested < floor:
                raise TrustchainError(
                    f"timestamp {requested} not after tip {floor - 1}")
            return requested
        return max(int(time.time()), floor)

    # -- writes ----------------------------------------------------------

    def _persist_new_blocks(self) -> None:
        with open(self.chain_path, "ab") as fh:
            for height in range(self._persisted_height + 1, self.chain.height + 1):
                raw = self.chain.block_at(height).serialize()
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
        self._persisted_height = self.chain.height

    def mine(self, timestamp: int | None = None) -> Block:
        """Advance the chain by one block carrying a padding transaction."""
        with self._lock:
            ts = self.next_timestamp(timestamp)
            block = self.chain.mine_block(
                [Transaction.create(PAD_MAGIC + secrets.token_bytes(8))], ts)
            self._persist_new_blocks()
            return block

    def anchor(self, operations: list[DidOperation],
               timestamp: int | None = None) -> tuple[bytes, int]:
        with self._lock:
            ts = self.next_timestamp(timestamp)
            txid, height = anchor_batch(self.chain, self.store, operations, ts)
            self._persist_new_blocks()
            return txid, height

    # -- reads -----------------------------------------------------------

    @property
    def state(self) -> RegistryState:
        height = self.chain.height
        cached = self._state_cache
        if cached is not None and cached[0] == height:
            return cached[1]
        state = scan(self.chain, self.store)
        self._state_cache = (height, state)
        return state

    def save_keystore(self) -> None:
        self.keystore.save()
