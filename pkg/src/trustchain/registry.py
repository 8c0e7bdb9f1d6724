"""Simulated verifiable data registry.

Two halves, mirroring the real-world substrate this package models:

* a content-addressed store (ContentStore) — write-once files retrieved by
  the SHA-256 of their content, optionally persisted as a directory of files
  named by hex digest;
* an append-only proof-of-work block chain (BlockChain) of Bitcoin-shaped
  80-byte headers over Merkle trees of small data-carrying transactions,
  optionally persisted as an append-only file of length-prefixed blocks.

All hashing is SHA-256; transaction ids and header hashes use double
SHA-256. Verification helpers (merkle_verify, validate_header_chain) are
pure functions.
"""
from __future__ import annotations

import hashlib
import secrets
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

from .errors import TrustchainError

MAX_PAYLOAD = 80
HEADER_LEN = 80
HEADER_STRUCT = struct.Struct("<I32s32sIII")  # version | prev | merkle | time | bits | nonce
TX_NONCE_LEN = 8


class ContentNotFound(TrustchainError):
    """No content stored under the given id."""


class ContentCollision(TrustchainError):
    """Two distinct byte strings produced the same ContentId (fatal)."""


class EmptyLeafSet(TrustchainError):
    """Merkle operations need at least one leaf."""


class IndexOutOfRange(TrustchainError):
    """Merkle proof requested for a leaf index outside the tree."""


class PayloadTooLarge(TrustchainError):
    """Transaction payload exceeds the 80-byte embedding budget."""


class EmptyBlock(TrustchainError):
    """Blocks must carry at least one transaction."""


class TimestampNotMonotonic(TrustchainError):
    """Block timestamps must strictly increase along the chain."""


class HeightBeyondTip(TrustchainError):
    """Requested height is past the chain tip."""


class CorruptChainFile(TrustchainError):
    """Persisted chain file failed to parse or validate."""


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def dsha256(data: bytes) -> bytes:
    return hashlib.sha256(hashlib.sha256(data).digest()).digest()


def leading_zero_bits(digest: bytes) -> int:
    value = int.from_bytes(digest, "big")
    if value == 0:
        return len(digest) * 8
    return len(digest) * 8 - value.bit_length()


@dataclass(frozen=True)
class ContentId:
    """SHA-256 address of stored content; text form is lowercase hex."""

    digest: bytes

    def __post_init__(self):
        if len(self.digest) != 32:
            raise ValueError(f"ContentId digest must be 32 bytes, got {len(self.digest)}")

    @classmethod
    def of(cls, content: bytes) -> "ContentId":
        return cls(sha256(content))

    @classmethod
    def from_hex(cls, text: str) -> "ContentId":
        return cls(bytes.fromhex(text))

    @property
    def hex(self) -> str:
        return self.digest.hex()

    def __str__(self) -> str:
        return self.hex


class ContentStore:
    """Write-once content-addressed store.

    Contents live in memory; when ``root`` is given each entry is also
    persisted as ``<root>/<hex id>`` so independent processes can read it.
    There is no delete and no overwrite: effective immutability is by
    construction.
    """

    def __init__(self, root: Path | str | None = None):
        self._items: dict[bytes, bytes] = {}
        self._root = Path(root) if root is not None else None
        if self._root is not None:
            self._root.mkdir(parents=True, exist_ok=True)
            for path in self._root.iterdir():
                if path.is_file():
                    self._items[bytes.fromhex(path.name)] = path.read_bytes()

    def put(self, content: bytes) -> ContentId:
        cid = ContentId.of(content)
        existing = self._items.get(cid.digest)
        if existing is not None:
            if existing != content:
                raise ContentCollision(cid.hex)
            return cid
        self._items[cid.digest] = content
        if self._root is not None:
            (self._root / cid.hex).write_bytes(content)
        return cid

    def get(self, cid: ContentId) -> bytes:
        try:
            return self._items[cid.digest]
        except KeyError:
            raise ContentNotFound(cid.hex) from None

    def __contains__(self, cid: ContentId) -> bool:
        return cid.digest in self._items

    def __len__(self) -> int:
        return len(self._items)


class StoreView:
    """Read-only union of several content stores (multi-tree verification).
    Content addressing makes the union unambiguous: equal ids mean equal
    bytes."""

    def __init__(self, stores: Sequence[ContentStore]):
        self.stores = list(stores)

    def get(self, cid: ContentId) -> bytes:
        for store in self.stores:
            if cid in store:
                return store.get(cid)
        raise ContentNotFound(cid.hex)

    def __contains__(self, cid: ContentId) -> bool:
        return any(cid in store for store in self.stores)


@dataclass(frozen=True)
class Transaction:
    """A data-carrying transaction: up to 80 payload bytes plus an 8-byte
    nonce so identical payloads still get distinct txids."""

    payload: bytes
    nonce: bytes

    def __post_init__(self):
        if len(self.payload) > MAX_PAYLOAD:
            raise PayloadTooLarge(f"{len(self.payload)} > {MAX_PAYLOAD}")
        if len(self.nonce) != TX_NONCE_LEN:
            raise ValueError(f"nonce must be {TX_NONCE_LEN} bytes")

    @classmethod
    def create(cls, payload: bytes, nonce: bytes | None = None) -> "Transaction":
        return cls(payload, nonce if nonce is not None else secrets.token_bytes(TX_NONCE_LEN))

    def serialize(self) -> bytes:
        return self.nonce + self.payload

    @classmethod
    def parse(cls, data: bytes) -> "Transaction":
        if len(data) < TX_NONCE_LEN:
            raise ValueError("transaction too short")
        return cls(data[TX_NONCE_LEN:], data[:TX_NONCE_LEN])

    @property
    def txid(self) -> bytes:
        return dsha256(self.serialize())


@dataclass(frozen=True)
class BlockHeader:
    """80-byte block header, little-endian integer fields.

    Layout: version(4) | prev_hash(32) | merkle_root(32) | timestamp(4) |
    bits(4) | pow_nonce(4). ``bits`` is the required count of leading zero
    bits in the double-SHA-256 of the serialized header.
    """

    version: int
    prev_hash: bytes
    merkle_root: bytes
    timestamp: int
    bits: int
    pow_nonce: int

    def serialize(self) -> bytes:
        return HEADER_STRUCT.pack(
            self.version, self.prev_hash, self.merkle_root,
            self.timestamp, self.bits, self.pow_nonce,
        )

    @classmethod
    def parse(cls, data: bytes) -> "BlockHeader":
        if len(data) != HEADER_LEN:
            raise ValueError(f"header must be {HEADER_LEN} bytes, got {len(data)}")
        version, prev_hash, merkle_root, timestamp, bits, pow_nonce = HEADER_STRUCT.unpack(data)
        return cls(version, prev_hash, merkle_root, timestamp, bits, pow_nonce)

    @property
    def hash(self) -> bytes:
        return dsha256(self.serialize())

    def meets_target(self) -> bool:
        return leading_zero_bits(self.hash) >= self.bits


@dataclass(frozen=True)
class MerkleProof:
    """Inclusion proof: fold ``leaf`` through ``branch`` with pairwise double
    SHA-256 to reproduce ``expected_root``. Each branch step is
    (sibling_hash, side) where side says which side the sibling sits on."""

    leaf: bytes
    branch: tuple[tuple[bytes, str], ...]
    expected_root: bytes

    def to_dict(self) -> dict:
        return {
            "leaf": self.leaf.hex(),
            "branch": [{"hash": h.hex(), "side": side} for h, side in self.branch],
            "root": self.expected_root.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MerkleProof":
        return cls(
            leaf=bytes.fromhex(d["leaf"]),
            branch=tuple((bytes.fromhex(s["hash"]), s["side"]) for s in d["branch"]),
            expected_root=bytes.fromhex(d["root"]),
        )


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple[Transaction, ...]
    height: int

    def serialize(self) -> bytes:
        parts = [self.header.serialize(), struct.pack("<I", len(self.transactions))]
        for tx in self.transactions:
            raw = tx.serialize()
            parts.append(struct.pack("<I", len(raw)))
            parts.append(raw)
        return b"".join(parts)

    @classmethod
    def parse(cls, data: bytes, height: int) -> "Block":
        header = BlockHeader.parse(data[:HEADER_LEN])
        (count,) = struct.unpack_from("<I", data, HEADER_LEN)
        offset = HEADER_LEN + 4
        txs = []
        for _ in range(count):
            (length,) = struct.unpack_from("<I", data, offset)
            offset += 4
            txs.append(Transaction.parse(data[offset:offset + length]))
            offset += length
        if offset != len(data):
            raise ValueError("trailing bytes in block")
        return cls(header, tuple(txs), height)


def merkle_root(txids: Sequence[bytes]) -> bytes:
    """Root of the transaction Merkle tree.

    Single leaf is its own root; odd levels duplicate their last node
    (Bitcoin convention); internal nodes are dsha256(left || right).
    """
    if not txids:
        raise EmptyLeafSet("merkle tree needs at least one leaf")
    level = list(txids)
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [dsha256(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


def merkle_prove(txids: Sequence[bytes], index: int) -> MerkleProof:
    """Build the inclusion proof for the leaf at ``index``."""
    if not txids:
        raise EmptyLeafSet("merkle tree needs at least one leaf")
    if not 0 <= index < len(txids):
        raise IndexOutOfRange(f"index {index} not in [0, {len(txids)})")
    branch: list[tuple[bytes, str]] = []
    level = list(txids)
    pos = index
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        sibling = pos ^ 1
        branch.append((level[sibling], "left" if sibling < pos else "right"))
        level = [dsha256(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
        pos //= 2
    return MerkleProof(leaf=txids[index], branch=tuple(branch), expected_root=level[0])


def merkle_fold(leaf: bytes, branch: Sequence[tuple[bytes, str]]) -> bytes:
    node = leaf
    for sibling, side in branch:
        node = dsha256(sibling + node) if side == "left" else dsha256(node + sibling)
    return node


def merkle_verify(proof: MerkleProof) -> bool:
    return merkle_fold(proof.leaf, proof.branch) == proof.expected_root


def mine_header(
    prev_hash: bytes,
    root: bytes,
    timestamp: int,
    bits: int,
    version: int = 1,
) -> BlockHeader:
    """Grind pow_nonce until the double-SHA-256 of the header clears ``bits``
    leading zero bits."""
    prefix = struct.pack("<I32s32sII", version, prev_hash, root, timestamp, bits)
    limit = 1 << (256 - bits)
    sha = hashlib.sha256
    nonce = 0
    while True:
        digest = sha(sha(prefix + nonce.to_bytes(4, "little")).digest()).digest()
        if int.from_bytes(digest, "big") < limit:
            return BlockHeader(version, prev_hash, root, timestamp, bits, nonce)
        nonce += 1


def validate_header_chain(headers: Sequence[BlockHeader]) -> bool:
    """True iff every header meets its difficulty target, prev links are
    intact (genesis links to 32 zero bytes) and timestamps strictly increase."""
    prev_hash = b"\x00" * 32
    prev_time = None
    for header in headers:
        if header.prev_hash != prev_hash:
            return False
        if prev_time is not None and header.timestamp <= prev_time:
            return False
        if not header.meets_target():
            return False
        prev_hash = header.hash
        prev_time = header.timestamp
    return True


class BlockChain:
    """Append-only proof-of-work chain.

    The genesis block is mined at construction and parameterized by
    ``chain_id``: its single transaction carries the chain id, so two chains
    with different ids share no blocks. Appending is serialized through a
    lock (single writer); reads take snapshots and verification functions
    are pure.
    """

    GENESIS_TIMESTAMP = 1_600_000_000

    def __init__(self, chain_id: str = "main", bits: int = 16,
                 genesis_timestamp: int = GENESIS_TIMESTAMP):
        self.chain_id = chain_id
        self.bits = bits
        self._blocks: list[Block] = []
        self._lock = threading.Lock()
        genesis_tx = Transaction(
            payload=b"genesis:" + chain_id.encode("utf-8")[:MAX_PAYLOAD - 8],
            nonce=sha256(chain_id.encode("utf-8"))[:TX_NONCE_LEN],
        )
        self._append([genesis_tx], genesis_timestamp)

    def _append(self, transactions: list[Transaction], timestamp: int) -> Block:
        if not transactions:
            raise EmptyBlock("a block needs at least one transaction")
        prev = self._blocks[-1].header if self._blocks else None
        if prev is not None and timestamp <= prev.timestamp:
            raise TimestampNotMonotonic(
                f"timestamp {timestamp} <= previous {prev.timestamp}")
        root = merkle_root([tx.txid for tx in transactions])
        header = mine_header(
            prev_hash=prev.hash if prev else b"\x00" * 32,
            root=root,
            timestamp=timestamp,
            bits=self.bits,
        )
        block = Block(header, tuple(transactions), height=len(self._blocks))
        self._blocks.append(block)
        return block

    def mine_block(self, transactions: Sequence[Transaction], timestamp: int) -> Block:
        """Mine the given transactions into a new block at the tip."""
        with self._lock:
            return self._append(list(transactions), timestamp)

    @property
    def tip(self) -> Block:
        return self._blocks[-1]

    @property
    def height(self) -> int:
        return len(self._blocks) - 1

    def block_at(self, height: int) -> Block:
        if height < 0 or height > self.height:
            raise HeightBeyondTip(f"height {height} beyond tip {self.height}")
        return self._blocks[height]

    def iterate_blocks(self, from_height: int = 0) -> Iterator[Block]:
        """Yield every block from ``from_height`` to the tip, in order."""
        if from_height > self.height:
            raise HeightBeyondTip(f"height {from_height} beyond tip {self.height}")
        for block in list(self._blocks)[from_height:]:
            yield block

    def headers(self, from_height: int = 0) -> list[BlockHeader]:
        if from_height > self.height:
            raise HeightBeyondTip(f"height {from_height} beyond tip {self.height}")
        return [b.header for b in self._blocks[from_height:]]

    def validate(self) -> bool:
        return validate_header_chain(self.headers()) and all(
            b.header.merkle_root == merkle_root([tx.txid for tx in b.transactions])
            for b in self._blocks
        )

    # -- persistence: append-only file of u32-length-prefixed blocks --------

    def save(self, path: Path | str) -> None:
        with open(path, "wb") as fh:
            for block in self._blocks:
                raw = block.serialize()
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)

    @classmethod
    def load(cls, path: Path | str, chain_id: str = "main") -> "BlockChain":
        blocks: list[Block] = []
        data = Path(path).read_bytes()
        offset = 0
        while offset < len(data):
            if offset + 4 > len(data):
                raise CorruptChainFile("truncated length prefix")
            (length,) = struct.unpack_from("<I", data, offset)
            offset += 4
            if offset + length > len(data):
                raise CorruptChainFile("truncated block")
            try:
                blocks.append(Block.parse(data[offset:offset + length], height=len(blocks)))
            except (ValueError, struct.error) as e:
                raise CorruptChainFile(str(e)) from e
            offset += length
        if not blocks:
            raise CorruptChainFile("empty chain file")
        chain = cls.__new__(cls)
        chain.chain_id = chain_id
        chain.bits = blocks[0].header.bits
        chain._blocks = blocks
        chain._lock = threading.Lock()
        if not chain.validate():
            raise CorruptChainFile("chain failed validation")
        return chain
