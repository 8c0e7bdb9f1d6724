"""Batching DID operations into the registry and folding it back out.

A batch of operations becomes three content-addressed files (chunk file
holding the operations, a provisional index pointing at the chunk, a core
index pointing at the provisional index). The core index ContentId is
embedded, behind a 2-byte magic, in a transaction payload and mined into a
block. Scanning reverses the construction: every block is traversed, every
anchoring transaction unpacked, and the operations are folded in total
order (block height, transaction index, position in batch) into resolvable
per-DID state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Iterator, Sequence

from .canonical import NonCanonicalizable, canonical_bytes, parse_canonical
from .didcore import (
    DidDocument,
    DidOperation,
    DidRecord,
    InvalidOperation,
    apply_operation,
    operation_did,
    validate_operation,
)
from .errors import TrustchainError
from .registry import (
    BlockChain,
    BlockHeader,
    ContentId,
    ContentNotFound,
    ContentStore,
    MerkleProof,
    Transaction,
    merkle_prove,
)

ANCHOR_MAGIC = b"TC"
ANCHOR_PAYLOAD_LEN = len(ANCHOR_MAGIC) + 32


class DidNotFound(TrustchainError):
    """DID has no anchored operations in the scanned state."""


class OversizedBatch(TrustchainError):
    """Anchoring payload would exceed the transaction budget."""


class CorruptBatch(TrustchainError):
    """A referenced batch file is missing or fails its invariant."""


def chunk_file_bytes(operations: Sequence[DidOperation]) -> bytes:
    return canonical_bytes({"operations": [op.to_dict() for op in operations]})


def provisional_index_bytes(chunk_cid: ContentId) -> bytes:
    return canonical_bytes({"chunkCid": chunk_cid.hex})


def core_index_bytes(provisional_cid: ContentId, operation_count: int) -> bytes:
    return canonical_bytes({
        "operationCount": operation_count,
        "provisionalCid": provisional_cid.hex,
    })


@dataclass(frozen=True)
class AnchoredOperation:
    """A DID operation bound to its place in the registry, together with the
    evidence needed to rebuild a verification bundle without re-reading the
    chain."""

    operation: DidOperation
    block_height: int
    intra_block_index: int
    batch_index: int
    timestamp: int
    transaction: Transaction
    merkle_proof: MerkleProof
    header: BlockHeader
    chunk_cid: ContentId
    provisional_cid: ContentId
    core_cid: ContentId

    @property
    def order_key(self) -> tuple[int, int, int]:
        return (self.block_height, self.intra_block_index, self.batch_index)

    def to_dict(self) -> dict:
        return {
            "operation": self.operation.to_dict(),
            "blockHeight": self.block_height,
            "intraBlockIndex": self.intra_block_index,
            "batchIndex": self.batch_index,
            "timestamp": self.timestamp,
            "transaction": self.transaction.serialize().hex(),
            "merkleProof": self.merkle_proof.to_dict(),
            "header": self.header.serialize().hex(),
            "chunkCid": self.chunk_cid.hex,
            "provisionalCid": self.provisional_cid.hex,
            "coreCid": self.core_cid.hex,
        }


@dataclass
class DidEntry:
    """Current record plus the full applied-operation log for one DID."""

    record: DidRecord
    log: list[AnchoredOperation]

    @property
    def genesis(self) -> AnchoredOperation:
        return self.log[0]

    @property
    def latest(self) -> AnchoredOperation:
        return self.log[-1]

    def to_dict(self) -> dict:
        return {
            "did": self.record.did,
            "status": self.record.status,
            "document": (self.record.document.to_dict()
                         if self.record.document is not None else None),
            "metadata": self.record.metadata.to_dict(),
            "log": [op.to_dict() for op in self.log],
        }


@dataclass(frozen=True)
class AuditRecord:
    """An anchored operation that did not apply (bad reveal, unknown DID,
    deactivated target, ...)."""

    reason: str
    did: str | None
    block_height: int
    intra_block_index: int
    batch_index: int

    def to_dict(self) -> dict:
        return {
            "reason": self.reason,
            "did": self.did,
            "blockHeight": self.block_height,
            "intraBlockIndex": self.intra_block_index,
            "batchIndex": self.batch_index,
        }


@dataclass(frozen=True)
class CorruptBatchReport:
    block_height: int
    intra_block_index: int
    reason: str

    def to_dict(self) -> dict:
        return {
            "blockHeight": self.block_height,
            "intraBlockIndex": self.intra_block_index,
            "reason": self.reason,
        }


@dataclass
class RegistryState:
    """Deterministic fold of every anchored operation up to scanned_height."""

    entries: dict[str, DidEntry] = field(default_factory=dict)
    scanned_height: int = 0
    scanned_tip_timestamp: int = 0
    audit: list[AuditRecord] = field(default_factory=list)
    corrupt_batches: list[CorruptBatchReport] = field(default_factory=list)

    def get_entry(self, did: str) -> DidEntry | None:
        return self.entries.get(did)

    def iter_entries(self) -> Iterator[DidEntry]:
        return iter(self.entries.values())

    def to_dict(self) -> dict:
        return {
            "scannedHeight": self.scanned_height,
            "scannedTipTimestamp": self.scanned_tip_timestamp,
            "entries": {did: entry.to_dict() for did, entry in self.entries.items()},
            "audit": [a.to_dict() for a in self.audit],
            "corruptBatches": [c.to_dict() for c in self.corrupt_batches],
        }

    def canonical(self) -> bytes:
        return canonical_bytes(self.to_dict())

    def as_of(self, timestamp: int) -> "RegistryState":
        """Rebuild the state as it stood when the tip timestamp was at most
        ``timestamp`` (used by at-issuance credential verification)."""
        truncated = RegistryState(
            scanned_height=self.scanned_height,
            scanned_tip_timestamp=min(self.scanned_tip_timestamp, timestamp),
        )
        for did, entry in self.entries.items():
            record: DidRecord | None = None
            log: list[AnchoredOperation] = []
            for anchored in entry.log:
                if anchored.timestamp > timestamp:
                    break
                record = apply_operation(record, anchored.operation, anchored.timestamp)
                log.append(anchored)
            if record is not None:
                truncated.entries[did] = DidEntry(record=record, log=log)
        return truncated


class StateView:
    """Read-only DID lookup across one or more scanned registries.

    When several trees know the same DID (rebasing), the entry whose latest
    operation was anchored last wins, mirroring most-recent-update-wins
    within a single registry.
    """

    def __init__(self, states: Sequence[RegistryState]):
        self.states = list(states)

    def get_entry(self, did: str) -> DidEntry | None:
        best: DidEntry | None = None
        for state in self.states:
            entry = state.get_entry(did)
            if entry is None:
                continue
            if best is None or self._newer(entry, best):
                best = entry
        return best

    @staticmethod
    def _newer(a: DidEntry, b: DidEntry) -> bool:
        ka = (a.latest.timestamp,) + a.latest.order_key
        kb = (b.latest.timestamp,) + b.latest.order_key
        return ka > kb

    def iter_entries(self) -> Iterator[DidEntry]:
        seen: set[str] = set()
        for state in self.states:
            for entry in state.iter_entries():
                if entry.record.did not in seen:
                    seen.add(entry.record.did)
                    resolved = self.get_entry(entry.record.did)
                    assert resolved is not None
                    yield resolved


def build_anchor_transaction(store: ContentStore,
                             operations: Sequence[DidOperation]) -> Transaction:
    """Write the three indirection files for a batch and return the anchoring
    transaction (not yet mined)."""
    if not operations:
        raise InvalidOperation("empty batch")
    for op in operations:
        validate_operation(op)
    dids = [operation_did(op) for op in operations]
    if len(set(dids)) != len(dids):
        raise InvalidOperation("batch contains conflicting operations for one DID")
    chunk_cid = store.put(chunk_file_bytes(operations))
    provisional_cid = store.put(provisional_index_bytes(chunk_cid))
    core_cid = store.put(core_index_bytes(provisional_cid, len(operations)))
    payload = ANCHOR_MAGIC + core_cid.digest
    if len(payload) > 80:
        raise OversizedBatch(f"payload {len(payload)} bytes")
    return Transaction.create(payload)


def anchor_batch(chain: BlockChain, store: ContentStore,
                 operations: Sequence[DidOperation],
                 timestamp: int) -> tuple[bytes, int]:
    """Anchor one batch in a fresh block. Returns (txid, block height)."""
    tx = build_anchor_transaction(store, operations)
    block = chain.mine_block([tx], timestamp)
    return tx.txid, block.height


def _read_batch(store: ContentStore, core_cid: ContentId) -> tuple[list[DidOperation], ContentId, ContentId]:
    """Resolve core -> provisional -> chunk and parse the operations.

    Raises CorruptBatch on any missing file, parse failure or invariant
    violation; the caller skips and reports."""
    try:
        core = parse_canonical(store.get(core_cid))
        provisional_cid = ContentId.from_hex(core["provisionalCid"])
        count = core["operationCount"]
        provisional = parse_canonical(store.get(provisional_cid))
        chunk_cid = ContentId.from_hex(provisional["chunkCid"])
        chunk = parse_canonical(store.get(chunk_cid))
        raw_ops = chunk["operations"]
        if not isinstance(raw_ops, list) or not raw_ops:
            raise CorruptBatch("chunk file carries no operations")
        if count != len(raw_ops):
            raise CorruptBatch(f"operation count {count} != {len(raw_ops)}")
        operations = [DidOperation.from_dict(d) for d in raw_ops]
        for op in operations:
            validate_operation(op)
        return operations, provisional_cid, chunk_cid
    except CorruptBatch:
        raise
    except (ContentNotFound, NonCanonicalizable, InvalidOperation,
            KeyError, TypeError, ValueError) as e:
        raise CorruptBatch(f"{type(e).__name__}: {e}") from e


def scan(chain: BlockChain, store: ContentStore,
         base: RegistryState | None = None) -> RegistryState:
    """Fold the whole registry (or resume from ``base``) into resolvable
    state. Corrupt batches are skipped and reported; operations that fail to
    apply are recorded in the audit log."""
    state = RegistryState() if base is None else base
    start = 0 if base is None else state.scanned_height + 1
    for block in chain.iterate_blocks(start):
        txids = [tx.txid for tx in block.transactions]
        for tx_index, tx in enumerate(block.transactions):
            payload = tx.payload
            if len(payload) != ANCHOR_PAYLOAD_LEN or not payload.startswith(ANCHOR_MAGIC):
                continue
            core_cid = ContentId(payload[len(ANCHOR_MAGIC):])
            try:
                operations, provisional_cid, chunk_cid = _read_batch(store, core_cid)
            except CorruptBatch as e:
                state.corrupt_batches.append(
                    CorruptBatchReport(block.height, tx_index, str(e)))
                continue
            proof = merkle_prove(txids, tx_index)
            for batch_index, op in enumerate(operations):
                anchored = AnchoredOperation(
                    operation=op,
                    block_height=block.height,
                    intra_block_index=tx_index,
                    batch_index=batch_index,
                    timestamp=block.header.timestamp,
                    transaction=tx,
                    merkle_proof=proof,
                    header=block.header,
                    chunk_cid=chunk_cid,
                    provisional_cid=provisional_cid,
                    core_cid=core_cid,
                )
                _apply_anchored(state, anchored)
        state.scanned_height = block.height
        state.scanned_tip_timestamp = block.header.timestamp
    return state


def _apply_anchored(state: RegistryState, anchored: AnchoredOperation) -> None:
    op = anchored.operation
    try:
        did = operation_did(op)
    except InvalidOperation as e:
        state.audit.append(AuditRecord(
            reason=str(e), did=None,
            block_height=anchored.block_height,
            intra_block_index=anchored.intra_block_index,
            batch_index=anchored.batch_index))
        return
    entry = state.entries.get(did)
    try:
        record = apply_operation(entry.record if entry else None, op, anchored.timestamp)
    except TrustchainError as e:
        state.audit.append(AuditRecord(
            reason=f"{type(e).__name__}: {e}", did=did,
            block_height=anchored.block_height,
            intra_block_index=anchored.intra_block_index,
            batch_index=anchored.batch_index))
        return
    if entry is None:
        state.entries[did] = DidEntry(record=record, log=[anchored])
    else:
        entry.record = record
        entry.log.append(anchored)


def resolve(did: str, state: RegistryState | StateView) -> DidRecord:
    """Current (document, metadata, status) for a DID; the document has the
    attestor proof transformed out of the body."""
    entry = state.get_entry(did)
    if entry is None:
        raise DidNotFound(did)
    return entry.record


@dataclass(frozen=True)
class VerificationBundle:
    """Everything a verifier needs to tie a DID operation to a block header:
    the document as anchored, the three indirection files, the anchoring
    transaction, a Merkle proof and the 80-byte header itself."""

    did: str
    document: DidDocument | None
    chunk: bytes
    provisional: bytes
    core: bytes
    transaction: bytes
    merkle_proof: MerkleProof
    header: BlockHeader
    height: int

    def to_dict(self) -> dict:
        return {
            "did": self.did,
            "document": self.document.body_dict() if self.document is not None else None,
            "chunk": self.chunk.hex(),
            "provisional": self.provisional.hex(),
            "core": self.core.hex(),
            "transaction": self.transaction.hex(),
            "merkleProof": self.merkle_proof.to_dict(),
            "header": self.header.serialize().hex(),
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VerificationBundle":
        return cls(
            did=d["did"],
            document=(DidDocument.from_dict(d["document"])
                      if d.get("document") is not None else None),
            chunk=bytes.fromhex(d["chunk"]),
            provisional=bytes.fromhex(d["provisional"]),
            core=bytes.fromhex(d["core"]),
            transaction=bytes.fromhex(d["transaction"]),
            merkle_proof=MerkleProof.from_dict(d["merkleProof"]),
            header=BlockHeader.parse(bytes.fromhex(d["header"])),
            height=d["height"],
        )


def verification_data(did: str, state: RegistryState | StateView,
                      store: ContentStore, op_index: int = -1) -> VerificationBundle:
    """Bundle for one anchored operation of a DID (default: the latest;
    ``op_index=0`` is the genesis create)."""
    entry = state.get_entry(did)
    if entry is None:
        raise DidNotFound(did)
    anchored = entry.log[op_index]
    return VerificationBundle(
        did=did,
        document=anchored.operation.document,
        chunk=store.get(anchored.chunk_cid),
        provisional=store.get(anchored.provisional_cid),
        core=store.get(anchored.core_cid),
        transaction=anchored.transaction.serialize(),
        merkle_proof=anchored.merkle_proof,
        header=anchored.header,
        height=anchored.block_height,
    )


def utc_date(timestamp: int):
    """Calendar date (UTC) of a Unix timestamp."""
    return datetime.fromtimestamp(timestamp, tz=timezone.utc).date()
