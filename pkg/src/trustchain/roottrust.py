"""Root of trust: publication, discovery and independent verification.

A root DID has no attestation; it is identified socially by the UTC
calendar date on which it was anchored plus a short confirmation code
derived from its document. Verification re-walks the chain of cryptographic
commitments from document content down to an 80-byte block header in a
trusted header chain, so it needs no signature and no trusted third party.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from datetime import date
from typing import Sequence

from .anchor import (
    ContentStore,
    DidEntry,
    RegistryState,
    StateView,
    VerificationBundle,
    anchor_batch,
    utc_date,
    verification_data,
)
from .canonical import B32_ALPHABET, NonCanonicalizable, b32encode, canonical_bytes, parse_canonical
from .didcore import (
    DidDocument,
    DidOperation,
    derive_did,
    document_digest,
    is_proof_service,
    make_commitment,
)
from .errors import TrustchainError
from .registry import (
    BlockChain,
    BlockHeader,
    Transaction,
    dsha256,
    merkle_fold,
    sha256,
)

DEFAULT_CODE_LENGTH = 6
_PARAMS_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})(?::([0-9a-z]{3,6}))?$")


class EmptyKeySet(TrustchainError):
    """A root document must carry at least one verification method."""


class AmbiguousRoot(TrustchainError):
    """Two same-date candidates cannot be told apart."""


class NegativeDuration(TrustchainError):
    """Durations fed to the cost model must be non-negative."""


@dataclass(frozen=True)
class RootParameters:
    """The community-shared identifier of a root: a UTC calendar day, an
    optional short confirmation code, and an optional operator pin."""

    publication_date: date
    confirmation_code: str | None = None
    expected_root_did: str | None = None

    def __post_init__(self):
        code = self.confirmation_code
        if code is not None:
            if not 3 <= len(code) <= 6 or any(c not in B32_ALPHABET for c in code):
                raise ValueError(f"confirmation code {code!r} must be 3-6 base32 characters")

    def line(self) -> str:
        """Single-line form for out-of-band sharing: YYYY-MM-DD[:code]."""
        text = self.publication_date.isoformat()
        if self.confirmation_code:
            text += f":{self.confirmation_code}"
        return text

    @classmethod
    def parse_line(cls, text: str) -> "RootParameters":
        m = _PARAMS_RE.match(text.strip())
        if not m:
            raise ValueError(f"cannot parse root parameters {text!r}")
        year, month, day, code = m.groups()
        return cls(date(int(year), int(month), int(day)), code)


def confirmation_code(document: DidDocument, length: int = DEFAULT_CODE_LENGTH) -> str:
    """Short identifier of a root document: prefix of the base32-encoded
    content digest."""
    if not 3 <= length <= 6:
        raise ValueError(f"code length must be 3-6, got {length}")
    return b32encode(document_digest(document))[:length]


@dataclass(frozen=True)
class PublishedRoot:
    did: str
    params: RootParameters
    update_secret: bytes
    recovery_secret: bytes


def publish_root(chain: BlockChain, store: ContentStore, document: DidDocument,
                 timestamp: int, *, update_secret: bytes, recovery_secret: bytes,
                 max_chain_length: int | None = None,
                 code_length: int = DEFAULT_CODE_LENGTH) -> PublishedRoot:
    """Anchor a root DID (no attestation) and derive its shareable
    parameters from the anchoring block's UTC date."""
    if not document.verification_methods:
        raise EmptyKeySet("root document has no verification methods")
    op = DidOperation(
        kind="create",
        document=document,
        update_commitment=make_commitment(update_secret),
        recovery_commitment=make_commitment(recovery_secret),
        max_chain_length=max_chain_length,
    )
    anchor_batch(chain, store, [op], timestamp)
    did = derive_did(document, op.update_commitment, op.recovery_commitment)
    params = RootParameters(
        publication_date=utc_date(timestamp),
        confirmation_code=confirmation_code(document, code_length),
    )
    return PublishedRoot(did, params, update_secret, recovery_secret)


def _genesis_is_root_shaped(entry: DidEntry) -> bool:
    op = entry.genesis.operation
    if op.kind != "create" or op.document is None:
        return False
    return not any(is_proof_service(s) for s in op.document.services)


def scan_date_window(day: date, state: RegistryState | StateView) -> list[DidEntry]:
    """Every DID created (without attestation) during the given UTC day.
    Exhaustive by registry iterability."""
    candidates = [
        entry for entry in state.iter_entries()
        if utc_date(entry.genesis.timestamp) == day and _genesis_is_root_shaped(entry)
    ]
    candidates.sort(key=lambda e: e.genesis.order_key)
    return candidates


# ---------------------------------------------------------------------------
# Commitment-chain timestamp verification
# ---------------------------------------------------------------------------

STEP_NAMES = {
    1: "document-in-chunk",
    2: "chunk-cid",
    3: "provisional-cid",
    4: "core-cid-in-transaction",
    5: "transaction-id",
    6: "merkle-proof",
    7: "timestamp-match",
    8: "header-in-chain",
}


@dataclass(frozen=True)
class StepResult:
    step: int
    name: str
    ok: bool
    detail: str = ""


@dataclass(frozen=True)
class TimestampVerdict:
    valid: bool
    failed_step: int | None
    steps: tuple[StepResult, ...]

    @property
    def failed_name(self) -> str | None:
        return STEP_NAMES[self.failed_step] if self.failed_step else None


def verify_timestamp(bundle: VerificationBundle, claimed_time: int,
                     trusted_headers: Sequence[BlockHeader]) -> TimestampVerdict:
    """Run the eight commitment checks tying DID content to a header at the
    claimed time, stopping at (and reporting) the first failure.

    1. document content present in the chunk file
    2. chunk file hashes to the CID in the provisional index
    3. provisional index hashes to the CID in the core index
    4. transaction payload embeds the core index CID
    5. transaction double-hashes to the Merkle proof leaf
    6. Merkle proof folds to the header's transaction root
    7. header timestamp equals the claimed time
    8. header satisfies its difficulty and sits at the stated height in the
       trusted header chain
    """
    steps: list[StepResult] = []

    def fail(step: int, detail: str) -> TimestampVerdict:
        steps.append(StepResult(step, STEP_NAMES[step], False, detail))
        return TimestampVerdict(False, step, tuple(steps))

    def ok(step: int) -> None:
        steps.append(StepResult(step, STEP_NAMES[step], True))

    # 1: the anchored document body, and each key and endpoint individually,
    # must appear verbatim in the chunk file.
    if bundle.document is not None:
        for vm in bundle.document.verification_methods:
            if vm.public_key_hex.encode("utf-8") not in bundle.chunk:
                return fail(1, f"public key {vm.id} not in chunk file")
        for service in bundle.document.services:
            if isinstance(service.endpoint, str) and service.endpoint.encode("utf-8") not in bundle.chunk:
                return fail(1, f"endpoint {service.id} not in chunk file")
        try:
            body = canonical_bytes(bundle.document.body_dict())
        except NonCanonicalizable as e:
            return fail(1, f"document not canonicalizable: {e}")
        if body not in bundle.chunk:
            return fail(1, "document body not in chunk file")
    ok(1)

    # 2: chunk -> provisional commitment.
    try:
        provisional = parse_canonical(bundle.provisional)
        chunk_cid = bytes.fromhex(provisional["chunkCid"])
    except (NonCanonicalizable, KeyError, TypeError, ValueError) as e:
        return fail(2, f"provisional index unreadable: {e}")
    if sha256(bundle.chunk) != chunk_cid:
        return fail(2, "chunk file does not hash to chunkCid")
    ok(2)

    # 3: provisional -> core commitment.
    try:
        core = parse_canonical(bundle.core)
        provisional_cid = bytes.fromhex(core["provisionalCid"])
    except (NonCanonicalizable, KeyError, TypeError, ValueError) as e:
        return fail(3, f"core index unreadable: {e}")
    if sha256(bundle.provisional) != provisional_cid:
        return fail(3, "provisional index does not hash to provisionalCid")
    ok(3)

    # 4: core -> transaction commitment.
    try:
        tx = Transaction.parse(bundle.transaction)
    except (ValueError, TrustchainError) as e:
        return fail(4, f"transaction unreadable: {e}")
    if tx.payload != b"TC" + sha256(bundle.core):
        return fail(4, "transaction payload does not embed the core index CID")
    ok(4)

    # 5: transaction -> proof leaf.
    if dsha256(bundle.transaction) != bundle.merkle_proof.leaf:
        return fail(5, "transaction id differs from Merkle proof leaf")
    ok(5)

    # 6: proof leaf -> header transaction root.
    folded = merkle_fold(bundle.merkle_proof.leaf, bundle.merkle_proof.branch)
    if folded != bundle.merkle_proof.expected_root:
        return fail(6, "Merkle branch does not fold to its stated root")
    if bundle.merkle_proof.expected_root != bundle.header.merkle_root:
        return fail(6, "proof root differs from header transaction root")
    ok(6)

    # 7: the claimed timestamp.
    if bundle.header.timestamp != claimed_time:
        return fail(7, f"header time {bundle.header.timestamp} != claimed {claimed_time}")
    ok(7)

    # 8: proof of work and membership in the trusted header chain.
    if not bundle.header.meets_target():
        return fail(8, "header does not meet its difficulty target")
    if not 0 <= bundle.height < len(trusted_headers):
        return fail(8, f"height {bundle.height} outside trusted chain")
    if trusted_headers[bundle.height].serialize() != bundle.header.serialize():
        return fail(8, "header not found at stated height in trusted chain")
    ok(8)

    return TimestampVerdict(True, None, tuple(steps))


@dataclass(frozen=True)
class RootVerdict:
    valid: bool
    reason: str | None = None
    timestamp_verdict: TimestampVerdict | None = None


def verify_root(did: str, params: RootParameters, state: RegistryState | StateView,
                store: ContentStore, headers: Sequence[BlockHeader]) -> RootVerdict:
    """Full root check: commitment-chain timestamp verification of the
    genesis operation, publication-date match, confirmation-code match, and
    a date-window sweep for confusable candidates.

    Raises AmbiguousRoot when another same-day candidate carries the same
    code (or when no code was shared and the day is contested).
    """
    entry = state.get_entry(did)
    if entry is None:
        return RootVerdict(False, "unknown-root")
    if params.expected_root_did is not None and params.expected_root_did != did:
        return RootVerdict(False, "pinned-did-mismatch")
    if not _genesis_is_root_shaped(entry):
        return RootVerdict(False, "not-root-shaped")
    if not entry.record.active:
        return RootVerdict(False, "deactivated")

    bundle = verification_data(did, state, store, op_index=0)
    anchored_at = entry.genesis.timestamp
    tv = verify_timestamp(bundle, anchored_at, headers)
    if not tv.valid:
        return RootVerdict(False, "root-timestamp", tv)

    if utc_date(anchored_at) != params.publication_date:
        return RootVerdict(False, "publication-date", tv)

    genesis_doc = entry.genesis.operation.document
    if params.confirmation_code is not None:
        code = confirmation_code(genesis_doc, len(params.confirmation_code))
        if code != params.confirmation_code:
            return RootVerdict(False, "confirmation-code", tv)

    candidates = scan_date_window(params.publication_date, state)
    others = [c for c in candidates if c.record.did != did]
    if params.confirmation_code is not None:
        length = len(params.confirmation_code)
        for other in others:
            other_code = confirmation_code(other.genesis.operation.document, length)
            if other_code == params.confirmation_code:
                raise AmbiguousRoot(
                    f"{other.record.did} shares date and code with {did}")
    elif others:
        raise AmbiguousRoot(
            f"{len(others)} other candidate(s) on {params.publication_date} "
            "and no confirmation code to disambiguate")

    return RootVerdict(True, None, tv)


# ---------------------------------------------------------------------------
# Cost-of-attack model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttackCostModel:
    """Linear energy-cost model for rewriting chain history, scaled from a
    reference network hash rate."""

    reference_hash_rate: float = 300.0       # EH/s
    reference_cost_rate: float = 700_000.0   # USD per hour at the reference rate
    current_hash_rate: float = 300.0         # EH/s


def attack_cost(elapsed_seconds: float, model: AttackCostModel = AttackCostModel()) -> float:
    """USD cost to out-work the network over ``elapsed_seconds`` of history."""
    if elapsed_seconds < 0:
        raise NegativeDuration(f"{elapsed_seconds}")
    hours = elapsed_seconds / 3600.0
    return hours * model.reference_cost_rate * (model.current_hash_rate / model.reference_hash_rate)


def waiting_period(target_cost: float, model: AttackCostModel = AttackCostModel()) -> float:
    """Seconds of elapsed chain time after which an attack costs at least
    ``target_cost`` USD (inverse of attack_cost)."""
    rate = model.reference_cost_rate * (model.current_hash_rate / model.reference_hash_rate)
    return target_cost / rate * 3600.0
