"""DID documents, metadata and the operations that govern them.

A DID document carries verification methods (raw Ed25519 public keys, hex)
and service entries. Attestations from an upstream entity travel inside the
document as a special service entry and are moved into document metadata at
resolution time (transform_proof_service).

Control is split between two hash commitments: the update commitment (its
pre-image is held by the attestor and authorizes update/deactivate) and the
recovery commitment (pre-image held by the subject; recovery replaces the
document, strips attestations and rotates both commitments).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Any

from .canonical import b32encode, canonical_bytes
from .errors import TrustchainError
from .keys import SECRET_LEN, SIGNATURE_LEN, verify_signature

DID_PREFIX = "did:tc:"
PROOF_SERVICE_ID = "trustchain-attestor-proof"

STATUS_ACTIVE = "active"
STATUS_DEACTIVATED = "deactivated"

ATTESTATION_DOMAIN = b"tc/attest\n"
CHALLENGE_DOMAIN = b"tc/challenge\n"


class InvalidOperation(TrustchainError):
    """Structurally invalid DID operation."""


class InvalidReveal(TrustchainError):
    """Revealed secret does not hash to the governing commitment."""


class AlreadyDeactivated(TrustchainError):
    """The DID was deactivated; no further operation applies."""


class BadSecretLength(TrustchainError):
    """Commitment pre-images are exactly 32 bytes."""


class DuplicateProofService(TrustchainError):
    """A document may carry at most one attestor-proof service."""


class MalformedProofPayload(TrustchainError):
    """Attestor-proof service payload is not of the expected shape."""


def _reject_unknown_keys(d: dict, allowed: frozenset, what: str) -> None:
    # Wire decoders are strict: every byte of these structures is covered by
    # a hash commitment, so an unrecognized field is tampering, not an
    # extension.
    unknown = set(d) - allowed
    if unknown:
        raise InvalidOperation(f"unknown field(s) {sorted(unknown)} in {what}")


@dataclass(frozen=True)
class VerificationMethod:
    id: str
    type: str
    public_key_hex: str

    def to_dict(self) -> dict:
        return {"id": self.id, "type": self.type, "publicKeyHex": self.public_key_hex}

    @classmethod
    def from_dict(cls, d: dict) -> "VerificationMethod":
        _reject_unknown_keys(d, frozenset({"id", "type", "publicKeyHex"}),
                             "verification method")
        return cls(id=d["id"], type=d["type"], public_key_hex=d["publicKeyHex"])

    @property
    def public_key(self) -> bytes:
        return bytes.fromhex(self.public_key_hex)


@dataclass(frozen=True)
class Service:
    """A service entry; the endpoint is either a URI string or an embedded
    payload (used by the attestor-proof service)."""

    id: str
    type: str
    endpoint: Any

    def to_dict(self) -> dict:
        return {"id": self.id, "type": self.type, "serviceEndpoint": self.endpoint}

    @classmethod
    def from_dict(cls, d: dict) -> "Service":
        _reject_unknown_keys(d, frozenset({"id", "type", "serviceEndpoint"}), "service")
        return cls(id=d["id"], type=d["type"], endpoint=d["serviceEndpoint"])


@dataclass(frozen=True)
class DidDocument:
    """Public keys plus service endpoints. ``id`` is empty for candidate
    documents (it is only known once the genesis operation is formed)."""

    id: str = ""
    verification_methods: tuple[VerificationMethod, ...] = ()
    services: tuple[Service, ...] = ()

    def __post_init__(self):
        seen = set()
        for vm in self.verification_methods:
            if vm.id in seen:
                raise InvalidOperation(f"duplicate key id {vm.id!r}")
            seen.add(vm.id)

    def body_dict(self, include_proof: bool = True) -> dict:
        """Dictionary form without the id, the input to hashing/derivation."""
        services = self.services if include_proof else tuple(
            s for s in self.services if not is_proof_service(s))
        return {
            "verificationMethod": [vm.to_dict() for vm in self.verification_methods],
            "service": [s.to_dict() for s in services],
        }

    def to_dict(self) -> dict:
        d = self.body_dict()
        if self.id:
            d["id"] = self.id
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DidDocument":
        _reject_unknown_keys(d, frozenset({"id", "verificationMethod", "service"}),
                             "document")
        return cls(
            id=d.get("id", ""),
            verification_methods=tuple(
                VerificationMethod.from_dict(v) for v in d.get("verificationMethod", [])),
            services=tuple(Service.from_dict(s) for s in d.get("service", [])),
        )

    def get_key(self, key_id: str) -> VerificationMethod | None:
        for vm in self.verification_methods:
            if vm.id == key_id:
                return vm
        return None

    def with_id(self, did: str) -> "DidDocument":
        return replace(self, id=did)


@dataclass(frozen=True)
class AttestationProof:
    """Upstream signature binding a document digest (and any chain-length
    constraint) to this DID. ``key_id`` names the verification method in the
    upstream document to check against."""

    upstream_did: str
    key_id: str
    signature: bytes
    max_chain_length: int | None = None

    def to_dict(self) -> dict:
        d = {"upstreamDid": self.upstream_did, "keyId": self.key_id,
             "signature": self.signature.hex()}
        if self.max_chain_length is not None:
            d["maxChainLength"] = self.max_chain_length
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AttestationProof":
        _reject_unknown_keys(
            d, frozenset({"upstreamDid", "keyId", "signature", "maxChainLength"}),
            "attestation proof")
        return cls(
            upstream_did=d["upstreamDid"],
            key_id=d["keyId"],
            signature=bytes.fromhex(d["signature"]),
            max_chain_length=d.get("maxChainLength"),
        )


@dataclass(frozen=True)
class DocumentMetadata:
    attestations: tuple[AttestationProof, ...]
    update_commitment: bytes
    recovery_commitment: bytes
    timestamp: int
    max_chain_length: int | None = None

    @property
    def attestation(self) -> AttestationProof | None:
        return self.attestations[0] if self.attestations else None

    @property
    def upstream_did(self) -> str | None:
        proof = self.attestation
        return proof.upstream_did if proof else None

    def to_dict(self) -> dict:
        d = {
            "attestations": [p.to_dict() for p in self.attestations],
            "updateCommitment": self.update_commitment.hex(),
            "recoveryCommitment": self.recovery_commitment.hex(),
            "timestamp": self.timestamp,
        }
        if self.max_chain_length is not None:
            d["maxChainLength"] = self.max_chain_length
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DocumentMetadata":
        _reject_unknown_keys(
            d, frozenset({"attestations", "updateCommitment", "recoveryCommitment",
                          "timestamp", "maxChainLength"}), "document metadata")
        return cls(
            attestations=tuple(AttestationProof.from_dict(p) for p in d.get("attestations", [])),
            update_commitment=bytes.fromhex(d["updateCommitment"]),
            recovery_commitment=bytes.fromhex(d["recoveryCommitment"]),
            timestamp=d["timestamp"],
            max_chain_length=d.get("maxChainLength"),
        )


@dataclass(frozen=True)
class DidRecord:
    """Resolvable state of one DID: current (transformed) document, metadata
    and status."""

    did: str
    document: DidDocument | None
    metadata: DocumentMetadata
    status: str

    @property
    def active(self) -> bool:
        return self.status == STATUS_ACTIVE


@dataclass(frozen=True)
class DidOperation:
    """One entry in the registry's operation log.

    create carries a full document plus both fresh commitments; ``did`` is
    normally absent (derived) but may be set explicitly to duplicate an
    existing identifier on another tree (rebasing). update/recover carry a
    full replacement document, the revealed pre-image and fresh
    commitment(s); deactivate carries only the reveal.
    """

    kind: str
    document: DidDocument | None = None
    did: str | None = None
    reveal: bytes | None = None
    update_commitment: bytes | None = None
    recovery_commitment: bytes | None = None
    max_chain_length: int | None = None

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind}
        if self.did is not None:
            d["did"] = self.did
        if self.document is not None:
            d["document"] = self.document.body_dict()
        if self.reveal is not None:
            d["reveal"] = self.reveal.hex()
        if self.update_commitment is not None:
            d["updateCommitment"] = self.update_commitment.hex()
        if self.recovery_commitment is not None:
            d["recoveryCommitment"] = self.recovery_commitment.hex()
        if self.max_chain_length is not None:
            d["maxChainLength"] = self.max_chain_length
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DidOperation":
        _reject_unknown_keys(
            d, frozenset({"kind", "did", "document", "reveal", "updateCommitment",
                          "recoveryCommitment", "maxChainLength"}), "operation")
        return cls(
            kind=d["kind"],
            did=d.get("did"),
            document=DidDocument.from_dict(d["document"]) if "document" in d else None,
            reveal=bytes.fromhex(d["reveal"]) if "reveal" in d else None,
            update_commitment=(bytes.fromhex(d["updateCommitment"])
                               if "updateCommitment" in d else None),
            recovery_commitment=(bytes.fromhex(d["recoveryCommitment"])
                                 if "recoveryCommitment" in d else None),
            max_chain_length=d.get("maxChainLength"),
        )


def is_proof_service(service: Service) -> bool:
    return service.id == PROOF_SERVICE_ID or service.type == PROOF_SERVICE_ID


def canonicalize(document: DidDocument) -> bytes:
    """Canonical bytes of the full document (id included when set)."""
    return canonical_bytes(document.to_dict())


def document_digest(document: DidDocument) -> bytes:
    """Hash of the document content an attestor signs: the body without the
    id and without any embedded proof service (the proof cannot cover
    itself)."""
    return hashlib.sha256(canonical_bytes(document.body_dict(include_proof=False))).digest()


def derive_did(document: DidDocument, update_commitment: bytes,
               recovery_commitment: bytes) -> str:
    """Identifier of a genesis operation: hash of the anchored document body
    and both initial commitments."""
    material = canonical_bytes(document.body_dict()) + update_commitment + recovery_commitment
    return DID_PREFIX + b32encode(hashlib.sha256(material).digest())


def make_commitment(secret: bytes) -> bytes:
    if len(secret) != SECRET_LEN:
        raise BadSecretLength(f"secret must be {SECRET_LEN} bytes, got {len(secret)}")
    return hashlib.sha256(secret).digest()


def check_reveal(secret: bytes, commitment: bytes) -> bool:
    if len(secret) != SECRET_LEN:
        raise BadSecretLength(f"secret must be {SECRET_LEN} bytes, got {len(secret)}")
    return hashlib.sha256(secret).digest() == commitment


def attestation_message(digest: bytes, max_chain_length: int | None = None) -> bytes:
    """The exact bytes an attestor signs: document digest plus any
    chain-length constraint, so subjects cannot strip the constraint."""
    payload: dict[str, Any] = {"digest": digest.hex()}
    if max_chain_length is not None:
        payload["maxChainLength"] = max_chain_length
    return ATTESTATION_DOMAIN + canonical_bytes(payload)


def verify_attestation(proof: AttestationProof, document: DidDocument,
                       upstream_document: DidDocument) -> bool:
    """Check the proof's signature over ``document`` against the named key
    in the upstream document. False if the key is absent."""
    key = upstream_document.get_key(proof.key_id)
    if key is None:
        return False
    message = attestation_message(document_digest(document), proof.max_chain_length)
    return verify_signature(key.public_key, message, proof.signature)


def make_proof_service(proofs: list[AttestationProof]) -> Service:
    return Service(
        id=PROOF_SERVICE_ID,
        type=PROOF_SERVICE_ID,
        endpoint={"proofs": [p.to_dict() for p in proofs]},
    )


def transform_proof_service(
    document: DidDocument,
) -> tuple[DidDocument, tuple[AttestationProof, ...]]:
    """Move the attestor-proof service out of the document body.

    Returns the document without the proof service and the extracted
    attestation proofs (empty when there was no proof service). Idempotent:
    a transformed document passes through unchanged.
    """
    proof_services = [s for s in document.services if is_proof_service(s)]
    if not proof_services:
        return document, ()
    if len(proof_services) > 1:
        raise DuplicateProofService(f"{len(proof_services)} proof services present")
    payload = proof_services[0].endpoint
    if not isinstance(payload, dict) or not isinstance(payload.get("proofs"), list):
        raise MalformedProofPayload("proof service payload must be {'proofs': [...]}")
    if not payload["proofs"]:
        raise MalformedProofPayload("proof service carries no proofs")
    try:
        proofs = tuple(AttestationProof.from_dict(p) for p in payload["proofs"])
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedProofPayload(str(e)) from e
    for proof in proofs:
        if len(proof.signature) != SIGNATURE_LEN:
            raise MalformedProofPayload("signature must be 64 bytes")
    stripped = replace(
        document, services=tuple(s for s in document.services if not is_proof_service(s)))
    return stripped, proofs


def effective_constraint(proofs: tuple[AttestationProof, ...], declared: int | None) -> int | None:
    """Effective self-declared limit: signed constraints win over the
    operation's own field; multiple proofs take the tightest."""
    signed = [p.max_chain_length for p in proofs if p.max_chain_length is not None]
    if signed:
        return min(signed)
    return declared


def validate_operation(op: DidOperation) -> None:
    """Structural validation, raising InvalidOperation on any defect."""
    if op.kind not in ("create", "update", "recover", "deactivate"):
        raise InvalidOperation(f"unknown kind {op.kind!r}")
    if op.kind == "create":
        if op.document is None:
            raise InvalidOperation("create needs a document")
        if op.update_commitment is None or op.recovery_commitment is None:
            raise InvalidOperation("create needs both commitments")
        if op.reveal is not None:
            raise InvalidOperation("create carries no reveal")
    else:
        if op.did is None:
            raise InvalidOperation(f"{op.kind} needs a target did")
        if op.reveal is None or len(op.reveal) != SECRET_LEN:
            raise InvalidOperation(f"{op.kind} needs a 32-byte reveal")
    if op.kind in ("update", "recover"):
        if op.document is None:
            raise InvalidOperation(f"{op.kind} needs a replacement document")
        if op.update_commitment is None:
            raise InvalidOperation(f"{op.kind} needs a fresh update commitment")
    if op.kind == "recover" and op.recovery_commitment is None:
        raise InvalidOperation("recover needs a fresh recovery commitment")
    if op.kind == "deactivate" and op.document is not None:
        raise InvalidOperation("deactivate carries no document")
    for commitment in (op.update_commitment, op.recovery_commitment):
        if commitment is not None and len(commitment) != 32:
            raise InvalidOperation("commitments are 32-byte hashes")
    if op.document is not None:
        # Surfaces DuplicateProofService / MalformedProofPayload early.
        transform_proof_service(op.document)


def operation_did(op: DidOperation) -> str:
    """The DID an operation addresses (derived for plain creates)."""
    if op.did is not None:
        return op.did
    if op.kind != "create":
        raise InvalidOperation(f"{op.kind} needs a target did")
    assert op.document is not None and op.update_commitment and op.recovery_commitment
    return derive_did(op.document, op.update_commitment, op.recovery_commitment)


def apply_operation(record: DidRecord | None, op: DidOperation, timestamp: int) -> DidRecord:
    """Fold one anchored operation into a DID's state.

    ``timestamp`` is the anchoring block's header time. Raises rather than
    mutating on any invalid transition; callers folding the registry catch
    and audit.
    """
    validate_operation(op)

    if op.kind == "create":
        if record is not None:
            raise InvalidOperation("create for an existing DID")
        did = operation_did(op)
        document, proofs = transform_proof_service(op.document)
        metadata = DocumentMetadata(
            attestations=proofs,
            update_commitment=op.update_commitment,
            recovery_commitment=op.recovery_commitment,
            timestamp=timestamp,
            max_chain_length=effective_constraint(proofs, op.max_chain_length),
        )
        return DidRecord(did, document.with_id(did), metadata, STATUS_ACTIVE)

    if record is None:
        raise InvalidOperation(f"{op.kind} for unknown DID {op.did}")
    if record.status == STATUS_DEACTIVATED:
        raise AlreadyDeactivated(record.did)

    if op.kind == "update":
        if not check_reveal(op.reveal, record.metadata.update_commitment):
            raise InvalidReveal(f"update reveal rejected for {record.did}")
        document, proofs = transform_proof_service(op.document)
        metadata = DocumentMetadata(
            attestations=proofs,
            update_commitment=op.update_commitment,
            recovery_commitment=record.metadata.recovery_commitment,
            timestamp=timestamp,
            max_chain_length=effective_constraint(proofs, op.max_chain_length),
        )
        return DidRecord(record.did, document.with_id(record.did), metadata, STATUS_ACTIVE)

    if op.kind == "deactivate":
        if not check_reveal(op.reveal, record.metadata.update_commitment):
            raise InvalidReveal(f"deactivate reveal rejected for {record.did}")
        metadata = replace(record.metadata, timestamp=timestamp)
        return DidRecord(record.did, None, metadata, STATUS_DEACTIVATED)

    # recover: subject reclaims the identifier, dropping any attestation.
    if not check_reveal(op.reveal, record.metadata.recovery_commitment):
        raise InvalidReveal(f"recover reveal rejected for {record.did}")
    document = replace(
        op.document,
        services=tuple(s for s in op.document.services if not is_proof_service(s)))
    metadata = DocumentMetadata(
        attestations=(),
        update_commitment=op.update_commitment,
        recovery_commitment=op.recovery_commitment,
        timestamp=timestamp,
        max_chain_length=op.max_chain_length,
    )
    return DidRecord(record.did, document.with_id(record.did), metadata, STATUS_ACTIVE)
