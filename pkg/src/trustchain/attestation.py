"""The dDID lifecycle between upstream and downstream entities.

An upstream entity challenge-verifies key possession, signs the candidate
document's digest (optionally binding a chain-length constraint), and
anchors the result. The upstream keeps the update secret (unilateral
renewal and revocation); the subject keeps the recovery secret (ultimate
control). Chains of such attestations are rebuilt from scanned state and
verified link by link back to a root whose timestamp is independently
checked.
"""
from __future__ import annotations

import secrets
from dataclasses import dataclass, field, replace

from .anchor import (
    ContentStore,
    DidEntry,
    RegistryState,
    StateView,
    anchor_batch,
)
from .didcore import (
    AlreadyDeactivated,
    AttestationProof,
    CHALLENGE_DOMAIN,
    DidDocument,
    DidOperation,
    DocumentMetadata,
    InvalidOperation,
    InvalidReveal,
    Service,
    VerificationMethod,
    attestation_message,
    check_reveal,
    derive_did,
    document_digest,
    make_commitment,
    make_proof_service,
    verify_attestation,
)
from .errors import TrustchainError
from .keys import SigningKey, random_secret, verify_signature
from .registry import BlockChain, BlockHeader
from . import roottrust

KEY_TYPE = "Ed25519"
MAX_CHAIN_DEPTH = 64


class ExpiredChallenge(TrustchainError):
    """Challenge answered after its expiry."""


class MissingKeyResponse(TrustchainError):
    """Response omits one of the challenged keys."""


class ChallengeFailed(TrustchainError):
    """Key-possession proof did not verify."""


class UpstreamDeactivated(TrustchainError):
    """The attesting DID is not active."""


class ConstraintViolation(TrustchainError):
    """Issuance would exceed an inherited chain-length limit."""


class NotUpstream(TrustchainError):
    """Caller holds no update secret for the target DID."""


class BrokenChain(TrustchainError):
    """An upstream DID is missing or unresolvable."""


class CycleDetected(TrustchainError):
    """Attestations form a loop."""


class NoRoot(TrustchainError):
    """Chain walk exceeded the depth bound without reaching a root."""


class KeyMismatch(TrustchainError):
    """Rebased document omits keys of the DID it duplicates."""


class MissingProviderKeys(TrustchainError):
    """Combined document omits one provider's keys."""


class InvalidAttestationSignature(TrustchainError):
    """A supplied attestation proof does not verify."""


# ---------------------------------------------------------------------------
# Actors and helpers
# ---------------------------------------------------------------------------

@dataclass
class Identity:
    """An operator-side actor: its DID, private signing keys, and the
    commitment pre-images it holds (its own recovery secret, and the update
    secret of every DID it attested, keyed by target DID)."""

    did: str
    keys: dict[str, SigningKey]
    key_id: str
    recovery_secret: bytes | None = None
    update_secrets: dict[str, bytes] = field(default_factory=dict)

    @property
    def signing_key(self) -> SigningKey:
        return self.keys[self.key_id]


def candidate_document(keys: dict[str, SigningKey],
                       services: tuple[Service, ...] = ()) -> DidDocument:
    """Candidate document (no id, no proof) from a set of signing keys."""
    methods = tuple(
        VerificationMethod(id=key_id, type=KEY_TYPE, public_key_hex=key.public_hex())
        for key_id, key in sorted(keys.items()))
    return DidDocument(verification_methods=methods, services=services)


# ---------------------------------------------------------------------------
# Challenge-response key possession proof
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Challenge:
    """One nonce per verification method, bound to the candidate document's
    digest so responses cannot be replayed for a different document."""

    nonces: dict[str, bytes]
    document_digest: bytes
    expiry: int

    def to_dict(self) -> dict:
        return {
            "nonces": {kid: nonce.hex() for kid, nonce in self.nonces.items()},
            "documentDigest": self.document_digest.hex(),
            "expiry": self.expiry,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Challenge":
        return cls(
            nonces={kid: bytes.fromhex(v) for kid, v in d["nonces"].items()},
            document_digest=bytes.fromhex(d["documentDigest"]),
            expiry=d["expiry"],
        )


@dataclass(frozen=True)
class ChallengeResponse:
    signatures: dict[str, bytes]

    def to_dict(self) -> dict:
        return {"signatures": {kid: sig.hex() for kid, sig in self.signatures.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "ChallengeResponse":
        return cls({kid: bytes.fromhex(v) for kid, v in d["signatures"].items()})


def issue_challenge(candidate: DidDocument, now: int, ttl: int = 3600) -> Challenge:
    return Challenge(
        nonces={vm.id: secrets.token_bytes(32) for vm in candidate.verification_methods},
        document_digest=document_digest(candidate),
        expiry=now + ttl,
    )


def respond_challenge(challenge: Challenge, keys: dict[str, SigningKey]) -> ChallengeResponse:
    signatures = {}
    for key_id, nonce in challenge.nonces.items():
        if key_id not in keys:
            raise MissingKeyResponse(f"no private key for {key_id}")
        message = CHALLENGE_DOMAIN + nonce + challenge.document_digest
        signatures[key_id] = keys[key_id].sign(message)
    return ChallengeResponse(signatures)


def verify_response(challenge: Challenge, response: ChallengeResponse,
                    candidate: DidDocument, now: int) -> bool:
    """True iff every nonce is signed by its matching candidate key and the
    challenge is bound to this candidate document."""
    if now > challenge.expiry:
        raise ExpiredChallenge(f"expired at {challenge.expiry}, now {now}")
    if challenge.document_digest != document_digest(candidate):
        return False
    for vm in candidate.verification_methods:
        if vm.id not in challenge.nonces:
            return False
    for key_id, nonce in challenge.nonces.items():
        if key_id not in response.signatures:
            raise MissingKeyResponse(key_id)
        key = candidate.get_key(key_id)
        if key is None:
            return False
        message = CHALLENGE_DOMAIN + nonce + challenge.document_digest
        if not verify_signature(key.public_key, message, response.signatures[key_id]):
            return False
    return True


# ---------------------------------------------------------------------------
# Issuance, renewal, revocation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IssuedDid:
    did: str
    operation: DidOperation
    update_secret: bytes
    recovery_secret: bytes
    block_height: int


def _require_active(state: RegistryState | StateView, did: str) -> DidEntry:
    entry = state.get_entry(did)
    if entry is None or not entry.record.active:
        raise UpstreamDeactivated(did)
    return entry


def _inherited_limit(chain: "DidChain") -> int | None:
    limits = [e.metadata.max_chain_length for e in chain.elements
              if e.metadata.max_chain_length is not None]
    return min(limits) if limits else None


def prepare_attested_create(upstream: Identity, candidate: DidDocument, *,
                            update_secret: bytes, recovery_secret: bytes,
                            max_chain_length: int | None = None,
                            extra_proofs: tuple[AttestationProof, ...] = ()) -> DidOperation:
    """Build (without anchoring) the create operation for an attested dDID."""
    signature = upstream.signing_key.sign(
        attestation_message(document_digest(candidate), max_chain_length))
    proof = AttestationProof(
        upstream_did=upstream.did,
        key_id=upstream.key_id,
        signature=signature,
        max_chain_length=max_chain_length,
    )
    document = replace(
        candidate,
        services=candidate.services + (make_proof_service([proof, *extra_proofs]),))
    return DidOperation(
        kind="create",
        document=document,
        update_commitment=make_commitment(update_secret),
        recovery_commitment=make_commitment(recovery_secret),
    )


def issue_ddid(upstream: Identity, candidate: DidDocument,
               challenge: Challenge, response: ChallengeResponse, *,
               state: RegistryState | StateView, chain: BlockChain,
               store: ContentStore, timestamp: int, now: int,
               max_chain_length: int | None = None,
               update_secret: bytes | None = None,
               recovery_secret: bytes | None = None) -> IssuedDid:
    """Verify the challenge response and anchor the attested dDID.

    The generated update secret is retained by ``upstream`` (shared
    controller model); the recovery secret is returned for the subject.
    """
    upstream_entry = _require_active(state, upstream.did)
    if upstream_entry.record.document.get_key(upstream.key_id) is None:
        raise InvalidOperation(f"upstream key {upstream.key_id} not in resolved document")
    if not verify_response(challenge, response, candidate, now):
        raise ChallengeFailed(f"response rejected for candidate of {upstream.did}")

    upstream_chain = build_chain(upstream.did, state)
    new_depth = len(upstream_chain.elements)  # upstream depth + 1
    limit = _inherited_limit(upstream_chain)
    if max_chain_length is not None:
        limit = max_chain_length if limit is None else min(limit, max_chain_length)
    if limit is not None and new_depth > limit:
        raise ConstraintViolation(f"depth {new_depth} exceeds limit {limit}")

    update_secret = update_secret or random_secret()
    recovery_secret = recovery_secret or random_secret()
    op = prepare_attested_create(
        upstream, candidate,
        update_secret=update_secret, recovery_secret=recovery_secret,
        max_chain_length=max_chain_length)
    _, height = anchor_batch(chain, store, [op], timestamp)
    did = derive_did(op.document, op.update_commitment, op.recovery_commitment)
    upstream.update_secrets[did] = update_secret
    return IssuedDid(did, op, update_secret, recovery_secret, height)


def renew_ddid(upstream: Identity, did: str, new_document: DidDocument, *,
               state: RegistryState | StateView, chain: BlockChain,
               store: ContentStore, timestamp: int, now: int,
               challenge: Challenge | None = None,
               response: ChallengeResponse | None = None,
               max_chain_length: int | None = None) -> DidOperation:
    """Replace a dDID's document with a freshly attested one, rotating the
    update commitment. A challenge response is required when the key set
    changes."""
    entry = state.get_entry(did)
    if entry is None:
        raise NotUpstream(f"unknown DID {did}")
    if not entry.record.active:
        raise AlreadyDeactivated(did)
    secret = upstream.update_secrets.get(did)
    if secret is None:
        raise NotUpstream(f"{upstream.did} holds no update secret for {did}")
    if not check_reveal(secret, entry.record.metadata.update_commitment):
        raise InvalidReveal(f"stale update secret for {did}")

    old_keys = {vm.public_key_hex for vm in entry.record.document.verification_methods}
    new_keys = {vm.public_key_hex for vm in new_document.verification_methods}
    if new_keys != old_keys:
        if challenge is None or response is None:
            raise ChallengeFailed("key set changed; challenge response required")
        if not verify_response(challenge, response, new_document, now):
            raise ChallengeFailed(f"response rejected for renewal of {did}")

    if max_chain_length is None:
        max_chain_length = entry.record.metadata.max_chain_length
    signature = upstream.signing_key.sign(
        attestation_message(document_digest(new_document), max_chain_length))
    proof = AttestationProof(upstream.did, upstream.key_id, signature, max_chain_length)
    document = replace(
        new_document,
        services=new_document.services + (make_proof_service([proof]),))
    next_secret = random_secret()
    op = DidOperation(
        kind="update",
        did=did,
        document=document,
        reveal=secret,
        update_commitment=make_commitment(next_secret),
    )
    anchor_batch(chain, store, [op], timestamp)
    upstream.update_secrets[did] = next_secret
    return op


def revoke_ddid(upstream: Identity, did: str, *,
                state: RegistryState | StateView, chain: BlockChain,
                store: ContentStore, timestamp: int) -> DidOperation:
    """Deactivate a dDID by revealing its update secret. Permanent."""
    entry = state.get_entry(did)
    if entry is None:
        raise NotUpstream(f"unknown DID {did}")
    if not entry.record.active:
        raise AlreadyDeactivated(did)
    secret = upstream.update_secrets.get(did)
    if secret is None:
        raise NotUpstream(f"{upstream.did} holds no update secret for {did}")
    if not check_reveal(secret, entry.record.metadata.update_commitment):
        raise InvalidReveal(f"stale update secret for {did}")
    op = DidOperation(kind="deactivate", did=did, reveal=secret)
    anchor_batch(chain, store, [op], timestamp)
    return op


# ---------------------------------------------------------------------------
# Chain construction and verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainElement:
    did: str
    document: DidDocument
    metadata: DocumentMetadata
    status: str

    @classmethod
    def of(cls, entry: DidEntry) -> "ChainElement":
        return cls(
            did=entry.record.did,
            document=entry.record.document,
            metadata=entry.record.metadata,
            status=entry.record.status,
        )


@dataclass(frozen=True)
class DidChain:
    """Attestation path from root (index 0) down to the target DID."""

    elements: tuple[ChainElement, ...]

    @property
    def root(self) -> ChainElement:
        return self.elements[0]

    @property
    def leaf(self) -> ChainElement:
        return self.elements[-1]

    def to_dict(self) -> dict:
        return {"elements": [
            {"did": e.did,
             "document": e.document.to_dict(),
             "metadata": e.metadata.to_dict(),
             "status": e.status}
            for e in self.elements]}


def build_chains(did: str, state: RegistryState | StateView,
                 max_depth: int = MAX_CHAIN_DEPTH) -> list[DidChain]:
    """All upstream paths from ``did`` to an attestation-less terminator.
    A deactivated element still resolves (verification rejects it later);
    a missing upstream, a loop or an over-deep walk raises."""
    entry = state.get_entry(did)
    if entry is None:
        raise BrokenChain(f"unresolvable DID {did}")
    if entry.record.document is None:
        # Deactivated entries keep no document body; represent them with an
        # empty one so verification can still name the element.
        element = ChainElement(did, DidDocument(id=did), entry.record.metadata,
                               entry.record.status)
    else:
        element = ChainElement.of(entry)

    if not element.metadata.attestations:
        return [DidChain((element,))]

    chains: list[DidChain] = []
    first_error: TrustchainError | None = None
    for proof in element.metadata.attestations:
        if proof.upstream_did == did:
            raise CycleDetected(did)
        if max_depth <= 0:
            raise NoRoot(f"no root within {MAX_CHAIN_DEPTH} links of {did}")
        try:
            for upstream_chain in _build_upstream(proof.upstream_did, state,
                                                  seen={did}, depth=max_depth - 1):
                chains.append(DidChain(upstream_chain.elements + (element,)))
        except TrustchainError as e:
            first_error = first_error or e
    if not chains:
        assert first_error is not None
        raise first_error
    return chains


def _build_upstream(did: str, state, seen: set[str], depth: int) -> list[DidChain]:
    if did in seen:
        raise CycleDetected(did)
    entry = state.get_entry(did)
    if entry is None:
        raise BrokenChain(f"unresolvable upstream {did}")
    if entry.record.document is None:
        element = ChainElement(did, DidDocument(id=did), entry.record.metadata,
                               entry.record.status)
    else:
        element = ChainElement.of(entry)
    if not element.metadata.attestations:
        return [DidChain((element,))]
    if depth <= 0:
        raise NoRoot(f"no root within {MAX_CHAIN_DEPTH} links")
    chains: list[DidChain] = []
    first_error: TrustchainError | None = None
    for proof in element.metadata.attestations:
        try:
            for upstream_chain in _build_upstream(proof.upstream_did, state,
                                                  seen | {did}, depth - 1):
                chains.append(DidChain(upstream_chain.elements + (element,)))
        except TrustchainError as e:
            first_error = first_error or e
    if not chains:
        assert first_error is not None
        raise first_error
    return chains


def build_chain(did: str, state: RegistryState | StateView) -> DidChain:
    """The unique upstream path for ordinary (single-attestation) DIDs; for
    multi-attestation DIDs this is the path through the first proof."""
    return build_chains(did, state)[0]


@dataclass(frozen=True)
class LinkReport:
    index: int
    did: str
    ok: bool
    reason: str = ""


@dataclass(frozen=True)
class ChainVerdict:
    valid: bool
    failure_kind: str | None = None   # "link" | "root"
    failure_index: int | None = None
    failure_reason: str | None = None
    links: tuple[LinkReport, ...] = ()
    root_verdict: "roottrust.RootVerdict | None" = None


def verify_chain_links(chain: DidChain) -> ChainVerdict:
    """The pure half of chain verification: per-link attestation signatures,
    liveness and chain-length constraints from the root outward. Does not
    touch the registry; the root's own trustworthiness is checked separately."""
    links: list[LinkReport] = []

    def invalid(index: int, reason: str) -> ChainVerdict:
        links.append(LinkReport(index, chain.elements[index].did, False, reason))
        return ChainVerdict(False, "link", index, reason, tuple(links))

    running_limit: int | None = None
    for i, element in enumerate(chain.elements):
        if element.status != "active":
            return invalid(i, "deactivated")
        if i == 0:
            if element.metadata.attestations:
                return invalid(0, "root carries an attestation")
        else:
            upstream = chain.elements[i - 1]
            proof = next((p for p in element.metadata.attestations
                          if p.upstream_did == upstream.did), None)
            if proof is None:
                return invalid(i, f"no attestation by {upstream.did}")
            if not verify_attestation(proof, element.document, upstream.document):
                return invalid(i, "attestation signature invalid")
        declared = element.metadata.max_chain_length
        if declared is not None:
            running_limit = declared if running_limit is None else min(running_limit, declared)
        if running_limit is not None and i > running_limit:
            return invalid(i, f"depth {i} exceeds chain-length limit {running_limit}")
        links.append(LinkReport(i, element.did, True))

    return ChainVerdict(True, links=tuple(links))


def verify_chain(chain: DidChain, root_params: roottrust.RootParameters, *,
                 state: RegistryState | StateView, store: ContentStore,
                 headers: list[BlockHeader]) -> ChainVerdict:
    """Full chain verification: link checks from the root outward, then
    independent verification of the root itself (timestamp, publication
    date, confirmation code). The report pinpoints the first failing link."""
    link_verdict = verify_chain_links(chain)
    if not link_verdict.valid:
        return link_verdict
    links = link_verdict.links

    try:
        root_verdict = roottrust.verify_root(chain.root.did, root_params,
                                             state, store, headers)
    except roottrust.AmbiguousRoot as e:
        return ChainVerdict(False, "root", None, f"ambiguous-root: {e}", links)
    if not root_verdict.valid:
        return ChainVerdict(False, "root", None, root_verdict.reason or "root-timestamp",
                            links, root_verdict)

    return ChainVerdict(True, links=links, root_verdict=root_verdict)


def verify_did(did: str, root_params: roottrust.RootParameters, *,
               state: RegistryState | StateView, store: ContentStore,
               headers: list[BlockHeader]) -> tuple[ChainVerdict, DidChain | None]:
    """Verify a DID against a trusted root, following every attestation path
    until one validates. Returns the first valid (verdict, chain), or the
    first failure when none do."""
    try:
        chains = build_chains(did, state)
    except TrustchainError as e:
        return ChainVerdict(False, "link", None, f"{type(e).__name__}: {e}"), None
    first: tuple[ChainVerdict, DidChain] | None = None
    for candidate in chains:
        verdict = verify_chain(candidate, root_params, state=state, store=store,
                               headers=headers)
        if verdict.valid:
            return verdict, candidate
        if first is None:
            first = (verdict, candidate)
    assert first is not None
    return first


# ---------------------------------------------------------------------------
# Rebasing and interoperability
# ---------------------------------------------------------------------------

def rebase(upstream_on_a: Identity, did_on_b: str, state_b: RegistryState | StateView, *,
           state_a: RegistryState | StateView, chain_a: BlockChain,
           store_a: ContentStore, timestamp: int,
           document: DidDocument | None = None, force: bool = False,
           max_chain_length: int | None = None,
           update_secret: bytes | None = None,
           recovery_secret: bytes | None = None) -> IssuedDid:
    """Duplicate a DID from tree B as an attested dDID on tree A, under the
    same identifier, so chains downstream of it verify against A's root once
    clients adopt A's parameters (and read both registries).

    By default the duplicated document carries exactly the original keys and
    services; passing a replacement ``document`` that omits original keys
    raises KeyMismatch unless ``force`` is set (downstream chains through
    omitted keys will fail verification).
    """
    _require_active(state_a, upstream_on_a.did)
    entry_b = state_b.get_entry(did_on_b)
    if entry_b is None or not entry_b.record.active:
        raise BrokenChain(f"{did_on_b} not resolvable on the source tree")
    original = entry_b.record.document

    if document is None:
        candidate = DidDocument(
            verification_methods=original.verification_methods,
            services=original.services,
        )
    else:
        candidate = document
        original_keys = {vm.public_key_hex for vm in original.verification_methods}
        rebased_keys = {vm.public_key_hex for vm in candidate.verification_methods}
        if not original_keys <= rebased_keys and not force:
            raise KeyMismatch(
                f"rebased document omits {len(original_keys - rebased_keys)} original key(s)")

    update_secret = update_secret or random_secret()
    recovery_secret = recovery_secret or random_secret()
    op = prepare_attested_create(
        upstream_on_a, candidate,
        update_secret=update_secret, recovery_secret=recovery_secret,
        max_chain_length=max_chain_length)
    op = replace(op, did=did_on_b)
    _, height = anchor_batch(chain_a, store_a, [op], timestamp)
    upstream_on_a.update_secrets[did_on_b] = update_secret
    return IssuedDid(did_on_b, op, update_secret, recovery_secret, height)


def issue_interop_ddid(provider_a: Identity, provider_b: Identity,
                       combined: DidDocument, *,
                       state_a: RegistryState | StateView,
                       state_b: RegistryState | StateView,
                       targets: list[tuple[BlockChain, ContentStore]],
                       timestamp: int,
                       proofs: tuple[AttestationProof, AttestationProof] | None = None,
                       update_secret: bytes | None = None,
                       recovery_secret: bytes | None = None) -> IssuedDid:
    """Anchor a jointly attested dDID combining both providers' keys, on
    every target registry, so each community can verify the other's
    credentials through its own root.

    ``proofs`` may inject externally produced attestations (they are
    verified before anchoring); by default both providers sign here.
    """
    entry_a = _require_active(state_a, provider_a.did)
    entry_b = _require_active(state_b, provider_b.did)

    combined_keys = {vm.public_key_hex for vm in combined.verification_methods}
    for name, entry in (("A", entry_a), ("B", entry_b)):
        provider_keys = {vm.public_key_hex for vm in entry.record.document.verification_methods}
        if not provider_keys <= combined_keys:
            raise MissingProviderKeys(f"combined document omits provider {name} keys")

    digest = document_digest(combined)
    if proofs is None:
        message = attestation_message(digest, None)
        proofs = (
            AttestationProof(provider_a.did, provider_a.key_id,
                             provider_a.signing_key.sign(message)),
            AttestationProof(provider_b.did, provider_b.key_id,
                             provider_b.signing_key.sign(message)),
        )
    for proof, entry in zip(proofs, (entry_a, entry_b)):
        if not verify_attestation(proof, combined, entry.record.document):
            raise InvalidAttestationSignature(f"attestation by {proof.upstream_did} invalid")

    update_secret = update_secret or random_secret()
    recovery_secret = recovery_secret or random_secret()
    document = replace(
        combined, services=combined.services + (make_proof_service(list(proofs)),))
    op = DidOperation(
        kind="create",
        document=document,
        update_commitment=make_commitment(update_secret),
        recovery_commitment=make_commitment(recovery_secret),
    )
    did = derive_did(document, op.update_commitment, op.recovery_commitment)
    height = 0
    for target_chain, target_store in targets:
        _, height = anchor_batch(target_chain, target_store, [op], timestamp)
    provider_a.update_secrets[did] = update_secret
    provider_b.update_secrets[did] = update_secret
    return IssuedDid(did, op, update_secret, recovery_secret, height)
