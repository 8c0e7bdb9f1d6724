"""Minimal verifiable-credential layer over the DID trust network.

A credential is a signed map of claims bound to an issuer DID and one of
its verification methods. Verification runs four steps, in order, and
reports the first failure: (i) resolve the issuer, (ii) verify the
attestation chain, (iii) verify the root timestamp, (iv) verify the
credential signature under a key from the resolved issuer document.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .anchor import ContentStore, RegistryState, StateView, resolve
from .attestation import Identity, build_chains, verify_chain
from .canonical import canonical_bytes, parse_canonical
from .didcore import DidDocument
from .errors import TrustchainError
from .keys import verify_signature
from .registry import BlockHeader
from .roottrust import RootParameters

CREDENTIAL_DOMAIN = b"tc/vc\n"

STEP_RESOLVE = "i"
STEP_CHAIN = "ii"
STEP_ROOT = "iii"
STEP_SIGNATURE = "iv"

POLICY_CURRENT = "current"
POLICY_AT_ISSUANCE = "at-issuance"


class IssuerDeactivated(TrustchainError):
    """Cannot issue from a deactivated (or unknown) DID."""


class UnknownKey(TrustchainError):
    """Signing key id is not in the issuer's resolved document."""


@dataclass(frozen=True)
class Credential:
    issuer: str
    claims: dict[str, Any]
    issued_at: int
    key_id: str
    signature: bytes

    def body(self) -> bytes:
        return canonical_bytes({
            "issuer": self.issuer,
            "claims": self.claims,
            "issuedAt": self.issued_at,
            "keyId": self.key_id,
        })

    def to_dict(self) -> dict:
        return {
            "issuer": self.issuer,
            "claims": self.claims,
            "issuedAt": self.issued_at,
            "keyId": self.key_id,
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Credential":
        return cls(
            issuer=d["issuer"],
            claims=d["claims"],
            issued_at=d["issuedAt"],
            key_id=d["keyId"],
            signature=bytes.fromhex(d["signature"]),
        )

    def serialize(self) -> bytes:
        return canonical_bytes(self.to_dict())

    @classmethod
    def parse(cls, data: bytes) -> "Credential":
        return cls.from_dict(parse_canonical(data))


def issue_credential(issuer: Identity, claims: dict[str, Any], issued_at: int,
                     state: RegistryState | StateView) -> Credential:
    """Sign a claims map under the issuer's resolved signing key."""
    entry = state.get_entry(issuer.did)
    if entry is None or not entry.record.active:
        raise IssuerDeactivated(issuer.did)
    if entry.record.document.get_key(issuer.key_id) is None:
        raise UnknownKey(f"{issuer.key_id} not in resolved document of {issuer.did}")
    unsigned = Credential(issuer.did, claims, issued_at, issuer.key_id, b"")
    signature = issuer.signing_key.sign(CREDENTIAL_DOMAIN + unsigned.body())
    return Credential(issuer.did, claims, issued_at, issuer.key_id, signature)


@dataclass(frozen=True)
class CredentialVerdict:
    valid: bool
    failed_step: str | None = None    # "i" | "ii" | "iii" | "iv"
    reason: str | None = None

    @property
    def step_number(self) -> int | None:
        order = {STEP_RESOLVE: 1, STEP_CHAIN: 2, STEP_ROOT: 3, STEP_SIGNATURE: 4}
        return order.get(self.failed_step) if self.failed_step else None


def verify_credential(credential: Credential, state: RegistryState | StateView,
                      root_params: RootParameters, store: ContentStore,
                      headers: list[BlockHeader], *,
                      via: str | None = None,
                      policy: str = POLICY_CURRENT) -> CredentialVerdict:
    """Four-step verification against a trusted root.

    ``via`` names an alternative DID to verify through (an interoperability
    dDID carrying the issuer's keys); default is the credential's issuer.
    ``policy`` "current" (default) checks against present state, so issuer
    revocation invalidates earlier credentials; "at-issuance" replays state
    as of the credential's issuance time.
    """
    if policy == POLICY_AT_ISSUANCE:
        if isinstance(state, StateView):
            state = StateView([s.as_of(credential.issued_at) for s in state.states])
        else:
            state = state.as_of(credential.issued_at)
    elif policy != POLICY_CURRENT:
        raise ValueError(f"unknown policy {policy!r}")

    target = via or credential.issuer

    # i — resolve the issuer (or the interop document standing in for it).
    try:
        record = resolve(target, state)
    except TrustchainError as e:
        return CredentialVerdict(False, STEP_RESOLVE, str(e))
    if not record.active or record.document is None:
        return CredentialVerdict(False, STEP_RESOLVE, f"{target} is {record.status}")
    document: DidDocument = record.document

    # ii — trace the attestation chain; iii — verify the root timestamp.
    # Every attestation path is tried; the first fully valid one wins.
    try:
        chains = build_chains(target, state)
    except TrustchainError as e:
        return CredentialVerdict(False, STEP_CHAIN, f"{type(e).__name__}: {e}")
    first_failure: CredentialVerdict | None = None
    chain_ok = False
    for chain in chains:
        verdict = verify_chain(chain, root_params, state=state, store=store,
                               headers=headers)
        if verdict.valid:
            chain_ok = True
            break
        if first_failure is None:
            step = STEP_ROOT if verdict.failure_kind == "root" else STEP_CHAIN
            first_failure = CredentialVerdict(False, step, verdict.failure_reason)
    if not chain_ok:
        assert first_failure is not None
        return first_failure

    # iv — the credential signature, under a key of the resolved document.
    # Verifying through an interop document, key ids were renamed to avoid
    # collisions, so an unmatched id falls back to trying every key: the
    # promise is that the *keys* carry over, not their local names.
    message = CREDENTIAL_DOMAIN + credential.body()
    key = document.get_key(credential.key_id)
    if key is not None:
        if verify_signature(key.public_key, message, credential.signature):
            return CredentialVerdict(True)
        return CredentialVerdict(False, STEP_SIGNATURE, "signature invalid")
    if via is not None:
        for candidate in document.verification_methods:
            if verify_signature(candidate.public_key, message, credential.signature):
                return CredentialVerdict(True)
        return CredentialVerdict(
            False, STEP_SIGNATURE, "no key in the interop document verifies the signature")
    return CredentialVerdict(
        False, STEP_SIGNATURE, f"key {credential.key_id} not in resolved document")
