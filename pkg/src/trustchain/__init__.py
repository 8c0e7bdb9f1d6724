"""Decentralised public key infrastructure at desk scale.

A simulated verifiable data registry (content-addressed store plus a
proof-of-work chain of 80-byte headers), DID documents governed by hash
commitments and upstream attestations, independently verifiable
timestamps, root-of-trust parameters shared as a calendar date plus short
code, light-client verification from headers only, and a minimal signed
credential layer on top.
"""

from .errors import TrustchainError
from .canonical import canonical_bytes, canonical_str, parse_canonical, b32encode
from .keys import SigningKey, verify_signature, random_secret
from .registry import (
    Block,
    BlockChain,
    BlockHeader,
    ContentId,
    ContentStore,
    MerkleProof,
    StoreView,
    Transaction,
    merkle_prove,
    merkle_root,
    merkle_verify,
    validate_header_chain,
)
from .didcore import (
    AttestationProof,
    DidDocument,
    DidOperation,
    DocumentMetadata,
    Service,
    VerificationMethod,
    apply_operation,
    canonicalize,
    check_reveal,
    derive_did,
    make_commitment,
    transform_proof_service,
)
from .anchor import (
    AnchoredOperation,
    DidEntry,
    RegistryState,
    StateView,
    VerificationBundle,
    anchor_batch,
    resolve,
    scan,
    verification_data,
)
from .attestation import (
    Challenge,
    ChallengeResponse,
    DidChain,
    Identity,
    build_chain,
    build_chains,
    candidate_document,
    issue_challenge,
    issue_ddid,
    issue_interop_ddid,
    rebase,
    renew_ddid,
    respond_challenge,
    revoke_ddid,
    verify_chain,
    verify_did,
    verify_response,
)
from .roottrust import (
    AttackCostModel,
    RootParameters,
    attack_cost,
    confirmation_code,
    publish_root,
    scan_date_window,
    verify_root,
    verify_timestamp,
    waiting_period,
)
from .credential import Credential, issue_credential, verify_credential

__version__ = "0.1.0"
