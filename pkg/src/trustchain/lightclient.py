"""Simplified timestamp verification: a client holding only 80-byte headers.

The light client syncs and locally validates the header chain, then asks a
full node for resolution data plus verification bundles and re-runs the
same commitment and signature checks a full node would. Spurious server
data is exposed by verification; what a server can still do is *omit*
recent operations, which is why results carry the latest anchored height
and can be cross-checked across multiple servers.
"""
from __future__ import annotations

import json
import time
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass
from pathlib import Path

from .anchor import VerificationBundle, utc_date
from .attestation import ChainElement, DidChain, verify_chain_links
from .canonical import canonical_bytes, parse_canonical
from .didcore import (
    DidDocument,
    DidOperation,
    DocumentMetadata,
    effective_constraint,
    is_proof_service,
    operation_did,
    transform_proof_service,
)
from .errors import TrustchainError
from .registry import HEADER_LEN, BlockHeader, validate_header_chain
from .roottrust import RootParameters, confirmation_code, verify_timestamp


class ServerUnreachable(TrustchainError):
    """Server did not answer within the reliability policy."""


class ServerError(TrustchainError):
    """Server answered with an error or unparseable body."""


class InvalidHeaders(TrustchainError):
    """Served headers fail proof-of-work, linkage or monotonicity."""


class HeaderGap(TrustchainError):
    """Local header chain is shorter than a bundle's block height."""


class QuorumUnreachable(TrustchainError):
    """Fewer servers answered than the required quorum."""


@dataclass(frozen=True)
class ServerHandle:
    """Endpoint plus reliability policy for one full node."""

    endpoint: str
    timeout: float = 5.0
    retries: int = 1

    def fetch(self, path: str) -> bytes:
        url = self.endpoint.rstrip("/") + path
        last: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                with urllib.request.urlopen(url, timeout=self.timeout) as resp:
                    return resp.read()
            except urllib.error.HTTPError as e:
                body = e.read()
                raise ServerError(f"{url}: HTTP {e.code}: {body[:200]!r}") from e
            except (urllib.error.URLError, OSError, TimeoutError) as e:
                last = e
                time.sleep(0.05)
        raise ServerUnreachable(f"{url}: {last}")

    def fetch_json(self, path: str) -> dict:
        body = self.fetch(path)
        try:
            return json.loads(body)
        except json.JSONDecodeError as e:
            raise ServerError(f"unparseable body from {path}: {e}") from e


class HeaderChain:
    """Locally validated 80-byte header chain; persistent storage is the
    concatenation of raw headers, nothing else."""

    def __init__(self, headers: list[BlockHeader] | None = None):
        self.headers = headers or []
        if self.headers and not validate_header_chain(self.headers):
            raise InvalidHeaders("initial headers fail validation")

    @property
    def tip_height(self) -> int:
        return len(self.headers) - 1

    def extend(self, new_headers: list[BlockHeader]) -> None:
        """Append headers after validating the whole extended chain; an
        invalid extension is rejected wholesale."""
        candidate = self.headers + new_headers
        if not validate_header_chain(candidate):
            raise InvalidHeaders(f"{len(new_headers)} appended header(s) rejected")
        self.headers = candidate

    def save(self, path: Path | str) -> None:
        with open(path, "wb") as fh:
            for header in self.headers:
                fh.write(header.serialize())

    @classmethod
    def load(cls, path: Path | str) -> "HeaderChain":
        data = Path(path).read_bytes()
        if len(data) % HEADER_LEN:
            raise InvalidHeaders(f"header file length {len(data)} not a multiple of {HEADER_LEN}")
        headers = [BlockHeader.parse(data[i:i + HEADER_LEN])
                   for i in range(0, len(data), HEADER_LEN)]
        return cls(headers)


def sync_headers(server: ServerHandle, chain: HeaderChain | None = None) -> HeaderChain:
    """Fetch headers past the local tip and validate before accepting."""
    chain = chain or HeaderChain()
    raw = server.fetch(f"/headers?from={chain.tip_height + 1}")
    if len(raw) % HEADER_LEN:
        raise InvalidHeaders(f"stream length {len(raw)} not a multiple of {HEADER_LEN}")
    new = [BlockHeader.parse(raw[i:i + HEADER_LEN]) for i in range(0, len(raw), HEADER_LEN)]
    if new:
        chain.extend(new)
    return chain


# ---------------------------------------------------------------------------
# Element rebuilding: trust nothing the server says that can be recomputed
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerifiedElement:
    element: ChainElement
    latest_height: int


def _rebuild_element(payload: dict, headers: HeaderChain) -> VerifiedElement:
    """Reconstruct a chain element from a served (operation, bundle) pair,
    verifying every cryptographic binding along the way. Raises ServerError
    on any mismatch — the server's data is spurious."""
    bundle = VerificationBundle.from_dict(payload["bundle"])
    if bundle.height > headers.tip_height:
        raise HeaderGap(f"bundle height {bundle.height} > local tip {headers.tip_height}")

    claimed = payload["timestamp"]
    verdict = verify_timestamp(bundle, claimed, headers.headers)
    if not verdict.valid:
        raise ServerError(
            f"bundle for {payload.get('did')} fails timestamp verification "
            f"at step {verdict.failed_step} ({verdict.failed_name})")

    # The served operation must be the one in the (now verified) chunk file.
    chunk = parse_canonical(bundle.chunk)
    batch_index = payload["batchIndex"]
    operations = chunk.get("operations")
    if not isinstance(operations, list) or not 0 <= batch_index < len(operations):
        raise ServerError("batch index outside the chunk file")
    if canonical_bytes(operations[batch_index]) != canonical_bytes(payload["operation"]):
        raise ServerError("served operation differs from the anchored one")
    op = DidOperation.from_dict(payload["operation"])
    did = operation_did(op)
    if did != payload["did"]:
        raise ServerError(f"operation addresses {did}, server claims {payload['did']}")

    # Rebuild document, metadata and status from the verified operation.
    if op.kind == "deactivate":
        # The deactivation itself is what the bundle proves; the metadata
        # (stale attestations etc.) is non-authoritative context and cannot
        # make a chain through this element valid.
        status = "deactivated"
        document = DidDocument(id=did)
        metadata = DocumentMetadata.from_dict(payload["metadata"])
    else:
        status = "active"
        document, proofs = transform_proof_service(op.document)
        document = document.with_id(did)
        served = DocumentMetadata.from_dict(payload["metadata"])
        metadata = DocumentMetadata(
            attestations=proofs,
            update_commitment=op.update_commitment or served.update_commitment,
            recovery_commitment=op.recovery_commitment or served.recovery_commitment,
            timestamp=bundle.header.timestamp,
            max_chain_length=effective_constraint(proofs, op.max_chain_length),
        )
        if op.kind == "recover":
            metadata = DocumentMetadata(
                attestations=(),
                update_commitment=op.update_commitment,
                recovery_commitment=op.recovery_commitment,
                timestamp=bundle.header.timestamp,
                max_chain_length=op.max_chain_length,
            )
    return VerifiedElement(ChainElement(did, document, metadata, status), bundle.height)


def _verify_root_element(root_payload: dict, headers: HeaderChain,
                         params: RootParameters, server: ServerHandle) -> str | None:
    """Light-client root verification from the genesis bundle and the
    server's date-window listing. Returns a failure reason or None."""
    genesis = root_payload.get("genesis")
    if genesis is None:
        return "server omitted the root genesis data"
    try:
        rebuilt = _rebuild_element({**genesis, "did": root_payload["did"],
                                    "metadata": root_payload["metadata"]}, headers)
    except ServerError as e:
        return f"spurious root genesis data: {e}"
    op = DidOperation.from_dict(genesis["operation"])
    if op.kind != "create" or any(is_proof_service(s) for s in op.document.services):
        return "not-root-shaped"
    if params.expected_root_did is not None and params.expected_root_did != rebuilt.element.did:
        return "pinned-did-mismatch"

    anchored_at = genesis["timestamp"]
    if utc_date(anchored_at) != params.publication_date:
        return "publication-date"

    if params.confirmation_code is not None:
        code = confirmation_code(op.document, len(params.confirmation_code))
        if code != params.confirmation_code:
            return "confirmation-code"

    # Date-window sweep: other verifiable candidates with the same code make
    # the root ambiguous, exactly as on a full node. Candidates that fail
    # their own binding are spurious server data.
    listing = server.fetch_json(f"/root/candidates?date={params.publication_date.isoformat()}")
    for candidate in listing.get("candidates", []):
        if candidate["did"] == root_payload["did"]:
            continue
        try:
            _rebuild_element({**candidate, "metadata": _empty_metadata_dict()}, headers)
        except (ServerError, HeaderGap) as e:
            return f"spurious-candidate-data: {e}"
        cand_op = DidOperation.from_dict(candidate["operation"])
        if utc_date(candidate["timestamp"]) != params.publication_date:
            return "spurious-candidate-data: outside the window"
        if params.confirmation_code is not None:
            if confirmation_code(cand_op.document,
                                 len(params.confirmation_code)) == params.confirmation_code:
                return "ambiguous-root"
        else:
            return "ambiguous-root"
    return None


def _empty_metadata_dict() -> dict:
    return {"attestations": [], "updateCommitment": "00" * 32,
            "recoveryCommitment": "00" * 32, "timestamp": 0}


@dataclass(frozen=True)
class StvVerdict:
    valid: bool
    status: str
    latest_height: int
    reason: str | None = None
    data_ok: bool = False    # all served data verified, even if the DID is revoked


def stv_verify(did: str, server: ServerHandle, headers: HeaderChain,
               root_params: RootParameters) -> StvVerdict:
    """Verify a DID using only the local header chain plus served bundles,
    reproducing the full node's verdict on the same data."""
    payload = server.fetch_json(f"/chain/{urllib.parse.quote(did)}")
    latest_height = payload.get("latestHeight", -1)

    chains: list[list[str]] = payload.get("chains", [])
    elements_payload: dict[str, dict] = payload.get("elements", {})
    if not chains:
        return StvVerdict(False, "unknown", latest_height, "server returned no chain")

    first_failure: StvVerdict | None = None
    for chain_dids in chains:
        verdict = _verify_one_chain(did, chain_dids, elements_payload, headers,
                                    root_params, server, latest_height)
        if verdict.valid or (verdict.data_ok and verdict.status == "deactivated"):
            return verdict
        if first_failure is None:
            first_failure = verdict
    assert first_failure is not None
    return first_failure


def _verify_one_chain(did: str, chain_dids: list[str], elements_payload: dict,
                      headers: HeaderChain, root_params: RootParameters,
                      server: ServerHandle, latest_height: int) -> StvVerdict:
    if not chain_dids or chain_dids[-1] != did:
        return StvVerdict(False, "unknown", latest_height, "malformed chain listing")
    rebuilt: list[VerifiedElement] = []
    try:
        for element_did in chain_dids:
            if element_did not in elements_payload:
                return StvVerdict(False, "unknown", latest_height,
                                  f"server omitted element {element_did}")
            rebuilt.append(_rebuild_element(elements_payload[element_did], headers))
    except ServerError as e:
        return StvVerdict(False, "unknown", latest_height, str(e))

    root_reason = _verify_root_element(elements_payload[chain_dids[0]], headers,
                                       root_params, server)
    if root_reason is not None:
        return StvVerdict(False, rebuilt[-1].element.status, latest_height, root_reason)

    elements = tuple(v.element for v in rebuilt)
    links = verify_chain_links(DidChain(elements))
    if links.valid:
        return StvVerdict(True, "active", latest_height, data_ok=True)

    leaf = elements[-1]
    if (leaf.status == "deactivated"
            and links.failure_index == len(elements) - 1
            and (len(elements) == 1
                 or verify_chain_links(DidChain(elements[:-1])).valid)):
        # Revocation itself verified: cryptographically sound, DID revoked.
        return StvVerdict(False, "deactivated", latest_height, "deactivated", data_ok=True)
    return StvVerdict(False, leaf.status, latest_height, links.failure_reason)


@dataclass(frozen=True)
class MultiServerVerdict:
    valid: bool
    status: str
    latest_height: int
    omission_suspected: bool
    responses: int
    verdict: StvVerdict


def multi_server_resolve(did: str, servers: list[ServerHandle], quorum: int,
                         headers: HeaderChain,
                         root_params: RootParameters) -> MultiServerVerdict:
    """Query several servers and accept the latest-anchored verifying state.

    A revocation reported by any cryptographically sound response wins over
    an active state (fail-safe). Disagreement between sound responses on the
    DID's latest operation height flags suspected omission; if every queried
    server omits the same data, staleness remains undetectable.
    """
    if quorum > len(servers):
        raise QuorumUnreachable(f"quorum {quorum} > {len(servers)} server(s)")
    results: list[StvVerdict] = []
    for server in servers:
        try:
            results.append(stv_verify(did, server, headers, root_params))
        except (ServerUnreachable, ServerError):
            continue
    if len(results) < quorum:
        raise QuorumUnreachable(f"{len(results)} response(s) < quorum {quorum}")

    sound = [r for r in results if r.data_ok]
    pool = sound or results
    omission = len({r.latest_height for r in pool}) > 1
    winner = max(pool, key=lambda r: r.latest_height)
    if any(r.status == "deactivated" for r in sound):
        deactivated = max((r for r in sound if r.status == "deactivated"),
                          key=lambda r: r.latest_height)
        winner = deactivated
    return MultiServerVerdict(
        valid=winner.valid,
        status=winner.status,
        latest_height=winner.latest_height,
        omission_suspected=omission,
        responses=len(results),
        verdict=winner,
    )
