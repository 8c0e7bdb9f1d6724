"""Acceptance suite: one test per criterion, printing one pass/fail line
each (run with `pytest tests/test_acceptance.py -v -s`).

Fixtures mine at the default difficulty (16 leading zero bits) except the
1000-block storage fixture, where block count rather than work is what is
being measured (difficulty is configured down so the suite stays fast).
"""
from __future__ import annotations

import hashlib
import json
import math
import random
import shutil
import struct
import threading
import urllib.request
from dataclasses import replace
from datetime import date
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from helpers import Workbench, make_keys

from trustchain.anchor import (
    StateView,
    VerificationBundle,
    anchor_batch,
    build_anchor_transaction,
    resolve,
    scan,
    verification_data,
)
from trustchain.attestation import (
    ChainElement,
    Identity,
    build_chain,
    build_chains,
    candidate_document,
    issue_interop_ddid,
    prepare_attested_create,
    rebase,
    verify_chain,
    verify_did,
)
from trustchain.credential import Credential, issue_credential, verify_credential
from trustchain.didcore import (
    DidDocument,
    DidOperation,
    derive_did,
    make_commitment,
)
from trustchain.keys import SigningKey, random_secret
from trustchain.lightclient import ServerHandle, stv_verify, sync_headers
from trustchain.node import FullNode, NodeConfig
from trustchain.node.server import start_server
from trustchain.registry import (
    BlockChain,
    ContentStore,
    StoreView,
    Transaction,
    merkle_prove,
)
from trustchain.roottrust import (
    AmbiguousRoot,
    AttackCostModel,
    RootParameters,
    attack_cost,
    confirmation_code,
    publish_root,
    verify_root,
    verify_timestamp,
)

DEFAULT_BITS = 16
DAY = 86_400


def _pass(n: int, text: str) -> None:
    print(f"[criterion {n}] PASS — {text}")


# ===========================================================================
# 1. Cost table reproduction
# ===========================================================================

def test_criterion_1_cost_table():
    model = AttackCostModel()  # 300 EH/s reference
    table = {
        0: 0,
        3600: 700_000,
        DAY: 16_800_000,
        7 * DAY: 117_600_000,
        30 * DAY: 504_000_000,
    }
    for elapsed, expected in table.items():
        assert attack_cost(elapsed, model) == expected
    _pass(1, "attack cost exact at 0/1h/1d/7d/30d for 300 EH/s")


# ===========================================================================
# 2. Timestamp-verification tamper exhaustiveness
# ===========================================================================

def _sha(b: bytes) -> bytes:
    return hashlib.sha256(b).digest()


def _dsha(b: bytes) -> bytes:
    return hashlib.sha256(hashlib.sha256(b).digest()).digest()


def _oracle_first_failure(doc_body: bytes | None, chunk: bytes, provisional: bytes,
                          core: bytes, tx: bytes, leaf: bytes,
                          branch: list[tuple[bytes, str]], root: bytes,
                          header: bytes, height: int, claimed: int,
                          trusted: list[bytes]) -> int | None:
    """Independent re-statement of the eight commitment checks, written
    directly against hashlib/struct/json."""
    if doc_body is not None:
        doc = json.loads(doc_body)
        for vm in doc.get("verificationMethod", []):
            if vm["publicKeyHex"].encode() not in chunk:
                return 1
        for service in doc.get("service", []):
            endpoint = service["serviceEndpoint"]
            if isinstance(endpoint, str) and endpoint.encode() not in chunk:
                return 1
        if doc_body not in chunk:
            return 1
    try:
        prov = json.loads(provisional)
        chunk_cid = bytes.fromhex(prov["chunkCid"])
    except Exception:
        return 2
    if _sha(chunk) != chunk_cid:
        return 2
    try:
        core_parsed = json.loads(core)
        prov_cid = bytes.fromhex(core_parsed["provisionalCid"])
    except Exception:
        return 3
    if _sha(provisional) != prov_cid:
        return 3
    if len(tx) < 8 or tx[8:] != b"TC" + _sha(core):
        return 4
    if _dsha(tx) != leaf:
        return 5
    node = leaf
    for sibling, side in branch:
        node = _dsha(sibling + node) if side == "left" else _dsha(node + sibling)
    if node != root:
        return 6
    header_root = header[36:68]
    if root != header_root:
        return 6
    (ts,) = struct.unpack_from("<I", header, 68)
    if ts != claimed:
        return 7
    (bits,) = struct.unpack_from("<I", header, 72)
    value = int.from_bytes(_dsha(header), "big")
    if 256 - value.bit_length() < bits:
        return 8
    if not 0 <= height < len(trusted) or trusted[height] != header:
        return 8
    return None


def _mutations(data: bytes):
    for offset in range(len(data)):
        for xor in (0x01, 0x80):
            out = bytearray(data)
            out[offset] ^= xor
            yield bytes(out)


@pytest.fixture(scope="module")
def tamper_fixture():
    """Five DIDs anchored across three blocks (plus padding transactions so
    Merkle branches are non-trivial), at default difficulty."""
    bed = Workbench.create(bits=DEFAULT_BITS)
    dids: list[str] = []
    batches = [2, 2, 1]
    counter = 0
    for size in batches:
        ops = []
        for _ in range(size):
            doc = candidate_document(make_keys(1))
            op = DidOperation(kind="create", document=doc,
                              update_commitment=make_commitment(random_secret()),
                              recovery_commitment=make_commitment(random_secret()))
            ops.append(op)
            dids.append(derive_did(doc, op.update_commitment, op.recovery_commitment))
            counter += 1
        anchor_tx = build_anchor_transaction(bed.store, ops)
        pads = [Transaction.create(b"XX" + bytes([counter, i])) for i in range(3)]
        bed.chain.mine_block([pads[0], anchor_tx, pads[1], pads[2]], bed.tick())
    state = bed.state
    return bed, state, dids


def test_criterion_2_tamper_exhaustive(tamper_fixture):
    bed, state, dids = tamper_fixture
    trusted = bed.headers
    trusted_bytes = [h.serialize() for h in trusted]

    total = accepts = rejects = skipped = 0
    step_mismatches = []

    for did in dids:
        bundle = verification_data(did, state, bed.store, op_index=0)
        claimed = state.get_entry(did).genesis.timestamp

        honest = verify_timestamp(bundle, claimed, trusted)
        assert honest.valid, f"false reject on honest bundle for {did}"

        doc_body = __import__("trustchain.canonical", fromlist=["canonical_bytes"]) \
            .canonical_bytes(bundle.document.body_dict())

        def run(case_bundle: VerificationBundle, oracle_args: tuple) -> None:
            nonlocal total, accepts, step_mismatches
            total += 1
            verdict = verify_timestamp(case_bundle, claimed, trusted)
            expected = _oracle_first_failure(*oracle_args)
            if verdict.valid:
                accepts += 1
            elif verdict.failed_step != expected:
                step_mismatches.append((verdict.failed_step, expected))

        base_oracle = dict(
            doc_body=doc_body, chunk=bundle.chunk, provisional=bundle.provisional,
            core=bundle.core, tx=bundle.transaction, leaf=bundle.merkle_proof.leaf,
            branch=list(bundle.merkle_proof.branch), root=bundle.merkle_proof.expected_root,
            header=bundle.header.serialize(), height=bundle.height, claimed=claimed,
            trusted=trusted_bytes)

        def oracle_with(**kw) -> tuple:
            merged = {**base_oracle, **kw}
            return (merged["doc_body"], merged["chunk"], merged["provisional"],
                    merged["core"], merged["tx"], merged["leaf"], merged["branch"],
                    merged["root"], merged["header"], merged["height"],
                    merged["claimed"], merged["trusted"])

        # document bytes (mutations that stay parseable)
        for mutated in _mutations(doc_body):
            try:
                parsed = json.loads(mutated)
                doc = DidDocument.from_dict(parsed)
            except Exception:
                skipped += 1  # transport-level reject: never reaches the verifier
                continue
            rejects += 1
            run(replace(bundle, document=doc), oracle_with(
                doc_body=__import__("trustchain.canonical", fromlist=["canonical_bytes"])
                .canonical_bytes(doc.body_dict())))
        # chunk / provisional / core / transaction / header
        for mutated in _mutations(bundle.chunk):
            rejects += 1
            run(replace(bundle, chunk=mutated), oracle_with(chunk=mutated))
        for mutated in _mutations(bundle.provisional):
            rejects += 1
            run(replace(bundle, provisional=mutated), oracle_with(provisional=mutated))
        for mutated in _mutations(bundle.core):
            rejects += 1
            run(replace(bundle, core=mutated), oracle_with(core=mutated))
        for mutated in _mutations(bundle.transaction):
            rejects += 1
            run(replace(bundle, transaction=mutated), oracle_with(tx=mutated))
        for mutated in _mutations(bundle.header.serialize()):
            from trustchain.registry import BlockHeader
            rejects += 1
            run(replace(bundle, header=BlockHeader.parse(mutated)),
                oracle_with(header=mutated))
        # merkle proof: leaf, siblings, root, sides
        proof = bundle.merkle_proof
        for mutated in _mutations(proof.leaf):
            rejects += 1
            run(replace(bundle, merkle_proof=replace(proof, leaf=mutated)),
                oracle_with(leaf=mutated))
        for level, (sibling, side) in enumerate(proof.branch):
            for mutated in _mutations(sibling):
                branch = list(proof.branch)
                branch[level] = (mutated, side)
                rejects += 1
                run(replace(bundle, merkle_proof=replace(proof, branch=tuple(branch))),
                    oracle_with(branch=branch))
            flipped = list(proof.branch)
            flipped[level] = (sibling, "left" if side == "right" else "right")
            rejects += 1
            run(replace(bundle, merkle_proof=replace(proof, branch=tuple(flipped))),
                oracle_with(branch=flipped))
        for mutated in _mutations(proof.expected_root):
            rejects += 1
            run(replace(bundle, merkle_proof=replace(proof, expected_root=mutated)),
                oracle_with(root=mutated))

    assert total >= 10_000, f"only {total} verified mutations"
    assert accepts == 0, f"{accepts} false accept(s) out of {total}"
    assert not step_mismatches, f"step report wrong in {len(step_mismatches)} case(s): " \
                                f"{step_mismatches[:5]}"
    _pass(2, f"{total} single-byte tampers verified (+{skipped} unparseable): "
             f"0 false accepts, 0 false rejects, all steps correctly named")


# ===========================================================================
# 3. Temporal attack surface
# ===========================================================================

def test_criterion_3_temporal_attack_surface():
    scenarios = 200
    day = date(2023, 11, 16)
    day_start = 1_700_092_800  # 2023-11-16T00:00:00Z
    bed = Workbench.create(bits=DEFAULT_BITS, start=day_start - DAY)

    def batch_of_roots(count, seed):
        rng = random.Random(seed)
        ops, docs = [], []
        for i in range(count):
            key = SigningKey.from_seed(rng.randbytes(32))
            doc = candidate_document({"key-0": key})
            op = DidOperation(kind="create", document=doc,
                              update_commitment=make_commitment(rng.randbytes(32)),
                              recovery_commitment=make_commitment(rng.randbytes(32)))
            ops.append(op)
            docs.append(doc)
        return ops, docs

    fakes_before, _ = batch_of_roots(scenarios, seed=1)
    honest_ops, honest_docs = batch_of_roots(scenarios, seed=2)
    fakes_same, same_docs = batch_of_roots(scenarios, seed=3)
    fakes_after, _ = batch_of_roots(scenarios, seed=4)

    anchor_batch(bed.chain, bed.store, fakes_before, timestamp=day_start - 3600)
    anchor_batch(bed.chain, bed.store, honest_ops, timestamp=day_start + 7200)
    anchor_batch(bed.chain, bed.store, fakes_same, timestamp=day_start + 10_800)
    anchor_batch(bed.chain, bed.store, fakes_after, timestamp=day_start + DAY + 3600)

    state = bed.state
    headers = bed.headers

    def did_of(op):
        return derive_did(op.document, op.update_commitment, op.recovery_commitment)

    failures = 0
    for i in range(scenarios):
        params = RootParameters(day, confirmation_code(honest_docs[i], 6))
        honest_verdict = verify_root(did_of(honest_ops[i]), params, state,
                                     bed.store, headers)
        if not honest_verdict.valid:
            failures += 1
        for fake_op in (fakes_before[i], fakes_after[i]):
            verdict = verify_root(did_of(fake_op), params, state, bed.store, headers)
            if verdict.valid:
                failures += 1
            if verdict.reason != "publication-date":
                failures += 1
        same_day = verify_root(did_of(fakes_same[i]), params, state, bed.store, headers)
        if same_day.valid or same_day.reason != "confirmation-code":
            failures += 1
    assert failures == 0

    # Monte Carlo: 3-character code collision frequency ~ 32^-3.
    target = confirmation_code(honest_docs[0], 3)
    template = __import__("trustchain.canonical", fromlist=["canonical_bytes"]) \
        .canonical_bytes(candidate_document({"key-0": SigningKey.generate()}).body_dict())
    placeholder = json.loads(template)["verificationMethod"][0]["publicKeyHex"]
    prefix, suffix = template.decode().split(placeholder)
    alphabet = "0123456789abcdefghjkmnpqrstvwxyz"
    rng = random.Random(1234)
    trials = 1_000_000
    hits = 0
    for _ in range(trials):
        body = (prefix + rng.randbytes(32).hex() + suffix).encode()
        digest = hashlib.sha256(body).digest()
        acc = int.from_bytes(digest[:3], "big") >> 9  # first 15 bits = 3 chars
        code = alphabet[acc >> 10] + alphabet[(acc >> 5) & 31] + alphabet[acc & 31]
        hits += code == target
    p = 32 ** -3
    mean = trials * p
    sigma = math.sqrt(trials * p * (1 - p))
    assert abs(hits - mean) <= 3 * sigma, f"{hits} hits vs {mean:.1f} ± {3*sigma:.1f}"
    _pass(3, f"{scenarios} scenarios: only honest roots accepted; same-day fakes "
             f"code-rejected; Monte Carlo {hits} hits vs {mean:.1f}±{3*sigma:.1f} (3σ)")


# ===========================================================================
# 4. Chain verification across depths; corruption/deactivation enumeration
# ===========================================================================

def test_criterion_4_chain_depths_and_enumeration():
    # depth 1..10 all verify
    deep = Workbench.create(bits=DEFAULT_BITS)
    deep.publish_root("root")
    upstream = "root"
    for i in range(10):
        deep.issue(upstream, f"d{i}")
        upstream = f"d{i}"
    state = deep.state
    for i in range(10):
        chain = build_chain(deep.actors[f"d{i}"].did, state)
        assert len(chain.elements) == i + 2
        verdict = verify_chain(chain, deep.params, state=state, store=deep.store,
                               headers=deep.headers)
        assert verdict.valid, f"depth {i + 1} failed: {verdict.failure_reason}"

    # depth-4 branching-2 tree: 31 nodes, 31 chains
    bed = Workbench.create(bits=DEFAULT_BITS)
    bed.publish_root("n")
    names = ["n"]
    for depth in range(1, 5):
        for name in [n for n in names if len(n) == depth]:
            for child in ("0", "1"):
                bed.issue(name, name + child)
                names.append(name + child)
    assert len(names) == 31
    state = bed.state
    headers = bed.headers
    name_to_did = {name: bed.actors[name].did for name in names}
    chains = {name: build_chain(name_to_did[name], state) for name in names}

    for name in names:
        verdict = verify_chain(chains[name], bed.params, state=state,
                               store=bed.store, headers=headers)
        assert verdict.valid

    def descendants(name: str) -> set[str]:
        return {other for other in names if other.startswith(name)}

    def check_case(tampered_name: str, mutate) -> None:
        affected = descendants(tampered_name)
        for name in names:
            chain = chains[name]
            if tampered_name in (e_name for e_name in _path_names(name)):
                elements = tuple(
                    mutate(element) if element.did == name_to_did[tampered_name] else element
                    for element in chain.elements)
                chain = replace(chain, elements=elements)
            verdict = verify_chain(chain, bed.params, state=state,
                                   store=bed.store, headers=headers)
            expected_invalid = name in affected
            assert verdict.valid != expected_invalid, (
                f"tamper {tampered_name}: chain {name} expected "
                f"{'invalid' if expected_invalid else 'valid'}")

    def _path_names(name: str):
        return [name[:i] for i in range(1, len(name) + 1)]

    # corrupt each node's attestation signature (root has none)
    def corrupt_signature(element: ChainElement) -> ChainElement:
        proof = element.metadata.attestations[0]
        bad = bytearray(proof.signature)
        bad[0] ^= 0x01
        return replace(element, metadata=replace(
            element.metadata, attestations=(replace(proof, signature=bytes(bad)),)))

    for name in names:
        if name == "n":
            continue
        check_case(name, corrupt_signature)

    # deactivate each node (root included)
    def deactivate(element: ChainElement) -> ChainElement:
        return replace(element, status="deactivated")

    for name in names:
        check_case(name, deactivate)

    _pass(4, "depths 1-10 verify; 30 signature corruptions and 31 deactivations "
             "on the 31-chain tree each flip exactly the downstream set")


# ===========================================================================
# 5. Revocation completeness against a brute-force replay oracle
# ===========================================================================

def test_criterion_5_revocation_completeness():
    bed = Workbench.create(bits=DEFAULT_BITS)
    root = bed.publish_root("root")
    state = bed.state

    rng = random.Random(77)
    scenarios = 100
    # Per scenario: a parent dDID, then a random interleaving of
    # issue/revoke operations on children, assembled round by round into
    # shared batches (one block per round).
    anchored_log: list[tuple[dict, int]] = []  # (op dict, block timestamp)

    class Scenario:
        def __init__(self, idx):
            self.idx = idx
            self.children: list[dict] = []   # {did, update_secret, active}
            self.plan = [rng.choice(["issue", "revoke"]) for _ in range(rng.randrange(2, 7))]

    plans = [Scenario(i) for i in range(scenarios)]

    # round 0: create every scenario parent under the root
    parents = {}
    ops_round = []
    for scenario in plans:
        keys = make_keys(1)
        candidate = candidate_document(keys)
        us, rs = random_secret(), random_secret()
        op = prepare_attested_create(root, candidate, update_secret=us,
                                     recovery_secret=rs)
        did = derive_did(op.document, op.update_commitment, op.recovery_commitment)
        parents[scenario.idx] = {"did": did, "keys": keys, "update_secret": us}
        ops_round.append(op)
    ts = bed.tick()
    anchor_batch(bed.chain, bed.store, ops_round, ts)
    anchored_log.extend((op.to_dict(), ts) for op in ops_round)

    max_rounds = max(len(s.plan) for s in plans)
    for round_no in range(max_rounds):
        ops_round = []
        for scenario in plans:
            if round_no >= len(scenario.plan):
                continue
            action = scenario.plan[round_no]
            parent = parents[scenario.idx]
            parent_identity = Identity(did=parent["did"], keys=parent["keys"],
                                       key_id="key-0")
            active = [c for c in scenario.children if c["active"]]
            if action == "revoke" and active:
                child = rng.choice(active)
                op = DidOperation(kind="deactivate", did=child["did"],
                                  reveal=child["update_secret"])
                child["active"] = False
            else:
                keys = make_keys(1)
                us, rs = random_secret(), random_secret()
                op = prepare_attested_create(
                    parent_identity, candidate_document(keys),
                    update_secret=us, recovery_secret=rs)
                did = derive_did(op.document, op.update_commitment,
                                 op.recovery_commitment)
                scenario.children.append(
                    {"did": did, "update_secret": us, "active": True})
            ops_round.append(op)
        if not ops_round:
            continue
        ts = bed.tick()
        anchor_batch(bed.chain, bed.store, ops_round, ts)
        anchored_log.extend((op.to_dict(), ts) for op in ops_round)

    state = bed.state

    # Independent brute-force replay: minimal fold over the anchored log,
    # written directly against hashlib.
    oracle: dict[str, dict] = {}
    for op_dict, ts in anchored_log:
        kind = op_dict["kind"]
        if kind == "create":
            body = json.dumps(op_dict["document"], sort_keys=True,
                              separators=(",", ":"), ensure_ascii=False).encode()
            material = body + bytes.fromhex(op_dict["updateCommitment"]) \
                + bytes.fromhex(op_dict["recoveryCommitment"])
            digest = hashlib.sha256(material).digest()
            alphabet = "0123456789abcdefghjkmnpqrstvwxyz"
            bits_str = "".join(f"{b:08b}" for b in digest)
            bits_str += "0" * ((5 - len(bits_str) % 5) % 5)
            did = "did:tc:" + "".join(alphabet[int(bits_str[i:i + 5], 2)]
                                      for i in range(0, len(bits_str), 5))
            if did not in oracle:
                oracle[did] = {"status": "active",
                               "uc": op_dict["updateCommitment"], "ts": ts}
        elif kind == "deactivate":
            entry = oracle.get(op_dict["did"])
            if entry and entry["status"] == "active" and \
                    hashlib.sha256(bytes.fromhex(op_dict["reveal"])).hexdigest() == entry["uc"]:
                entry["status"] = "deactivated"
                entry["ts"] = ts

    mismatches = 0
    for did, expected in oracle.items():
        entry = state.get_entry(did)
        if entry is None or entry.record.status != expected["status"] \
                or entry.record.metadata.timestamp != expected["ts"]:
            mismatches += 1
    assert mismatches == 0
    assert len(oracle) == len(state.entries) - 1  # oracle skips the root's own entry? no:
    # (the root create is not in anchored_log; every logged op is present)
    assert state.scanned_tip_timestamp == bed.chain.tip.header.timestamp
    total_children = sum(len(s.children) for s in plans)
    _pass(5, f"{scenarios} interleavings ({scenarios} parents, {total_children} children): "
             f"scan matches the brute-force oracle exactly; tip timestamp reported")


# ===========================================================================
# 6. STV parity, light-client storage, Merkle branch growth
# ===========================================================================

class _MutatingProxy(BaseHTTPRequestHandler):
    upstream = ""
    state: dict = {}

    def log_message(self, *args):
        pass

    def do_GET(self):
        with urllib.request.urlopen(self.upstream + self.path) as resp:
            body = resp.read()
            content_type = resp.headers.get("Content-Type", "application/json")
        case = self.state.get("case")
        if case is not None and self.path.startswith("/chain/"):
            payload = json.loads(body)
            did, component, offset, xor = case
            if did in payload.get("elements", {}):
                element = payload["elements"][did]
                raw = bytearray(bytes.fromhex(element["bundle"][component]))
                raw[offset % len(raw)] ^= xor
                element["bundle"][component] = bytes(raw).hex()
                body = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def test_criterion_6_stv_parity_and_storage(tmp_path):
    node = FullNode(NodeConfig(data_dir=tmp_path / "node", bits=DEFAULT_BITS),
                    create=True)
    keys = make_keys()
    published = publish_root(node.chain, node.store, candidate_document(keys),
                             1_700_000_000, update_secret=random_secret(),
                             recovery_secret=random_secret())
    root = Identity(published.did, keys, "key-0",
                    update_secrets={published.did: published.update_secret})
    from trustchain.attestation import issue_challenge, issue_ddid, respond_challenge
    dids = [published.did]
    clock = 1_700_000_000
    for i in range(4):
        clock += 600
        subject_keys = make_keys()
        candidate = candidate_document(subject_keys)
        challenge = issue_challenge(candidate, now=clock)
        response = respond_challenge(challenge, subject_keys)
        issued = issue_ddid(root, candidate, challenge, response,
                            state=node.state, chain=node.chain, store=node.store,
                            timestamp=clock, now=clock)
        dids.append(issued.did)
    node._persist_new_blocks()

    server, _ = start_server(node, "127.0.0.1:0")
    honest = ServerHandle(f"http://127.0.0.1:{server.server_address[1]}")
    proxy_state: dict = {"case": None}
    handler = type("H", (_MutatingProxy,), {"upstream": honest.endpoint,
                                            "state": proxy_state})
    proxy_server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    threading.Thread(target=proxy_server.serve_forever, daemon=True).start()
    proxy = ServerHandle(f"http://127.0.0.1:{proxy_server.server_address[1]}")

    headers = sync_headers(honest)
    state = node.state

    agreement = 0
    # 50 honest cases
    honest_cases = [(dids[i % len(dids)], None) for i in range(50)]
    # 50 tampered cases across components
    rng = random.Random(3141)
    components = ["chunk", "provisional", "core", "transaction", "header"]
    tampered_cases = [
        (dids[rng.randrange(len(dids))], (components[rng.randrange(len(components))],
                                          rng.randrange(512), 1 << rng.randrange(8)))
        for _ in range(50)]

    for did, tamper in honest_cases + tampered_cases:
        entry = state.get_entry(did)
        bundle = verification_data(did, state, node.store)
        claimed = entry.latest.timestamp
        if tamper is None:
            proxy_state["case"] = None
            full = verify_timestamp(bundle, claimed, node.chain.headers()).valid
        else:
            component, offset, xor = tamper
            raw = {"chunk": bundle.chunk, "provisional": bundle.provisional,
                   "core": bundle.core, "transaction": bundle.transaction,
                   "header": bundle.header.serialize()}[component]
            mutated = bytearray(raw)
            mutated[offset % len(raw)] ^= xor
            mutated = bytes(mutated)
            kwargs = {component if component != "header" else "header":
                      mutated if component != "header"
                      else __import__("trustchain.registry", fromlist=["BlockHeader"])
                      .BlockHeader.parse(mutated)}
            full = verify_timestamp(replace(bundle, **kwargs), claimed,
                                    node.chain.headers()).valid
            proxy_state["case"] = (did, component, offset % len(raw), xor)
        light = stv_verify(did, proxy, headers, published.params).valid
        agreement += light == full
    proxy_server.shutdown()
    server.shutdown()
    assert agreement == 100, f"{agreement}/100 verdicts agree"

    # light-client storage for a 1000-block chain (block count is the point;
    # difficulty configured down so the suite stays fast)
    chain1000 = FullNode(NodeConfig(data_dir=tmp_path / "chain1000", bits=6),
                         create=True)
    for i in range(1000):
        chain1000.chain.mine_block([Transaction.create(b"XX" + i.to_bytes(4, "big"))],
                                   1_700_000_000 + i)
    server1000, _ = start_server(chain1000, "127.0.0.1:0")
    handle = ServerHandle(f"http://127.0.0.1:{server1000.server_address[1]}")
    synced = sync_headers(handle)
    server1000.shutdown()
    path = tmp_path / "headers.dat"
    synced.save(path)
    size = path.stat().st_size
    assert synced.tip_height == 1000
    assert size <= 80 * 1000 + 4096, f"{size} bytes"

    # Merkle branch growth
    rng = random.Random(6)
    for n in list(range(1, 65)) + [1000, 4096]:
        txids = [rng.randbytes(32) for _ in range(n)]
        branch = merkle_prove(txids, rng.randrange(n)).branch
        assert len(branch) == (0 if n == 1 else math.ceil(math.log2(n)))

    _pass(6, f"100/100 light/full verdict agreement; 1001 headers stored in "
             f"{size} bytes ≤ 84096; branch length = ceil(log2 n) for n ≤ 4096")


# ===========================================================================
# 7. Rebasing and interoperability across two trees
# ===========================================================================

def test_criterion_7_rebase_and_interop():
    bed_a = Workbench.create(chain_id="tree-a", bits=DEFAULT_BITS)
    bed_b = Workbench.create(chain_id="tree-b", bits=DEFAULT_BITS,
                             start=1_700_000_030)
    root_a = bed_a.publish_root("root")
    root_b = bed_b.publish_root("root")
    params_a = bed_a.params

    bed_b.issue("root", "issuer")
    issuer = bed_b.actors["issuer"]
    credential = issue_credential(issuer, {"degree": "BSc"}, bed_b.tick(), bed_b.state)

    merged_state = StateView([bed_a.state, bed_b.state])
    merged_store = StoreView([bed_a.store, bed_b.store])

    # before any linkage, A's verifier rejects the tree-B credential
    before = verify_credential(credential, merged_state, params_a, merged_store,
                               bed_a.headers)
    assert not before.valid

    # single rebase of B's root onto tree A; no re-issuance of anything
    rebase(root_a, root_b.did, bed_b.state,
           state_a=bed_a.state, chain_a=bed_a.chain, store_a=bed_a.store,
           timestamp=max(bed_a.tick(), bed_b.clock + 600))
    merged_state = StateView([bed_a.state, bed_b.state])
    after = verify_credential(credential, merged_state, params_a, merged_store,
                              bed_a.headers)
    assert after.valid, after
    verdict, chain = verify_did(issuer.did, params_a, state=merged_state,
                                store=merged_store, headers=bed_a.headers)
    assert verdict.valid and chain.root.did == root_a.did

    # interoperability: fresh pair of trees, joint dDID, tree-B credential
    # verified with only tree A's root parameters
    bed_c = Workbench.create(chain_id="tree-c", bits=DEFAULT_BITS)
    bed_d = Workbench.create(chain_id="tree-d", bits=DEFAULT_BITS,
                             start=1_700_000_030)
    provider_c = bed_c.publish_root("root")
    provider_d = bed_d.publish_root("root")
    params_c = bed_c.params
    credential_d = issue_credential(provider_d, {"licence": "banking"},
                                    bed_d.tick(), bed_d.state)

    doc_c = resolve(provider_c.did, bed_c.state).document
    doc_d = resolve(provider_d.did, bed_d.state).document
    combined = DidDocument(verification_methods=tuple(
        [replace(vm, id=f"c-{vm.id}") for vm in doc_c.verification_methods]
        + [replace(vm, id=f"d-{vm.id}") for vm in doc_d.verification_methods]))
    interop = issue_interop_ddid(
        provider_c, provider_d, combined,
        state_a=bed_c.state, state_b=bed_d.state,
        targets=[(bed_c.chain, bed_c.store), (bed_d.chain, bed_d.store)],
        timestamp=max(bed_c.clock, bed_d.clock) + 600)

    verdict = verify_credential(credential_d, bed_c.state, params_c, bed_c.store,
                                bed_c.headers, via=interop.did)
    assert verdict.valid, verdict
    _pass(7, "tree-B credentials verify under tree A after one rebase dDID; "
             "interop dDID verifies a foreign credential with only local root params")


# ===========================================================================
# 8. Four-step credential verification: dedicated negative per step
# ===========================================================================

def test_criterion_8_four_step_negatives():
    bed = Workbench.create(bits=DEFAULT_BITS)
    bed.publish_root("root")
    bed.issue("root", "mid")
    bed.issue("mid", "issuer")
    issuer = bed.actors["issuer"]
    credential = issue_credential(issuer, {"role": "auditor"}, bed.tick(), bed.state)

    honest = verify_credential(credential, bed.state, bed.params, bed.store, bed.headers)
    assert honest.valid

    # step i: unresolvable issuer
    step_i = verify_credential(replace(credential, issuer="did:tc:ghost"),
                               bed.state, bed.params, bed.store, bed.headers)
    assert (step_i.valid, step_i.failed_step) == (False, "i")

    # step ii: mid-chain attestor revoked (issuer itself still resolvable)
    bed_ii = Workbench.create(bits=DEFAULT_BITS)
    bed_ii.publish_root("root")
    bed_ii.issue("root", "mid")
    bed_ii.issue("mid", "issuer")
    cred_ii = issue_credential(bed_ii.actors["issuer"], {"x": 1}, bed_ii.tick(),
                               bed_ii.state)
    bed_ii.revoke("root", "mid")
    step_ii = verify_credential(cred_ii, bed_ii.state, bed_ii.params, bed_ii.store,
                                bed_ii.headers)
    assert (step_ii.valid, step_ii.failed_step) == (False, "ii")

    # step iii: chain intact, root parameters point at the wrong day
    wrong_day = replace(bed.params,
                        publication_date=bed.params.publication_date.replace(day=15))
    step_iii = verify_credential(credential, bed.state, wrong_day, bed.store,
                                 bed.headers)
    assert (step_iii.valid, step_iii.failed_step) == (False, "iii")

    # step iv: masquerade — valid-looking signature by a key outside the document
    masquerader = SigningKey.generate()
    unsigned = Credential(issuer.did, {"role": "auditor"}, credential.issued_at,
                          "key-0", b"")
    from trustchain.credential import CREDENTIAL_DOMAIN
    forged = replace(unsigned, signature=masquerader.sign(
        CREDENTIAL_DOMAIN + unsigned.body()))
    step_iv = verify_credential(forged, bed.state, bed.params, bed.store, bed.headers)
    assert (step_iv.valid, step_iv.failed_step) == (False, "iv")

    _pass(8, "each of steps i-iv has a dedicated fixture failing exactly there")


# ===========================================================================
# 9. Golden-file stability
# ===========================================================================

GOLDEN_DOC = DidDocument.from_dict({
    "verificationMethod": [
        {"id": "key-0", "publicKeyHex": "aa" * 32, "type": "Ed25519"},
        {"id": "key-1", "publicKeyHex": "bb" * 32, "type": "Ed25519"},
    ],
    "service": [{"id": "hub", "type": "hub",
                 "serviceEndpoint": "https://node.example/api"}],
})

GOLDEN = {
    "canonical_sha256": "dab1043630a69921cfe1f609891a22c46bc2498fd22d5b23bad6e139e6a3b7ec",
    "did": "did:tc:p8hqykygfx2dgswpzssdy93jeqb2ed1td62xszyqfjnncwtq1fg0",
    "header_hex": "01000000" + "00" * 32 + "11" * 32 + "00f15365" + "10000000" + "2a000000",
    "code6": "varg8d",
}


def test_criterion_9_golden_stability():
    from trustchain.canonical import canonical_bytes
    from trustchain.registry import BlockHeader

    for _ in range(2):  # two independent derivations must agree byte-for-byte
        doc = DidDocument.from_dict(json.loads(json.dumps(GOLDEN_DOC.to_dict())))
        canon = canonical_bytes(doc.body_dict())
        assert hashlib.sha256(canon).hexdigest() == GOLDEN["canonical_sha256"]
        did = derive_did(doc, bytes.fromhex("11" * 32), bytes.fromhex("22" * 32))
        assert did == GOLDEN["did"]
        header = BlockHeader(version=1, prev_hash=b"\x00" * 32,
                             merkle_root=b"\x11" * 32, timestamp=1_700_000_000,
                             bits=16, pow_nonce=42)
        assert header.serialize().hex() == GOLDEN["header_hex"]
        assert BlockHeader.parse(header.serialize()) == header
        assert confirmation_code(doc, 6) == GOLDEN["code6"]
    _pass(9, "canonical bytes, DID derivation, header layout and confirmation "
             "codes match committed fixtures byte-for-byte")
