"""Operator CLI. One subcommand per lifecycle action; every verdict comes
from the same library calls the server and tests use.

Exit codes: 0 success, 1 domain failure (machine-readable JSON on stderr),
2 usage error.
"""
from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import replace
from pathlib import Path

from ..anchor import anchor_batch, resolve, verification_data
from ..attestation import (
    Identity,
    build_chains,
    candidate_document,
    issue_challenge,
    issue_ddid,
    issue_interop_ddid,
    rebase,
    renew_ddid,
    respond_challenge,
    revoke_ddid,
    verify_did,
)
from ..canonical import canonical_str
from ..credential import Credential, issue_credential, verify_credential
from ..didcore import DidDocument, DidOperation, make_commitment
from ..errors import TrustchainError
from ..keys import SigningKey, random_secret
from ..lightclient import HeaderChain, ServerHandle, stv_verify, sync_headers
from ..roottrust import (
    AttackCostModel,
    RootParameters,
    attack_cost,
    confirmation_code,
    publish_root,
    scan_date_window,
    verify_root,
)
from .config import ENV_DATA_DIR, NodeConfig
from .node import FullNode
from .scenario import run_scenario
from .server import serve

_DURATION_RE = re.compile(r"^(\d+)([smhdw]?)$")
_DURATION_UNITS = {"": 1, "s": 1, "m": 60, "h": 3600, "d": 86400, "w": 604800}


class UsageError(TrustchainError):
    """Bad command usage detected after argument parsing."""


def parse_duration(text: str) -> int:
    m = _DURATION_RE.match(text.strip())
    if not m:
        raise UsageError(f"cannot parse duration {text!r} (use e.g. 90s, 30m, 1h, 7d)")
    return int(m.group(1)) * _DURATION_UNITS[m.group(2)]


def _load_config(args) -> NodeConfig:
    if args.config:
        config = NodeConfig.load(args.config)
    else:
        import os
        data_dir = args.data_dir or os.environ.get(ENV_DATA_DIR) or "./trustchain-data"
        config = NodeConfig(data_dir=Path(data_dir))
    if args.data_dir:
        config.data_dir = Path(args.data_dir)
        config.keystore = config.data_dir / "keystore.json"
    if args.chain_id:
        config.chain_id = args.chain_id
    if args.bits:
        config.bits = args.bits
    return config


def _root_params(args, config: NodeConfig) -> RootParameters:
    if getattr(args, "params", None):
        return RootParameters.parse_line(args.params)
    if getattr(args, "date", None):
        params = RootParameters.parse_line(args.date)
        if getattr(args, "code", None):
            params = replace(params, confirmation_code=args.code)
        return params
    saved = Path(config.data_dir) / "root.params"
    if saved.exists():
        return RootParameters.parse_line(saved.read_text().strip())
    if config.root_params is not None:
        return config.root_params
    raise UsageError("no root parameters: pass --date/--code, --params, or publish a root")


def _new_identity(node: FullNode, alias: str, n_keys: int) -> Identity:
    identity = Identity(
        did="", keys={f"key-{i}": SigningKey.generate() for i in range(n_keys)},
        key_id="key-0")
    node.keystore.add(alias, identity)
    return identity


def _actor_or_new(node: FullNode, alias: str, n_keys: int = 1) -> Identity:
    try:
        return node.keystore.resolve(alias)
    except TrustchainError:
        return _new_identity(node, alias, n_keys)


def _print_json(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# command handlers
# ---------------------------------------------------------------------------

def cmd_init(args) -> int:
    config = _load_config(args)
    node = FullNode(config, create=True)
    config.save(Path(config.data_dir) / "node.conf")
    print(f"initialized chain {config.chain_id!r} (bits={config.bits}) "
          f"at {config.data_dir}, genesis {node.chain.tip.header.hash.hex()[:16]}")
    return 0


def cmd_mine(args) -> int:
    node = FullNode(_load_config(args))
    for _ in range(args.count):
        block = node.mine(args.timestamp)
        print(f"mined block {block.height} at {block.header.timestamp} "
              f"({block.header.hash.hex()[:16]})")
    return 0


def cmd_keygen(args) -> int:
    node = FullNode(_load_config(args))
    identity = _new_identity(node, args.alias, args.keys)
    node.save_keystore()
    print(f"generated {args.keys} key(s) for {args.alias}: "
          + ", ".join(f"{kid}={key.public_hex()[:16]}…"
                      for kid, key in identity.keys.items()))
    return 0


def cmd_root_publish(args) -> int:
    config = _load_config(args)
    node = FullNode(config)
    identity = _actor_or_new(node, args.alias, args.keys)
    document = candidate_document(identity.keys)
    published = publish_root(
        node.chain, node.store, document, node.next_timestamp(args.timestamp),
        update_secret=random_secret(), recovery_secret=random_secret(),
        max_chain_length=args.max_chain_length, code_length=args.code_length)
    node._persist_new_blocks()
    identity.did = published.did
    identity.recovery_secret = published.recovery_secret
    identity.update_secrets[published.did] = published.update_secret
    node.save_keystore()
    (Path(config.data_dir) / "root.params").write_text(published.params.line() + "\n")
    print(f"root {published.did}")
    print(f"params {published.params.line()}")
    return 0


def cmd_root_verify(args) -> int:
    config = _load_config(args)
    node = FullNode(config)
    params = _root_params(args, config)
    did = args.did or (node.keystore.resolve(args.alias).did if args.alias else None)
    if not did:
        raise UsageError("pass --did or --alias")
    verdict = verify_root(did, params, node.state, node.store, node.chain.headers())
    if verdict.valid:
        print(f"root {did} VALID on {params.line()}")
        return 0
    print(f"root {did} INVALID: {verdict.reason}")
    return 1


def cmd_root_scan_date(args) -> int:
    node = FullNode(_load_config(args))
    params = RootParameters.parse_line(args.date)
    candidates = scan_date_window(params.publication_date, node.state)
    for entry in candidates:
        code = confirmation_code(entry.genesis.operation.document)
        print(f"{entry.record.did}  code={code}  anchored={entry.genesis.timestamp}")
    print(f"{len(candidates)} candidate(s) on {params.publication_date.isoformat()}")
    return 0


def cmd_did_create(args) -> int:
    node = FullNode(_load_config(args))
    identity = _actor_or_new(node, args.alias, args.keys)
    document = candidate_document(identity.keys)
    update_secret, recovery_secret = random_secret(), random_secret()
    op = DidOperation(
        kind="create", document=document,
        update_commitment=make_commitment(update_secret),
        recovery_commitment=make_commitment(recovery_secret))
    node.anchor([op], args.timestamp)
    from ..didcore import derive_did
    did = derive_did(document, op.update_commitment, op.recovery_commitment)
    identity.did = did
    identity.recovery_secret = recovery_secret
    identity.update_secrets[did] = update_secret
    node.save_keystore()
    print(did)
    return 0


def cmd_did_resolve(args) -> int:
    node = FullNode(_load_config(args))
    record = resolve(args.did, node.state)
    _print_json({
        "did": record.did,
        "status": record.status,
        "document": record.document.to_dict() if record.document else None,
        "metadata": record.metadata.to_dict(),
    })
    return 0


def cmd_did_update(args) -> int:
    node = FullNode(_load_config(args))
    identity = node.keystore.resolve(args.as_alias)
    did = args.did or identity.did
    entry = node.state.get_entry(did)
    if entry is None:
        raise UsageError(f"unknown DID {did}")
    secret = identity.update_secrets.get(did)
    if secret is None:
        raise UsageError(f"{args.as_alias} holds no update secret for {did}")
    document = (_read_document(args.document) if args.document
                else replace(entry.record.document, id=""))
    next_secret = random_secret()
    op = DidOperation(kind="update", did=did, document=document, reveal=secret,
                      update_commitment=make_commitment(next_secret))
    node.anchor([op], args.timestamp)
    identity.update_secrets[did] = next_secret
    node.save_keystore()
    print(f"updated {did}")
    return 0


def cmd_did_recover(args) -> int:
    node = FullNode(_load_config(args))
    identity = node.keystore.resolve(args.as_alias)
    did = args.did or identity.did
    if identity.recovery_secret is None:
        raise UsageError(f"{args.as_alias} holds no recovery secret")
    document = (_read_document(args.document) if args.document
                else candidate_document(identity.keys))
    update_secret, recovery_secret = random_secret(), random_secret()
    op = DidOperation(kind="recover", did=did, document=document,
                      reveal=identity.recovery_secret,
                      update_commitment=make_commitment(update_secret),
                      recovery_commitment=make_commitment(recovery_secret))
    node.anchor([op], args.timestamp)
    identity.recovery_secret = recovery_secret
    identity.update_secrets[did] = update_secret
    node.save_keystore()
    print(f"recovered {did}; attestation stripped")
    return 0


def cmd_did_deactivate(args) -> int:
    node = FullNode(_load_config(args))
    identity = node.keystore.resolve(args.as_alias)
    did = args.did or identity.did
    revoke_ddid(identity, did, state=node.state, chain=node.chain,
                store=node.store, timestamp=node.next_timestamp(args.timestamp))
    node._persist_new_blocks()
    node.save_keystore()
    print(f"deactivated {did}")
    return 0


def cmd_ddid_challenge(args) -> int:
    candidate = _read_document(args.candidate)
    challenge = issue_challenge(candidate, now=args.now)
    text = canonical_str(challenge.to_dict())
    _write_or_print(args.out, text)
    return 0


def cmd_ddid_respond(args) -> int:
    node = FullNode(_load_config(args))
    identity = node.keystore.resolve(args.as_alias)
    from ..attestation import Challenge
    challenge = Challenge.from_dict(json.loads(Path(args.challenge).read_text()))
    response = respond_challenge(challenge, identity.keys)
    _write_or_print(args.out, canonical_str(response.to_dict()))
    return 0


def cmd_ddid_issue(args) -> int:
    node = FullNode(_load_config(args))
    upstream = node.keystore.resolve(args.upstream)
    now = args.now or node.next_timestamp(args.timestamp)
    if args.candidate and args.challenge and args.response:
        from ..attestation import Challenge, ChallengeResponse
        candidate = _read_document(args.candidate)
        challenge = Challenge.from_dict(json.loads(Path(args.challenge).read_text()))
        response = ChallengeResponse.from_dict(json.loads(Path(args.response).read_text()))
        subject = None
    else:
        subject = _actor_or_new(node, args.subject, args.keys)
        candidate = candidate_document(subject.keys)
        challenge = issue_challenge(candidate, now=now)
        response = respond_challenge(challenge, subject.keys)
    issued = issue_ddid(
        upstream, candidate, challenge, response,
        state=node.state, chain=node.chain, store=node.store,
        timestamp=node.next_timestamp(args.timestamp), now=now,
        max_chain_length=args.max_chain_length)
    node._persist_new_blocks()
    if subject is not None:
        subject.did = issued.did
        subject.recovery_secret = issued.recovery_secret
    node.save_keystore()
    print(issued.did)
    return 0


def cmd_ddid_renew(args) -> int:
    node = FullNode(_load_config(args))
    upstream = node.keystore.resolve(args.upstream)
    target = node.keystore.resolve(args.of)
    now = args.now or node.next_timestamp(args.timestamp)
    document = (_read_document(args.document) if args.document
                else candidate_document(target.keys))
    challenge = issue_challenge(document, now=now)
    response = respond_challenge(challenge, target.keys)
    renew_ddid(upstream, target.did, document,
               state=node.state, chain=node.chain, store=node.store,
               timestamp=node.next_timestamp(args.timestamp), now=now,
               challenge=challenge, response=response)
    node._persist_new_blocks()
    node.save_keystore()
    print(f"renewed {target.did}")
    return 0


def cmd_ddid_revoke(args) -> int:
    node = FullNode(_load_config(args))
    upstream = node.keystore.resolve(args.upstream)
    target = node.keystore.resolve(args.of)
    revoke_ddid(upstream, target.did, state=node.state, chain=node.chain,
                store=node.store, timestamp=node.next_timestamp(args.timestamp))
    node._persist_new_blocks()
    node.save_keystore()
    print(f"revoked {target.did}")
    return 0


def cmd_chain_build(args) -> int:
    node = FullNode(_load_config(args))
    chains = build_chains(args.did, node.state)
    for n, chain in enumerate(chains):
        print(f"chain {n}:")
        for i, element in enumerate(chain.elements):
            print(f"  [{i}] {element.did} ({element.status})")
    return 0


def cmd_chain_verify(args) -> int:
    config = _load_config(args)
    node = FullNode(config)
    params = _root_params(args, config)
    verdict, chain = verify_did(args.did, params, state=node.state,
                                store=node.store, headers=node.chain.headers())
    if verdict.valid:
        print(f"chain of {args.did} VALID ({len(chain.elements)} element(s))")
        return 0
    where = (f"link {verdict.failure_index}" if verdict.failure_kind == "link"
             else "root verification")
    print(f"chain of {args.did} INVALID at {where}: {verdict.failure_reason}")
    return 1


def cmd_rebase(args) -> int:
    config = _load_config(args)
    node = FullNode(config)
    source = FullNode(NodeConfig(data_dir=Path(args.source_data_dir)))
    upstream = node.keystore.resolve(args.upstream)
    issued = rebase(upstream, args.did, source.state,
                    state_a=node.state, chain_a=node.chain, store_a=node.store,
                    timestamp=node.next_timestamp(args.timestamp))
    node._persist_new_blocks()
    node.save_keystore()
    print(f"rebased {issued.did} onto {config.chain_id}")
    return 0


def cmd_interop_issue(args) -> int:
    config = _load_config(args)
    node = FullNode(config)
    source = FullNode(NodeConfig(data_dir=Path(args.source_data_dir)))
    provider_a = node.keystore.resolve(args.provider_a)
    provider_b = (source.keystore.resolve(args.provider_b)
                  if args.provider_b_in_source else node.keystore.resolve(args.provider_b))
    doc_a = resolve(provider_a.did, node.state).document
    doc_b = resolve(provider_b.did, source.state).document
    combined = DidDocument(verification_methods=tuple(
        [replace(vm, id=f"a-{vm.id}") for vm in doc_a.verification_methods]
        + [replace(vm, id=f"b-{vm.id}") for vm in doc_b.verification_methods]))
    issued = issue_interop_ddid(
        provider_a, provider_b, combined,
        state_a=node.state, state_b=source.state,
        targets=[(node.chain, node.store), (source.chain, source.store)],
        timestamp=max(node.next_timestamp(args.timestamp),
                      source.next_timestamp(None)))
    node._persist_new_blocks()
    source._persist_new_blocks()
    node.save_keystore()
    print(issued.did)
    return 0


def cmd_vc_issue(args) -> int:
    node = FullNode(_load_config(args))
    issuer = node.keystore.resolve(args.issuer)
    claims = json.loads(Path(args.claims_file).read_text()) if args.claims_file \
        else json.loads(args.claims)
    credential = issue_credential(issuer, claims,
                                  args.time or node.next_timestamp(None), node.state)
    _write_or_print(args.out, credential.serialize().decode("utf-8"))
    return 0


def cmd_vc_verify(args) -> int:
    config = _load_config(args)
    node = FullNode(config)
    params = _root_params(args, config)
    credential = Credential.parse(Path(args.credential).read_bytes())
    verdict = verify_credential(credential, node.state, params, node.store,
                                node.chain.headers(), via=args.via,
                                policy=args.policy)
    if verdict.valid:
        print(f"credential from {credential.issuer} VALID")
        return 0
    print(f"credential INVALID at step {verdict.failed_step}: {verdict.reason}")
    return 1


def cmd_stv_sync(args) -> int:
    server = ServerHandle(args.server)
    path = Path(args.headers_file)
    chain = HeaderChain.load(path) if path.exists() else HeaderChain()
    chain = sync_headers(server, chain)
    chain.save(path)
    print(f"synced to height {chain.tip_height} "
          f"({(chain.tip_height + 1) * 80} bytes at {path})")
    return 0


def cmd_stv_verify(args) -> int:
    config = _load_config(args)
    params = _root_params(args, config)
    server = ServerHandle(args.server)
    path = Path(args.headers_file)
    chain = HeaderChain.load(path) if path.exists() else HeaderChain()
    chain = sync_headers(server, chain)
    chain.save(path)
    verdict = stv_verify(args.did, server, chain, params)
    if verdict.valid:
        print(f"{args.did} VALID (latest height {verdict.latest_height})")
        return 0
    print(f"{args.did} INVALID: {verdict.reason} (status {verdict.status})")
    return 1


def cmd_cost_estimate(args) -> int:
    model = AttackCostModel(current_hash_rate=args.hash_rate)
    cost = attack_cost(parse_duration(args.elapsed), model)
    print(f"{cost:.0f} USD")
    return 0


def cmd_serve(args) -> int:
    node = FullNode(_load_config(args))
    serve(node, args.listen)
    return 0


def cmd_demo(args) -> int:
    node = FullNode(_load_config(args))
    for outcome in run_scenario(node, args.script):
        print(outcome.line())
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _read_document(path: str) -> DidDocument:
    return DidDocument.from_dict(json.loads(Path(path).read_text()))


def _write_or_print(out: str | None, text: str) -> None:
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--timestamp", type=int, default=None,
                   help="anchoring time (unix seconds; default: wall clock)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trustchain",
        description="Full node for a decentralised public key infrastructure "
                    "with verifiable timestamps.")
    parser.add_argument("--config", help="node config file")
    parser.add_argument("--data-dir", help=f"data directory (or ${ENV_DATA_DIR})")
    parser.add_argument("--chain-id", help="chain identifier")
    parser.add_argument("--bits", type=int, help="difficulty (leading zero bits)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a fresh registry")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("mine", help="advance the chain")
    p.add_argument("--count", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("keygen", help="generate keys for a new actor")
    p.add_argument("--alias", required=True)
    p.add_argument("--keys", type=int, default=1)
    p.set_defaults(func=cmd_keygen)

    root = sub.add_parser("root", help="root DID operations").add_subparsers(
        dest="subcommand", required=True)
    p = root.add_parser("publish")
    p.add_argument("--alias", required=True)
    p.add_argument("--keys", type=int, default=1)
    p.add_argument("--max-chain-length", type=int, default=None)
    p.add_argument("--code-length", type=int, default=6)
    _add_common(p)
    p.set_defaults(func=cmd_root_publish)
    p = root.add_parser("verify")
    p.add_argument("--did")
    p.add_argument("--alias")
    p.add_argument("--date", help="publication date YYYY-MM-DD")
    p.add_argument("--code", help="confirmation code")
    p.add_argument("--params", help="combined form YYYY-MM-DD:code")
    p.set_defaults(func=cmd_root_verify)
    p = root.add_parser("scan-date")
    p.add_argument("--date", required=True)
    p.set_defaults(func=cmd_root_scan_date)

    did = sub.add_parser("did", help="plain DID operations").add_subparsers(
        dest="subcommand", required=True)
    p = did.add_parser("create")
    p.add_argument("--alias", required=True)
    p.add_argument("--keys", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_did_create)
    p = did.add_parser("resolve")
    p.add_argument("did")
    p.set_defaults(func=cmd_did_resolve)
    p = did.add_parser("update")
    p.add_argument("--as", dest="as_alias", required=True,
                   help="identity holding the update secret")
    p.add_argument("--did")
    p.add_argument("--document", help="replacement document JSON file")
    _add_common(p)
    p.set_defaults(func=cmd_did_update)
    p = did.add_parser("recover")
    p.add_argument("--as", dest="as_alias", required=True)
    p.add_argument("--did")
    p.add_argument("--document")
    _add_common(p)
    p.set_defaults(func=cmd_did_recover)
    p = did.add_parser("deactivate")
    p.add_argument("--as", dest="as_alias", required=True)
    p.add_argument("--did")
    _add_common(p)
    p.set_defaults(func=cmd_did_deactivate)

    ddid = sub.add_parser("ddid", help="attested DID lifecycle").add_subparsers(
        dest="subcommand", required=True)
    p = ddid.add_parser("challenge")
    p.add_argument("--candidate", required=True, help="candidate document JSON file")
    p.add_argument("--now", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ddid_challenge)
    p = ddid.add_parser("respond")
    p.add_argument("--challenge", required=True)
    p.add_argument("--as", dest="as_alias", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ddid_respond)
    p = ddid.add_parser("issue")
    p.add_argument("--upstream", required=True)
    p.add_argument("--subject", help="alias for an in-keystore subject")
    p.add_argument("--keys", type=int, default=1)
    p.add_argument("--candidate")
    p.add_argument("--challenge")
    p.add_argument("--response")
    p.add_argument("--max-chain-length", type=int, default=None)
    p.add_argument("--now", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_ddid_issue)
    p = ddid.add_parser("renew")
    p.add_argument("--upstream", required=True)
    p.add_argument("--of", required=True)
    p.add_argument("--document")
    p.add_argument("--now", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_ddid_renew)
    p = ddid.add_parser("revoke")
    p.add_argument("--upstream", required=True)
    p.add_argument("--of", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_ddid_revoke)

    chain = sub.add_parser("chain", help="attestation chains").add_subparsers(
        dest="subcommand", required=True)
    p = chain.add_parser("build")
    p.add_argument("--did", required=True)
    p.set_defaults(func=cmd_chain_build)
    p = chain.add_parser("verify")
    p.add_argument("--did", required=True)
    p.add_argument("--date")
    p.add_argument("--code")
    p.add_argument("--params")
    p.set_defaults(func=cmd_chain_verify)

    p = sub.add_parser("rebase", help="duplicate a DID from another tree")
    p.add_argument("--upstream", required=True)
    p.add_argument("--did", required=True, help="DID on the source tree")
    p.add_argument("--source-data-dir", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_rebase)

    interop = sub.add_parser("interop", help="joint attestations").add_subparsers(
        dest="subcommand", required=True)
    p = interop.add_parser("issue")
    p.add_argument("--provider-a", required=True)
    p.add_argument("--provider-b", required=True)
    p.add_argument("--provider-b-in-source", action="store_true",
                   help="resolve provider B's identity from the source keystore")
    p.add_argument("--source-data-dir", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_interop_issue)

    vc = sub.add_parser("vc", help="credentials").add_subparsers(
        dest="subcommand", required=True)
    p = vc.add_parser("issue")
    p.add_argument("--issuer", required=True)
    p.add_argument("--claims", default="{}", help="claims as inline JSON")
    p.add_argument("--claims-file")
    p.add_argument("--time", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_vc_issue)
    p = vc.add_parser("verify")
    p.add_argument("--credential", required=True)
    p.add_argument("--date")
    p.add_argument("--code")
    p.add_argument("--params")
    p.add_argument("--via", help="verify through this DID (interoperability)")
    p.add_argument("--policy", choices=["current", "at-issuance"], default="current")
    p.set_defaults(func=cmd_vc_verify)

    stv = sub.add_parser("stv", help="light-client verification").add_subparsers(
        dest="subcommand", required=True)
    p = stv.add_parser("sync")
    p.add_argument("--server", required=True)
    p.add_argument("--headers-file", default="headers.dat")
    p.set_defaults(func=cmd_stv_sync)
    p = stv.add_parser("verify")
    p.add_argument("--did", required=True)
    p.add_argument("--server", required=True)
    p.add_argument("--headers-file", default="headers.dat")
    p.add_argument("--date")
    p.add_argument("--code")
    p.add_argument("--params")
    p.set_defaults(func=cmd_stv_verify)

    cost = sub.add_parser("cost", help="attack-cost estimates").add_subparsers(
        dest="subcommand", required=True)
    p = cost.add_parser("estimate")
    p.add_argument("--elapsed", required=True, help="e.g. 1h, 1d, 7d, 30d")
    p.add_argument("--hash-rate", type=float, default=300.0, help="EH/s")
    p.set_defaults(func=cmd_cost_estimate)

    p = sub.add_parser("serve", help="run the wire-protocol server")
    p.add_argument("--listen", default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("demo", help="run a scripted scenario")
    p.add_argument("script")
    p.set_defaults(func=cmd_demo)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except TrustchainError as e:
        code = re.sub(r"(?<!^)(?=[A-Z])", "-", type(e).__name__).lower()
        print(json.dumps({"code": code, "message": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
