"""Shared scaffolding: a Workbench bundling one registry with a ticking clock
and actor bookkeeping, so scenario construction stays one line per event."""
from __future__ import annotations

from dataclasses import dataclass, field

from trustchain.anchor import RegistryState, scan
from trustchain.attestation import (
    Identity,
    IssuedDid,
    candidate_document,
    issue_challenge,
    issue_ddid,
    respond_challenge,
    revoke_ddid,
)
from trustchain.keys import SigningKey, random_secret
from trustchain.registry import BlockChain, ContentStore
from trustchain.roottrust import PublishedRoot, RootParameters, publish_root

START = 1_700_000_000
STRIDE = 600


def make_keys(n: int = 1) -> dict[str, SigningKey]:
    return {f"key-{i}": SigningKey.generate() for i in range(n)}


@dataclass
class Workbench:
    """One registry, one content store, a monotone clock and named actors."""

    chain: BlockChain
    store: ContentStore
    clock: int = START
    actors: dict[str, Identity] = field(default_factory=dict)
    root: PublishedRoot | None = None

    @classmethod
    def create(cls, chain_id: str = "test", bits: int = 8,
               start: int = START) -> "Workbench":
        return cls(chain=BlockChain(chain_id, bits=bits, genesis_timestamp=start - 1),
                   store=ContentStore(), clock=start)

    def tick(self, timestamp: int | None = None) -> int:
        self.clock = timestamp if timestamp is not None else self.clock + STRIDE
        return self.clock

    @property
    def state(self) -> RegistryState:
        return scan(self.chain, self.store)

    @property
    def headers(self):
        return self.chain.headers()

    @property
    def params(self) -> RootParameters:
        assert self.root is not None
        return self.root.params

    def publish_root(self, alias: str = "root", n_keys: int = 1,
                     timestamp: int | None = None,
                     max_chain_length: int | None = None) -> Identity:
        ts = self.tick(timestamp)
        keys = make_keys(n_keys)
        document = candidate_document(keys)
        self.root = publish_root(
            self.chain, self.store, document, ts,
            update_secret=random_secret(), recovery_secret=random_secret(),
            max_chain_length=max_chain_length)
        identity = Identity(
            did=self.root.did, keys=keys, key_id="key-0",
            recovery_secret=self.root.recovery_secret,
            update_secrets={self.root.did: self.root.update_secret})
        self.actors[alias] = identity
        return identity

    def issue(self, upstream_alias: str, alias: str, n_keys: int = 1,
              timestamp: int | None = None,
              max_chain_length: int | None = None) -> Identity:
        ts = self.tick(timestamp)
        upstream = self.actors[upstream_alias]
        keys = make_keys(n_keys)
        candidate = candidate_document(keys)
        challenge = issue_challenge(candidate, now=ts)
        response = respond_challenge(challenge, keys)
        issued: IssuedDid = issue_ddid(
            upstream, candidate, challenge, response,
            state=self.state, chain=self.chain, store=self.store,
            timestamp=ts, now=ts, max_chain_length=max_chain_length)
        identity = Identity(did=issued.did, keys=keys, key_id="key-0",
                            recovery_secret=issued.recovery_secret)
        self.actors[alias] = identity
        return identity

    def revoke(self, upstream_alias: str, alias: str,
               timestamp: int | None = None) -> None:
        ts = self.tick(timestamp)
        revoke_ddid(self.actors[upstream_alias], self.actors[alias].did,
                    state=self.state, chain=self.chain, store=self.store,
                    timestamp=ts)
