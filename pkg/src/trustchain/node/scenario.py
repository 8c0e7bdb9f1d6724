"""Declarative scenario runner: a JSON script of actions and assertions
driven against one full node, used for end-to-end demos and tests.

Script shape:

    {"name": "...",
     "steps": [
       {"action": "root",     "alias": "government"},
       {"action": "issue",    "upstream": "government", "subject": "health",
        "max_chain_length": 3},
       {"action": "vc-issue", "issuer": "health", "name": "cred1",
        "claims": {"role": "nurse"}},
       {"action": "vc-verify", "credential": "cred1", "expect": "valid"},
       {"action": "revoke",   "upstream": "government", "of": "health"},
       {"action": "vc-verify", "credential": "cred1", "expect": "invalid",
        "expect_step": "ii"},
       {"action": "assert-status", "of": "health", "expect": "deactivated"}
     ]}

Every step may carry "timestamp"; otherwise the clock advances by a fixed
stride per mutating step. Identities created by steps land in the node's
keystore under their alias.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..attestation import (
    Identity,
    issue_challenge,
    issue_ddid,
    renew_ddid,
    respond_challenge,
    revoke_ddid,
    verify_did,
    candidate_document,
)
from ..credential import Credential, issue_credential, verify_credential
from ..errors import TrustchainError
from ..keys import SigningKey, random_secret
from ..roottrust import RootParameters, publish_root
from .node import FullNode

DEFAULT_START = 1_700_000_000
STRIDE = 600


class ScriptError(TrustchainError):
    """Malformed scenario script."""


class AssertionFailed(TrustchainError):
    """A scripted expectation did not hold."""


@dataclass
class StepOutcome:
    index: int
    action: str
    detail: str

    def line(self) -> str:
        return f"[{self.index:03d}] {self.action}: {self.detail}"


@dataclass
class ScenarioRunner:
    node: FullNode
    root_params: RootParameters | None = None
    clock: int = DEFAULT_START
    credentials: dict[str, Credential] = field(default_factory=dict)
    transcript: list[StepOutcome] = field(default_factory=list)

    def run_file(self, path: Path | str) -> list[StepOutcome]:
        try:
            script = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ScriptError(f"cannot read script {path}: {e}") from e
        return self.run(script)

    def run(self, script: dict) -> list[StepOutcome]:
        steps = script.get("steps")
        if steps is None or not isinstance(steps, list):
            raise ScriptError("script needs a 'steps' list")
        for index, step in enumerate(steps):
            if not isinstance(step, dict) or "action" not in step:
                raise ScriptError(f"step {index}: not an action object")
            action = step["action"]
            handler = getattr(self, "_do_" + action.replace("-", "_"), None)
            if handler is None:
                raise ScriptError(f"step {index}: unknown action {action!r}")
            self.clock = int(step.get("timestamp", self.clock + STRIDE))
            detail = handler(step)
            self.transcript.append(StepOutcome(index, action, detail))
        return self.transcript

    # -- actor management -------------------------------------------------

    def _new_actor(self, alias: str, n_keys: int) -> Identity:
        keys = {f"key-{i}": SigningKey.generate() for i in range(n_keys)}
        identity = Identity(did="", keys=keys, key_id="key-0")
        self.node.keystore.add(alias, identity)
        return identity

    def _actor(self, name: str) -> Identity:
        return self.node.keystore.resolve(name)

    # -- actions -----------------------------------------------------------

    def _do_root(self, step: dict) -> str:
        alias = step["alias"]
        identity = self._new_actor(alias, int(step.get("keys", 1)))
        document = candidate_document(identity.keys)
        published = publish_root(
            self.node.chain, self.node.store, document, self.clock,
            update_secret=random_secret(), recovery_secret=random_secret(),
            max_chain_length=step.get("max_chain_length"))
        self.node._persist_new_blocks()
        identity.did = published.did
        identity.recovery_secret = published.recovery_secret
        identity.update_secrets[published.did] = published.update_secret
        self.root_params = published.params
        return f"{alias} -> {published.did} ({published.params.line()})"

    def _do_issue(self, step: dict) -> str:
        upstream = self._actor(step["upstream"])
        alias = step["subject"]
        subject = self._new_actor(alias, int(step.get("keys", 1)))
        candidate = candidate_document(subject.keys)
        challenge = issue_challenge(candidate, now=self.clock)
        response = respond_challenge(challenge, subject.keys)
        issued = issue_ddid(
            upstream, candidate, challenge, response,
            state=self.node.state, chain=self.node.chain, store=self.node.store,
            timestamp=self.clock, now=self.clock,
            max_chain_length=step.get("max_chain_length"))
        self.node._persist_new_blocks()
        subject.did = issued.did
        subject.recovery_secret = issued.recovery_secret
        return f"{step['upstream']} attested {alias} -> {issued.did}"

    def _do_renew(self, step: dict) -> str:
        upstream = self._actor(step["upstream"])
        subject = self._actor(step["of"])
        document = candidate_document(subject.keys)
        renew_ddid(upstream, subject.did, document,
                   state=self.node.state, chain=self.node.chain,
                   store=self.node.store, timestamp=self.clock, now=self.clock)
        self.node._persist_new_blocks()
        return f"renewed {step['of']}"

    def _do_revoke(self, step: dict) -> str:
        upstream = self._actor(step["upstream"])
        target = self._actor(step["of"])
        revoke_ddid(upstream, target.did,
                    state=self.node.state, chain=self.node.chain,
                    store=self.node.store, timestamp=self.clock)
        self.node._persist_new_blocks()
        return f"revoked {step['of']}"

    def _do_mine(self, step: dict) -> str:
        block = self.node.mine(self.clock)
        return f"height {block.height}"

    def _do_vc_issue(self, step: dict) -> str:
        issuer = self._actor(step["issuer"])
        name = step["name"]
        credential = issue_credential(issuer, step.get("claims", {}),
                                      self.clock, self.node.state)
        self.credentials[name] = credential
        return f"{name} issued by {step['issuer']}"

    def _do_vc_verify(self, step: dict) -> str:
        name = step["credential"]
        if name not in self.credentials:
            raise ScriptError(f"unknown credential {name!r}")
        if self.root_params is None:
            raise ScriptError("no root published yet")
        verdict = verify_credential(
            self.credentials[name], self.node.state, self.root_params,
            self.node.store, self.node.chain.headers(),
            policy=step.get("policy", "current"))
        outcome = "valid" if verdict.valid else "invalid"
        expected = step.get("expect")
        if expected is not None and expected != outcome:
            raise AssertionFailed(
                f"{name}: expected {expected}, got {outcome} ({verdict.reason})")
        expected_step = step.get("expect_step")
        if expected_step is not None and verdict.failed_step != expected_step:
            raise AssertionFailed(
                f"{name}: expected failure at step {expected_step}, "
                f"got {verdict.failed_step}")
        return f"{name}: {outcome}" + (f" at step {verdict.failed_step}" if not verdict.valid else "")

    def _do_assert_status(self, step: dict) -> str:
        target = self._actor(step["of"])
        entry = self.node.state.get_entry(target.did)
        status = entry.record.status if entry else "unknown"
        if status != step["expect"]:
            raise AssertionFailed(f"{step['of']}: expected {step['expect']}, got {status}")
        return f"{step['of']} is {status}"

    def _do_assert_chain(self, step: dict) -> str:
        target = self._actor(step["of"])
        if self.root_params is None:
            raise ScriptError("no root published yet")
        verdict, _ = verify_did(target.did, self.root_params,
                                state=self.node.state, store=self.node.store,
                                headers=self.node.chain.headers())
        outcome = "valid" if verdict.valid else "invalid"
        if step["expect"] != outcome:
            raise AssertionFailed(
                f"chain of {step['of']}: expected {step['expect']}, got {outcome} "
                f"({verdict.failure_reason})")
        return f"chain of {step['of']}: {outcome}"


def run_scenario(node: FullNode, script_path: Path | str) -> list[StepOutcome]:
    runner = ScenarioRunner(node)
    outcomes = runner.run_file(script_path)
    node.save_keystore()
    return outcomes
