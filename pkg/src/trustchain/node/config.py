"""Node configuration: a key = value text file, overridable by CLI flags
and the TRUSTCHAIN_DATA_DIR environment variable."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import TrustchainError
from ..roottrust import RootParameters

ENV_DATA_DIR = "TRUSTCHAIN_DATA_DIR"

DEFAULT_BITS = 16
DEFAULT_LISTEN = "127.0.0.1:8560"

_KNOWN_KEYS = {"data_dir", "chain_id", "bits", "listen", "root_params", "keystore"}


class ConfigError(TrustchainError):
    """Unreadable or malformed configuration."""


@dataclass
class NodeConfig:
    data_dir: Path
    chain_id: str = "main"
    bits: int = DEFAULT_BITS
    listen: str = DEFAULT_LISTEN
    root_params: RootParameters | None = None
    keystore: Path | None = None

    def __post_init__(self):
        self.data_dir = Path(self.data_dir)
        if self.keystore is None:
            self.keystore = self.data_dir / "keystore.json"

    @classmethod
    def load(cls, path: Path | str) -> "NodeConfig":
        values: dict[str, str] = {}
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in _KNOWN_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value
        data_dir = os.environ.get(ENV_DATA_DIR) or values.get("data_dir")
        if not data_dir:
            raise ConfigError(f"{path}: data_dir is required")
        try:
            return cls(
                data_dir=Path(data_dir),
                chain_id=values.get("chain_id", "main"),
                bits=int(values.get("bits", DEFAULT_BITS)),
                listen=values.get("listen", DEFAULT_LISTEN),
                root_params=(RootParameters.parse_line(values["root_params"])
                             if "root_params" in values else None),
                keystore=Path(values["keystore"]) if "keystore" in values else None,
            )
        except ValueError as e:
            raise ConfigError(f"{path}: {e}") from e

    def save(self, path: Path | str) -> None:
        lines = [
            f"data_dir = {self.data_dir}",
            f"chain_id = {self.chain_id}",
            f"bits = {self.bits}",
            f"listen = {self.listen}",
        ]
        if self.root_params is not None:
            lines.append(f"root_params = {self.root_params.line()}")
        if self.keystore != self.data_dir / "keystore.json":
            lines.append(f"keystore = {self.keystore}")
        Path(path).write_text("\n".join(lines) + "\n")
