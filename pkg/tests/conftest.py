from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import Workbench  # noqa: E402


@pytest.fixture(scope="session")
def default_bed() -> Workbench:
    """Default-difficulty registry: root plus a 2-level tree, shared by
    read-only tests."""
    bed = Workbench.create(bits=16)
    bed.publish_root("root")
    bed.issue("root", "issuer-a")
    bed.issue("root", "issuer-b")
    bed.issue("issuer-a", "leaf")
    return bed
