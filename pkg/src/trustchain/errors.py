"""Shared error base for the trustchain package.

Concrete errors live next to the code that raises them; everything inherits
from TrustchainError so callers (and the CLI) can catch domain failures in
one place.
"""


class TrustchainError(Exception):
    """Base class for all domain errors raised by this package."""
