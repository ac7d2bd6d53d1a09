"""Named seed derivation so every random stream hangs off one master seed."""

from __future__ import annotations

import hashlib


def derive_seed(master: int, label: str) -> int:
    """Stable 63-bit seed for ``label`` under ``master``.

    Uses sha256 so the mapping is identical across processes and platforms
    (Python's built-in hash is salted per process).
    """
    digest = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1
