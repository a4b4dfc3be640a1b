"""Deterministic seed fan-out.

Every random stream in the pipeline is derived from one root seed plus a
fixed textual label, so a single --seed reproduces the whole run while
keeping the per-module streams statistically independent.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root: int, label: str) -> int:
    """Derive a 63-bit child seed from ``root`` and a stream ``label``."""
    digest = hashlib.sha256(f"{root}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def stream_rng(root: int, label: str) -> np.random.Generator:
    """Generator for the stream named ``label`` under root seed ``root``."""
    return np.random.default_rng(derive_seed(root, label))
