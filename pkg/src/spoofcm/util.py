"""Seed derivation and content hashing.

All randomness in the toolkit flows from one master seed through
``derive_seed``; no function reads ambient entropy.
"""
from __future__ import annotations

import hashlib
from pathlib import Path


def derive_seed(master_seed: int, *parts) -> int:
    """Derive a 64-bit child seed from a master seed and a purpose path.

    Stable across runs and platforms: the parts are joined as text and
    hashed with SHA-256.
    """
    key = "\x1f".join([str(int(master_seed))] + [str(p) for p in parts])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def text_sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
