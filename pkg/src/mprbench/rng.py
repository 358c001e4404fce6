"""Counter-based random streams.

Every draw is keyed by ``(seed, tag, ordinal)`` so that generation order
across users or workers never changes the outcome.
"""
from __future__ import annotations

import hashlib
import random


def stream(seed: int, tag: str, ordinal: int | str = 0) -> random.Random:
    key = f"{seed}|{tag}|{ordinal}".encode("utf-8")
    digest = hashlib.sha256(key).digest()
    return random.Random(int.from_bytes(digest[:16], "big"))


def stable_hash(text: str, length: int = 16) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:length]
