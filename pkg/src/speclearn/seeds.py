"""Deterministic seed derivation for nested experiment components."""

import hashlib


def derive_seed(*keys) -> int:
    """Stable 63-bit seed from a tuple of keys (ints or strings).

    Every random component in a run derives its own seed from the master
    seed plus a structural key, so runs are reproducible regardless of
    execution order or parallelism.
    """
    text = "/".join(str(k) for k in keys)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1
