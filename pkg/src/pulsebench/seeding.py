"""Deterministic seed derivation for nested experiment structure.

Every seed used anywhere in the pipeline descends from one master seed via
``derive_seed(master, *path)``, so a single integer reproduces a full
synth -> slice -> train -> evaluate run byte-for-byte.
"""

import hashlib


def derive_seed(master_seed: int, *path) -> int:
    """Stable 63-bit child seed for the given index path.

    Computed as the leading 8 bytes of SHA-256 over ``"master:p1:p2:..."``,
    so it is identical across platforms and Python processes (unlike
    ``hash()``). Path elements may be ints or short strings.
    """
    key = ":".join(str(p) for p in (master_seed, *path))
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
