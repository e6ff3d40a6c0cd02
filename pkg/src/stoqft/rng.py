"""Counter-based RNG streams for reproducible, order-independent parallel sampling.

Every stream is keyed by (master seed, label, index) through SHA-256, so replicas
can be drawn in any order or on any worker and still produce identical results.
"""
import hashlib

import numpy as np


def stream_key(master_seed, label, index=0):
    """128-bit Philox key derived from (master_seed, label, index)."""
    msg = f"{master_seed}/{label}/{index}".encode()
    digest = hashlib.sha256(msg).digest()
    return int.from_bytes(digest[:16], "little")


def stream_rng(master_seed, label, index=0):
    """Independent numpy Generator for the given stream coordinates."""
    return np.random.Generator(np.random.Philox(key=stream_key(master_seed, label, index)))
