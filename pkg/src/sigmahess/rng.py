"""Counter-based random streams.

Every trial draws from its own Philox stream keyed by ``(seed, stream, index)``,
so results do not depend on how a sweep is sharded or ordered.
"""
import numpy as np

_MASK = (1 << 64) - 1


def trial_rng(seed, index, stream=0):
    key = np.array([seed & _MASK, ((stream & 0xFFFFFFFF) << 32) | (index & 0xFFFFFFFF)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def stream_id(name):
    """Stable 32-bit id for a named stream (independent of PYTHONHASHSEED)."""
    h = 2166136261
    for ch in name.encode():
        h = ((h ^ ch) * 16777619) & 0xFFFFFFFF
    return h
