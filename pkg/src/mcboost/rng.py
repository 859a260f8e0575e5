"""Counter-based uniform streams.

A uniform is a pure function of ``(key, walk, step, slot)``, so any walk can
be replayed in isolation and results do not depend on how walks are split
across chunks or threads.  The mixer is the SplitMix64 finalizer applied
twice.
"""
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def stream_key(seed, *tags):
    """Fold a 64-bit seed and integer tags into a stream key."""
    z = np.array([int(seed) & _MASK64], dtype=np.uint64)
    for t in tags:
        with np.errstate(over="ignore"):
            z = _mix(z + _GOLDEN + np.uint64(int(t) & _MASK64))
    return np.uint64(_mix(z)[0])


def uniforms(key, walk_ids, step, slot=0):
    """Uniforms in [0, 1) for each walk id at the given step and draw slot."""
    ids = np.asarray(walk_ids, dtype=np.uint64)
    ctr = np.uint64(((int(step) << 3) | int(slot)) & _MASK64)
    with np.errstate(over="ignore"):
        z = _mix(ids * _GOLDEN + np.uint64(key))
        z = _mix(z ^ (ctr * _M2 + _GOLDEN))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
