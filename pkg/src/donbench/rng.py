"""Deterministic random streams built on the counter-based Philox generator.

Every stochastic routine in the package draws from a `numpy` Generator backed
by Philox, keyed by an explicit 64-bit seed.  Streams are split by value, not
by shared state, so results are independent of execution order and thread
scheduling:

* sample ``i`` of a batch uses ``split(master_seed, i)`` (the index is XOR'd
  into the seed),
* independent consumers inside one sample (e.g. the two input functions)
  use ``substream(seed, tag)`` with distinct small tags, which mixes the tag
  into the high bits so it cannot collide with neighbouring sample indices,
* regeneration attempts after a solver failure use ``retry(seed, attempt)``.
"""

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN64 = 0x9E3779B97F4A7C15  # 2^64 / golden ratio, odd, full-period mixer


def stream(seed: int) -> np.random.Generator:
    """Return a Generator for the given 64-bit seed (Philox-backed)."""
    return np.random.Generator(np.random.Philox(key=seed & _MASK64))


def split(seed: int, index: int) -> int:
    """Seed of sub-stream `index`: the index is XOR'd into the parent seed."""
    if index < 0:
        raise ValueError("stream index must be nonnegative")
    return (seed ^ index) & _MASK64


def substream(seed: int, tag: int) -> int:
    """Domain-separated stream inside one sample (tag mixed into high bits)."""
    return (seed ^ (((tag + 1) * _GOLDEN64) & _MASK64) ^ ((tag + 1) << 48)) & _MASK64


def retry(seed: int, attempt: int) -> int:
    """Fresh seed for regeneration attempt `attempt` (attempt 0 = original)."""
    if attempt == 0:
        return seed & _MASK64
    return (seed ^ ((attempt * _GOLDEN64) & _MASK64)) & _MASK64
