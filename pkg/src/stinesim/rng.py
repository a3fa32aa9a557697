"""Counter-based random streams for reproducible parallel runs.

Every stochastic routine in this package draws from a Philox stream keyed
by (seed, stream id).  Streams are independent of scheduling: a task gets
the same stream whether it runs first on eight workers or last on one.
"""

import numpy as np

__all__ = ["stream", "substream_ids"]


def stream(seed, stream_id=0):
    """Return a Generator backed by Philox keyed on (seed, stream_id)."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(stream_id & 0xFFFFFFFFFFFFFFFF)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def substream_ids(base_id, count):
    """Deterministic child stream ids for `count` parallel tasks.

    Stream ids are spaced so that nested use (a task spawning its own
    substreams) cannot collide for any realistic task count.
    """
    return [(base_id << 20) + 1 + k for k in range(count)]
