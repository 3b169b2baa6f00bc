"""Deterministic random streams.

Every stochastic operation in this package draws from a Philox4x64
counter-based generator keyed by the user-supplied seed.  Philox is fully
specified (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3")
and has independent implementations in most languages, so identical seeds
reproduce identical streams outside this codebase too.

Derived streams (one per surface sample, per pose hypothesis, ...) are
obtained by placing stream indices in the high words of the 256-bit Philox
counter instead of re-keying, so they never overlap for fewer than 2^64
draws each.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for ``seed``, optionally on a derived sub-stream.

    ``stream`` holds up to three non-negative integers that select a
    sub-stream (e.g. ``make_rng(seed, tuple_index, hypothesis_index)``).
    They are written into counter words 1..3; word 0 is left free for the
    generator to count draws.
    """
    if len(stream) > 3:
        raise ValueError("at most three stream indices are supported")
    counter = [0, 0, 0, 0]
    for i, s in enumerate(stream):
        s = int(s)
        if s < 0:
            raise ValueError("stream indices must be non-negative")
        counter[1 + i] = s
    bitgen = np.random.Philox(key=int(seed) & (2**64 - 1), counter=counter)
    return np.random.Generator(bitgen)
