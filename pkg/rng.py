#!/usr/bin/env python3
"""
Counter-based random streams for the QD Toolkit
A stream is a (seed, stream_id, counter) triple; its draws come from a Philox
generator keyed by (seed, stream_id) and positioned at the counter, so they never
depend on which process or thread asks for them.
"""
from dataclasses import dataclass

import numpy as np

from errors import InvalidArgumentError

_MASK64 = (1 << 64) - 1
# Odd multiplier: i -> base + i * _STRIDE is a bijection modulo 2**64
_STRIDE = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0
    counter: int = 0

    def __post_init__(self):
        for name in ('seed', 'stream_id', 'counter'):
            value = getattr(self, name)
            if not 0 <= int(value) <= _MASK64:
                raise InvalidArgumentError(f"{name} must fit in 64 unsigned bits, got {value}")
            object.__setattr__(self, name, int(value))

    @classmethod
    def from_seed(cls, seed):
        return cls(seed=int(seed) & _MASK64)

    def generator(self):
        """numpy Generator positioned at this stream's counter"""
        bit_generator = np.random.Philox(key=self.seed | (self.stream_id << 64), counter=self.counter)
        return np.random.Generator(bit_generator)


def split_rng(stream, count):
    """Derive `count` child streams with pairwise distinct stream ids.

    Children depend only on the parent's (seed, stream_id, counter); the parent is
    left untouched.
    """
    if int(count) < 1:
        raise InvalidArgumentError(f"split count must be >= 1, got {count}")
    sequence = np.random.SeedSequence([stream.seed, stream.stream_id, stream.counter])
    base = int(sequence.generate_state(1, dtype=np.uint64)[0])
    return [
        RngStream(seed=stream.seed, stream_id=(base + i * _STRIDE) & _MASK64, counter=0)
        for i in range(int(count))
    ]
