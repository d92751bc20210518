"""
Counter-based random streams

Every draw is addressed by (seed, stream, lane, step): the Philox key comes
from SeedSequence(seed, spawn_key=(stream,)) and the counter holds the lane
and the block of steps. Row i of a step's draw belongs to particle i, so the
numbers a particle sees do not depend on how replicas are split over workers.
"""

from typing import Iterator, Sequence

import numpy as np

BLOCK_STEPS = 16

LANE_NORMAL = 0
LANE_UNIFORM = 1
LANE_INITIAL = 2


class CounterStream:
    """One Philox stream; `stream` is a replica or chain index"""

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or stream < 0:
            raise ValueError("seed and stream must be non-negative")
        self.seed = int(seed)
        self.stream = int(stream)
        self.key = np.random.SeedSequence(self.seed, spawn_key=(self.stream,)).generate_state(2, dtype=np.uint64)

    def generator(self, lane: int, block: int) -> np.random.Generator:
        counter = np.array([0, 0, lane, block], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(counter=counter, key=self.key))

    def block(self, lane: int, block: int, shape: tuple[int, ...]) -> np.ndarray:
        """Draws for steps [block * BLOCK_STEPS, (block + 1) * BLOCK_STEPS), shape (BLOCK_STEPS, *shape)"""
        gen = self.generator(lane, block)
        if lane == LANE_NORMAL:
            return gen.standard_normal((BLOCK_STEPS, *shape))
        return gen.random((BLOCK_STEPS, *shape))

    def __repr__(self) -> str:
        return f"CounterStream(seed={self.seed}, stream={self.stream})"


class StreamBank:
    """A batch of streams drawn together; draws have shape (n_streams, *shape)"""

    def __init__(self, seed: int, streams: Sequence[int]):
        self.seed = int(seed)
        self.streams = [CounterStream(seed, s) for s in streams]

    @classmethod
    def range(cls, seed: int, count: int, first: int = 0) -> "StreamBank":
        return cls(seed, range(first, first + count))

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(s.stream for s in self.streams)

    def __len__(self) -> int:
        return len(self.streams)

    def draws(self, lane: int, first_step: int, n_steps: int, shape: tuple[int, ...]) -> Iterator[np.ndarray]:
        """Yield one array of shape (n_streams, *shape) per step in [first_step, first_step + n_steps)"""
        step = int(first_step)
        end = step + int(n_steps)
        while step < end:
            index, offset = divmod(step, BLOCK_STEPS)
            block = np.stack([s.block(lane, index, shape) for s in self.streams], axis=1)
            stop = min(BLOCK_STEPS, offset + end - step)
            yield from block[offset:stop]
            step += stop - offset

    def draw(self, lane: int, step: int, shape: tuple[int, ...]) -> np.ndarray:
        return next(self.draws(lane, step, 1, shape))
