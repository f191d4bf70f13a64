"""Counter-based random number streams.

Every Monte Carlo driver in the package draws from Philox generators keyed
by ``(seed, stream_id)``.  Distinct stream ids give statistically
independent sequences, identical keys reproduce identical sequences, and
work can therefore be split across threads in any way without changing
results: a block of replicates owns one stream no matter which worker runs
it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Stream ids are partitioned so independent phases of one experiment can
# derive child streams without collisions: phase p, block b -> base + p*STRIDE + b.
PHASE_STRIDE = 1 << 40


@dataclass(frozen=True)
class RngStream:
    """Key of a counter-based generator: (seed, stream_id), both 64-bit."""

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        if not (0 <= self.seed < 2**64 and 0 <= self.stream_id < 2**64):
            raise ValueError("seed and stream_id must be unsigned 64-bit")

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, offset: int) -> "RngStream":
        """Stream shifted by ``offset`` (callers keep offsets disjoint)."""
        return RngStream(self.seed, (self.stream_id + offset) % 2**64)

    def phase(self, p: int) -> "RngStream":
        """Base stream of phase ``p``; blocks are children of a phase."""
        return self.child(p * PHASE_STRIDE)
