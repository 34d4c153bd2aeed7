"""Deterministic random-number streams for parallel Monte Carlo.

Every stochastic routine in the package draws from an ``RngStream``, a pair
(master_seed, stream_id). Identical pairs reproduce identical draw sequences;
distinct stream_ids give statistically independent sequences (NumPy
``SeedSequence`` spawn keys). Because streams are keyed by *logical* indices
(grid point, PS-SC step, replicate) rather than by schedule, results are
identical whether work runs serially or on a process pool.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Fixed-radix packing of logical indices into a single stream id.
#   id = ((slot * 2^14 + replicate) * 2^6 + step) * 2^28 + point
_POINT_BITS = 28
_STEP_BITS = 6
_REPLICATE_BITS = 14

# Reserved slots keep unrelated consumers of the same master seed disjoint.
SLOT_CHAIN = 0
SLOT_SIMULATE = 1
SLOT_PARTICLES = 2
SLOT_INIT = 3


def derive_id(point: int = 0, step: int = 0, replicate: int = 0, slot: int = 0) -> int:
    """Pack logical task indices into a collision-free stream id."""
    if not 0 <= point < (1 << _POINT_BITS):
        raise ValueError(f"point index {point} out of range")
    if not 0 <= step < (1 << _STEP_BITS):
        raise ValueError(f"step index {step} out of range")
    if not 0 <= replicate < (1 << _REPLICATE_BITS):
        raise ValueError(f"replicate index {replicate} out of range")
    if slot < 0:
        raise ValueError("slot must be non-negative")
    return (((slot << _REPLICATE_BITS | replicate) << _STEP_BITS) | step) << _POINT_BITS | point


@dataclass(frozen=True)
class RngStream:
    """One reproducible random stream, addressable by (master_seed, stream_id)."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if self.stream_id < 0:
            raise ValueError("stream_id must be non-negative")

    def generator(self) -> np.random.Generator:
        """Fresh Generator; repeated calls restart the identical sequence."""
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))

    def derived(self, point: int = 0, step: int = 0, replicate: int = 0, slot: int = 0) -> "RngStream":
        """Stream for a logical sub-task, offset from this stream's id."""
        return RngStream(self.master_seed, self.stream_id + derive_id(point, step, replicate, slot))
