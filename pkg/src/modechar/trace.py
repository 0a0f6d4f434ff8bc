"""Population traces: bright-state probabilities on a time or detuning grid."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = ["PopulationTrace"]


@dataclass(frozen=True)
class PopulationTrace:
    """Bright-state probabilities for a set of (ion, mode) pairs.

    values maps 1-based (ion, mode) pairs to arrays over the grid, which is
    either evolution times in seconds (kind "time") or drive detunings in
    rad/s (kind "detuning").  assignments records the substep context each
    pair was measured in.  When sampled is set, values hold shot-averaged
    binomial outcomes rather than exact probabilities.
    """

    kind: str
    grid: np.ndarray
    values: dict = field(default_factory=dict)
    assignments: dict = field(default_factory=dict)
    shots: int | None = None
    sampled: bool = False
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("time", "detuning"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        grid = np.asarray(self.grid, dtype=float)
        object.__setattr__(self, "grid", grid)
        if grid.ndim != 1:
            raise ValueError("grid must be one-dimensional")
        for pair, arr in list(self.values.items()):
            arr = np.asarray(arr, dtype=float)
            if arr.shape != grid.shape:
                raise ValueError(f"values for pair {pair} do not match the grid")
            self.values[pair] = arr

    def pairs(self):
        return sorted(self.values.keys())

    def sample(self, shots: int, rng: np.random.Generator, seed=None) -> "PopulationTrace":
        """Binomial shot sampling of every probability in the trace."""
        if shots < 1:
            raise ValueError("shots must be >= 1")
        sampled = {
            pair: rng.binomial(shots, np.clip(vals, 0.0, 1.0)) / shots
            for pair, vals in sorted(self.values.items())
        }
        return replace(self, values=sampled, shots=shots, sampled=True, seed=seed)
