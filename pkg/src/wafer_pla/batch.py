"""Flattened per-transition arrays for full-batch training."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class TransitionBatch:
    z_prev: np.ndarray  # (T, D) states z_{k-1}
    z_next: np.ndarray  # (T, D) states z_k
    lengths: np.ndarray  # (N,) L per wafer
    starts: np.ndarray  # (N,) first transition row of each wafer
    position: np.ndarray  # (T,) k, 1-based
    wafer_row: np.ndarray  # (T,) wafer index
    y: np.ndarray  # (N,) outcomes (nan when absent)

    @property
    def n_wafers(self):
        return len(self.lengths)

    @classmethod
    def from_states(cls, seqs, outcomes=None):
        seqs = list(seqs)
        lengths = np.array([s.length for s in seqs], dtype=np.int64)
        if np.any(lengths < 1):
            raise ValueError("every trajectory needs at least one step")
        starts = np.concatenate([[0], np.cumsum(lengths)[:-1]]).astype(np.int64)
        z_prev = np.vstack([s.states[:-1] for s in seqs])
        z_next = np.vstack([s.states[1:] for s in seqs])
        position = np.concatenate([np.arange(1, n + 1) for n in lengths])
        wafer_row = np.repeat(np.arange(len(seqs)), lengths)
        y = np.full(len(seqs), np.nan) if outcomes is None else np.asarray(outcomes, dtype=float)
        return cls(z_prev, z_next, lengths, starts, position, wafer_row, y)

    def row_length(self):
        return self.lengths[self.wafer_row]

    def select(self, wafers):
        """Sub-batch over a subset of wafer indices (order kept)."""
        wafers = np.asarray(wafers, dtype=np.int64)
        rows = np.concatenate([np.arange(self.starts[w], self.starts[w] + self.lengths[w]) for w in wafers])
        lengths = self.lengths[wafers]
        starts = np.concatenate([[0], np.cumsum(lengths)[:-1]]).astype(np.int64)
        return TransitionBatch(self.z_prev[rows], self.z_next[rows], lengths, starts,
                               self.position[rows], np.repeat(np.arange(len(wafers)), lengths),
                               self.y[wafers])
