"""Wafer state sequences from embedded process steps (linear cell)."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import UnknownToken

log = logging.getLogger(__name__)

TIME_UNITS = {"hours": 1.0, "minutes": 60.0, "days": 1.0 / 24.0}


@dataclass
class Trajectory:
    wafer_id: str
    token_ids: np.ndarray  # (L,) int
    timestamps: np.ndarray  # (L,) hours
    outcome: Optional[float] = None

    def __post_init__(self):
        self.token_ids = np.asarray(self.token_ids, dtype=np.int64)
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        if self.token_ids.shape != self.timestamps.shape:
            raise ValueError("token_ids and timestamps differ in length")

    def __len__(self):
        return len(self.token_ids)

    def prefix(self, k):
        return Trajectory(self.wafer_id, self.token_ids[:k], self.timestamps[:k], self.outcome)


@dataclass
class StateSequence:
    states: np.ndarray  # (L+1, D), states[0] = z_0
    psi_weights: np.ndarray  # (L,)
    t0: float = 0.0
    wafer_id: str = ""

    @property
    def length(self):
        return len(self.psi_weights)

    @property
    def terminal(self):
        return self.states[-1]


@dataclass
class Dataset:
    trajectories: list
    embedding: object  # EmbeddingTable
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.trajectories)

    def outcomes(self):
        return np.array([tr.outcome for tr in self.trajectories], dtype=float)

    def subset(self, idx):
        return Dataset([self.trajectories[i] for i in idx], self.embedding, dict(self.meta))


@dataclass(frozen=True)
class T0Policy:
    """Where the first step's predecessor time sits: ``t_0 = t_1 - offset_h``."""

    offset_h: float = 1.0

    @classmethod
    def parse(cls, text):
        text = str(text).strip()
        if text.startswith("offset:"):
            return cls(float(text.split(":", 1)[1]))
        if text == "zero":
            return cls(0.0)
        raise ValueError(f"unknown t0 policy {text!r}")

    def __str__(self):
        return f"offset:{self.offset_h!r}"


def psi(t_k, t_prev, time_scale=1.0):
    """Temporal weight log10(1 + dt), with negative dt clamped to zero."""
    dt = (t_k - t_prev) * time_scale
    if dt < 0:
        log.warning("negative time step %.6g clamped to 0", dt)
        dt = 0.0
    return math.log10(1.0 + dt)


def psi_vector(timestamps, t0, time_scale=1.0):
    ts = np.asarray(timestamps, dtype=float)
    prev = np.concatenate([[t0], ts[:-1]])
    dt = (ts - prev) * time_scale
    if np.any(dt < 0):
        log.warning("%d negative time steps clamped to 0", int(np.sum(dt < 0)))
        dt = np.maximum(dt, 0.0)
    return np.log10(1.0 + dt)


class LinearCell:
    """z_k = psi_k * x_k + z_{k-1}."""

    def step(self, z_prev, x, w):
        return z_prev + w * x

    def roll(self, z0, xs, ws):
        inc = ws[:, None] * xs
        return np.vstack([z0[None, :], z0[None, :] + np.cumsum(inc, axis=0)])


def roll_states(traj, emb, t0_policy=T0Policy(), time_scale=1.0, cell=None):
    vectors = emb.vectors if hasattr(emb, "vectors") else np.asarray(emb)
    cell = cell or LinearCell()
    ids = traj.token_ids
    if len(ids) and (ids.min() < 0 or ids.max() >= len(vectors)):
        bad = ids[(ids < 0) | (ids >= len(vectors))][0]
        raise UnknownToken(f"token id {int(bad)} not in embedding table (wafer {traj.wafer_id!r})")
    dim = vectors.shape[1]
    z0 = np.zeros(dim)
    if len(ids) == 0:
        return StateSequence(z0[None, :], np.zeros(0), 0.0, traj.wafer_id)
    t0 = float(traj.timestamps[0]) - t0_policy.offset_h
    ws = psi_vector(traj.timestamps, t0, time_scale)
    states = cell.roll(z0, vectors[ids], ws)
    return StateSequence(states, ws, t0, traj.wafer_id)


def batch_states(data, t0_policy=T0Policy(), time_scale=1.0):
    return [roll_states(tr, data.embedding, t0_policy, time_scale) for tr in data.trajectories]
