"""Potential loss analysis: non-negative step attribution from a Bellman surrogate.

F(z_t) is never modelled directly. A non-negative network G scores each
transition and F accumulates those scores from a learned anchor
``c0 = F(z_0)``::

    F(z_t) = c0 + sum_{i<=t} G(z_{i-1}, z_i)

Training maximizes, averaged over wafers,

    (mu / L) sum_{t=1..L} F(z_t) - 1/2 (y - F(z_L))^2
        - 1/2 mu_td sum_{t=1..L-1} (F(z_{t+1}) - F(z_t))^2

so the same fitted model yields the terminal prediction F(z_L) and the
per-step attributions G(z_{k-1}, z_k) >= 0.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .batch import TransitionBatch
from .errors import IndexOutOfRange, LengthMismatch, MissingOutcome, NonFiniteLoss, ShapeMismatch
from .nn import MlpSpec, OptimState, ParamBundle, adam_step, forward, forward_graph, init_params
from .trajectory import T0Policy, batch_states

log = logging.getLogger(__name__)

INPUT_TRANSFORMS = ("diff", "raw")


@dataclass
class PlaConfig:
    mu: float = 0.01
    mu_td: float = 0.1
    hidden: tuple = (32, 32)
    output_activation: str = "softplus"
    input_transform: str = "diff"
    context_init: str = "zero"  # first-layer rows reading z_{t-1}: "zero" or "glorot"
    lr: float = 1e-3
    epochs: int = 300
    batch_wafers: int = 0  # 0 = full batch
    seed: int = 0
    output_init: str = "zero"  # last-layer weights: "zero" (G starts constant) or "glorot"


@dataclass
class PlaModel:
    g_spec: MlpSpec
    g_params: ParamBundle
    base_raw: float
    mu: float
    mu_td: float
    input_transform: str = "diff"
    in_shift: np.ndarray = None
    in_scale: np.ndarray = None
    trace: list = field(default_factory=list)

    @property
    def dim(self):
        return self.g_spec.input_dim // 2

    @property
    def base(self):
        return float(np.logaddexp(0.0, self.base_raw))

    def features(self, z_prev, z_next):
        z_prev = np.atleast_2d(np.asarray(z_prev, dtype=float))
        z_next = np.atleast_2d(np.asarray(z_next, dtype=float))
        if z_prev.shape != z_next.shape or z_prev.shape[-1] != self.dim:
            raise ShapeMismatch(f"states {z_prev.shape} / {z_next.shape}, expected width {self.dim}")
        second = z_next - z_prev if self.input_transform == "diff" else z_next
        x = np.hstack([z_prev, second])
        if self.in_shift is not None:
            x = (x - self.in_shift) / self.in_scale
        return x

    def g(self, z_prev, z_next):
        return forward(self.g_spec, self.g_params, self.features(z_prev, z_next))[:, 0]

    def to_dict(self):
        return {
            "g_params": self.g_params.to_dict(),
            "base_raw": float(self.base_raw),
            "mu": self.mu,
            "mu_td": self.mu_td,
            "input_transform": self.input_transform,
            "in_shift": None if self.in_shift is None else [float(v) for v in self.in_shift],
            "in_scale": None if self.in_scale is None else [float(v) for v in self.in_scale],
        }

    @classmethod
    def from_dict(cls, d):
        params = ParamBundle.from_dict(d["g_params"])
        arr = lambda v: None if v is None else np.array(v, dtype=float)
        return cls(params.spec, params, d["base_raw"], d["mu"], d["mu_td"], d["input_transform"],
                   arr(d["in_shift"]), arr(d["in_scale"]))


@dataclass
class PlaAttribution:
    wafer_id: str
    alphas: np.ndarray
    base: float
    terminal: float


def g_value(model, z_prev, z_next):
    return float(model.g(z_prev, z_next)[0])


def f_values(model, states):
    """F(z_0), ..., F(z_L) along one state sequence."""
    if states.length == 0:
        return np.array([model.base])
    g = model.g(states.states[:-1], states.states[1:])
    return model.base + np.concatenate([[0.0], np.cumsum(g)])


def f_value(model, states, t):
    if not 0 <= t <= states.length:
        raise IndexOutOfRange(f"t={t} outside [0, {states.length}]")
    return float(f_values(model, states)[t])


def attribute_pla(model, states):
    if states.length < 1:
        raise ValueError("attribution needs at least one step")
    g = model.g(states.states[:-1], states.states[1:])
    f = model.base + np.concatenate([[0.0], np.cumsum(g)])
    return PlaAttribution(states.wafer_id, g, model.base, float(f[-1]))


def cumulative_curve(attribution, timestamps, t0):
    """Points ``(t_k, base + sum_{i<=k} alpha_i)`` for k = 0..L, starting at ``(t0, base)``."""
    alphas = np.asarray(attribution.alphas, dtype=float)
    timestamps = np.asarray(timestamps, dtype=float)
    if alphas.shape != timestamps.shape:
        raise LengthMismatch(f"{alphas.shape[0]} attributions vs {timestamps.shape[0]} timestamps")
    values = attribution.base + np.concatenate([[0.0], np.cumsum(alphas)])
    times = np.concatenate([[t0], timestamps])
    return list(zip(times.tolist(), values.tolist()))


# objective ------------------------------------------------------------

@dataclass
class PlaBatch:
    """Per-transition arrays with the weights the objective needs."""

    x: np.ndarray  # network inputs (T, 2D), already transformed
    starts: np.ndarray
    lengths: np.ndarray
    reward_w: np.ndarray  # (L - k + 1) / L per transition
    td_mask: np.ndarray  # 1 for k >= 2
    y: np.ndarray

    @property
    def n_wafers(self):
        return len(self.lengths)


def pla_batch(model, batch: TransitionBatch):
    x = model.features(batch.z_prev, batch.z_next)
    L_row = batch.row_length().astype(float)
    reward_w = (L_row - batch.position + 1.0) / L_row
    td_mask = (batch.position >= 2).astype(float)
    return PlaBatch(x, batch.starts, batch.lengths, reward_w, td_mask, batch.y)


def objective_graph(spec, theta, pb, mu, mu_td):
    """R(theta | mu) on the tape. ``theta`` holds the G parameters then ``base_raw``."""
    n = spec.n_params
    g = forward_graph(spec, theta, pb.x).reshape(-1)
    c0 = theta.block(n, ()).softplus()
    n_w = pb.n_wafers
    f_last = g.segment_sum(pb.starts) + c0
    terminal = (f_last - pb.y).square().sum() * (-0.5 / n_w)
    r = terminal
    if mu != 0:
        r = r + c0 * mu + (g * pb.reward_w).sum() * (mu / n_w)
    if mu_td != 0:
        r = r + (g.square() * pb.td_mask).sum() * (-0.5 * mu_td / n_w)
    return r


def pla_objective(model, data_or_batch, mu=None, mu_td=None, t0_policy=T0Policy(), time_scale=1.0):
    """Evaluate R (to be maximized) for ``model`` on a dataset or a TransitionBatch."""
    mu = model.mu if mu is None else mu
    mu_td = model.mu_td if mu_td is None else mu_td
    batch = data_or_batch
    if not isinstance(batch, TransitionBatch):
        _check_outcomes(batch)
        batch = TransitionBatch.from_states(batch_states(batch, t0_policy, time_scale), batch.outcomes())
    pb = pla_batch(model, batch)
    theta = Tensor(np.append(model.g_params.flat, model.base_raw))
    return float(objective_graph(model.g_spec, theta, pb, mu, mu_td).value)


def _check_outcomes(data):
    for tr in data.trajectories:
        if tr.outcome is None or not np.isfinite(tr.outcome):
            raise MissingOutcome(tr.wafer_id)


def _softplus_inv(v):
    v = max(float(v), 1e-6)
    return v + np.log(-np.expm1(-v))


def init_model(batch, config):
    """Untrained model with input standardization and output levels fitted to ``batch``."""
    dim = batch.z_prev.shape[1]
    if config.input_transform not in INPUT_TRANSFORMS:
        raise ValueError(f"unknown input transform {config.input_transform!r}")
    spec = MlpSpec(2 * dim, tuple(config.hidden), 1, "relu", config.output_activation)
    params = init_params(spec, config.seed)
    if config.context_init == "zero":
        params.layers()[0][0][:dim, :] = 0.0
    elif config.context_init != "glorot":
        raise ValueError(f"unknown context_init {config.context_init!r}")
    model = PlaModel(spec, params, 0.0, config.mu, config.mu_td, config.input_transform)
    raw = model.features(batch.z_prev, batch.z_next)
    shift = raw.mean(axis=0)
    scale = raw.std(axis=0)
    model.in_shift = shift
    model.in_scale = np.where(scale > 1e-12, scale, 1.0)
    # start with c0 at half the smallest outcome and the rest spread evenly over steps
    y = batch.y
    c0 = max(0.5 * float(np.min(y)), 1e-3)
    per_step = max(float(np.mean(y)) - c0, 1e-3) / float(np.mean(batch.lengths))
    model.base_raw = float(_softplus_inv(c0))
    if config.output_init == "zero":
        params.layers()[-1][0][:] = 0.0
    elif config.output_init != "glorot":
        raise ValueError(f"unknown output_init {config.output_init!r}")
    if config.output_activation == "softplus":
        params.layers()[-1][1][:] = _softplus_inv(per_step)
    elif config.output_activation == "relu":
        params.layers()[-1][1][:] = per_step
    return model


def train_pla(data, config=PlaConfig(), t0_policy=T0Policy(), time_scale=1.0, batch=None, callback=None):
    """Gradient ascent on R with Adam. Deterministic given ``config.seed``."""
    if batch is None:
        _check_outcomes(data)
        if len(data) < 2:
            raise ValueError("PLA needs at least two wafers")
        batch = TransitionBatch.from_states(batch_states(data, t0_policy, time_scale), data.outcomes())
    if not np.all(np.isfinite(batch.y)):
        raise MissingOutcome("<batch>")
    model = init_model(batch, config)
    spec = model.g_spec
    theta = np.append(model.g_params.flat, model.base_raw)
    state = OptimState.zeros(theta.size, lr=config.lr)
    full = pla_batch(model, batch)
    rng = np.random.default_rng([config.seed, 7])
    trace = []
    for epoch in range(config.epochs):
        if config.batch_wafers and config.batch_wafers < batch.n_wafers:
            order = rng.permutation(batch.n_wafers)
            chunks = [order[i:i + config.batch_wafers] for i in range(0, len(order), config.batch_wafers)]
            parts = [pla_batch(model, batch.select(np.sort(c))) for c in chunks]
        else:
            parts = [full]
        for pb in parts:
            leaf = Tensor(theta)
            r = objective_graph(spec, leaf, pb, config.mu, config.mu_td)
            (-r).backward()
            if not np.isfinite(float(r.value)):
                raise NonFiniteLoss(f"objective became {float(r.value)} at epoch {epoch}")
            theta, state = adam_step(theta, leaf.grad, state)
        value = float(objective_graph(spec, Tensor(theta), full, config.mu, config.mu_td).value) \
            if len(parts) > 1 else float(r.value)
        trace.append(value)
        if callback is not None:
            callback(epoch, value)
    final = float(objective_graph(spec, Tensor(theta), full, config.mu, config.mu_td).value)
    if not np.isfinite(final):
        raise NonFiniteLoss(f"objective became {final}")
    trace.append(final)
    model.g_params = ParamBundle(spec, theta[:-1].copy(), config.seed)
    model.base_raw = float(theta[-1])
    model.trace = trace
    return model


def predict_terminal(model, states):
    return float(f_values(model, states)[-1])
