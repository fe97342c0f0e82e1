"""Partial trajectory regression baseline and its difference attribution."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .batch import TransitionBatch
from .errors import IndexOutOfRange, MissingOutcome, NonFiniteLoss
from .nn import MlpSpec, OptimState, ParamBundle, adam_step, forward, forward_graph, init_params
from .trajectory import T0Policy, batch_states


@dataclass
class PtrConfig:
    eta: float = 1e-4
    hidden: tuple = ()
    lr: float = 1e-2
    epochs: int = 3000
    seed: int = 0


@dataclass
class PtrModel:
    spec: MlpSpec
    params: ParamBundle
    eta: float
    shift: np.ndarray
    scale: np.ndarray
    train_loss: float = float("nan")
    epochs: int = 0
    trace: list = field(default_factory=list)

    def predict(self, z):
        """f(z) for one state ``(D,)`` or a stack ``(n, D)``."""
        z = np.asarray(z, dtype=float)
        out = forward(self.spec, self.params, (z - self.shift) / self.scale)
        return out[..., 0]

    def effective_affine(self):
        """(w, b) of f in raw state coordinates; affine specs only."""
        if self.spec.hidden_dims:
            raise ValueError("model is not affine")
        (w, b), = self.params.layers()
        w_raw = w[:, 0] / self.scale
        return w_raw, float(b[0] - w_raw @ self.shift)

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "eta": self.eta,
            "shift": [float(v) for v in self.shift],
            "scale": [float(v) for v in self.scale],
            "train_loss": self.train_loss,
            "epochs": self.epochs,
        }

    @classmethod
    def from_dict(cls, d):
        params = ParamBundle.from_dict(d["params"])
        return cls(params.spec, params, d["eta"], np.array(d["shift"]), np.array(d["scale"]),
                   d["train_loss"], d["epochs"])


@dataclass
class PtrAttribution:
    wafer_id: str
    alphas: np.ndarray
    baseline: float
    terminal: float

    @property
    def base(self):
        return self.baseline


def _standardizer(states):
    shift = states.mean(axis=0)
    scale = states.std(axis=0)
    scale = np.where(scale > 1e-12, scale, 1.0)
    return shift, scale


def ptr_loss_graph(spec, flat, x_rows, y_rows, row_weight, n_wafers, eta, weight_mask):
    """L_PTR on the tape: (1/2N) sum_rows w (y - f)^2 + eta * ||weights||_1."""
    pred = forward_graph(spec, flat, x_rows).reshape(-1)
    resid = pred - y_rows
    fit = (resid.square() * (row_weight / (2.0 * n_wafers))).sum()
    if eta > 0:
        fit = fit + ((flat * weight_mask).abs() * eta).sum()
    return fit


def compress_affine(x_rows, y_rows, row_weight, n_wafers):
    """QR-compress the weighted least-squares part of L_PTR for an affine f.

    Returns ``(r, q, const)`` with ``sum_rows w (y - [x 1] beta)^2 / 2N ==
    ||r beta - q||^2 + const`` for every ``beta = [w; b]``.
    """
    sw = np.sqrt(row_weight / (2.0 * n_wafers))
    a = np.hstack([x_rows, np.ones((x_rows.shape[0], 1))]) * sw[:, None]
    b = y_rows * sw
    qmat, r = np.linalg.qr(a)
    q = qmat.T @ b
    return r, q, max(float(b @ b - q @ q), 0.0)


def ptr_loss_compressed(flat, r, q, const, eta, weight_mask):
    fit = (Tensor(r) @ flat - q).square().sum() + const
    if eta > 0:
        fit = fit + ((flat * weight_mask).abs() * eta).sum()
    return fit


def _check_outcomes(data):
    for tr in data.trajectories:
        if tr.outcome is None or not np.isfinite(tr.outcome):
            raise MissingOutcome(tr.wafer_id)


def prepare_ptr(data, t0_policy, time_scale):
    seqs = batch_states(data, t0_policy, time_scale)
    return TransitionBatch.from_states(seqs, data.outcomes())


def train_ptr(data, config=PtrConfig(), t0_policy=T0Policy(), time_scale=1.0, batch=None):
    """Fit f by full-batch Adam on L_PTR over all partial states z_1..z_L."""
    _check_outcomes(data)
    if len(data) < 2:
        raise ValueError("PTR needs at least two wafers")
    batch = batch or prepare_ptr(data, t0_policy, time_scale)
    shift, scale = _standardizer(batch.z_next)
    x_rows = (batch.z_next - shift) / scale
    y_rows = batch.y[batch.wafer_row]
    row_weight = 1.0 / batch.row_length()
    dim = batch.z_next.shape[1]
    spec = MlpSpec(dim, tuple(config.hidden), 1, "relu", "identity")
    params = init_params(spec, config.seed)
    mask = params.weight_mask()
    state = OptimState.zeros(spec.n_params, lr=config.lr)
    flat = params.flat.copy()
    if spec.hidden_dims:
        def loss_of(leaf):
            return ptr_loss_graph(spec, leaf, x_rows, y_rows, row_weight, batch.n_wafers, config.eta, mask)
    else:
        r, q, const = compress_affine(x_rows, y_rows, row_weight, batch.n_wafers)

        def loss_of(leaf):
            return ptr_loss_compressed(leaf, r, q, const, config.eta, mask)
    trace = []
    for _ in range(config.epochs):
        leaf = Tensor(flat)
        loss = loss_of(leaf)
        loss.backward()
        value = float(loss.value)
        if not np.isfinite(value):
            raise NonFiniteLoss(f"PTR loss became {value}")
        trace.append(value)
        flat, state = adam_step(flat, leaf.grad, state)
    final = float(ptr_loss_graph(spec, Tensor(flat), x_rows, y_rows, row_weight, batch.n_wafers,
                                 config.eta, mask).value)
    trace.append(final)
    return PtrModel(spec, ParamBundle(spec, flat, config.seed), config.eta, shift, scale,
                    final, config.epochs, trace)


def predict_ptr(model, states, k=None):
    L = states.length
    k = L if k is None else k
    if not 0 <= k <= L:
        raise IndexOutOfRange(f"k={k} outside [0, {L}]")
    return float(model.predict(states.states[k]))


def attribute_ptr(model, states):
    """alpha_k = f(z_k) - f(z_{k-1}); may be negative."""
    if states.length < 1:
        raise ValueError("attribution needs at least one step")
    f = model.predict(states.states)
    return PtrAttribution(states.wafer_id, np.diff(f), float(f[0]), float(f[-1]))
