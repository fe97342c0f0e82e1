"""MLP layers, Adam and gradient checking on top of :mod:`autodiff`."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import InvalidStep, ShapeMismatch

ACTIVATIONS = ("identity", "relu", "softplus")


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_dims: tuple = ()
    output_dim: int = 1
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.hidden_activation != "relu":
            raise ValueError("only relu hidden layers are supported")
        if self.output_activation not in ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        if min((self.input_dim, self.output_dim) + self.hidden_dims) < 1:
            raise ValueError("layer widths must be positive")

    @property
    def widths(self):
        return (self.input_dim,) + self.hidden_dims + (self.output_dim,)

    def layer_shapes(self):
        w = self.widths
        return [((w[i], w[i + 1]), (w[i + 1],)) for i in range(len(w) - 1)]

    @property
    def n_params(self):
        return sum(a * b + b for (a, b), _ in self.layer_shapes())

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "output_dim": self.output_dim,
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["input_dim"], tuple(d["hidden_dims"]), d["output_dim"],
                   d["hidden_activation"], d["output_activation"])


@dataclass
class ParamBundle:
    spec: MlpSpec
    flat: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.flat = np.asarray(self.flat, dtype=float)
        if self.flat.shape != (self.spec.n_params,):
            raise ShapeMismatch(f"expected {self.spec.n_params} parameters, got {self.flat.shape}")

    def layers(self, flat=None):
        """(W, b) numpy views per layer."""
        flat = self.flat if flat is None else flat
        out, pos = [], 0
        for wshape, bshape in self.spec.layer_shapes():
            nw = wshape[0] * wshape[1]
            w = flat[pos:pos + nw].reshape(wshape)
            pos += nw
            b = flat[pos:pos + bshape[0]]
            pos += bshape[0]
            out.append((w, b))
        return out

    def weight_mask(self):
        """1 for weight entries, 0 for biases."""
        mask = np.zeros_like(self.flat)
        pos = 0
        for wshape, bshape in self.spec.layer_shapes():
            nw = wshape[0] * wshape[1]
            mask[pos:pos + nw] = 1.0
            pos += nw + bshape[0]
        return mask

    def copy(self):
        return ParamBundle(self.spec, self.flat.copy(), self.seed)

    def to_dict(self):
        return {"spec": self.spec.to_dict(), "seed": self.seed, "flat": [float(v) for v in self.flat]}

    @classmethod
    def from_dict(cls, d):
        return cls(MlpSpec.from_dict(d["spec"]), np.array(d["flat"], dtype=float), int(d["seed"]))


def init_params(spec, seed):
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    parts = []
    for (fan_in, fan_out), (nb,) in spec.layer_shapes():
        a = np.sqrt(6.0 / (fan_in + fan_out))
        parts.append(rng.uniform(-a, a, size=fan_in * fan_out))
        parts.append(np.zeros(nb))
    return ParamBundle(spec, np.concatenate(parts), seed)


def _activate(name, h):
    if name == "relu":
        return np.maximum(h, 0.0)
    if name == "softplus":
        return np.logaddexp(0.0, h)
    return h


def forward(spec, params, x):
    """Evaluate the network on a vector ``(input_dim,)`` or a batch ``(n, input_dim)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.input_dim:
        raise ShapeMismatch(f"input has {x.shape[-1]} features, expected {spec.input_dim}")
    layers = params.layers()
    h = x
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        h = _activate(spec.hidden_activation if i < len(layers) - 1 else spec.output_activation, h)
    return h


def forward_graph(spec, flat, x):
    """Same network as :func:`forward`, built on the autodiff tape from a flat leaf tensor."""
    xv = x.value if isinstance(x, Tensor) else np.asarray(x, dtype=float)
    if xv.shape[-1] != spec.input_dim:
        raise ShapeMismatch(f"input has {xv.shape[-1]} features, expected {spec.input_dim}")
    h = x if isinstance(x, Tensor) else Tensor(xv)
    shapes = spec.layer_shapes()
    pos = 0
    for i, (wshape, bshape) in enumerate(shapes):
        w = flat.block(pos, wshape)
        pos += wshape[0] * wshape[1]
        b = flat.block(pos, bshape)
        pos += bshape[0]
        h = h @ w + b
        act = spec.hidden_activation if i < len(shapes) - 1 else spec.output_activation
        if act == "relu":
            h = h.relu()
        elif act == "softplus":
            h = h.softplus()
    return h


@dataclass
class OptimState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(np.zeros(n), np.zeros(n), 0, lr, beta1, beta2, eps)


def adam_step(params, grads, state):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``; inputs are not mutated."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeMismatch(f"params {params.shape}, grads {grads.shape}, state {state.m.shape}")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, OptimState(m, v, t, state.lr, state.beta1, state.beta2, state.eps)


def finite_diff_check(spec, params, loss_fn, h=1e-5, max_params=10_000, seed=0, atol=1e-6):
    """Largest relative gap between autodiff and central-difference gradients.

    ``loss_fn`` maps a flat parameter :class:`Tensor` to a scalar Tensor.
    Per-coordinate error is ``|a - n| / max(|a|, |n|, atol)``. Above
    ``max_params`` a seeded random subset of coordinates is checked.
    """
    if not h > 0:
        raise InvalidStep(f"step must be positive, got {h}")
    flat0 = np.asarray(params.flat if isinstance(params, ParamBundle) else params, dtype=float)
    leaf = Tensor(flat0.copy())
    loss = loss_fn(leaf)
    loss.backward()
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(flat0)
    idx = np.arange(flat0.size)
    if flat0.size > max_params:
        idx = np.sort(np.random.default_rng(seed).choice(flat0.size, max_params, replace=False))
    worst = 0.0
    for i in idx:
        up = flat0.copy()
        up[i] += h
        dn = flat0.copy()
        dn[i] -= h
        num = (float(loss_fn(Tensor(up)).value) - float(loss_fn(Tensor(dn)).value)) / (2.0 * h)
        a = float(analytic[i])
        err = abs(a - num) / max(abs(a), abs(num), atol)
        worst = max(worst, err)
    return worst


# checkpoints ---------------------------------------------------------

CHECKPOINT_FORMAT = "wafer-pla-checkpoint"
CHECKPOINT_VERSION = 1


def dumps_checkpoint(payload):
    body = dict(payload)
    body["format"] = CHECKPOINT_FORMAT
    body["version"] = CHECKPOINT_VERSION
    return json.dumps(body, sort_keys=True, indent=1) + "\n"


def loads_checkpoint(text):
    body = json.loads(text)
    if body.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a wafer-pla checkpoint")
    if body.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {body.get('version')}")
    return body


def digest(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]
