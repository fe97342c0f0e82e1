"""Synthetic fab histories with planted long-wait root causes.

Every wafer gets a variable-length route over a catalog of tools. The
defect outcome is additive over steps: a small smooth term in the
log-wait at every step, plus a planted effect whenever a designated tool
was entered after waiting at least its threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import InvalidConfig, LengthMismatch
from .tokenize import ProcessRecord

TOOL_TYPES = ("WET", "RTP", "INSP", "LITH", "RIE", "IMP", "FURN", "CMP")


@dataclass(frozen=True)
class PlantedCause:
    tool_id: int
    wait_threshold_h: float
    effect: float


@dataclass
class SimConfig:
    n_wafers: int = 787
    route_length_range: tuple = (50, 200)
    n_tools: int = 32
    recipes_per_tool: int = 2
    n_routes: int = 2
    wait_log_mu: float = math.log(2.0)
    wait_log_sigma: float = 1.0
    planted_causes: tuple = (PlantedCause(3, 24.0, 1.0), PlantedCause(18, 24.0, 0.8))
    anomaly_rate: float = 0.15
    anomaly_log_mu: float = math.log(60.0)
    anomaly_log_sigma: float = 0.4
    smooth_coef: float = 0.05
    base: float = 0.5
    noise_sigma: float = 0.1
    first_wait_h: float = 1.0
    signed_contributions: bool = False
    rng_seed: int = 42

    def validate(self):
        lo, hi = self.route_length_range
        if self.n_wafers < 0:
            raise InvalidConfig("n_wafers must be >= 0")
        if lo < 1 or hi < lo:
            raise InvalidConfig(f"bad route_length_range {self.route_length_range}")
        if self.n_tools < 1 or self.recipes_per_tool < 1 or self.n_routes < 1:
            raise InvalidConfig("catalog sizes must be positive")
        if self.wait_log_sigma < 0 or self.anomaly_log_sigma < 0 or self.noise_sigma < 0:
            raise InvalidConfig("spreads must be non-negative")
        if not 0.0 <= self.anomaly_rate <= 1.0:
            raise InvalidConfig("anomaly_rate must lie in [0, 1]")
        for c in self.planted_causes:
            if not 0 <= c.tool_id < self.n_tools:
                raise InvalidConfig(f"planted tool {c.tool_id} outside catalog")
            if not (math.isfinite(c.effect) and math.isfinite(c.wait_threshold_h)):
                raise InvalidConfig("planted cause values must be finite")
        if self.rng_seed is None:
            raise InvalidConfig("rng_seed is mandatory")


@dataclass
class WaferTruth:
    gamma: np.ndarray  # (L+1,), gamma[0] is the base level
    planted: np.ndarray  # (L,) bool
    noise: float

    @property
    def clean_outcome(self):
        return float(self.gamma[0] + math.fsum(self.gamma[1:]))


@dataclass
class GroundTruth:
    wafers: dict = field(default_factory=dict)  # wafer_id -> WaferTruth


@dataclass
class SimResult:
    records: list
    outcomes: dict  # wafer_id -> y
    truth: GroundTruth

    @property
    def wafer_ids(self):
        return list(self.outcomes)


def tool_attributes(tool, recipe, route):
    ttype = TOOL_TYPES[tool % len(TOOL_TYPES)]
    return (
        ("eqp", f"EQ{tool:02d}"),
        ("recipe", f"{ttype}-R{tool:02d}.{recipe}"),
        ("tool_type", ttype),
        ("photo_layer", f"PL{tool // len(TOOL_TYPES):02d}"),
        ("route", f"RT{route}"),
    )


def generate(config=None):
    cfg = config or SimConfig()
    cfg.validate()
    lo, hi = cfg.route_length_range
    planted = {c.tool_id: c for c in cfg.planted_causes}
    tool_coef = np.full(cfg.n_tools, cfg.smooth_coef)
    if cfg.signed_contributions:
        tool_coef = np.random.default_rng([cfg.rng_seed, 1]).normal(0.0, cfg.smooth_coef, cfg.n_tools)
    children = np.random.SeedSequence(cfg.rng_seed).spawn(cfg.n_wafers)
    records, outcomes, truth = [], {}, GroundTruth()
    width = max(4, len(str(cfg.n_wafers)))
    for n, child in enumerate(children):
        rng = np.random.default_rng(child)
        wid = f"W{n:0{width}d}"
        length = int(rng.integers(lo, hi + 1))
        route = int(rng.integers(cfg.n_routes))
        tools = rng.integers(cfg.n_tools, size=length)
        recipes = rng.integers(cfg.recipes_per_tool, size=length)
        waits = rng.lognormal(cfg.wait_log_mu, cfg.wait_log_sigma, size=length)
        tails = rng.lognormal(cfg.anomaly_log_mu, cfg.anomaly_log_sigma, size=length)
        hit = rng.random(length) < cfg.anomaly_rate
        is_planted_tool = np.array([t in planted for t in tools])
        waits = np.where(hit & is_planted_tool, tails, waits)
        waits[0] = cfg.first_wait_h
        noise = float(rng.normal(0.0, cfg.noise_sigma)) if cfg.noise_sigma > 0 else 0.0
        start = float(rng.uniform(1.0, 2000.0))

        gamma = np.zeros(length + 1)
        gamma[0] = cfg.base
        flags = np.zeros(length, dtype=bool)
        gamma[1:] = tool_coef[tools] * np.log10(1.0 + waits)
        for k in range(1, length):
            cause = planted.get(int(tools[k]))
            if cause is not None and waits[k] >= cause.wait_threshold_h:
                gamma[k + 1] += cause.effect
                flags[k] = True
        ts = start + np.concatenate([[0.0], np.cumsum(waits[1:])])
        for k in range(length):
            records.append(ProcessRecord(wid, k + 1, float(ts[k]),
                                         tool_attributes(int(tools[k]), int(recipes[k]), route)))
        wt = WaferTruth(gamma, flags, noise)
        truth.wafers[wid] = wt
        outcomes[wid] = wt.clean_outcome + noise
    return SimResult(records, outcomes, truth)


def _topk_recall(alpha, planted, k, rng):
    n_planted = int(planted.sum())
    if n_planted == 0:
        return None
    order = np.lexsort((rng.random(len(alpha)), -np.asarray(alpha)))
    top = order[:k]
    return float(planted[top].sum()) / min(n_planted, k)


def score_attribution(alphas, truth, k=5, bases=None, seed=0):
    """Compare per-wafer attributions with the planted ground truth.

    ``alphas`` maps wafer id to an (L,) array; ``bases`` optionally maps
    wafer id to the attribution's starting level, compared against the
    true base. Returns top-``k`` recall of planted steps (ties broken at
    random), the share of wafers whose largest alpha sits on a planted
    step, mean per-wafer Spearman correlation and RMSE between the
    cumulative curves.
    """
    rng = np.random.default_rng(seed)
    recalls, top1, rhos, sq, count = [], [], [], 0.0, 0
    for wid, alpha in alphas.items():
        wt = truth.wafers[wid]
        alpha = np.asarray(alpha, dtype=float)
        gamma = wt.gamma[1:]
        if alpha.shape != gamma.shape:
            raise LengthMismatch(f"wafer {wid}: {alpha.shape[0]} attributions vs {gamma.shape[0]} steps")
        r = _topk_recall(alpha, wt.planted, k, rng)
        if r is not None:
            recalls.append(r)
            top1.append(float(wt.planted[int(np.argmax(alpha))]))
        if len(alpha) >= 2 and np.ptp(alpha) > 0 and np.ptp(gamma) > 0:
            rhos.append(float(stats.spearmanr(alpha, gamma)[0]))
        base_a = 0.0 if bases is None else float(bases[wid])
        base_g = 0.0 if bases is None else float(wt.gamma[0])
        ca = base_a + np.concatenate([[0.0], np.cumsum(alpha)])
        cg = base_g + np.concatenate([[0.0], np.cumsum(gamma)])
        sq += float(np.sum((ca - cg) ** 2))
        count += len(ca)
    return {
        "topk_recall": float(np.mean(recalls)) if recalls else float("nan"),
        "top1_planted": float(np.mean(top1)) if top1 else float("nan"),
        "spearman": float(np.mean(rhos)) if rhos else float("nan"),
        "curve_rmse": math.sqrt(sq / count) if count else float("nan"),
        "n_wafers": len(alphas),
        "n_wafers_with_planted": len(recalls),
        "k": k,
    }
