"""Cross-validated comparison of PTR and PLA on one dataset."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import FoldTooSmall
from .pipeline import kfold_indices
from .pla import attribute_pla, train_pla
from .ptr import attribute_ptr, train_ptr
from .simgen import score_attribution
from .trajectory import batch_states

log = logging.getLogger(__name__)

METHODS = ("ptr", "pla")


def safe_pearson(pred, y):
    """Pearson r, or None when either side has no variance."""
    pred = np.asarray(pred, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) < 2 or np.ptp(y) == 0 or np.ptp(pred) == 0:
        return None
    return float(stats.pearsonr(pred, y)[0])


@dataclass
class MethodResult:
    predictions: np.ndarray  # out-of-fold terminal predictions, dataset order
    fold_r: list
    pooled_r: object  # float or None
    chosen: list  # hyperparameter picked per fold
    alphas: dict = field(default_factory=dict)
    bases: dict = field(default_factory=dict)
    attribution: dict = None  # score_attribution output when ground truth exists


@dataclass
class EvalReport:
    config_hash: str
    n_wafers: int
    folds: list
    y: np.ndarray
    wafer_ids: list
    methods: dict
    runtime_s: dict = field(default_factory=dict)
    degenerate: bool = False


def check_folds(n, folds):
    if folds < 2:
        raise FoldTooSmall(f"need at least 2 folds, got {folds}")
    if n // folds < 2:
        raise FoldTooSmall(f"{n} wafers cannot fill {folds} folds with >= 2 wafers each")


def _inner_select(data, grid, fit, score, folds, seed):
    """Pick the grid value with the best mean inner-fold r (first wins ties)."""
    if len(grid) <= 1:
        return grid[0] if grid else None
    n = len(data)
    check_folds(n, folds)
    parts = kfold_indices(n, folds, seed)
    best, best_score = grid[0], -math.inf
    for value in grid:
        rs = []
        for test in parts:
            train = np.setdiff1d(np.arange(n), test)
            model = fit(data.subset(train), value)
            r = score(model, data.subset(test))
            rs.append(-1.0 if r is None else r)
        s = float(np.mean(rs))
        log.info("inner CV %r -> %.4f", value, s)
        if s > best_score:
            best, best_score = value, s
    return best


def evaluate(data, cfg, truth=None, clock=None):
    """Outer k-fold CV by wafer. ``clock`` (e.g. time.perf_counter) enables timing."""
    n = len(data)
    folds = cfg["cv.folds"]
    check_folds(n, folds)
    t0p, ts = cfg.t0_policy(), cfg.time_scale()
    seqs = batch_states(data, t0p, ts)
    y = data.outcomes()
    wafer_ids = [tr.wafer_id for tr in data.trajectories]
    parts = kfold_indices(n, folds, cfg.substream("folds"))
    inner_seed = cfg.substream("folds:inner")
    timing = {m: 0.0 for m in METHODS}
    tick = clock or (lambda: 0.0)

    def fit_ptr(d, eta):
        return train_ptr(d, cfg.ptr_config(eta), t0p, ts)

    def fit_pla(d, mu_td):
        return train_pla(d, cfg.pla_config(mu_td), t0p, ts)

    def score_ptr(model, d):
        return safe_pearson([model.predict(s.terminal) for s in batch_states(d, t0p, ts)], d.outcomes())

    def score_pla(model, d):
        return safe_pearson([attribute_pla(model, s).terminal for s in batch_states(d, t0p, ts)], d.outcomes())

    plans = {
        "ptr": (fit_ptr, score_ptr, list(cfg["ptr.eta_grid"]) or [cfg["ptr.eta"]], attribute_ptr),
        "pla": (fit_pla, score_pla, list(cfg["pla.mu_td_grid"]) or [cfg["pla.mu_td"]], attribute_pla),
    }
    results = {}
    for method, (fit, score, grid, attribute) in plans.items():
        pred = np.full(n, np.nan)
        fold_r, chosen, alphas, bases = [], [], {}, {}
        for fi, test in enumerate(parts):
            start = tick()
            train = np.setdiff1d(np.arange(n), test)
            train_data = data.subset(train)
            value = _inner_select(train_data, grid, fit, score, cfg["cv.inner_folds"], inner_seed + fi)
            model = fit(train_data, value)
            for i in test:
                att = attribute(model, seqs[i])
                pred[i] = att.terminal
                alphas[wafer_ids[i]] = att.alphas
                bases[wafer_ids[i]] = att.base
            fold_r.append(safe_pearson(pred[test], y[test]))
            chosen.append(value)
            timing[method] += tick() - start
            log.info("%s fold %d: r=%s", method, fi, fold_r[-1])
        res = MethodResult(pred, fold_r, safe_pearson(pred, y), chosen, alphas, bases)
        if truth is not None:
            res.attribution = score_attribution(alphas, truth, cfg["attribute.top_k"], bases,
                                                cfg.substream("ties"))
        results[method] = res
    return EvalReport(cfg.hash, n, [p.tolist() for p in parts], y, wafer_ids, results, timing,
                      bool(np.ptp(y) == 0))


# rendering -------------------------------------------------------------

def _r(v):
    return "undefined (degenerate variance)" if v is None else f"{v:.6f}"


def render_report(report):
    """Plain-text summary; contains nothing that varies between identical runs."""
    lines = [
        "wafer-pla evaluation report",
        f"config_hash: {report.config_hash}",
        f"wafers: {report.n_wafers}",
        f"folds: {len(report.folds)} (sizes {', '.join(str(len(f)) for f in report.folds)})",
    ]
    if report.degenerate:
        lines.append("warning: outcomes have zero variance; correlations are undefined")
    for method, res in report.methods.items():
        lines.append("")
        lines.append(f"[{method}]")
        lines.append(f"pooled out-of-fold pearson r: {_r(res.pooled_r)}")
        for fi, (r, c) in enumerate(zip(res.fold_r, res.chosen)):
            lines.append(f"  fold {fi}: r={_r(r)} hyper={c!r}")
        valid = [r for r in res.fold_r if r is not None]
        if valid:
            lines.append(f"mean fold r: {np.mean(valid):.6f} (sd {np.std(valid):.6f})")
        if res.attribution is not None:
            a = res.attribution
            lines.append(f"top-{a['k']} recall of planted steps: {a['topk_recall']:.6f} "
                         f"({a['n_wafers_with_planted']} wafers with planted steps)")
            lines.append(f"largest alpha on a planted step: {a['top1_planted']:.6f}")
            lines.append(f"mean per-wafer spearman(alpha, gamma): {a['spearman']:.6f}")
            lines.append(f"cumulative curve rmse: {a['curve_rmse']:.6f}")
    a, b = report.methods.get("pla"), report.methods.get("ptr")
    if a and b and a.pooled_r is not None and b.pooled_r is not None:
        lines.append("")
        lines.append(f"pla - ptr pooled r: {a.pooled_r - b.pooled_r:+.6f}")
    return "\n".join(lines) + "\n"


def fold_rows(report):
    for method, res in report.methods.items():
        for fi, (r, c) in enumerate(zip(res.fold_r, res.chosen)):
            yield [method, fi, len(report.folds[fi]), "" if r is None else r, "" if c is None else c]
        yield [method, "pooled", report.n_wafers, "" if res.pooled_r is None else res.pooled_r, ""]


def prediction_rows(report):
    fold_of = {}
    for fi, part in enumerate(report.folds):
        for i in part:
            fold_of[i] = fi
    for i, wid in enumerate(report.wafer_ids):
        yield [wid, fold_of[i], report.y[i]] + [report.methods[m].predictions[i] for m in report.methods]
