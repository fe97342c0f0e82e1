"""Attribution tables, per-wafer curve SVGs and summary figures."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .io import fmt, write_csv

ATTRIBUTION_HEADER = ["method", "wafer_id", "step_index", "timestamp", "alpha", "cumulative"]


def attribution_rows(method, wafer_id, attribution, timestamps, t0):
    """Step 0 carries the base level (its alpha is the base itself)."""
    alphas = np.asarray(attribution.alphas, dtype=float)
    cum = attribution.base + np.concatenate([[0.0], np.cumsum(alphas)])
    yield [method, wafer_id, 0, float(t0), float(attribution.base), float(cum[0])]
    for k, (t, a) in enumerate(zip(timestamps, alphas), start=1):
        yield [method, wafer_id, k, float(t), float(a), float(cum[k])]


def write_attributions(path, rows, config_hash):
    write_csv(path, "attribution", config_hash, ATTRIBUTION_HEADER, rows)


def _safe_name(text):
    return re.sub(r"[^A-Za-z0-9._-]", "_", text)


def curve_svg(points, title="", width=480, height=240, pad=32):
    """Polyline through ``points`` (time, value), one vertex per point."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    t, v = pts[:, 0], pts[:, 1]
    t_lo, t_hi = float(t.min()), float(t.max())
    v_lo, v_hi = float(min(v.min(), 0.0)), float(v.max())
    t_span = t_hi - t_lo or 1.0
    v_span = v_hi - v_lo or 1.0
    xs = pad + (t - t_lo) / t_span * (width - 2 * pad)
    ys = height - pad - (v - v_lo) / v_span * (height - 2 * pad)
    poly = " ".join(f"{x:.3f},{y:.3f}" for x, y in zip(xs, ys))
    esc = title.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<title>{esc}</title>\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="#888"/>\n'
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="#888"/>\n'
        f'<text x="{pad}" y="{pad - 10}" font-size="11" font-family="sans-serif">{esc}</text>\n'
        f'<text x="{width - pad}" y="{height - 8}" font-size="10" font-family="sans-serif" '
        f'text-anchor="end">t = {fmt(t_hi)} h</text>\n'
        f'<text x="4" y="{pad}" font-size="10" font-family="sans-serif">{v_hi:.4g}</text>\n'
        f'<polyline fill="none" stroke="#1f4e9a" stroke-width="1.5" points="{poly}"/>\n'
        "</svg>\n"
    )


def write_curve_svg(directory, wafer_id, points, title=""):
    path = Path(directory) / f"{_safe_name(wafer_id)}.svg"
    path.write_text(curve_svg(points, title or wafer_id), encoding="utf-8")
    return path


def svg_point_count(text):
    m = re.search(r'points="([^"]*)"', text)
    return 0 if m is None else len(m.group(1).split())


# matplotlib figures (evaluate only) ---------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    fig.savefig(path, dpi=120, metadata={"Software": None})


def plot_predictions(report, path):
    plt = _pyplot()
    methods = list(report.methods)
    fig, axes = plt.subplots(1, len(methods), figsize=(4.2 * len(methods), 4.0), squeeze=False)
    y = report.y
    lo, hi = float(np.min(y)), float(np.max(y))
    for ax, m in zip(axes[0], methods):
        res = report.methods[m]
        ax.scatter(y, res.predictions, s=6, alpha=0.5, color="#1f4e9a", linewidths=0)
        ax.plot([lo, hi], [lo, hi], color="#999", lw=0.8)
        r = "n/a" if res.pooled_r is None else f"{res.pooled_r:.3f}"
        ax.set_title(f"{m.upper()}  r = {r}")
        ax.set_xlabel("observed y")
    axes[0][0].set_ylabel("out-of-fold prediction")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def plot_curves(report, data, truth, path, n_wafers=4):
    """Cumulative attribution vs. the planted ground-truth curve for a few wafers."""
    plt = _pyplot()
    ids = [tr.wafer_id for tr in data.trajectories]
    if truth is not None:
        ranked = sorted(ids, key=lambda w: (-int(truth.wafers[w].planted.sum()), ids.index(w)))
        ids = ranked
    ids = ids[:n_wafers]
    fig, axes = plt.subplots(len(ids), 1, figsize=(6.0, 2.2 * len(ids)), squeeze=False, sharex=False)
    colors = {"ptr": "#c0504d", "pla": "#1f4e9a"}
    for ax, wid in zip(axes[:, 0], ids):
        for m, res in report.methods.items():
            a = res.alphas[wid]
            ax.plot(np.arange(len(a) + 1), res.bases[wid] + np.concatenate([[0.0], np.cumsum(a)]),
                    color=colors.get(m), lw=1.2, label=m.upper())
        if truth is not None:
            wt = truth.wafers[wid]
            ax.plot(np.arange(len(wt.gamma)), np.cumsum(wt.gamma), color="k", lw=0.9, ls="--", label="truth")
            for k in np.flatnonzero(wt.planted) + 1:
                ax.axvline(k, color="#e1a000", lw=0.6)
        ax.set_ylabel(wid)
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    axes[0, 0].legend(frameon=False, fontsize=8, ncol=3)
    axes[-1, 0].set_xlabel("step")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)
