"""Command-line pipeline: simulate, embed, train, attribute, evaluate.

Each subcommand reads ``--config`` (flat ``key = value`` text) and writes
into ``--out``. Inputs are looked up in ``data_dir`` (defaults to the out
directory). On failure the process exits nonzero and prints one JSON line
``{"error": <class>, "message": ...}`` on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .config import load_config, render_defaults
from .errors import PlaError, StaleCheckpoint
from .evaluate import evaluate, fold_rows, prediction_rows, render_report
from .nn import digest, dumps_checkpoint, loads_checkpoint
from .kernel_embed import embed_vocabulary
from .pipeline import build_dataset
from .pla import PlaModel, attribute_pla, train_pla
from .ptr import PtrModel, attribute_ptr, train_ptr
from .report import attribution_rows, plot_curves, plot_predictions, write_attributions, write_curve_svg
from .simgen import generate
from .tokenize import build_vocabulary
from .trajectory import batch_states

log = logging.getLogger("wafer_pla")

HISTORY = "history.csv"
OUTCOMES = "outcomes.csv"
TRUTH = "ground_truth.csv"
EMBEDDINGS = "embeddings.csv"
EIGENVALUES = "eigenvalues.csv"


def _paths(cfg, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    data = Path(cfg["data_dir"]) if cfg["data_dir"] else out
    return data, out


def _file_digest(path):
    return digest(Path(path).read_text(encoding="utf-8"))


def _load(cfg, data_dir, outcomes=True, embeddings=True):
    metas = []
    meta, records = io.read_history(data_dir / HISTORY, cfg["time.clamp_tolerance_h"])
    metas.append(meta)
    found = {"records": records}
    if embeddings:
        meta, emb = io.read_embeddings(data_dir / EMBEDDINGS)
        metas.append(meta)
        found["embedding"] = emb
    if outcomes:
        meta, ys = io.read_outcomes(data_dir / OUTCOMES)
        metas.append(meta)
        found["outcomes"] = ys
    found["input_hash"] = io.check_same_hash(metas)
    return found


def _dataset(cfg, found):
    return build_dataset(found["records"], found["embedding"], found.get("outcomes"),
                         cfg["attribute_order"], cfg["separator"])


# commands -------------------------------------------------------------

def cmd_simulate(cfg, out):
    _, out = _paths(cfg, out)
    sim = generate(cfg.sim_config())
    io.write_history(out / HISTORY, sim.records, cfg.hash)
    io.write_outcomes(out / OUTCOMES, sim.outcomes, cfg.hash)
    io.write_ground_truth(out / TRUTH, sim.truth, cfg.hash)
    print(f"simulated {len(sim.outcomes)} wafers, {len(sim.records)} steps -> {out}")


def cmd_embed(cfg, out):
    data_dir, out = _paths(cfg, out)
    meta, records = io.read_history(data_dir / HISTORY, cfg["time.clamp_tolerance_h"])
    vocab = build_vocabulary(records, cfg["attribute_order"], cfg["separator"])
    dim = cfg["embed.dim"]
    if dim > len(vocab):
        log.warning("embed.dim=%d exceeds V_d=%d; using D=V_d", dim, len(vocab))
        dim = len(vocab)
    table = embed_vocabulary(vocab, cfg.kernel_params(), dim, cfg["kernel.normalize"])
    io.write_embeddings(out / EMBEDDINGS, table, cfg.hash)
    io.write_eigenvalues(out / EIGENVALUES, table, cfg.hash)
    energy = float(np.sum(table.energy_ratio()))
    log.info("V_d=%d D=%d energy=%.6f", len(vocab), table.dimension, energy)
    print(f"V_d={len(vocab)} D={table.dimension} retained_energy={energy:.6f}")


def _train(method, cfg, data):
    if method == "ptr":
        return train_ptr(data, cfg.ptr_config(), cfg.t0_policy(), cfg.time_scale())
    return train_pla(data, cfg.pla_config(), cfg.t0_policy(), cfg.time_scale())


def cmd_train(cfg, out, method):
    data_dir, out = _paths(cfg, out)
    found = _load(cfg, data_dir)
    data = _dataset(cfg, found)
    model = _train(method, cfg, data)
    payload = {
        "method": method,
        "config_hash": cfg.hash,
        "input_hash": found["input_hash"],
        "embeddings_digest": _file_digest(data_dir / EMBEDDINGS),
        "model": model.to_dict(),
    }
    ckpt = out / f"checkpoint_{method}.json"
    ckpt.write_text(dumps_checkpoint(payload), encoding="utf-8")
    label = "loss" if method == "ptr" else "objective"
    io.write_csv(out / f"trace_{method}.csv", "trace", cfg.hash, ["epoch", label],
                 ([i, float(v)] for i, v in enumerate(model.trace)))
    final = model.train_loss if method == "ptr" else model.trace[-1]
    print(f"{method}: trained {len(data)} wafers, final {label} {final:.6g} -> {ckpt}")


def load_model(path, method, cfg):
    body = loads_checkpoint(Path(path).read_text(encoding="utf-8"))
    if body.get("method") != method:
        raise StaleCheckpoint(f"checkpoint is for {body.get('method')!r}, not {method!r}")
    if body.get("config_hash") != cfg.hash:
        raise StaleCheckpoint(f"checkpoint config_hash {body.get('config_hash')} != current {cfg.hash}")
    cls = PtrModel if method == "ptr" else PlaModel
    return cls.from_dict(body["model"]), body


def cmd_attribute(cfg, out, method, checkpoint=None):
    data_dir, out = _paths(cfg, out)
    model, body = load_model(checkpoint or out / f"checkpoint_{method}.json", method, cfg)
    if body.get("embeddings_digest") != _file_digest(data_dir / EMBEDDINGS):
        raise StaleCheckpoint("embeddings changed since the checkpoint was trained")
    found = _load(cfg, data_dir, outcomes=False)
    data = _dataset(cfg, found)
    seqs = batch_states(data, cfg.t0_policy(), cfg.time_scale())
    attribute = attribute_ptr if method == "ptr" else attribute_pla
    svg_dir = out / f"curves_{method}"
    if cfg["report.svg"]:
        svg_dir.mkdir(exist_ok=True)
    rows = []
    for tr, seq in zip(data.trajectories, seqs):
        att = attribute(model, seq)
        wafer_rows = list(attribution_rows(method, tr.wafer_id, att, tr.timestamps, seq.t0))
        rows.extend(wafer_rows)
        if cfg["report.svg"]:
            points = [(r[3], r[5]) for r in wafer_rows]
            write_curve_svg(svg_dir, tr.wafer_id, points, f"{method.upper()} {tr.wafer_id}")
    write_attributions(out / f"attribution_{method}.csv", rows, cfg.hash)
    print(f"{method}: attributed {len(data)} wafers -> {out / f'attribution_{method}.csv'}")


def cmd_evaluate(cfg, out):
    data_dir, out = _paths(cfg, out)
    if not (data_dir / EMBEDDINGS).exists():
        raise FileNotFoundError(f"{data_dir / EMBEDDINGS} missing; run `embed` first")
    found = _load(cfg, data_dir)
    truth = None
    if (data_dir / TRUTH).exists():
        meta, truth = io.read_ground_truth(data_dir / TRUTH)
        io.check_same_hash([meta, {"config_hash": found["input_hash"]}])
    data = _dataset(cfg, found)
    started = time.perf_counter()
    report = evaluate(data, cfg, truth, clock=time.perf_counter)
    elapsed = time.perf_counter() - started
    text = render_report(report)
    (out / "report.txt").write_text(text, encoding="utf-8")
    io.write_csv(out / "eval_folds.csv", "eval_folds", cfg.hash, ["method", "fold", "n_wafers", "pearson_r", "hyper"],
                 fold_rows(report))
    io.write_csv(out / "eval_predictions.csv", "eval_predictions", cfg.hash,
                 ["wafer_id", "fold", "y"] + [f"pred_{m}" for m in report.methods], prediction_rows(report))
    if truth is not None:
        rows = []
        for m, res in report.methods.items():
            for key in ("topk_recall", "top1_planted", "spearman", "curve_rmse", "n_wafers", "n_wafers_with_planted", "k"):
                rows.append([m, key, res.attribution[key]])
        io.write_csv(out / "eval_attribution.csv", "eval_attribution", cfg.hash, ["method", "metric", "value"], rows)
    timing = {"total_s": round(elapsed, 3)} | {f"{m}_s": round(v, 3) for m, v in report.runtime_s.items()}
    (out / "timing.json").write_text(json.dumps(timing, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    if cfg["report.figures"]:
        plot_predictions(report, out / "eval_predictions.png")
        plot_curves(report, data, truth, out / "eval_curves.png")
    sys.stdout.write(text)
    print(f"runtime: {elapsed:.1f} s")
    return report


# entry point ------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="wafer-pla", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key = value config file (defaults apply if omitted)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")

    common(sub.add_parser("simulate", help="generate a synthetic dataset with planted causes"))
    common(sub.add_parser("embed", help="tokenize the history and write token embeddings"))
    sp = sub.add_parser("train", help="fit PTR or PLA and write a checkpoint")
    common(sp)
    sp.add_argument("--method", choices=("ptr", "pla"), required=True)
    sp = sub.add_parser("attribute", help="per-step attributions and cumulative curves")
    common(sp)
    sp.add_argument("--method", choices=("ptr", "pla"), required=True)
    sp.add_argument("--checkpoint", help="defaults to <out>/checkpoint_<method>.json")
    common(sub.add_parser("evaluate", help="cross-validated comparison of PTR and PLA"))
    sub.add_parser("defaults", help="print every config key with its default")
    return p


def _overrides(items):
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "defaults":
        sys.stdout.write(render_defaults())
        return None
    cfg = load_config(args.config, _overrides(args.set))
    if args.command == "simulate":
        return cmd_simulate(cfg, args.out)
    if args.command == "embed":
        return cmd_embed(cfg, args.out)
    if args.command == "train":
        return cmd_train(cfg, args.out, args.method)
    if args.command == "attribute":
        return cmd_attribute(cfg, args.out, args.method, args.checkpoint)
    return cmd_evaluate(cfg, args.out)


def main(argv=None):
    try:
        run(argv)
    except (PlaError, ValueError, OSError, KeyError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2 if isinstance(exc, PlaError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
