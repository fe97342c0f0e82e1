"""CSV formats read and written by the pipeline.

Every file starts with one metadata line ``# wafer-pla kind=<kind>
config_hash=<hash>`` followed by an ordinary CSV header. Files without
the metadata line (e.g. exported straight from an MES) are accepted and
report ``config_hash=None``. Reals are written with 17 significant
digits so a read/write cycle reproduces the same bytes.
"""
from __future__ import annotations

import csv
import io as _io
import math
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .errors import CsvSchemaError, MixedConfigHash
from .tokenize import ProcessRecord

MAGIC = "# wafer-pla"
HISTORY_FIXED = ["wafer_id", "step_index", "timestamp_h"]


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _meta_line(kind, config_hash):
    return f"{MAGIC} kind={kind} config_hash={config_hash}\n"


def write_csv(path, kind, config_hash, header, rows):
    buf = _io.StringIO()
    buf.write(_meta_line(kind, config_hash))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_csv(path, required=()):
    """Returns ``(meta, header, rows)``; row numbers in errors are 1-based file lines."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines(keepends=True)
    meta, offset = {}, 0
    if lines and lines[0].startswith(MAGIC):
        for part in lines[0][len(MAGIC):].split():
            key, _, value = part.partition("=")
            meta[key] = None if value == "None" else value
        offset = 1
    reader = csv.reader(lines[offset:])
    try:
        header = next(reader)
    except StopIteration:
        raise CsvSchemaError(path, offset + 1, None, "missing header") from None
    for col in required:
        if col not in header:
            raise CsvSchemaError(path, offset + 1, col, "required column missing")
    rows = []
    for i, row in enumerate(reader):
        line = offset + 2 + i
        if not row:
            continue
        if len(row) != len(header):
            raise CsvSchemaError(path, line, None, f"expected {len(header)} fields, got {len(row)}")
        rows.append((line, dict(zip(header, row))))
    return meta, header, rows


def _parse(path, line, col, value, kind):
    try:
        if kind is int:
            out = int(value)
        else:
            out = float(value)
            if not math.isfinite(out):
                raise ValueError
        return out
    except ValueError:
        raise CsvSchemaError(path, line, col, f"cannot parse {value!r} as {kind.__name__}") from None


# history -----------------------------------------------------------

def write_history(path, records, config_hash):
    attrs = [name for name, _ in records[0].attributes] if records else []
    rows = ([r.wafer_id, r.step_index, float(r.timestamp)] + [v for _, v in r.attributes] for r in records)
    write_csv(path, "history", config_hash, HISTORY_FIXED + attrs, rows)


def read_history(path, clamp_tolerance_h=0.0):
    """Parse and validate a history file.

    Rejects duplicate ``(wafer_id, step_index)``, gaps in step_index, and
    timestamps that go backwards by more than ``clamp_tolerance_h``.
    """
    meta, header, rows = read_csv(path, HISTORY_FIXED)
    attrs = [c for c in header if c not in HISTORY_FIXED]
    records, seen, where = [], {}, {}
    for line, row in rows:
        step = _parse(path, line, "step_index", row["step_index"], int)
        if step < 1:
            raise CsvSchemaError(path, line, "step_index", "must be >= 1")
        ts = _parse(path, line, "timestamp_h", row["timestamp_h"], float)
        key = (row["wafer_id"], step)
        if key in seen:
            raise CsvSchemaError(path, line, "step_index",
                                 f"duplicate step {step} for wafer {row['wafer_id']!r} (first at line {seen[key]})")
        seen[key] = line
        where[key] = line
        records.append(ProcessRecord(row["wafer_id"], step, ts, tuple((a, row[a]) for a in attrs)))
    by_wafer = OrderedDict()
    for r in records:
        by_wafer.setdefault(r.wafer_id, []).append(r)
    for wid, recs in by_wafer.items():
        recs.sort(key=lambda r: r.step_index)
        for expect, r in enumerate(recs, start=1):
            if r.step_index != expect:
                raise CsvSchemaError(path, where[(wid, r.step_index)], "step_index",
                                     f"wafer {wid!r} skips step {expect}")
        for prev, cur in zip(recs, recs[1:]):
            if cur.timestamp < prev.timestamp - clamp_tolerance_h:
                raise CsvSchemaError(path, where[(wid, cur.step_index)], "timestamp_h",
                                     f"wafer {wid!r} goes back in time at step {cur.step_index}")
    return meta, records


# outcomes and ground truth -----------------------------------------

def write_outcomes(path, outcomes, config_hash):
    write_csv(path, "outcomes", config_hash, ["wafer_id", "log_defect_density"],
              ([wid, float(y)] for wid, y in outcomes.items()))


def read_outcomes(path):
    meta, _, rows = read_csv(path, ["wafer_id", "log_defect_density"])
    out = OrderedDict()
    for line, row in rows:
        if row["wafer_id"] in out:
            raise CsvSchemaError(path, line, "wafer_id", f"duplicate wafer {row['wafer_id']!r}")
        out[row["wafer_id"]] = _parse(path, line, "log_defect_density", row["log_defect_density"], float)
    return meta, out


def write_ground_truth(path, truth, config_hash):
    def rows():
        for wid, wt in truth.wafers.items():
            yield [wid, 0, float(wt.gamma[0]), 0]
            for k in range(1, len(wt.gamma)):
                yield [wid, k, float(wt.gamma[k]), int(wt.planted[k - 1])]

    write_csv(path, "ground_truth", config_hash, ["wafer_id", "step_index", "gamma", "planted"], rows())


def read_ground_truth(path):
    from .simgen import GroundTruth, WaferTruth

    meta, _, rows = read_csv(path, ["wafer_id", "step_index", "gamma"])
    per = OrderedDict()
    for line, row in rows:
        k = _parse(path, line, "step_index", row["step_index"], int)
        g = _parse(path, line, "gamma", row["gamma"], float)
        planted = bool(_parse(path, line, "planted", row.get("planted", "0"), int))
        per.setdefault(row["wafer_id"], {})[k] = (g, planted)
    truth = GroundTruth()
    for wid, steps in per.items():
        L = max(steps)
        if sorted(steps) != list(range(L + 1)):
            raise CsvSchemaError(path, None, "step_index", f"wafer {wid!r} has gaps in ground truth")
        gamma = np.array([steps[k][0] for k in range(L + 1)])
        planted = np.array([steps[k][1] for k in range(1, L + 1)], dtype=bool)
        truth.wafers[wid] = WaferTruth(gamma, planted, float("nan"))
    return meta, truth


# embeddings --------------------------------------------------------

def write_embeddings(path, table, config_hash):
    header = ["token"] + [f"x_{k + 1}" for k in range(table.dimension)]
    write_csv(path, "embeddings", config_hash, header,
              ([tok] + [float(v) for v in row] for tok, row in zip(table.tokens, table.vectors)))


def write_eigenvalues(path, table, config_hash):
    ratio = table.energy_ratio()
    write_csv(path, "eigenvalues", config_hash, ["k", "eigenvalue", "energy_ratio"],
              ([k + 1, float(lam), float(r)] for k, (lam, r) in enumerate(zip(table.eigenvalues, ratio))))


def read_embeddings(path):
    from .kernel_embed import EmbeddingTable

    meta, header, rows = read_csv(path, ["token"])
    cols = [c for c in header if c != "token"]
    if not cols:
        raise CsvSchemaError(path, 1, None, "no coordinate columns")
    tokens, vecs = [], []
    for line, row in rows:
        tokens.append(row["token"])
        vecs.append([_parse(path, line, c, row[c], float) for c in cols])
    if len(set(tokens)) != len(tokens):
        raise CsvSchemaError(path, None, "token", "duplicate tokens")
    vectors = np.array(vecs, dtype=float).reshape(len(tokens), len(cols))
    lam = np.sum(vectors ** 2, axis=0)
    return meta, EmbeddingTable(vectors, lam, lam, tokens)


def check_same_hash(metas):
    """Raise MixedConfigHash if the hashed inputs disagree; returns the common hash or None."""
    hashes = {m.get("config_hash") for m in metas if m.get("config_hash")}
    if len(hashes) > 1:
        raise MixedConfigHash(f"inputs come from different configs: {sorted(hashes)}")
    return hashes.pop() if hashes else None
