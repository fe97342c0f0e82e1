"""Glue between records, vocabulary, embedding and datasets."""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .errors import UnknownToken
from .kernel_embed import KernelParams, embed_vocabulary
from .tokenize import DEFAULT_ATTRIBUTES, DEFAULT_SEPARATOR, build_vocabulary, make_token
from .trajectory import Dataset, Trajectory


def group_by_wafer(records):
    """Records per wafer in first-appearance order of wafers, sorted by step_index."""
    groups = OrderedDict()
    for rec in records:
        groups.setdefault(rec.wafer_id, []).append(rec)
    for wid in groups:
        groups[wid].sort(key=lambda r: r.step_index)
    return groups


def embed_records(records, attribute_order=DEFAULT_ATTRIBUTES, separator=DEFAULT_SEPARATOR,
                  kernel=KernelParams(), dim=16, normalize=True):
    vocab = build_vocabulary(records, attribute_order, separator)
    return vocab, embed_vocabulary(vocab, kernel, dim, normalize)


def build_dataset(records, embedding, outcomes=None, attribute_order=DEFAULT_ATTRIBUTES,
                  separator=DEFAULT_SEPARATOR):
    lookup = embedding.lookup()
    trajectories = []
    for wid, recs in group_by_wafer(records).items():
        ids = []
        for r in recs:
            tok = make_token(r, attribute_order, separator)
            if tok not in lookup:
                raise UnknownToken(f"token {tok!r} (wafer {wid!r}, step {r.step_index}) not embedded")
            ids.append(lookup[tok])
        ts = np.array([r.timestamp for r in recs], dtype=float)
        y = None if outcomes is None else outcomes.get(wid)
        trajectories.append(Trajectory(wid, np.array(ids, dtype=np.int64), ts, y))
    return Dataset(trajectories, embedding)


def kfold_indices(n, folds, seed):
    """Seeded shuffle split of wafer indices into ``folds`` contiguous groups."""
    order = np.random.default_rng([seed, 3]).permutation(n)
    return [np.sort(part) for part in np.array_split(order, folds)]
