"""Small hand-built datasets shared by the model tests."""
import numpy as np

from wafer_pla.kernel_embed import EmbeddingTable
from wafer_pla.trajectory import Dataset, Trajectory


def table(vectors):
    vectors = np.asarray(vectors, dtype=float)
    return EmbeddingTable(vectors, np.ones(vectors.shape[1]), np.ones(vectors.shape[1]),
                          [f"tok{i}" for i in range(len(vectors))])


def random_dataset(rng, n=3, dim=3, vocab=5, lengths=(2, 6), outcome=None):
    emb = table(rng.normal(size=(vocab, dim)))
    trajs = []
    for i in range(n):
        L = int(rng.integers(lengths[0], lengths[1] + 1))
        ts = np.cumsum(rng.uniform(0.0, 20.0, size=L))
        y = float(rng.normal()) if outcome is None else outcome
        trajs.append(Trajectory(f"w{i}", rng.integers(vocab, size=L), ts, y))
    return Dataset(trajs, emb)


def two_wafer_fixture():
    """N=2, L=2, D=1 with psi = 1 everywhere (t0 offset 9h, 9h gaps)."""
    emb = table([[1.0], [2.0]])
    trajs = [
        Trajectory("a", [0, 1], [9.0, 18.0], 1.0),
        Trajectory("b", [1, 1], [9.0, 18.0], 3.0),
    ]
    return Dataset(trajs, emb)
