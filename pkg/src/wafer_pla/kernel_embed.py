"""Gap-weighted subsequence kernel over tokens and spectral token embedding."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateToken
from .jacobi import jacobi_eigh
from .tokenize import DEFAULT_SEPARATOR


@dataclass(frozen=True)
class KernelParams:
    p: int = 3
    decay: float = 0.5
    char_level: bool = True
    # sum K_1 + ... + K_p instead of the single length-p kernel
    all_lengths: bool = True
    separator: str = DEFAULT_SEPARATOR

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"p must be a positive integer, got {self.p}")
        if not 0.0 < self.decay < 1.0:
            raise ValueError(f"decay must lie in (0, 1), got {self.decay}")

    def symbols(self, token):
        return token if self.char_level else token.split(self.separator)


@dataclass
class KernelMatrix:
    values: np.ndarray
    normalized: bool


@dataclass
class EmbeddingTable:
    vectors: np.ndarray  # (V_d, D)
    eigenvalues: np.ndarray  # retained, descending, clipped at 0
    all_eigenvalues: np.ndarray = None
    tokens: list = field(default_factory=list)

    @property
    def dimension(self):
        return self.vectors.shape[1]

    def energy_ratio(self):
        total = float(np.sum(self.all_eigenvalues))
        return self.eigenvalues / total if total > 0 else np.zeros_like(self.eigenvalues)

    def lookup(self):
        return {tok: i for i, tok in enumerate(self.tokens)}


def subseq_kernels(s, t, p, decay):
    """Return ``[K_1(s,t), ..., K_p(s,t)]`` for symbol sequences ``s`` and ``t``.

    K_i sums ``decay ** (span_s(u) + span_t(u))`` over every pair of
    occurrences of every common length-i (gapped) subsequence u. The usual
    DP over prefixes is used; the two geometric recursions along each
    sequence are applied as triangular matrix products.
    """
    n, m = len(s), len(t)
    out = np.zeros(p)
    if n == 0 or m == 0:
        return out
    match = np.zeros((n + 1, m + 1))
    match[1:, 1:] = np.equal.outer(np.asarray(list(s), dtype=object), np.asarray(list(t), dtype=object))
    gap_t = _decay_triangle(m + 1, decay)  # gap_t[j, b] = decay**(b-j), j <= b
    gap_s = _decay_triangle(n + 1, decay).T  # gap_s[a, a2] = decay**(a-a2), a2 <= a
    lam2 = decay * decay
    kp = np.ones((n + 1, m + 1))
    for i in range(p):
        shifted = np.zeros_like(kp)
        shifted[1:, 1:] = kp[:-1, :-1]
        inc = match * lam2 * shifted
        out[i] = inc.sum()
        if i + 1 < p:
            kp = gap_s @ (inc @ gap_t)
    return out


def _decay_triangle(size, decay):
    idx = np.arange(size)
    diff = idx[None, :] - idx[:, None]
    return np.where(diff >= 0, decay ** np.maximum(diff, 0), 0.0)


def subseq_kernel(s, t, params=KernelParams()):
    """Length-``params.p`` gap-weighted subsequence kernel (0 for empty input)."""
    ks = subseq_kernels(params.symbols(s), params.symbols(t), params.p, params.decay)
    return float(ks[-1])


def token_kernel(s, t, params):
    ks = subseq_kernels(params.symbols(s), params.symbols(t), params.p, params.decay)
    return float(ks.sum() if params.all_lengths else ks[-1])


def kernel_matrix(vocab, params=KernelParams(), normalize=True):
    tokens = list(vocab.tokens) if hasattr(vocab, "tokens") else list(vocab)
    if not tokens:
        raise ValueError("vocabulary is empty")
    if len(set(tokens)) != len(tokens):
        raise ValueError("vocabulary holds duplicate tokens")
    v = len(tokens)
    k = np.zeros((v, v))
    for i in range(v):
        for j in range(i, v):
            k[i, j] = k[j, i] = token_kernel(tokens[i], tokens[j], params)
    if normalize:
        diag = np.diag(k).copy()
        bad = np.flatnonzero(diag <= 0)
        if bad.size:
            raise DegenerateToken(f"token {tokens[bad[0]]!r} has zero self-similarity")
        root = np.sqrt(diag)
        k = k / np.outer(root, root)
        np.fill_diagonal(k, 1.0)
    return KernelMatrix(values=k, normalized=normalize)


def spectral_embed(kmat, dim, tokens=None, tol=1e-10, max_sweeps=100):
    """Embed tokens as ``x_i[k] = sqrt(lambda_k) * v_k[i]`` over the top ``dim`` eigenpairs."""
    values = kmat.values if isinstance(kmat, KernelMatrix) else np.asarray(kmat, dtype=float)
    v_d = values.shape[0]
    if not 1 <= dim <= v_d:
        raise ValueError(f"embedding dimension {dim} outside [1, {v_d}]")
    w, vecs = jacobi_eigh(values, tol=tol, max_sweeps=max_sweeps)
    w = np.clip(w, 0.0, None)
    for k in range(vecs.shape[1]):
        col = vecs[:, k]
        if col[np.argmax(np.abs(col))] < 0:
            vecs[:, k] = -col
    lam = w[:dim]
    x = vecs[:, :dim] * np.sqrt(lam)[None, :]
    return EmbeddingTable(
        vectors=x,
        eigenvalues=lam.copy(),
        all_eigenvalues=w,
        tokens=list(tokens) if tokens is not None else [],
    )


def embed_vocabulary(vocab, params=KernelParams(), dim=16, normalize=True):
    kmat = kernel_matrix(vocab, params, normalize=normalize)
    return spectral_embed(kmat, min(dim, len(vocab)), tokens=vocab.tokens)


def gram_residual(kmat_values, table):
    x = table.vectors
    return math.sqrt(float(np.sum((kmat_values - x @ x.T) ** 2))) / max(
        float(np.linalg.norm(kmat_values)), np.finfo(float).tiny
    )
