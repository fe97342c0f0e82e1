import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_subseq_kernel
from wafer_pla.errors import DegenerateToken
from wafer_pla.jacobi import jacobi_eigh
from wafer_pla.kernel_embed import (
    KernelMatrix,
    KernelParams,
    gram_residual,
    kernel_matrix,
    spectral_embed,
    subseq_kernel,
    subseq_kernels,
)
from wafer_pla.tokenize import vocabulary_from_tokens


def test_single_common_subsequence():
    assert subseq_kernel("ab", "ab", KernelParams(p=2, decay=0.5)) == pytest.approx(0.0625, abs=1e-15)
    assert brute_subseq_kernel("ab", "ab", 2, 0.5) == pytest.approx(0.0625, abs=1e-15)


def test_reversed_pair_has_no_common_length2_subsequence():
    assert subseq_kernel("ab", "ba", KernelParams(p=2, decay=0.5)) == 0.0


def test_empty_string_is_zero():
    assert subseq_kernel("", "abc", KernelParams(p=1)) == 0.0


@pytest.mark.parametrize("bad", [dict(p=0), dict(decay=0.0), dict(decay=1.0), dict(p=1.5)])
def test_params_validated(bad):
    with pytest.raises(ValueError):
        KernelParams(**bad)


@settings(max_examples=60, deadline=None)
@given(st.text("abc|", min_size=1, max_size=8), st.text("abc|", min_size=1, max_size=8),
       st.integers(1, 3), st.floats(0.1, 0.9))
def test_dp_matches_enumeration(s, t, p, decay):
    ks = subseq_kernels(s, t, p, decay)
    for i in range(1, p + 1):
        assert abs(ks[i - 1] - brute_subseq_kernel(s, t, i, decay)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.text("abcd", min_size=3, max_size=8))
def test_self_similarity_positive(s):
    assert subseq_kernel(s, s, KernelParams(p=3)) > 0


def test_field_level_kernel_treats_values_as_symbols():
    params = KernelParams(p=2, decay=0.5, char_level=False)
    assert subseq_kernel("E1|R7", "E1|R7", params) == pytest.approx(0.5 ** 4)
    assert subseq_kernel("E1|R7", "R7|E1", params) == 0.0


def test_one_token_normalized():
    k = kernel_matrix(vocabulary_from_tokens(["abc"]), KernelParams(), normalize=True)
    np.testing.assert_array_equal(k.values, [[1.0]])


def test_duplicate_tokens_rejected():
    with pytest.raises(ValueError):
        kernel_matrix(["ab", "ab"], KernelParams())


def test_degenerate_token_under_normalization():
    with pytest.raises(DegenerateToken):
        kernel_matrix(["ab", "abcd"], KernelParams(p=3, all_lengths=False))


def test_matrix_matches_enumeration_entrywise():
    rng = np.random.default_rng(5)
    tokens = ["".join(rng.choice(list("xyz|"), size=rng.integers(3, 9))) for _ in range(3)]
    tokens = list(dict.fromkeys(tokens))
    params = KernelParams(p=3, decay=0.6, all_lengths=True)
    k = kernel_matrix(tokens, params, normalize=False).values
    for i, s in enumerate(tokens):
        for j, t in enumerate(tokens):
            ref = sum(brute_subseq_kernel(s, t, q, 0.6) for q in range(1, 4))
            assert abs(k[i, j] - ref) <= 1e-12


def test_random_vocabularies_symmetric_psd():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(2, 7))
        tokens = list(dict.fromkeys(
            "".join(rng.choice(list("abcde|"), size=rng.integers(2, 10))) for _ in range(n)))
        k = kernel_matrix(tokens, KernelParams(p=3, decay=0.5), normalize=True).values
        assert np.array_equal(k, k.T)
        np.testing.assert_allclose(np.diag(k), 1.0, atol=1e-12)
        w = np.linalg.eigvalsh(k)
        assert w.min() >= -1e-8 * w.max()


def test_jacobi_matches_numpy_eigh():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(12, 12))
    a = a + a.T
    w, v = jacobi_eigh(a)
    np.testing.assert_allclose(w, np.sort(np.linalg.eigvalsh(a))[::-1], atol=1e-9)
    np.testing.assert_allclose(v @ np.diag(w) @ v.T, a, atol=1e-9)
    np.testing.assert_allclose(v.T @ v, np.eye(12), atol=1e-10)


def test_identity_kernel_embedding():
    emb = spectral_embed(KernelMatrix(np.eye(2), True), 2)
    np.testing.assert_allclose(emb.eigenvalues, [1.0, 1.0])
    np.testing.assert_allclose(emb.vectors @ emb.vectors.T, np.eye(2), atol=1e-14)


def test_all_ones_kernel_embedding():
    # eigenpair (2, [1, 1]/sqrt 2): each row is sqrt(2) / sqrt(2) = 1
    emb = spectral_embed(KernelMatrix(np.ones((2, 2)), True), 1)
    assert emb.eigenvalues[0] == pytest.approx(2.0, abs=1e-14)
    np.testing.assert_allclose(emb.vectors, [[1.0], [1.0]], atol=1e-14)


def test_random_psd_reconstruction_at_rank():
    rng = np.random.default_rng(2)
    for _ in range(5):
        n, r = int(rng.integers(5, 30)), int(rng.integers(1, 5))
        x = rng.normal(size=(n, r))
        k = x @ x.T
        emb = spectral_embed(k, r)
        assert gram_residual(k, emb) <= 1e-8
        assert np.all(emb.eigenvalues >= 0)


def test_sign_convention_and_gram_identity():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(10, 10))
    k = x @ x.T
    emb = spectral_embed(k, 4)
    w, v = np.linalg.eigh(k)
    w, v = w[::-1][:4], v[:, ::-1][:, :4]
    np.testing.assert_allclose(emb.vectors @ emb.vectors.T, (v * w) @ v.T, rtol=1e-8, atol=1e-8)
    x_k = emb.vectors / np.sqrt(emb.eigenvalues)
    for col in x_k.T:
        assert col[np.argmax(np.abs(col))] > 0


def test_captured_energy_monotone_in_dimension():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(8, 8))
    k = x @ x.T
    energies = [spectral_embed(k, d).eigenvalues.sum() for d in range(1, 9)]
    assert all(b >= a for a, b in zip(energies, energies[1:]))


def test_dimension_bounds():
    with pytest.raises(ValueError):
        spectral_embed(np.eye(3), 4)
