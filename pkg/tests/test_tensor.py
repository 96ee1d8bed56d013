import numpy as np
import pytest

from transmon_dmrg.tensor import contract, qr_split, svd_split


def test_contract_identity_with_vector():
    eye = np.eye(2, dtype=complex)
    vec = np.array([1.0, 2.0], dtype=complex)
    out = contract(eye, vec, [(1, 0)])
    np.testing.assert_allclose(out, [1.0, 2.0])


def test_contract_vector_with_conjugate():
    v = np.array([1.0, 1j])
    out = contract(v.conj(), v, [(0, 0)])
    assert out == pytest.approx(2.0)


def test_contract_matches_triple_loop(rng):
    a = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 5)) + 1j * rng.standard_normal((4, 5))
    out = contract(a, b, [(1, 0)])
    expected = np.zeros((3, 5), dtype=complex)
    for i in range(3):
        for j in range(5):
            for k in range(4):
                expected[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(out, expected, atol=1e-13)


def test_contract_axis_order_is_a_then_b(rng):
    a = rng.standard_normal((2, 3, 4))
    b = rng.standard_normal((4, 5, 3))
    out = contract(a, b, [(2, 0), (1, 2)])
    assert out.shape == (2, 5)


def test_contract_errors():
    a = np.zeros((2, 3))
    b = np.zeros((4, 2))
    with pytest.raises(ValueError, match="extent mismatch"):
        contract(a, b, [(1, 1)])
    with pytest.raises(ValueError, match="out of range"):
        contract(a, b, [(5, 0)])
    with pytest.raises(ValueError, match="duplicate"):
        contract(a, b, [(0, 0), (0, 1)])


def test_svd_rank_one():
    m = np.outer([1.0, 0.0], [0.0, 1.0])
    u, s, v, w = svd_split(m, (0,), chi_max=4)
    np.testing.assert_allclose(s, [1.0], atol=1e-14)
    assert w == 0.0


def test_svd_identity_half_weight_dropped():
    u, s, v, w = svd_split(np.eye(2, dtype=complex), (0,), chi_max=1)
    np.testing.assert_allclose(s, [1.0])
    assert w == pytest.approx(0.5)


def test_svd_reconstruction(rng):
    m = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    u, s, v, w = svd_split(m, (0,), chi_max=8)
    rec = (u * s[None, :]) @ v
    assert np.max(np.abs(rec - m)) <= 1e-12
    assert w == 0.0


def test_svd_reconstruction_full_rank_tensor(rng):
    t = rng.standard_normal((3, 4, 5)) + 1j * rng.standard_normal((3, 4, 5))
    u, s, v, w = svd_split(t, (0, 1), chi_max=None)
    rec = np.tensordot(u * s[None, None, :], v, axes=([2], [0]))
    assert np.linalg.norm(rec - t) <= 1e-10 * np.linalg.norm(t)
    assert 0.0 <= w <= 1.0 and w == 0.0


def test_svd_discarded_weight_range(rng):
    t = rng.standard_normal((6, 6))
    _, s_full, _, _ = svd_split(t, (0,), chi_max=None)
    _, s, _, w = svd_split(t, (0,), chi_max=2)
    assert 0.0 <= w <= 1.0
    expected = float(np.sum(s_full[2:] ** 2) / np.sum(s_full**2))
    assert w == pytest.approx(expected, rel=1e-10)


def test_svd_gauge_idempotent(rng):
    t = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    u1, s1, v1, _ = svd_split(t, (0,), chi_max=None)
    rec = (u1 * s1[None, :]) @ v1
    u2, s2, v2, _ = svd_split(rec, (0,), chi_max=None)
    assert np.max(np.abs(u1 - u2)) <= 1e-12
    assert np.max(np.abs(v1 - v2)) <= 1e-12


def test_contract_bilinearity(rng):
    a = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
    alpha = 0.7 - 1.3j
    np.testing.assert_allclose(
        contract(alpha * a, b, [(1, 0)]), alpha * contract(a, b, [(1, 0)]), atol=1e-13
    )


def test_svd_errors():
    with pytest.raises(ValueError, match="chi_max"):
        svd_split(np.eye(2), (0,), chi_max=0)
    with pytest.raises(ValueError, match="non-finite"):
        svd_split(np.array([[np.nan, 0], [0, 1]]), (0,), chi_max=2)
    with pytest.raises(ValueError, match="proper subset"):
        svd_split(np.eye(2), (0, 1), chi_max=2)


def test_qr_identity():
    q, r = qr_split(np.eye(3, dtype=complex), (0,))
    np.testing.assert_allclose(q, np.eye(3), atol=1e-14)
    np.testing.assert_allclose(r, np.eye(3), atol=1e-14)


def test_qr_column_vector_three_four_five():
    q, r = qr_split(np.array([[3.0], [4.0]]), (0,))
    np.testing.assert_allclose(r, [[5.0]], atol=1e-14)
    np.testing.assert_allclose(q[:, 0], [0.6, 0.8], atol=1e-14)


def test_qr_orthonormal_columns(rng):
    t = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
    q, r = qr_split(t, (0,))
    gram = q.conj().T @ q
    assert np.max(np.abs(gram - np.eye(3))) <= 1e-12
    np.testing.assert_allclose(q @ r, t, atol=1e-12)
