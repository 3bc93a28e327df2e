import numpy as np
import pytest
from hypothesis import given, strategies as st

from iso_collapse.numerics import (DegenerateSpectrumError, DimensionError, as_matrix, expm,
                                   expm_hermitian, hs_inner, svd)

from conftest import random_hermitian, random_matrix

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1.0, -1.0]).astype(complex)


def test_hs_inner_examples():
    assert hs_inner(np.eye(2), np.eye(2)) == 2
    assert hs_inner(SZ, SZ) == 2
    assert hs_inner(SX, SZ) == 0


def test_hs_inner_shape_mismatch():
    with pytest.raises(DimensionError):
        hs_inner(np.eye(2), np.eye(3))


@given(st.integers(0, 2 ** 31))
def test_hs_inner_conjugate_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = random_matrix(rng, 3), random_matrix(rng, 3)
    assert np.isclose(hs_inner(a, b), np.conj(hs_inner(b, a)))


def test_as_matrix_rejects_nonfinite_and_nonsquare():
    with pytest.raises(ValueError):
        as_matrix([[np.nan, 0], [0, 1]])
    with pytest.raises(DimensionError):
        as_matrix(np.ones((2, 3)), square=True)
    with pytest.raises(DimensionError):
        as_matrix(np.ones(3))


def test_expm_examples():
    assert np.array_equal(expm(np.zeros((3, 3))), np.eye(3))
    np.testing.assert_allclose(expm(np.diag([1j * np.pi, -1j * np.pi])), -np.eye(2), atol=1e-15)
    np.testing.assert_allclose(expm(-1j * np.pi * SY / 2), [[0, -1], [1, 0]], atol=1e-15)


def test_expm_non_square():
    with pytest.raises(DimensionError):
        expm(np.ones((2, 3)))


@pytest.mark.parametrize("norm", [1e-3, 0.2, 1.0, 5.0, 20.0, 50.0])
def test_expm_matches_eigendecomposition(rng, norm):
    h = random_hermitian(rng, 6)
    h *= norm / np.linalg.norm(h, 2)
    ref = expm_hermitian(h)
    err = np.linalg.norm(expm(h) - ref, 2) / np.linalg.norm(ref, 2)
    assert err <= 1e-12


def test_expm_skew_hermitian_is_unitary(rng):
    h = random_hermitian(rng, 5, 3.0)
    u = expm(-1j * h)
    assert np.abs(u @ u.conj().T - np.eye(5)).max() < 1e-12


@given(st.integers(0, 2 ** 31), st.floats(0.01, 10.0))
def test_expm_inverse_and_determinant(seed, scale):
    rng = np.random.default_rng(seed)
    x = random_matrix(rng, 4)
    x *= scale / np.linalg.norm(x, 2)
    e = expm(x)
    assert np.abs(e @ expm(-x) - np.eye(4)).max() <= 1e-10
    sign, logdet = np.linalg.slogdet(e)
    tr = np.trace(x)
    assert abs(logdet - tr.real) <= 1e-9 * max(1.0, abs(tr.real))
    assert np.isclose(sign, np.exp(1j * tr.imag), atol=1e-9)


def test_svd_examples():
    u, s, v = svd(np.eye(3))
    np.testing.assert_allclose(s, 1)
    _, s, _ = svd(np.diag([0.5, 2.0]))
    np.testing.assert_allclose(s, [2, 0.5])
    _, s, _ = svd(expm(np.diag([1.0, 0.0, -1.0])))
    np.testing.assert_allclose(s, [np.e, 1, 1 / np.e], rtol=1e-14)


@given(st.integers(0, 2 ** 31))
def test_svd_reconstruction_and_unitarity(seed):
    rng = np.random.default_rng(seed)
    k = random_matrix(rng, 5) + 3 * np.eye(5)
    u, s, v = svd(k)
    assert np.all(np.diff(s) <= 0)
    assert np.linalg.norm(u @ np.diag(s) @ v.conj().T - k) <= 1e-9 * np.linalg.norm(k)
    for w in (u, v):
        assert np.linalg.norm(w.conj().T @ w - np.eye(5), 2) <= 1e-10


def test_svd_rank_deficient():
    with pytest.raises(DegenerateSpectrumError):
        svd(np.diag([1.0, 0.0]))
