import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from iso_collapse.coherent import (coherent_projector, haar_sample_su2, impurity,
                                   invariant_uncertainty, moment_vector, random_group_element,
                                   resolution_of_identity, rotation, scs_state, sphere_sample)
from iso_collapse.lie_rep import build_spin_irrep, build_su3_irrep

from conftest import SPINS


@pytest.mark.parametrize("j", SPINS)
def test_coherent_projector_is_pure(j):
    g = build_spin_irrep(j)
    rng = np.random.default_rng(1)
    for _ in range(5):
        p = coherent_projector(g, unitary=random_group_element(g, rng))
        assert abs(impurity(g, p)) < 1e-10
        assert abs(impurity(g, 3.7 * p)) < 1e-10
    assert impurity(g, np.eye(g.dim_rep)) == pytest.approx(1.0)


@pytest.mark.parametrize("kind", ["defining", "adjoint"])
def test_su3_coherent_impurity(kind):
    g = build_su3_irrep(kind)
    rng = np.random.default_rng(2)
    p = coherent_projector(g, unitary=random_group_element(g, rng))
    assert abs(impurity(g, p)) < 1e-10
    assert impurity(g, np.eye(g.dim_rep)) == pytest.approx(1.0)


def test_spin_half_every_pure_state_is_coherent():
    g = build_spin_irrep(0.5)
    rng = np.random.default_rng(3)
    for _ in range(10):
        v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        assert abs(impurity(g, np.outer(v, v.conj()))) < 1e-12


def test_spin_one_zero_state_is_not_coherent():
    g = build_spin_irrep(1)
    e0 = np.zeros(3)
    e0[1] = 1
    assert impurity(g, np.outer(e0, e0)) == pytest.approx(1.0)


def test_impurity_rejects_bad_input():
    g = build_spin_irrep(1)
    with pytest.raises(ValueError):
        impurity(g, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        impurity(g, np.eye(2))


def test_impurity_batched_matches_loop():
    g = build_spin_irrep(1.5)
    rng = np.random.default_rng(4)
    a = rng.standard_normal((6, 4, 4)) + 1j * rng.standard_normal((6, 4, 4))
    e = a @ np.conj(np.swapaxes(a, 1, 2))
    batch = impurity(g, e)
    np.testing.assert_allclose(batch, [impurity(g, x) for x in e])
    assert np.all(batch >= -1e-12) and np.all(batch <= 1 + 1e-12)


def test_trivial_rep_impurity_is_zero():
    g = build_spin_irrep(0)
    assert impurity(g, np.eye(1)) == 0.0


def test_scs_state_moment():
    g = build_spin_irrep(2)
    theta, phi = 0.7, 1.9
    v = scs_state(g, theta, phi)
    m = moment_vector(g, np.outer(v, v.conj()))
    n = np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi),
                  math.cos(theta)])
    np.testing.assert_allclose(m, 2 * n, atol=1e-12)
    with pytest.raises(ValueError):
        scs_state(g, 4.0, 0.0)


def test_spin_half_overlap_formula():
    g = build_spin_irrep(0.5)
    a, b = scs_state(g, 0.3, 0.1), scs_state(g, 1.4, 2.2)
    na = np.array([math.sin(0.3) * math.cos(0.1), math.sin(0.3) * math.sin(0.1), math.cos(0.3)])
    nb = np.array([math.sin(1.4) * math.cos(2.2), math.sin(1.4) * math.sin(2.2), math.cos(1.4)])
    assert abs(np.vdot(a, b)) ** 2 == pytest.approx((1 + na @ nb) / 2)


@given(st.floats(0, math.pi), st.floats(0, 2 * math.pi), st.floats(0, 4 * math.pi))
def test_rotation_is_unitary(phi, theta, psi):
    g = build_spin_irrep(1.5)
    r = rotation(g, phi, theta % math.pi, psi)
    np.testing.assert_allclose(r @ r.conj().T, np.eye(4), atol=1e-12)


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3),
       st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_invariant_uncertainty_lower_bound(c, raw):
    g = build_spin_irrep(1.5)
    psi = np.array(raw, dtype=complex)
    if np.linalg.norm(psi) < 1e-3:
        return
    floor = g.casimir_eigenvalue - g.roots.highest_weight_norm2
    n2 = float(np.vdot(psi, psi).real)
    assert invariant_uncertainty(g, psi) >= floor * n2 ** 2 * (1 - 1e-10)
    hw = coherent_projector(g, coords=c)
    w, v = np.linalg.eigh(hw)
    top = v[:, -1] * 1.7
    assert invariant_uncertainty(g, top) == pytest.approx(floor * 1.7 ** 4, rel=1e-9)


def test_invariant_uncertainty_zero_vector():
    with pytest.raises(ValueError):
        invariant_uncertainty(build_spin_irrep(1), np.zeros(3))


def test_sphere_sample_is_uniform():
    rng = np.random.default_rng(5)
    theta, phi = sphere_sample(rng, 40000)
    z = np.cos(theta)
    assert abs(z.mean()) < 0.02 and abs((z ** 2).mean() - 1 / 3) < 0.01
    assert np.all((phi >= 0) & (phi < 2 * math.pi))


def test_haar_average_is_twirl():
    g = build_spin_irrep(1)
    rng = np.random.default_rng(6)
    phi, theta, psi = haar_sample_su2(rng, 4000)
    acc = np.zeros((3, 3), complex)
    for a, b, c in zip(phi, theta, psi):
        acc += coherent_projector(g, unitary=rotation(g, a, b, c))
    np.testing.assert_allclose(acc / 4000, np.eye(3) / 3, atol=0.03)


@pytest.mark.parametrize("j", [0.5, 1, 2.5, 5, 10])
def test_resolution_of_identity_exact(j):
    g = build_spin_irrep(j)
    n = int(2 * j + 1)
    res = resolution_of_identity(g, n)
    assert res.sufficient and res.residual < 1e-12
    res32 = resolution_of_identity(g, 32)
    assert res32.residual < 1e-12


def test_resolution_of_identity_undersampled():
    g = build_spin_irrep(3)
    res = resolution_of_identity(g, 3)
    assert not res.sufficient and res.residual > 1e-3
    with pytest.raises(ValueError):
        resolution_of_identity(g, 0)
    with pytest.raises(ValueError):
        resolution_of_identity(build_su3_irrep("defining"), 4)
