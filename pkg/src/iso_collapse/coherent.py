"""Coherent states, coherent-state POVM quadrature and impurity functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lie_rep import GeneratorSet
from .numerics import expm

__all__ = [
    "scs_state",
    "rotation",
    "coherent_projector",
    "moment_vector",
    "impurity",
    "invariant_uncertainty",
    "sphere_sample",
    "haar_sample_su2",
    "random_group_element",
    "ResolutionResult",
    "resolution_of_identity",
]


def _spin_only(gen: GeneratorSet):
    if gen.group != "su2":
        raise ValueError("operation defined for su2 generator sets only")


def rotation(gen: GeneratorSet, phi: float, theta: float, psi: float = 0.0) -> np.ndarray:
    """``exp(-i phi Jz) exp(-i theta Jy) exp(-i psi Jz)`` in the spin-j irrep."""
    _spin_only(gen)
    jy, jz = gen.generators[1], gen.generators[2]
    mz = np.diag(jz).real
    return (np.exp(-1j * phi * mz)[:, None] * expm(-1j * theta * jy)
            * np.exp(-1j * psi * mz)[None, :])


def scs_state(gen: GeneratorSet, theta: float, phi: float) -> np.ndarray:
    """Spin-coherent state pointing along ``(theta, phi)``.

    Examples
    --------
    >>> from iso_collapse.lie_rep import build_spin_irrep
    >>> g = build_spin_irrep(0.5)
    >>> abs(np.vdot(scs_state(g, 0, 0), scs_state(g, np.pi / 2, 0))) ** 2  # doctest: +ELLIPSIS
    0.5000...
    """
    if not (0 <= theta <= math.pi + 1e-12):
        raise ValueError(f"theta must lie in [0, pi], got {theta}")
    return rotation(gen, phi, theta)[:, 0]


def coherent_projector(gen: GeneratorSet, coords=None, unitary=None) -> np.ndarray:
    """``U |lambda><lambda| U^dagger`` for a group element.

    The element is given either as exponential coordinates ``c`` with
    ``U = exp(-i c.X)`` or directly as ``unitary``.
    """
    if unitary is None:
        c = np.zeros(gen.dim_alg) if coords is None else np.asarray(coords, float)
        unitary = expm(-1j * gen.combine(c))
    v = unitary @ gen.highest_weight_state()
    return np.outer(v, v.conj())


def moment_vector(gen: GeneratorSet, E) -> np.ndarray:
    """Normalized generator expectations ``(E|X_mu) / (E|1)``.

    ``E`` may be a single matrix or a stack with the matrix in the last two
    axes.
    """
    E = np.asarray(E, dtype=np.complex128)
    tr = np.trace(E, axis1=-2, axis2=-1).real
    m = np.einsum("...ij,mji->...m", E, gen.generators).real
    return m / tr[..., None]


def impurity(gen: GeneratorSet, E) -> np.ndarray | float:
    """Scale-invariant impurity of a positive operator.

    ``1 - (E|X_mu) g^{mu nu} (X_nu|E) / ((E|1)^2 |lambda|^2)``. Vanishes
    exactly on coherent projectors and equals 1 on the identity. Accepts a
    stack of operators.
    """
    E = np.asarray(E, dtype=np.complex128)
    if E.ndim < 2 or E.shape[-1] != E.shape[-2] or E.shape[-1] != gen.dim_rep:
        raise ValueError(f"expected ({gen.dim_rep}, {gen.dim_rep}) operators, got {E.shape}")
    tr = np.trace(E, axis1=-2, axis2=-1).real
    if np.any(~(tr > 0)):
        raise ValueError("impurity needs a nonzero positive operator")
    lam2 = gen.roots.highest_weight_norm2
    if lam2 == 0.0:
        # trivial representation: every state is coherent
        out = np.zeros(tr.shape)
        return float(out) if np.ndim(out) == 0 else out
    m = moment_vector(gen, E)
    q = np.einsum("...m,mn,...n->...", m, gen.metric_inverse, m)
    out = 1.0 - q / lam2
    return float(out) if np.ndim(out) == 0 else out


def invariant_uncertainty(gen: GeneratorSet, psi) -> float:
    """``<psi|psi><psi|X^2|psi> - <psi|X|psi>^2`` for an unnormalized state.

    Homogeneous of degree four in ``psi``; bounded below by
    ``(C - |lambda|^2) <psi|psi>^2``, ``C`` the Casimir eigenvalue, with
    equality exactly on coherent states.
    """
    psi = np.asarray(psi, dtype=np.complex128).reshape(-1)
    n2 = float(np.vdot(psi, psi).real)
    if n2 == 0.0:
        raise ValueError("invariant uncertainty of the zero vector is undefined")
    mom = np.einsum("i,mij,j->m", psi.conj(), gen.generators, psi).real
    return n2 * n2 * gen.casimir_eigenvalue - float(mom @ gen.metric_inverse @ mom)


def sphere_sample(rng, size=None):
    """Uniform direction ``(theta, phi)`` on the unit sphere."""
    cos_t = rng.uniform(-1.0, 1.0, size)
    phi = rng.uniform(0.0, 2 * math.pi, size)
    return np.arccos(cos_t), phi


def haar_sample_su2(rng, size=None):
    """Haar-random SU(2) element as Euler angles ``(phi, theta, psi)``.

    Pass the angles to :func:`rotation` for a represented matrix.
    """
    theta, phi = sphere_sample(rng, size)
    psi = rng.uniform(0.0, 4 * math.pi, size)
    return phi, theta, psi


def random_group_element(gen: GeneratorSet, rng, scale: float = math.pi) -> np.ndarray:
    """``exp(-i c.X)`` with Gaussian coordinates of the given scale (not Haar)."""
    c = rng.standard_normal(gen.dim_alg) * scale
    return expm(-1j * gen.combine(c))


@dataclass(frozen=True)
class ResolutionResult:
    residual: float
    sufficient: bool
    n_theta: int
    n_phi: int


def resolution_of_identity(gen: GeneratorSet, n_theta: int, n_phi: int | None = None) -> ResolutionResult:
    """Frobenius residual of the spin-coherent-state POVM against the identity.

    Product quadrature: Gauss-Legendre in ``cos(theta)`` and equally spaced
    ``phi``. The diagonal integrand is a polynomial of degree ``2j`` in
    ``cos(theta)``, and the ``phi`` sum removes off-diagonal terms whose
    azimuthal frequency is at most ``2j``, so ``n_theta, n_phi >= 2j + 1``
    integrates exactly; fewer nodes set ``sufficient = False``.
    """
    _spin_only(gen)
    n_phi = n_theta if n_phi is None else n_phi
    if n_theta < 1 or n_phi < 1:
        raise ValueError("need at least one node per axis")
    d = gen.dim_rep
    x, w = np.polynomial.legendre.leggauss(n_theta)
    phis = 2 * math.pi * np.arange(n_phi) / n_phi
    jy = gen.generators[1]
    mz = np.diag(gen.generators[2]).real
    total = np.zeros((d, d), dtype=np.complex128)
    for xk, wk in zip(x, w):
        col = expm(-1j * math.acos(xk) * jy)[:, 0]
        states = np.exp(-1j * np.outer(phis, mz)) * col[None, :]
        total += (wk / 2) * np.einsum("pi,pj->ij", states, states.conj()) / n_phi
    resid = float(np.linalg.norm(d * total - np.eye(d)))
    two_j = d - 1
    return ResolutionResult(resid, n_theta >= two_j + 1 and n_phi >= two_j + 1, n_theta, n_phi)
