"""Represented generator sets and root-system data for SU(2) and SU(3).

Conventions
-----------
Generators are Hermitian; a group element is ``exp(-i theta^mu X_mu)`` and a
Kraus-type element is ``exp(a^mu X_mu)``. Every basis built here is
orthogonal under the Killing form with equal norms, and the stored metric is
the Killing form divided by that common norm, so ``metric == identity``.
The constant that was divided out is kept as ``killing_scale``.

Weights and roots are expressed as coordinate vectors in the chosen Cartan
subalgebra basis, i.e. ``mu[k]`` is the eigenvalue of ``X[csa_indices[k]]``.
With the normalized metric the inner product of weights is the Euclidean one.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .numerics import dagger

__all__ = [
    "SpecError",
    "AlgebraError",
    "GeneratorSet",
    "RootSystem",
    "build_spin_irrep",
    "build_su3_irrep",
    "structure_constants",
    "killing_metric",
    "weight_diagram",
    "weyl_reflect",
    "weyl_group",
    "weyl_dimension",
    "canonicalize",
    "parse_spin",
]

WEIGHT_TOL = 1e-8


class SpecError(ValueError):
    """Invalid irrep specification."""


class AlgebraError(ArithmeticError):
    """Generators do not close under commutation."""


@dataclass(frozen=True, eq=False)
class RootSystem:
    """Roots and weight diagram of a represented algebra.

    All vectors are coordinates in the normalized Cartan basis.
    """

    rank: int
    roots: np.ndarray
    positive_roots: np.ndarray
    simple_roots: np.ndarray
    fundamental_weights: np.ndarray
    weyl_vector: np.ndarray
    highest_weight: np.ndarray
    weights: np.ndarray
    multiplicities: np.ndarray
    metric: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.metric is None:
            object.__setattr__(self, "metric", np.eye(self.rank))

    def inner(self, a, b) -> float:
        return float(np.asarray(a) @ self.metric @ np.asarray(b))

    @property
    def dim(self) -> int:
        return int(np.sum(self.multiplicities))

    @property
    def highest_weight_norm2(self) -> float:
        return self.inner(self.highest_weight, self.highest_weight)

    def expanded_weights(self) -> np.ndarray:
        """Weights repeated by multiplicity, one row per basis state."""
        return np.repeat(self.weights, self.multiplicities, axis=0)


@dataclass(frozen=True, eq=False)
class GeneratorSet:
    """A Hermitian basis of a represented compact Lie algebra."""

    group: str
    label: object
    generators: np.ndarray
    csa_indices: tuple
    metric: np.ndarray
    metric_inverse: np.ndarray
    casimir_eigenvalue: float
    killing_scale: float
    structure_constants: np.ndarray
    roots: RootSystem

    @property
    def dim_rep(self) -> int:
        return self.generators.shape[1]

    @property
    def dim_alg(self) -> int:
        return self.generators.shape[0]

    @property
    def rank(self) -> int:
        return len(self.csa_indices)

    @property
    def csa(self) -> np.ndarray:
        return self.generators[list(self.csa_indices)]

    def combine(self, coeffs) -> np.ndarray:
        """``sum_mu coeffs[..., mu] X_mu``; broadcasts over leading axes."""
        return np.tensordot(np.asarray(coeffs), self.generators, axes=(-1, 0))

    def casimir(self) -> np.ndarray:
        x = self.generators
        return np.einsum("mn,mij,njk->ik", self.metric_inverse, x, x)

    def highest_weight_state(self) -> np.ndarray:
        """Top eigenvector of the Cartan element along the Weyl vector."""
        h = np.tensordot(self.roots.weyl_vector, self.csa, axes=(0, 0))
        w, v = np.linalg.eigh(h)
        if self.dim_rep > 1 and w[-1] - w[-2] < 1e-9:
            raise AlgebraError("highest weight state is not isolated")
        psi = v[:, -1]
        k = int(np.argmax(np.abs(psi)))
        return psi * (abs(psi[k]) / psi[k])


def parse_spin(j) -> Fraction:
    """Validate a spin label; accepts ints, floats, Fractions and ``'3/2'``."""
    try:
        fj = Fraction(j) if not isinstance(j, str) else Fraction(j.strip())
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise SpecError(f"invalid spin label {j!r}") from exc
    if fj < 0 or (2 * fj).denominator != 1:
        raise SpecError(f"spin must be a nonnegative half-integer, got {j!r}")
    return fj


def structure_constants(generators, tol: float = 1e-10) -> np.ndarray:
    """Real ``f[mu, nu, rho]`` with ``[X_mu, X_nu] = i f[mu, nu, rho] X_rho``.

    Solved by least squares over the flattened basis; raises
    :class:`AlgebraError` if some commutator leaves the span.
    """
    x = np.asarray(generators, dtype=np.complex128)
    n = x.shape[0]
    basis = x.reshape(n, -1).T
    comm = np.einsum("mij,njk->mnik", x, x) - np.einsum("nij,mjk->mnik", x, x)
    rhs = (comm / 1j).reshape(n * n, -1).T
    coef, *_ = np.linalg.lstsq(basis, rhs, rcond=None)
    resid = np.max(np.abs(basis @ coef - rhs)) if rhs.size else 0.0
    scale = max(1.0, float(np.max(np.abs(rhs))) if rhs.size else 1.0)
    if resid > tol * scale:
        raise AlgebraError(f"commutators not closed: residual {resid:.2e}")
    if np.max(np.abs(coef.imag)) > tol * scale:
        raise AlgebraError("structure constants are not real")
    return coef.real.T.reshape(n, n, n)


def adjoint_matrices(f: np.ndarray) -> np.ndarray:
    """``ad[mu]`` with ``ad[mu][rho, nu] = i f[mu, nu, rho]``."""
    return 1j * np.transpose(f, (0, 2, 1))


def killing_metric(generators) -> np.ndarray:
    """Killing form ``B[mu, nu] = Tr(ad_mu ad_nu)`` from structure constants."""
    f = structure_constants(generators)
    ad = adjoint_matrices(f)
    b = np.einsum("mij,nji->mn", ad, ad)
    return b.real


def _normalize_metric(killing: np.ndarray):
    scale = float(np.mean(np.diag(killing)))
    metric = killing / scale
    if np.max(np.abs(metric - np.eye(len(metric)))) > 1e-10:
        raise AlgebraError("basis is not Killing-orthonormal up to a common scale")
    return np.eye(len(metric)), scale


# ---------------------------------------------------------------- weights

def _joint_weights(csa: np.ndarray):
    """Simultaneous eigenvalues of commuting Hermitian matrices."""
    rank = csa.shape[0]
    coeffs = np.array([np.sqrt(2.0) ** (-k) * (1 + 0.1 * np.pi * k) for k in range(rank)])
    h = np.tensordot(coeffs, csa, axes=(0, 0))
    _, v = np.linalg.eigh(h)
    mu = np.einsum("ia,kij,ja->ak", v.conj(), csa, v).real
    mu[np.abs(mu) < 1e-12] = 0.0
    return _group_weights(mu)


def _group_weights(mu: np.ndarray):
    out, mult = [], []
    for row in mu:
        for i, w in enumerate(out):
            if np.max(np.abs(w - row)) < WEIGHT_TOL:
                mult[i] += 1
                break
        else:
            out.append(row.copy())
            mult.append(1)
    return np.array(out), np.array(mult, dtype=int)


def _sort_weights(weights, mults, direction):
    key = np.round(weights @ direction, 9)
    order = np.lexsort(tuple(np.round(weights[:, ::-1].T, 9)) + (-key,))
    return weights[order], mults[order]


def _root_data(roots: np.ndarray, ref: np.ndarray):
    pos = roots[roots @ ref > 0]
    simple = []
    for a in pos:
        decomposable = any(
            np.allclose(a, b + c, atol=WEIGHT_TOL) for b in pos for c in pos)
        if not decomposable:
            simple.append(a)
    simple = np.array(simple)
    simple = simple[np.argsort(-(simple @ np.array([1.0] + [0.0] * (simple.shape[1] - 1))))]
    simple[np.abs(simple) < 1e-12] = 0.0
    coroots = 2 * simple / np.sum(simple ** 2, axis=1)[:, None]
    fundamental = np.linalg.solve(coroots, np.eye(len(simple))).T
    fundamental[np.abs(fundamental) < 1e-12] = 0.0
    weyl_vec = 0.5 * pos.sum(axis=0)
    return pos, simple, fundamental, weyl_vec


def _make_root_system(roots, ref, weights, mults) -> RootSystem:
    pos, simple, fund, rho = _root_data(roots, ref)
    weights, mults = _sort_weights(weights, mults, rho)
    return RootSystem(
        rank=roots.shape[1], roots=roots, positive_roots=pos,
        simple_roots=simple, fundamental_weights=fund, weyl_vector=rho,
        highest_weight=weights[0].copy(), weights=weights,
        multiplicities=mults)


# ---------------------------------------------------------------- su(2)

@lru_cache(maxsize=None)
def _spin_matrices(two_j: int) -> np.ndarray:
    j = two_j / 2
    d = two_j + 1
    m = j - np.arange(d)
    jp = np.zeros((d, d))
    for k in range(1, d):
        jp[k - 1, k] = np.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    jx = (jp + jp.T) / 2
    jy = (jp - jp.T) / 2j
    jz = np.diag(m)
    out = np.array([jx, jy, jz], dtype=np.complex128)
    out.setflags(write=False)
    return out


def build_spin_irrep(j) -> GeneratorSet:
    """Spin-``j`` irrep of su(2) with generators ordered ``(J_x, J_y, J_z)``.

    The basis is ``|j, m>`` with ``m = j, j-1, ..., -j`` so index 0 is the
    highest-weight state and ``J_z = diag(j, ..., -j)``.
    """
    fj = parse_spin(j)
    two_j = int(2 * fj)
    x = _spin_matrices(two_j).copy()
    f = structure_constants(_spin_matrices(1))
    if two_j > 0:
        f_rep = structure_constants(x)
        if np.max(np.abs(f_rep - f)) > 1e-10:
            raise AlgebraError("spin matrices do not represent su(2)")
    killing = np.einsum("mij,nji->mn", adjoint_matrices(f), adjoint_matrices(f)).real
    metric, scale = _normalize_metric(killing)
    jf = float(fj)
    roots = np.array([[1.0], [-1.0]])
    weights = np.array([[jf - k] for k in range(two_j + 1)])
    rs = _make_root_system(roots, np.array([1.0]), weights, np.ones(two_j + 1, dtype=int))
    return GeneratorSet(
        group="su2", label=fj, generators=x, csa_indices=(2,),
        metric=metric, metric_inverse=np.linalg.inv(metric),
        casimir_eigenvalue=jf * (jf + 1), killing_scale=scale,
        structure_constants=f, roots=rs)


# ---------------------------------------------------------------- su(3)

def gell_mann() -> np.ndarray:
    """The eight Gell-Mann matrices; ``lambda_3, lambda_8`` span the CSA."""
    g = np.zeros((8, 3, 3), dtype=np.complex128)
    g[0][0, 1] = g[0][1, 0] = 1
    g[1][0, 1], g[1][1, 0] = -1j, 1j
    g[2] = np.diag([1, -1, 0])
    g[3][0, 2] = g[3][2, 0] = 1
    g[4][0, 2], g[4][2, 0] = -1j, 1j
    g[5][1, 2] = g[5][2, 1] = 1
    g[6][1, 2], g[6][2, 1] = -1j, 1j
    g[7] = np.diag([1, 1, -2]) / np.sqrt(3)
    return g


# Positive roots {alpha_01, alpha_02, alpha_12} have positive overlap with this.
_SU3_REF = np.array([1.0, 2.0 * np.sqrt(3.0)])
_SU3_CSA = (2, 7)


@lru_cache(maxsize=None)
def _su3_roots() -> np.ndarray:
    f = structure_constants(gell_mann())
    ad = adjoint_matrices(f)
    w, m = _joint_weights(ad[list(_SU3_CSA)])
    nonzero = np.linalg.norm(w, axis=1) > WEIGHT_TOL
    assert np.all(m[nonzero] == 1)
    return w[nonzero]


def build_su3_irrep(kind: str) -> GeneratorSet:
    """SU(3) defining (3x3 Gell-Mann) or adjoint (8x8) representation."""
    base = gell_mann()
    f = structure_constants(base)
    if kind == "defining":
        x = base
    elif kind == "adjoint":
        x = adjoint_matrices(f)
        if np.max(np.abs(x - dagger(x))) > 1e-12:
            raise AlgebraError("adjoint generators are not Hermitian")
    else:
        raise SpecError(f"unknown su3 representation {kind!r}")
    killing = killing_metric(x)
    metric, scale = _normalize_metric(killing)
    inv = np.linalg.inv(metric)
    cas = np.einsum("mn,mij,njk->ik", inv, x, x)
    c = float(np.real(np.trace(cas))) / x.shape[1]
    weights, mults = _joint_weights(x[list(_SU3_CSA)])
    rs = _make_root_system(_su3_roots(), _SU3_REF, weights, mults)
    return GeneratorSet(
        group="su3", label=kind, generators=x, csa_indices=_SU3_CSA,
        metric=metric, metric_inverse=inv, casimir_eigenvalue=c,
        killing_scale=scale, structure_constants=f, roots=rs)


# ---------------------------------------------------------------- Weyl group

def weyl_reflect(rs: RootSystem, alpha, mu) -> np.ndarray:
    """Reflect ``mu`` in the hyperplane orthogonal to the root ``alpha``."""
    alpha = np.asarray(alpha, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if not any(np.allclose(alpha, r, atol=WEIGHT_TOL) for r in rs.roots):
        raise ValueError(f"{alpha} is not a root of the system")
    return mu - 2 * rs.inner(alpha, mu) / rs.inner(alpha, alpha) * alpha


def _reflection_matrix(alpha: np.ndarray, metric: np.ndarray) -> np.ndarray:
    a = np.asarray(alpha, dtype=float)
    return np.eye(len(a)) - 2 * np.outer(a, a @ metric) / (a @ metric @ a)


def weyl_group(rs: RootSystem) -> list:
    """All Weyl group elements as matrices acting on weight coordinates."""
    gens = [_reflection_matrix(a, rs.metric) for a in rs.simple_roots]
    elems = [np.eye(rs.rank)]
    frontier = list(elems)
    while frontier:
        new = []
        for g in frontier:
            for s in gens:
                h = s @ g
                if not any(np.allclose(h, e, atol=1e-9) for e in elems):
                    elems.append(h)
                    new.append(h)
        frontier = new
    return elems


def canonicalize(rs: RootSystem, a) -> np.ndarray:
    """Representative of ``a`` (shape ``(..., rank)``) in the closed positive chamber.

    Repeatedly reflects across any simple root whose value on ``a`` is
    negative; this terminates in the dominant chamber.
    """
    a = np.array(a, dtype=float)
    single = a.ndim == 1
    a = np.atleast_2d(a)
    simple = rs.simple_roots @ rs.metric
    norms = np.einsum("ki,ij,kj->k", rs.simple_roots, rs.metric, rs.simple_roots)
    for _ in range(64 * max(1, len(rs.positive_roots))):
        vals = a @ simple.T
        neg = vals < -1e-14
        if not neg.any():
            break
        k = np.argmax(neg, axis=1)
        rows = np.nonzero(neg.any(axis=1))[0]
        kk = k[rows]
        coef = 2 * vals[rows, kk] / norms[kk]
        a[rows] -= coef[:, None] * rs.simple_roots[kk]
    return a[0] if single else a


# ---------------------------------------------------------------- diagrams

def weyl_dimension(rs: RootSystem, highest_weight) -> float:
    """Weyl dimension formula ``prod (lambda + rho, alpha) / (rho, alpha)``."""
    lam = np.asarray(highest_weight, dtype=float)
    rho = rs.weyl_vector
    out = 1.0
    for a in rs.positive_roots:
        out *= rs.inner(lam + rho, a) / rs.inner(rho, a)
    return out


def _freudenthal(rs: RootSystem, lam: np.ndarray):
    """Weights and multiplicities of the irrep with highest weight ``lam``."""
    simple = rs.simple_roots
    r = rs.rank
    pos_coeff = np.rint(np.linalg.solve(simple.T, rs.positive_roots.T).T).astype(int)
    group = weyl_group(rs)
    rho = rs.weyl_vector

    def dominant(mu):
        return canonicalize(rs, mu)

    def in_cone(v):
        c = np.linalg.solve(simple.T, v)
        ci = np.rint(c)
        return np.allclose(c, ci, atol=1e-7) and np.all(ci >= -1e-9)

    lowest = min((g @ lam for g in group), key=lambda v: rs.inner(v, rho))
    span = np.rint(np.linalg.solve(simple.T, lam - lowest)).astype(int)
    candidates = []
    for k in itertools.product(*(range(s + 1) for s in span)):
        k = np.array(k, dtype=int)
        mu = lam - k @ simple
        if in_cone(lam - dominant(mu)):
            candidates.append((int(k.sum()), tuple(k)))
    candidates.sort()
    lr = rs.inner(lam + rho, lam + rho)
    mult = {}
    for level, k in candidates:
        if level == 0:
            mult[k] = 1
            continue
        kv = np.array(k)
        mu = lam - kv @ simple
        num = 0.0
        for a, ca in zip(rs.positive_roots, pos_coeff):
            t = 1
            while True:
                kk = kv - t * ca
                if np.any(kk < 0):
                    break
                m = mult.get(tuple(kk), 0)
                if m:
                    num += m * rs.inner(mu + t * a, a)
                t += 1
        den = lr - rs.inner(mu + rho, mu + rho)
        val = 2 * num / den
        iv = int(round(val))
        if abs(val - iv) > 1e-6:
            raise AlgebraError(f"non-integer multiplicity {val} at {mu}")
        if iv > 0:
            mult[k] = iv
    keys = sorted(mult)
    weights = np.array([lam - np.array(k) @ simple for k in keys]).reshape(-1, r)
    mults = np.array([mult[k] for k in keys], dtype=int)
    return weights, mults


def weight_diagram(p: int, q: int) -> RootSystem:
    """Diagram of the SU(3) irrep with highest weight ``p phi_1 + q phi_2``.

    Multiplicities come from Freudenthal's recursion; no matrices are built.
    """
    if int(p) != p or int(q) != q or p < 0 or q < 0:
        raise SpecError(f"(p, q) must be nonnegative integers, got ({p}, {q})")
    base = build_su3_irrep("defining").roots
    lam = p * base.fundamental_weights[0] + q * base.fundamental_weights[1]
    weights, mults = _freudenthal(base, lam)
    weights, mults = _sort_weights(weights, mults, base.weyl_vector)
    return RootSystem(
        rank=2, roots=base.roots, positive_roots=base.positive_roots,
        simple_roots=base.simple_roots,
        fundamental_weights=base.fundamental_weights,
        weyl_vector=base.weyl_vector, highest_weight=lam,
        weights=weights, multiplicities=mults)
