"""Generalized singular-value coordinates ``K = U exp(a.H) V^dagger``.

Frames are only exposed through the gauge-invariant coherent projectors
``Q_U = U|lambda><lambda|U^dagger`` and ``Q_V = V|lambda><lambda|V^dagger``.
The radial coordinate ``a`` is always reported in the closed positive Weyl
chamber; for su2 it is the scalar ``alpha >= 0`` with ``A = alpha Jz``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .lie_rep import GeneratorSet, canonicalize, weyl_group
from .numerics import DegenerateSpectrumError, expm, svd

__all__ = [
    "GAP_TOL",
    "StatisticsError",
    "SvdCoords",
    "decompose",
    "BatchCoords",
    "decompose_batch",
    "radial_coordinates",
    "radial_impurity",
    "impurity_bound",
    "BoundCheck",
    "impurity_bound_check",
    "RadialReport",
    "radial_statistics",
    "su2_radial_second_moment",
    "FreezeReport",
    "freeze_metrics",
    "projector_distance",
    "radial_sde_crosscheck",
]

GAP_TOL = 1e-8
RESOLVED = 1e-12
MARGIN_RECHECK = 1e-10


class StatisticsError(ValueError):
    """Raised when an ensemble is too small for the requested statistic."""


@dataclass(frozen=True)
class SvdCoords:
    U: np.ndarray
    V: np.ndarray
    a: np.ndarray
    singular_values: np.ndarray
    gap_ok: bool
    lsq_residual: float

    @property
    def alpha(self) -> float:
        """Euclidean length of the radial coordinate (``alpha`` for su2)."""
        return float(np.linalg.norm(self.a))

    @property
    def q_u(self) -> np.ndarray:
        u = self.U[:, 0]
        return np.outer(u, u.conj())

    @property
    def q_v(self) -> np.ndarray:
        v = self.V[:, 0]
        return np.outer(v, v.conj())


def _fit(W, ell, order, keep):
    """Least squares ``ell ~ W[order] a + c`` over the rows in ``keep``."""
    A = np.hstack([W[order], np.ones((len(order), 1))])[keep]
    x, *_ = np.linalg.lstsq(A, ell[keep], rcond=None)
    r = ell[keep] - A @ x
    return x[:-1], float(np.max(np.abs(r)))


def radial_coordinates(gen: GeneratorSet, s) -> tuple[np.ndarray, float]:
    """Chamber coordinate ``a`` from descending singular values ``s``.

    The log singular values are matched against ``mu(a)`` over the expanded
    weight list. For rank one the match is fixed (descending ``m``). For
    higher rank the weight order depends on ``a`` itself, so several
    starting directions (the Weyl vector and each fundamental weight) are
    iterated to a self-consistent order and the best fit is kept.

    Singular values below ``1e-12`` of the largest carry no reliable digits
    in double precision and are left out of the fit.

    For self-conjugate representations (the su3 adjoint) ``a`` and
    ``-w0(a)`` give identical spectra, so the chamber point is only defined
    up to that symmetry; the top singular vectors are unaffected.
    """
    rs = gen.roots
    W = rs.expanded_weights()
    s = np.asarray(s, dtype=float)
    ell = np.log(s)
    keep = s >= RESOLVED * s[0]
    if gen.dim_rep == 1:
        return np.zeros(rs.rank), 0.0
    if rs.rank == 1:
        order = np.argsort(-W[:, 0], kind="stable")
        a, res = _fit(W, ell, order, keep)
        return canonicalize(rs, a), res
    best = None
    starts = [rs.weyl_vector, *rs.fundamental_weights]
    for start in starts:
        direction = np.asarray(start, dtype=float)
        seen = set()
        for _ in range(20):
            key = tuple(np.lexsort((-(W @ start), -(W @ direction))))
            if key in seen:
                break
            seen.add(key)
            order = np.array(key)
            a, res = _fit(W, ell, order, keep)
            if best is None or res < best[1]:
                best = (a, res)
            direction = canonicalize(rs, a)
            if np.allclose(direction, 0):
                break
    a, res = best
    return canonicalize(rs, a), res


def decompose(gen: GeneratorSet, K) -> SvdCoords:
    """Generalized SVD of a full-rank Kraus operator.

    Raises
    ------
    DegenerateSpectrumError
        If ``K`` is numerically rank deficient.

    Examples
    --------
    >>> from iso_collapse.lie_rep import build_spin_irrep
    >>> from iso_collapse.numerics import expm
    >>> g = build_spin_irrep(1)
    >>> c = decompose(g, expm(1.0 * g.generators[2]))
    >>> round(float(c.a[0]), 12), c.gap_ok
    (1.0, True)
    """
    U, s, V = svd(K)
    a, res = radial_coordinates(gen, s)
    gap_ok = gen.dim_rep > 1 and (s[0] - s[1]) / s[0] > GAP_TOL
    return SvdCoords(U=U, V=V, a=a, singular_values=s, gap_ok=bool(gap_ok), lsq_residual=res)


@dataclass(frozen=True)
class BatchCoords:
    """Decomposition of a stack of operators; arrays carry a leading sample axis."""

    a: np.ndarray
    singular_values: np.ndarray
    gap_ok: np.ndarray
    lsq_residual: np.ndarray
    q_u: np.ndarray
    q_v: np.ndarray

    @property
    def alpha(self) -> np.ndarray:
        return np.linalg.norm(self.a, axis=1)


def decompose_batch(gen: GeneratorSet, K) -> BatchCoords:
    """Vectorized :func:`decompose` for an ``(n, d, d)`` stack.

    The rank-one slope fit is done in closed form; higher rank falls back
    to :func:`radial_coordinates` per sample.
    """
    K = np.asarray(K, dtype=np.complex128)
    u, s, vh = np.linalg.svd(K)
    if np.any(s[:, -1] <= 1e-300 * s[:, 0]):
        raise DegenerateSpectrumError("rank-deficient operator in batch")
    ell = np.log(s)
    rs = gen.roots
    if rs.rank == 1 and gen.dim_rep > 1:
        m = np.sort(rs.expanded_weights()[:, 0])[::-1][None, :]
        w = (s >= RESOLVED * s[:, :1]).astype(float)
        nw = w.sum(axis=1, keepdims=True)
        mc = m - (w * m).sum(axis=1, keepdims=True) / nw
        lbar = (w * ell).sum(axis=1, keepdims=True) / nw
        slope = (w * mc * (ell - lbar)).sum(axis=1) / (w * mc * mc).sum(axis=1)
        fit = slope[:, None] * mc + lbar
        res = np.max(w * np.abs(ell - fit), axis=1)
        a = canonicalize(rs, slope[:, None])
    else:
        out = [radial_coordinates(gen, row) for row in s]
        a = np.array([o[0] for o in out]).reshape(len(s), rs.rank)
        res = np.array([o[1] for o in out])
    gap = (s[:, 0] - s[:, 1]) / s[:, 0] > GAP_TOL if gen.dim_rep > 1 else np.zeros(len(s), bool)
    top_u = u[:, :, 0]
    top_v = vh[:, 0, :].conj()
    return BatchCoords(a=a, singular_values=s, gap_ok=gap, lsq_residual=res,
                       q_u=np.einsum("ni,nj->nij", top_u, top_u.conj()),
                       q_v=np.einsum("ni,nj->nij", top_v, top_v.conj()))


def projector_distance(p, q) -> np.ndarray:
    """Frobenius distance between (stacks of) projectors."""
    return np.linalg.norm(np.asarray(p) - np.asarray(q), axis=(-2, -1))


# ------------------------------------------------------------ impurity bounds

def radial_impurity(gen: GeneratorSet, a, precise: bool = False):
    """Impurity of ``exp(2 a.H)`` evaluated from the radial coordinate alone.

    ``P = (lambda - m, lambda + m) / |lambda|^2`` where ``m`` is the
    ``exp(2 mu(a))``-weighted mean weight. Writing ``lambda - m`` as a
    weighted sum of ``lambda - mu`` keeps full relative accuracy when the
    impurity is exponentially small. ``precise=True`` evaluates a single
    coordinate in 50-digit arithmetic.
    """
    rs = gen.roots
    W = rs.expanded_weights()
    lam = rs.highest_weight
    if rs.highest_weight_norm2 == 0:
        return 0.0 if np.ndim(a) == 1 else np.zeros(len(np.atleast_2d(a)))
    if precise:
        return float(_radial_impurity_mp(gen, a))
    single = np.ndim(a) == 1
    a = np.atleast_2d(np.asarray(a, dtype=float))
    x = 2 * a @ rs.metric @ W.T
    p = np.exp(x - x.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    diff = p @ (lam[None, :] - W)
    plus = 2 * lam[None, :] - diff
    out = np.einsum("ni,ij,nj->n", diff, rs.metric, plus) / rs.highest_weight_norm2
    return float(out[0]) if single else out


def _radial_impurity_mp(gen: GeneratorSet, a):
    """50-digit version of :func:`radial_impurity` for one coordinate (an ``mpf``)."""
    rs = gen.roots
    mp = mpmath.mpf
    W = [[mp(float(x)) for x in mu] for mu in rs.expanded_weights()]
    lam = [mp(float(x)) for x in rs.highest_weight]
    G = [[mp(float(x)) for x in row] for row in rs.metric]
    a = [mp(float(x)) for x in np.asarray(a, dtype=float).reshape(-1)]
    r = rs.rank
    with mpmath.workdps(50):
        x = [2 * mpmath.fsum(mu[k] * G[k][l] * a[l] for k in range(r) for l in range(r))
             for mu in W]
        top = max(x)
        p = [mpmath.exp(v - top) for v in x]
        z = mpmath.fsum(p)
        diff = [mpmath.fsum(p[i] * (lam[k] - W[i][k]) for i in range(len(W))) / z
                for k in range(r)]
        plus = [2 * lam[k] - diff[k] for k in range(r)]
        lam2 = mpmath.fsum(lam[k] * G[k][l] * lam[l] for k in range(r) for l in range(r))
        return mpmath.fsum(diff[k] * G[k][l] * plus[l] for k in range(r) for l in range(r)) / lam2


def _margin_mp(gen: GeneratorSet, a) -> float:
    rs = gen.roots
    mp = mpmath.mpf
    with mpmath.workdps(50):
        imp = _radial_impurity_mp(gen, a)
        lam, om = rs.highest_weight, rs.weyl_vector
        pref = 4 * mp(rs.inner(lam, om)) / mp(rs.highest_weight_norm2)
        w = mpmath.fsum(mp(float(x)) for x in (np.asarray(a, float).reshape(-1) @ rs.metric) * om)
        bound = pref * mpmath.exp(-4 * w)
        return float(1 - imp / bound)


def impurity_bound(gen: GeneratorSet, a) -> np.ndarray:
    """``4 (lambda, omega) / |lambda|^2 * exp(-4 omega(a))`` for chamber ``a``.

    For spin ``j`` this is ``(2/j) exp(-2 alpha)``.
    """
    rs = gen.roots
    a = np.atleast_2d(np.asarray(a, dtype=float))
    pref = 4 * rs.inner(rs.highest_weight, rs.weyl_vector) / rs.highest_weight_norm2
    return pref * np.exp(-4 * a @ rs.metric @ rs.weyl_vector)


@dataclass(frozen=True)
class BoundCheck:
    equal: np.ndarray
    below: np.ndarray
    impurity: np.ndarray
    bound: np.ndarray
    margin: np.ndarray
    max_equality_gap: float

    @property
    def all_equal(self) -> bool:
        return bool(np.all(self.equal))

    @property
    def all_below(self) -> bool:
        return bool(np.all(self.below))

    @property
    def fraction_below(self) -> float:
        return float(np.mean(self.below))


def impurity_bound_check(gen: GeneratorSet, a, imp_kdk, imp_kkd, tol: float = 1e-9) -> BoundCheck:
    """Per-sample check of the impurity identities and the exponential bound.

    ``imp_kdk`` and ``imp_kkd`` are the matrix impurities of ``K^dagger K``
    and ``K K^dagger``; they must agree to ``tol``. The bound is compared
    against the radial impurity; samples whose relative margin is below
    ``1e-10`` are re-evaluated in extended precision before deciding.
    The margin is ``1 - impurity / bound`` (positive when satisfied).
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    imp_kdk = np.atleast_1d(np.asarray(imp_kdk, dtype=float))
    imp_kkd = np.atleast_1d(np.asarray(imp_kkd, dtype=float))
    gap = np.abs(imp_kdk - imp_kkd)
    imp = np.atleast_1d(radial_impurity(gen, a))
    bound = impurity_bound(gen, a)
    margin = 1 - imp / bound
    for i in np.nonzero(np.abs(margin) < MARGIN_RECHECK)[0]:
        margin[i] = _margin_mp(gen, a[i])
    return BoundCheck(equal=gap <= tol, below=margin > 0, impurity=imp, bound=bound,
                      margin=margin, max_equality_gap=float(gap.max(initial=0.0)))


# ------------------------------------------------------------ radial statistics

def su2_radial_second_moment(gamma_t: float) -> float:
    """Exact ``E[alpha^2]`` for the su2 radial coordinate at elapsed ``gamma_t``.

    The radial coordinate is the distance from the origin of a Brownian
    motion on hyperbolic 3-space (curvature -1) run for time
    ``tau = gamma_t / 12``; its density is proportional to
    ``alpha sinh(alpha) exp(-alpha^2 / (2 tau))`` and the second moment is
    ``3 tau + tau^2``.
    """
    tau = gamma_t / 12
    return 3 * tau + tau * tau


@dataclass(frozen=True)
class RadialReport:
    """Second-moment statistics of the radial coordinate.

    ``second_moment`` is the Weyl-group average of ``a a^T``; with an
    isotropic law it is the per-component variance of the signed
    coordinate. ``predicted`` is the Gaussian law ``gamma T g^{kl} / (4 dim)``.
    """

    n: int
    gamma_t: float
    mean_chamber: np.ndarray
    second_moment: np.ndarray
    second_moment_se: np.ndarray
    predicted: np.ndarray
    per_component: float
    per_component_se: float
    predicted_per_component: float
    norm_mean: float
    norm_mean_se: float
    predicted_norm_mean: float
    heat_kernel_second_moment: float | None
    signed_mean: float | None = None
    signed_mean_se: float | None = None
    signed_variance: float | None = None
    signed_variance_se: float | None = None

    @property
    def z_score(self) -> float:
        """Standardized gap between measured and Gaussian-law per-component variance."""
        if self.per_component_se == 0:
            return 0.0 if self.per_component == self.predicted_per_component else math.inf
        return (self.per_component - self.predicted_per_component) / self.per_component_se

    def within(self, k: float = 3.0) -> bool:
        return abs(self.z_score) <= k


def radial_statistics(gen: GeneratorSet, a, gamma_t: float, signed=None,
                      min_samples: int = 100) -> RadialReport:
    """Compare an ensemble of chamber coordinates against the Gaussian law.

    Parameters
    ----------
    a : array_like, shape (n, rank)
        Chamber coordinates at elapsed ``gamma_t``.
    signed : array_like, shape (n,), optional
        Continuity-signed su2 coordinate, when tracked.
    """
    rs = gen.roots
    a = np.asarray(a, dtype=float).reshape(-1, rs.rank)
    n = len(a)
    if n < min_samples:
        raise StatisticsError(f"need at least {min_samples} samples, got {n}")
    group = weyl_group(rs)
    per = np.zeros((n, rs.rank, rs.rank))
    for w in group:
        b = a @ w.T
        per += np.einsum("ni,nj->nij", b, b)
    per /= len(group)
    sm = per.mean(axis=0)
    se = per.std(axis=0, ddof=1) / math.sqrt(n)
    tr = np.trace(per, axis1=1, axis2=2) / rs.rank
    dim = gen.dim_alg
    sigma2 = gamma_t / (4 * dim)
    predicted = sigma2 * np.linalg.inv(rs.metric)
    norms = np.linalg.norm(a, axis=1)
    r = rs.rank
    pred_norm = math.sqrt(2 * sigma2) * math.exp(math.lgamma((r + 1) / 2) - math.lgamma(r / 2))
    heat = su2_radial_second_moment(gamma_t) if gen.group == "su2" else None
    kw = {}
    if signed is not None:
        s = np.asarray(signed, dtype=float).reshape(-1)
        kw = dict(signed_mean=float(s.mean()), signed_mean_se=float(s.std(ddof=1) / math.sqrt(n)),
                  signed_variance=float(s.var(ddof=1)),
                  signed_variance_se=float(((s - s.mean()) ** 2).std(ddof=1) / math.sqrt(n)))
    return RadialReport(
        n=n, gamma_t=float(gamma_t), mean_chamber=a.mean(axis=0), second_moment=sm,
        second_moment_se=se, predicted=predicted, per_component=float(tr.mean()),
        per_component_se=float(tr.std(ddof=1) / math.sqrt(n)),
        predicted_per_component=sigma2, norm_mean=float(norms.mean()),
        norm_mean_se=float(norms.std(ddof=1) / math.sqrt(n)), predicted_norm_mean=pred_norm,
        heat_kernel_second_moment=heat, **kw)


# ------------------------------------------------------------ frame freezing

@dataclass(frozen=True)
class FreezeReport:
    """Frame motion along one trajectory.

    ``d_v`` and ``d_u`` are distances of the right and left coherent
    projectors to their final values; ``step_d_v`` and ``step_d_u`` are
    distances between consecutive valid snapshots (first entry 0).
    """

    t: np.ndarray
    alpha: np.ndarray
    d_v: np.ndarray
    d_u: np.ndarray
    step_d_v: np.ndarray
    step_d_u: np.ndarray


def freeze_metrics(gen: GeneratorSet, snapshots) -> FreezeReport:
    """Track the coherent projectors of ``(t, K, ...)`` snapshots.

    Snapshots with a degenerate top singular value are skipped.
    """
    rows = []
    for snap in snapshots:
        t, K = snap[0], snap[1]
        try:
            c = decompose(gen, K)
        except DegenerateSpectrumError:
            continue
        if c.gap_ok:
            rows.append((t, c.alpha, c.q_v, c.q_u))
    if len(rows) < 3:
        raise StatisticsError(f"need at least 3 snapshots with a spectral gap, got {len(rows)}")
    t = np.array([r[0] for r in rows])
    alpha = np.array([r[1] for r in rows])
    qv = np.array([r[2] for r in rows])
    qu = np.array([r[3] for r in rows])
    step_v = np.concatenate([[0.0], projector_distance(qv[1:], qv[:-1])])
    step_u = np.concatenate([[0.0], projector_distance(qu[1:], qu[:-1])])
    return FreezeReport(t=t, alpha=alpha, d_v=projector_distance(qv, qv[-1]),
                        d_u=projector_distance(qu, qu[-1]), step_d_v=step_v, step_d_u=step_u)


# ------------------------------------------------------------ radial SDE (su2)

def radial_sde_crosscheck(gen: GeneratorSet, increments, gamma: float, dt: float,
                          start_alpha: float = 0.5, drift: bool = True):
    """Integrate the su2 radial SDE along a record and compare with the K-flow.

    The K-flow (exact stepper) supplies the left frame ``U`` at every step;
    the radial coordinate is advanced by
    ``d alpha = 1/2 (U^dagger X_mu U)_z dW^mu + (gamma dt / 4) coth(alpha)``,
    where the second (Ito) term is the radial drift of a Brownian motion on
    hyperbolic 3-space and ``( . )_z`` is the ``Jz`` component of the
    diagonal part. Integration starts once the K-flow's ``alpha`` first
    exceeds ``start_alpha``.

    Returns
    -------
    t, alpha_flow, alpha_sde : ndarray
    """
    if gen.group != "su2":
        raise ValueError("the radial cross-check is implemented for su2 only")
    inc = np.asarray(increments, dtype=float)
    jz = np.diag(gen.generators[2]).real
    norm = float(jz @ jz)
    K = np.eye(gen.dim_rep, dtype=np.complex128)
    a_sde = None
    ts, af, asd = [], [], []
    for n, dw in enumerate(inc):
        if a_sde is not None:
            U, s, _ = svd(K)
            diag = np.einsum("im,kij,jm->km", U.conj(), gen.generators, U).real
            comp = diag @ jz / norm
            a_sde += 0.5 * float(comp @ dw)
            if drift:
                a_sde += gamma * dt / 4 / math.tanh(max(a_sde, 1e-12))
            a_sde = abs(a_sde)
        K = expm(0.5 * gen.combine(dw)) @ K
        K /= np.linalg.norm(K, 2)
        alpha = decompose(gen, K).alpha
        if a_sde is None and alpha > start_alpha:
            a_sde = alpha
        if a_sde is not None:
            ts.append((n + 1) * gen.dim_alg * dt)
            af.append(alpha)
            asd.append(a_sde)
    return np.array(ts), np.array(af), np.array(asd)
