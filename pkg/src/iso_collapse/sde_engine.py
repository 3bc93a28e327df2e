"""Wiener records and the Kraus-operator stochastic flow.

One isotropic super-step applies all ``dim_alg`` measurement channels at
once and therefore consumes ``dim_alg * dt`` of elapsed time. The increments
of a super-step are independent ``N(0, gamma*dt)`` draws, one per generator.

Two steppers are provided:

``exact_exponential``
    ``K <- exp(1/2 X.dW) K``; every factor is a group element, so the Ito
    correction is automatic and ``det K`` stays 1 exactly.
``euler_maruyama``
    ``K <- (1 + 1/2 X.dW + 1/8 X^2 gamma dt) K`` where ``X^2`` is the
    Casimir, hence a pure scalar.

``K`` is stored rescaled; ``log_scale`` accumulates the natural log of every
factor divided out, so the physical operator is ``exp(log_scale) * K``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .lie_rep import GeneratorSet
from .numerics import dagger, expm

__all__ = [
    "STEPPERS",
    "BLOCK_SIZE",
    "TrajectoryConfig",
    "KrausTrajectory",
    "IsotropyReport",
    "sample_wiener_step",
    "step",
    "run_trajectory",
    "propagate",
    "renormalize",
    "step_normalizer",
    "n_supersteps",
    "block_rng",
    "simulate_ensemble",
    "EnsembleSnapshots",
    "design_isotropic_coupling",
]

STEPPERS = ("exact_exponential", "euler_maruyama")
WEAK_GUARD = 0.1
RECORD_LIMIT = 10_000_000
BLOCK_SIZE = 256


@dataclass(frozen=True)
class TrajectoryConfig:
    gamma: float = 1.0
    dt: float = 0.01
    total_time: float = 1.0
    stepper: str = "exact_exponential"
    seed: int = 0
    record_stride: int = 10

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (self.total_time >= 0 and math.isfinite(self.total_time)):
            raise ValueError(f"total_time must be nonnegative, got {self.total_time}")
        if self.gamma * self.dt > WEAK_GUARD:
            raise ValueError(
                f"gamma*dt = {self.gamma * self.dt:g} exceeds the weak-measurement "
                f"guard {WEAK_GUARD}")
        if self.stepper not in STEPPERS:
            raise ValueError(f"stepper must be one of {STEPPERS}, got {self.stepper!r}")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValueError(f"record_stride must be a positive integer, got {self.record_stride}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @property
    def gamma_t(self) -> float:
        return self.gamma * self.total_time


@dataclass
class KrausTrajectory:
    K: np.ndarray
    log_scale: float = 0.0
    t: float = 0.0
    record: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    @classmethod
    def identity(cls, dim: int) -> "KrausTrajectory":
        return cls(K=np.eye(dim, dtype=np.complex128))

    def physical(self) -> np.ndarray:
        """The unnormalized Kraus operator ``exp(log_scale) K``."""
        return math.exp(self.log_scale) * self.K

    def povm_element(self) -> np.ndarray:
        """``K^dagger K`` of the stored (normalized) operator."""
        return dagger(self.K) @ self.K


def n_supersteps(gen: GeneratorSet, cfg: TrajectoryConfig, total_time=None) -> int:
    """Super-steps needed until elapsed time reaches ``total_time``."""
    T = cfg.total_time if total_time is None else total_time
    return int(math.ceil(T / (gen.dim_alg * cfg.dt) - 1e-9))


def sample_wiener_step(gen: GeneratorSet, gamma: float, dt: float, rng) -> np.ndarray:
    """One increment vector with ``dW^mu dW^nu = g^{mu nu} gamma dt``."""
    if np.max(np.abs(gen.metric - np.eye(gen.dim_alg))) > 1e-12:
        raise ValueError("increments assume the normalized metric")
    return rng.standard_normal(gen.dim_alg) * math.sqrt(gamma * dt)


def renormalize(K: np.ndarray):
    """Divide ``K`` (or a stack) by its largest singular value.

    Returns the rescaled array and the natural log of the removed factor.
    """
    s = np.linalg.norm(K, 2, axis=(-2, -1))
    return K / s[..., None, None], np.log(s)


def step(traj: KrausTrajectory, dW, gen: GeneratorSet, gamma: float, dt: float,
         stepper: str = "exact_exponential") -> KrausTrajectory:
    """Apply one isotropic super-step driven by the increment vector ``dW``."""
    dW = np.asarray(dW, dtype=float)
    if dW.shape != (gen.dim_alg,):
        raise ValueError(f"increment must have shape ({gen.dim_alg},), got {dW.shape}")
    h = 0.5 * gen.combine(dW)
    if stepper == "exact_exponential":
        g = expm(h)
    elif stepper == "euler_maruyama":
        g = h + (1.0 + gen.casimir_eigenvalue * gamma * dt / 8) * np.eye(gen.dim_rep)
    else:
        raise ValueError(f"unknown stepper {stepper!r}")
    k = g @ traj.K
    if not np.all(np.isfinite(k)):
        raise FloatingPointError("Kraus operator overflowed before renormalization")
    k, ls = renormalize(k)
    return KrausTrajectory(
        K=k, log_scale=traj.log_scale + float(ls), t=traj.t + gen.dim_alg * dt,
        record=traj.record + [dW], snapshots=list(traj.snapshots))


# ------------------------------------------------------------ batch kernel

@numba.njit(cache=True)
def _matmul(a, b, out):
    d = a.shape[0]
    for i in range(d):
        for j in range(d):
            acc = 0j
            for k in range(d):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc


_INV_FACTORIAL = np.array([1.0 / math.factorial(k) for k in range(15)])


@numba.njit(cache=True)
def _expm_taylor(h, out, work):
    """exp(h) by scaling and squaring around a truncated Taylor polynomial.

    The degree is the smallest one whose remainder bound
    ``x^(k+1)/(k+1)!`` at the scaled 1-norm falls below 1e-17; the
    polynomial is evaluated by Paterson-Stockmeyer in blocks of three,
    ``p(a) = sum_b (a^3)^b (c_3b + c_3b+1 a + c_3b+2 a^2)`` with
    ``c_k = 1/k!``. ``work`` holds four scratch matrices.
    """
    d = h.shape[0]
    nrm = 0.0
    for j in range(d):
        col = 0.0
        for i in range(d):
            col += abs(h[i, j])
        nrm = max(nrm, col)
    s = 0
    while nrm > 0.25:
        nrm *= 0.5
        s += 1
    scale = 0.5 ** s
    deg = 1
    term = nrm
    while deg < 12 and term > 1e-17:
        deg += 1
        term *= nrm / deg
    a1 = work[0]
    a2 = work[1]
    a3 = work[2]
    tmp = work[3]
    for i in range(d):
        for j in range(d):
            a1[i, j] = h[i, j] * scale
    _matmul(a1, a1, a2)
    _matmul(a2, a1, a3)
    coef = _INV_FACTORIAL
    nb = deg // 3
    for i in range(d):
        for j in range(d):
            out[i, j] = coef[3 * nb + 1] * a1[i, j] + coef[3 * nb + 2] * a2[i, j]
        out[i, i] += coef[3 * nb]
    for b in range(nb - 1, -1, -1):
        _matmul(out, a3, tmp)
        for i in range(d):
            for j in range(d):
                out[i, j] = tmp[i, j] + coef[3 * b + 1] * a1[i, j] + coef[3 * b + 2] * a2[i, j]
            out[i, i] += coef[3 * b]
    for _ in range(s):
        _matmul(out, out, tmp)
        for i in range(d):
            for j in range(d):
                out[i, j] = tmp[i, j]


@numba.njit(cache=True)
def _propagate(K, log_scale, X, w, euler, drift):
    n = K.shape[0]
    d = K.shape[1]
    nalg = X.shape[0]
    steps = w.shape[1]
    h = np.empty((d, d), np.complex128)
    g = np.empty((d, d), np.complex128)
    work = np.empty((4, d, d), np.complex128)
    kn = np.empty((d, d), np.complex128)
    for i in range(n):
        for s in range(steps):
            for a in range(d):
                for b in range(d):
                    v = 0j
                    for m in range(nalg):
                        v += w[i, s, m] * X[m, a, b]
                    h[a, b] = 0.5 * v
            if euler:
                for a in range(d):
                    for b in range(d):
                        g[a, b] = h[a, b]
                    g[a, a] += 1.0 + drift
            else:
                _expm_taylor(h, g, work)
            _matmul(g, K[i], kn)
            nrm = 0.0
            for a in range(d):
                for b in range(d):
                    nrm += kn[a, b].real ** 2 + kn[a, b].imag ** 2
            nrm = math.sqrt(nrm)
            for a in range(d):
                for b in range(d):
                    K[i, a, b] = kn[a, b] / nrm
            log_scale[i] += math.log(nrm)


def propagate(gen: GeneratorSet, K, log_scale, increments, gamma: float, dt: float,
              stepper: str = "exact_exponential"):
    """Advance a stack of Kraus operators through a block of increments.

    Parameters
    ----------
    K : ndarray, shape (n, d, d)
        Updated in place.
    log_scale : ndarray, shape (n,)
        Updated in place.
    increments : ndarray, shape (n, steps, dim_alg)

    Notes
    -----
    Per step the operator is rescaled by its Frobenius norm, which is cheap
    and keeps entries bounded; call :func:`renormalize` to restore the
    largest-singular-value normalization (done at every snapshot).
    """
    if stepper not in STEPPERS:
        raise ValueError(f"unknown stepper {stepper!r}")
    inc = np.ascontiguousarray(increments, dtype=np.float64)
    if inc.ndim != 3 or inc.shape[0] != K.shape[0] or inc.shape[2] != gen.dim_alg:
        raise ValueError(f"bad increment block shape {inc.shape}")
    drift = gen.casimir_eigenvalue * gamma * dt / 8
    _propagate(K, log_scale, np.ascontiguousarray(gen.generators), inc,
               stepper == "euler_maruyama", drift)
    if not np.all(np.isfinite(K)):
        raise FloatingPointError("non-finite Kraus operator during propagation")


def _renormalize_inplace(K, log_scale):
    k, ls = renormalize(K)
    K[...] = k
    log_scale += ls


def run_trajectory(gen: GeneratorSet, cfg: TrajectoryConfig) -> KrausTrajectory:
    """Integrate one trajectory from ``K(0) = 1`` until ``t >= total_time``.

    Snapshots ``(t, K, log_scale)`` are taken at ``t = 0``, every
    ``record_stride`` super-steps and at the end. The full Wiener record is
    kept when it has at most ``1e7`` entries.
    """
    rng = np.random.default_rng(cfg.seed)
    N = n_supersteps(gen, cfg)
    keep = N * gen.dim_alg <= RECORD_LIMIT
    K = np.eye(gen.dim_rep, dtype=np.complex128)[None].copy()
    ls = np.zeros(1)
    snaps = [(0.0, K[0].copy(), 0.0)]
    record = []
    sd = math.sqrt(cfg.gamma * cfg.dt)
    done = 0
    while done < N:
        m = min(cfg.record_stride, N - done)
        inc = rng.standard_normal((m, gen.dim_alg)) * sd
        if keep:
            record.extend(inc)
        propagate(gen, K, ls, inc[None], cfg.gamma, cfg.dt, cfg.stepper)
        _renormalize_inplace(K, ls)
        done += m
        snaps.append((done * gen.dim_alg * cfg.dt, K[0].copy(), float(ls[0])))
    return KrausTrajectory(K=K[0].copy(), log_scale=float(ls[0]),
                           t=N * gen.dim_alg * cfg.dt,
                           record=record if keep else None, snapshots=snaps)


# ------------------------------------------------------------ normalizer

def step_normalizer(gen: GeneratorSet, gamma: float, dt: float,
                    stepper: str = "exact_exponential") -> float:
    """Scalar ``s`` with ``E[G^dagger G] = s * 1`` for one super-step factor ``G``.

    Euler-Maruyama: exact, ``(1 + c gamma dt/8)^2 + c gamma dt/4``.
    Exact exponential, rank one: ``E[exp(X.dW)]`` averages ``cosh(m |dW|)``
    over the chi-3 radius, giving ``mean_m (1 + m^2 v) exp(m^2 v / 2)``.
    Higher rank: series in ``v = gamma dt`` through ``v^2`` (Wick
    contraction of ``Tr (X.dW)^4``); the neglected ``v^3`` term is below
    ``1e-9`` per step for ``v <= 1e-2``.
    """
    v = gamma * dt
    c = gen.casimir_eigenvalue
    if stepper == "euler_maruyama":
        return (1 + c * v / 8) ** 2 + c * v / 4
    if stepper != "exact_exponential":
        raise ValueError(f"unknown stepper {stepper!r}")
    if gen.rank == 1 and gen.dim_alg == 3:
        m = gen.roots.expanded_weights()[:, 0]
        return float(np.mean((1 + m ** 2 * v) * np.exp(m ** 2 * v / 2)))
    x = gen.generators
    d = gen.dim_rep
    cross = np.einsum("mab,nbc,mcd,nda->", x, x, x, x).real
    quartic = (2 * c * c * d + cross) / d
    return 1 + c * v / 2 + quartic * v * v / 24


# ------------------------------------------------------------ ensembles

def block_rng(base_seed: int, block: int) -> np.random.Generator:
    """Stream for trajectories ``block*BLOCK_SIZE ... (block+1)*BLOCK_SIZE - 1``."""
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(int(base_seed), spawn_key=(int(block),))))


@dataclass
class EnsembleSnapshots:
    """Ensemble state at selected super-step counts.

    ``K[k, i]`` is trajectory ``i`` at ``steps[k]``, normalized to unit
    largest singular value; ``log_scale[k, i]`` the matching scale.
    ``sign[k, i]`` is the continuity-tracked sign of the radial coordinate
    (rank-one groups only, otherwise all ones).
    """

    steps: np.ndarray
    times: np.ndarray
    K: np.ndarray
    log_scale: np.ndarray
    sign: np.ndarray


def _moment_direction(gen, K):
    e = dagger(K) @ K
    m = np.einsum("nij,mji->nm", e, gen.generators).real
    nrm = np.linalg.norm(m, axis=1)
    return m / np.where(nrm > 0, nrm, 1.0)[:, None]


def _run_block(gen, cfg, base_seed, block, n_in_block, snap_steps, track_sign, track_stride):
    rng = block_rng(base_seed, block)
    total = int(snap_steps[-1]) if len(snap_steps) else 0
    d = gen.dim_rep
    K = np.broadcast_to(np.eye(d, dtype=np.complex128), (BLOCK_SIZE, d, d)).copy()
    ls = np.zeros(BLOCK_SIZE)
    sign = np.ones(BLOCK_SIZE)
    prev_dir = None
    out_K = np.empty((len(snap_steps), n_in_block, d, d), np.complex128)
    out_ls = np.empty((len(snap_steps), n_in_block))
    out_sign = np.empty((len(snap_steps), n_in_block))
    sd = math.sqrt(cfg.gamma * cfg.dt)
    done = 0
    k = 0
    while k < len(snap_steps) and snap_steps[k] == 0:
        out_K[k] = K[:n_in_block]
        out_ls[k] = 0.0
        out_sign[k] = 1.0
        k += 1
    chunk = track_stride if track_sign else 512
    while done < total:
        m = min(chunk, total - done, int(snap_steps[k]) - done)
        inc = rng.standard_normal((m, BLOCK_SIZE, gen.dim_alg)) * sd
        propagate(gen, K, ls, np.swapaxes(inc, 0, 1), cfg.gamma, cfg.dt, cfg.stepper)
        done += m
        if track_sign:
            cur = _moment_direction(gen, K)
            if prev_dir is not None:
                flip = np.einsum("ni,ni->n", cur, prev_dir) < 0
                sign = np.where(flip, -sign, sign)
            prev_dir = cur
        while k < len(snap_steps) and snap_steps[k] == done:
            _renormalize_inplace(K, ls)
            out_K[k] = K[:n_in_block]
            out_ls[k] = ls[:n_in_block]
            out_sign[k] = sign[:n_in_block]
            k += 1
    return out_K, out_ls, out_sign


def _block_task(args):
    return _run_block(*args)


def simulate_ensemble(gen: GeneratorSet, cfg: TrajectoryConfig, n_traj: int,
                      base_seed: int, snap_steps, threads: int | None = None,
                      track_sign: bool = False, track_stride: int = 5) -> EnsembleSnapshots:
    """Run ``n_traj`` independent trajectories and keep selected snapshots.

    Trajectory ``i`` draws its increments from the stream
    ``block_rng(base_seed, i // BLOCK_SIZE)``, row ``i % BLOCK_SIZE`` of
    each ``(BLOCK_SIZE, dim_alg)`` draw, so results do not depend on the
    number of worker processes or on ``n_traj``.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    snap_steps = np.array(sorted(set(int(s) for s in snap_steps)), dtype=int)
    if len(snap_steps) == 0 or snap_steps[0] < 0:
        raise ValueError("need at least one nonnegative snapshot step")
    if track_sign and gen.rank != 1:
        raise ValueError("sign tracking is defined for rank-one groups only")
    n_blocks = -(-n_traj // BLOCK_SIZE)
    tasks = [(gen, cfg, base_seed, b, min(BLOCK_SIZE, n_traj - b * BLOCK_SIZE),
              snap_steps, track_sign, track_stride) for b in range(n_blocks)]
    threads = threads or int(os.environ.get("ISO_COLLAPSE_THREADS", "1") or 1)
    if threads > 1 and n_blocks > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_block_task, tasks))
    else:
        parts = [_block_task(t) for t in tasks]
    K = np.concatenate([p[0] for p in parts], axis=1)
    ls = np.concatenate([p[1] for p in parts], axis=1)
    sign = np.concatenate([p[2] for p in parts], axis=1)
    times = snap_steps * gen.dim_alg * cfg.dt
    return EnsembleSnapshots(steps=snap_steps, times=times, K=K, log_scale=ls, sign=sign)


# ------------------------------------------------------------ isotropy design

@dataclass(frozen=True)
class IsotropyReport:
    residual: float
    dw_covariance: np.ndarray
    target: np.ndarray


def design_isotropic_coupling(kappa, sigma2, gen: GeneratorSet, gamma: float, dt: float,
                              n_observables: int | None = None) -> IsotropyReport:
    """Check a meter design against the isotropy condition.

    ``kappa[alpha, mu]`` couples meter ``alpha`` to generator ``mu``;
    ``sigma2`` is the meter covariance. The design is isotropic when
    ``kappa^T sigma2^{-1} kappa = n gamma dt g^{-1} / dim_alg``. The
    returned residual is the Frobenius distance to that target relative to
    the target's norm, and ``dw_covariance`` is the induced covariance of
    the effective increments ``dW = kappa^T sigma2^{-1} q``.
    """
    kappa = np.asarray(kappa, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    p = kappa.shape[0]
    if kappa.ndim != 2 or kappa.shape[1] != gen.dim_alg:
        raise ValueError(f"kappa must have shape (p, {gen.dim_alg})")
    if p < gen.dim_alg:
        raise ValueError(f"need at least {gen.dim_alg} meters, got {p}")
    if sigma2.shape != (p, p):
        raise ValueError(f"sigma2 must have shape ({p}, {p})")
    if np.linalg.matrix_rank(sigma2) < p:
        raise ValueError("meter covariance is singular")
    n = p if n_observables is None else n_observables
    cov = kappa.T @ np.linalg.solve(sigma2, kappa)
    target = n * gamma * dt * gen.metric_inverse / gen.dim_alg
    resid = np.linalg.norm(cov - target) / np.linalg.norm(target)
    return IsotropyReport(residual=float(resid), dw_covariance=cov, target=target)
