"""Monte Carlo harness over the Wiener measure.

Trajectories are produced by :func:`iso_collapse.sde_engine.simulate_ensemble`
(block-seeded, so results do not depend on the worker count) and reduced
here in a fixed order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .coherent import impurity, moment_vector
from .lie_rep import GeneratorSet
from .numerics import dagger
from .sde_engine import (TrajectoryConfig, propagate, renormalize, simulate_ensemble,
                         step_normalizer)
from .svd_coords import (BoundCheck, RadialReport, decompose_batch, impurity_bound_check,
                         projector_distance, radial_statistics)

__all__ = [
    "DEFAULT_EPS",
    "DEFAULT_GAMMA_T",
    "HeavyTailWarning",
    "EnsembleConfig",
    "GuaranteeRow",
    "SnapshotStats",
    "EnsembleStats",
    "guarantee_bound",
    "initial_state",
    "run_ensemble",
    "CompletenessResult",
    "completeness_check",
    "ReweightResult",
    "physical_reweight",
    "SpliceResult",
    "splice_experiment",
    "ConvergenceResult",
    "stepper_convergence",
]

DEFAULT_EPS = (0.3, 0.1, 0.03, 0.01)
DEFAULT_GAMMA_T = (4.0, 16.0, 64.0, 100.0)
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
MIN_ESS = 100


class HeavyTailWarning(RuntimeWarning):
    """Effective sample size of an importance-weighted average is too small."""


def initial_state(gen: GeneratorSet, rho) -> np.ndarray:
    """Density matrix from ``'highest_weight'``, ``'maximally_mixed'`` or a matrix."""
    d = gen.dim_rep
    if isinstance(rho, str):
        if rho == "highest_weight":
            v = gen.highest_weight_state()
            return np.outer(v, v.conj())
        if rho == "maximally_mixed":
            return np.eye(d, dtype=np.complex128) / d
        raise ValueError(f"unknown initial state {rho!r}")
    r = np.asarray(rho, dtype=np.complex128)
    if r.shape != (d, d):
        raise ValueError(f"rho must be {d}x{d}")
    if abs(np.trace(r) - 1) > 1e-12:
        raise ValueError("rho must have unit trace")
    if np.max(np.abs(r - dagger(r))) > 1e-10 or np.linalg.eigvalsh(r)[0] < -1e-10:
        raise ValueError("rho must be a positive operator")
    return r


@dataclass(frozen=True)
class EnsembleConfig:
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    n_traj: int = 1000
    rho: object = "highest_weight"
    eps_grid: tuple = DEFAULT_EPS
    gamma_t_grid: tuple | None = None
    base_seed: int = 0
    threads: int | None = None
    track_sign: bool = False

    def __post_init__(self):
        if int(self.n_traj) != self.n_traj or self.n_traj < 1:
            raise ValueError(f"n_traj must be a positive integer, got {self.n_traj}")
        if any(not (0 < e) for e in self.eps_grid):
            raise ValueError("epsilon values must be positive")
        if self.gamma_t_grid is not None and any(g < 0 for g in self.gamma_t_grid):
            raise ValueError("gammaT values must be nonnegative")

    def gamma_ts(self) -> tuple:
        if self.gamma_t_grid is None:
            return (self.trajectory.gamma_t,)
        return tuple(sorted(set(float(g) for g in self.gamma_t_grid)))


def guarantee_bound(gen: GeneratorSet, gamma_t: float, eps: float) -> float:
    """Lower bound on ``Prob(impurity < eps)`` after elapsed ``gamma_t``.

    ``1 - sqrt(2 dim / (pi gamma T)) ln(4 (omega, lambda) / (|lambda|^2 eps))``;
    for spin ``j`` this is ``1 - sqrt(6 / (pi gamma T)) ln(2 / (j eps))``.
    Returns ``-inf`` at ``gamma_t = 0``.
    """
    rs = gen.roots
    if gamma_t <= 0:
        return -math.inf
    pref = 4 * rs.inner(rs.weyl_vector, rs.highest_weight) / rs.highest_weight_norm2
    return 1 - math.sqrt(2 * gen.dim_alg / (math.pi * gamma_t)) * math.log(pref / eps)


@dataclass(frozen=True)
class GuaranteeRow:
    gamma_t: float
    eps: float
    empirical: float
    se: float
    bound: float

    @property
    def informative(self) -> bool:
        return 0 < self.bound < 1

    @property
    def ok(self) -> bool:
        """Empirical probability reaches the bound (always true when vacuous)."""
        return (not self.informative) or self.empirical >= self.bound


@dataclass(frozen=True)
class SnapshotStats:
    gamma_t: float
    elapsed: float
    radial: RadialReport | None
    impurity_quantiles: dict
    bounds: BoundCheck
    guarantee: list
    median_alpha: float


@dataclass(frozen=True)
class EnsembleStats:
    n_traj: int
    snapshots: list
    reweight: "ReweightResult | None" = None

    @property
    def guarantee_table(self) -> list:
        return [row for s in self.snapshots for row in s.guarantee]

    @property
    def bounds_hold(self) -> bool:
        return all(s.bounds.all_below and s.bounds.all_equal for s in self.snapshots)

    @property
    def guarantee_holds(self) -> bool:
        return all(r.ok for r in self.guarantee_table)


def _steps_for(gen, cfg, gamma_t):
    return int(math.ceil(gamma_t / (cfg.gamma * gen.dim_alg * cfg.dt) - 1e-9))


def _snapshot_stats(gen, K, ls, sign, gamma_t, elapsed, eps_grid, track_sign):
    n = K.shape[0]
    e_right = dagger(K) @ K
    e_left = K @ dagger(K)
    imp_r = np.atleast_1d(impurity(gen, e_right))
    imp_l = np.atleast_1d(impurity(gen, e_left))
    coords = decompose_batch(gen, K)
    check = impurity_bound_check(gen, coords.a, imp_r, imp_l)
    radial = None
    if n >= 100:
        signed = sign * coords.alpha if track_sign else None
        radial = radial_statistics(gen, coords.a, gamma_t, signed=signed)
    imp = check.impurity
    rows = []
    for eps in eps_grid:
        p = float(np.mean(imp < eps))
        rows.append(GuaranteeRow(gamma_t=gamma_t, eps=float(eps), empirical=p,
                                 se=math.sqrt(p * (1 - p) / n),
                                 bound=guarantee_bound(gen, gamma_t, eps)))
    quant = {q: float(v) for q, v in zip(QUANTILES, np.quantile(imp, QUANTILES))}
    return SnapshotStats(gamma_t=gamma_t, elapsed=elapsed, radial=radial,
                         impurity_quantiles=quant, bounds=check, guarantee=rows,
                         median_alpha=float(np.median(coords.alpha)))


def run_ensemble(gen: GeneratorSet, config: EnsembleConfig, keep_snapshots: bool = False):
    """Simulate an ensemble and evaluate the collapse guarantees at each ``gammaT``.

    Returns
    -------
    EnsembleStats
        And, with ``keep_snapshots=True``, the raw
        :class:`~iso_collapse.sde_engine.EnsembleSnapshots` as a second value.
    """
    cfg = config.trajectory
    gts = config.gamma_ts()
    steps = [_steps_for(gen, cfg, g) for g in gts]
    snaps = simulate_ensemble(gen, cfg, config.n_traj, config.base_seed, steps,
                              threads=config.threads, track_sign=config.track_sign)
    index = {int(s): k for k, s in enumerate(snaps.steps)}
    out = []
    for g, st in zip(gts, steps):
        k = index[st]
        out.append(_snapshot_stats(gen, snaps.K[k], snaps.log_scale[k], snaps.sign[k], g,
                                   float(snaps.times[k]), config.eps_grid, config.track_sign))
    last = index[steps[-1]]
    rw = None
    if config.rho is not None and steps[-1] > 0:
        rw = physical_reweight(gen, snaps.K[last], snaps.log_scale[last], steps[-1], cfg,
                               config.rho)
    stats = EnsembleStats(n_traj=config.n_traj, snapshots=out, reweight=rw)
    return (stats, snaps) if keep_snapshots else stats


# ------------------------------------------------------------ completeness

def _weighted_mean(x, axis=0):
    n = x.shape[axis]
    return x.mean(axis=axis), x.std(axis=axis, ddof=1) / math.sqrt(n)


@dataclass(frozen=True)
class CompletenessResult:
    """Monte Carlo estimate of the normalized POVM total ``M``.

    ``se`` holds the per-entry standard error (larger of the real and
    imaginary parts); ``se_max`` its maximum.
    """

    M: np.ndarray
    se: np.ndarray
    residual: float
    se_max: float
    ess: float
    flagged: bool
    normalizer: float
    n_steps: int

    def within(self, k: float = 3.0) -> bool:
        return self.residual < k * self.se_max


def completeness_check(gen: GeneratorSet, cfg: TrajectoryConfig, n_traj: int,
                       base_seed: int = 0, threads: int | None = None) -> CompletenessResult:
    """Estimate ``M = E[exp(2 log_scale) K^dagger K] / s^N``; should equal the identity.

    ``s`` is :func:`~iso_collapse.sde_engine.step_normalizer` for the
    configured stepper and ``N`` the number of super-steps.
    """
    if cfg.gamma_t > 1:
        warnings.warn("completeness estimates are heavy tailed beyond gammaT = 1",
                      HeavyTailWarning, stacklevel=2)
    N = _steps_for(gen, cfg, cfg.gamma_t)
    s = step_normalizer(gen, cfg.gamma, cfg.dt, cfg.stepper)
    d = gen.dim_rep
    if N == 0:
        return CompletenessResult(M=np.eye(d, dtype=complex), se=np.zeros((d, d)), residual=0.0,
                                  se_max=0.0, ess=float(n_traj), flagged=False, normalizer=s,
                                  n_steps=0)
    snaps = simulate_ensemble(gen, cfg, n_traj, base_seed, [N], threads=threads)
    K, ls = snaps.K[0], snaps.log_scale[0]
    scale = np.exp(2 * ls - N * math.log(s))
    E = scale[:, None, None] * (dagger(K) @ K)
    mean_re, se_re = _weighted_mean(E.real)
    mean_im, se_im = _weighted_mean(E.imag)
    M = mean_re + 1j * mean_im
    se = np.maximum(se_re, se_im)
    tr = np.trace(E, axis1=1, axis2=2).real
    ess = float(tr.sum() ** 2 / (tr ** 2).sum())
    flagged = ess < MIN_ESS
    if flagged:
        warnings.warn(f"effective sample size {ess:.1f} below {MIN_ESS}", HeavyTailWarning,
                      stacklevel=2)
    return CompletenessResult(M=M, se=se, residual=float(np.max(np.abs(M - np.eye(d)))),
                              se_max=float(se.max()), ess=ess, flagged=flagged, normalizer=s,
                              n_steps=N)


# ------------------------------------------------------------ physical reweighting

@dataclass(frozen=True)
class ReweightResult:
    """Importance-weighted outcome statistics.

    ``alignment`` is ``(m(Q_V), m(|lambda><lambda|)) / |lambda|^2`` where
    ``m`` is the generator moment vector; for spin ``j`` it is the
    ``cos(theta)`` of the outcome direction relative to ``+z``.
    """

    n: int
    mean_weight: float
    mean_weight_se: float
    ess: float
    alignment_mean: float
    alignment_se: float
    unweighted_alignment_mean: float
    unweighted_alignment_se: float
    flagged: bool


def physical_reweight(gen: GeneratorSet, K, log_scale, n_steps: int, cfg: TrajectoryConfig,
                      rho) -> ReweightResult:
    """Reweight Wiener-measure trajectories to the physical outcome law for ``rho``.

    ``w = Tr(rho K^dagger K) exp(2 log_scale) / s^N``; the outcome is read
    from the right coherent projector ``Q_V``.
    """
    rho = initial_state(gen, rho)
    s = step_normalizer(gen, cfg.gamma, cfg.dt, cfg.stepper)
    E = dagger(K) @ K
    tr = np.einsum("ij,nji->n", rho, E).real
    logw = np.log(tr) + 2 * np.asarray(log_scale) - n_steps * math.log(s)
    w = np.exp(logw)
    n = len(w)
    coords = decompose_batch(gen, K)
    ref = moment_vector(gen, initial_state(gen, "highest_weight"))
    lam2 = gen.roots.highest_weight_norm2
    x = moment_vector(gen, coords.q_v) @ gen.metric_inverse @ ref / lam2
    wsum = w.sum()
    xbar = float((w * x).sum() / wsum)
    xse = float(math.sqrt(np.sum(w ** 2 * (x - xbar) ** 2)) / wsum)
    ess = float(wsum ** 2 / np.sum(w ** 2))
    flagged = ess < MIN_ESS
    if flagged:
        warnings.warn(f"effective sample size {ess:.1f} below {MIN_ESS}", HeavyTailWarning,
                      stacklevel=2)
    return ReweightResult(n=n, mean_weight=float(w.mean()),
                          mean_weight_se=float(w.std(ddof=1) / math.sqrt(n)), ess=ess,
                          alignment_mean=xbar, alignment_se=xse,
                          unweighted_alignment_mean=float(x.mean()),
                          unweighted_alignment_se=float(x.std(ddof=1) / math.sqrt(n)),
                          flagged=flagged)


# ------------------------------------------------------------ record splicing

@dataclass(frozen=True)
class SpliceResult:
    """Final-projector discrepancies for trajectory pairs sharing half a record.

    ``shared='early'`` pairs agree on the first half; the right projector
    ``Q_V`` should then agree (``matched``) while ``Q_U`` need not
    (``unmatched``). ``shared='late'`` swaps the roles.
    """

    shared: str
    matched: np.ndarray
    unmatched: np.ndarray
    alpha_half: np.ndarray

    @property
    def matched_median(self) -> float:
        return float(np.median(self.matched))

    @property
    def unmatched_median(self) -> float:
        return float(np.median(self.unmatched))


def splice_experiment(gen: GeneratorSet, cfg: TrajectoryConfig, n_pairs: int,
                      base_seed: int = 0, shared: str = "early") -> SpliceResult:
    """Run ``n_pairs`` trajectory pairs whose records coincide on one half."""
    if shared not in ("early", "late"):
        raise ValueError("shared must be 'early' or 'late'")
    N = _steps_for(gen, cfg, cfg.gamma_t)
    half = N // 2
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(int(base_seed), spawn_key=(1 if shared == "early" else 2,))))
    sd = math.sqrt(cfg.gamma * cfg.dt)
    inc_a = rng.standard_normal((n_pairs, N, gen.dim_alg)) * sd
    inc_b = inc_a.copy()
    if shared == "early":
        inc_b[:, half:] = rng.standard_normal((n_pairs, N - half, gen.dim_alg)) * sd
    else:
        inc_b[:, :half] = rng.standard_normal((n_pairs, half, gen.dim_alg)) * sd
    d = gen.dim_rep
    finals = []
    for inc in (inc_a, inc_b):
        K = np.broadcast_to(np.eye(d, dtype=np.complex128), (n_pairs, d, d)).copy()
        ls = np.zeros(n_pairs)
        propagate(gen, K, ls, inc, cfg.gamma, cfg.dt, cfg.stepper)
        finals.append(decompose_batch(gen, renormalize(K)[0]))
    # radial coordinate accumulated over the shared half
    K = np.broadcast_to(np.eye(d, dtype=np.complex128), (n_pairs, d, d)).copy()
    ls = np.zeros(n_pairs)
    part = inc_a[:, :half] if shared == "early" else inc_a[:, half:]
    propagate(gen, K, ls, part, cfg.gamma, cfg.dt, cfg.stepper)
    alpha_half = decompose_batch(gen, renormalize(K)[0]).alpha
    dv = projector_distance(finals[0].q_v, finals[1].q_v)
    du = projector_distance(finals[0].q_u, finals[1].q_u)
    matched, unmatched = (dv, du) if shared == "early" else (du, dv)
    return SpliceResult(shared=shared, matched=matched, unmatched=unmatched, alpha_half=alpha_half)


# ------------------------------------------------------------ stepper convergence

@dataclass(frozen=True)
class ConvergenceResult:
    """Pathwise gap between the two steppers driven by one fine record.

    ``mean_gap`` is the mean relative Frobenius distance of the physical
    operators and ``mean_sq_gap`` the mean of its square; ``exponent`` and
    ``sq_exponent`` are the log-log slopes against ``dt``.
    """

    dts: np.ndarray
    mean_gap: np.ndarray
    mean_sq_gap: np.ndarray
    exponent: float
    sq_exponent: float


def stepper_convergence(gen: GeneratorSet, gamma: float, gamma_t: float, dts, n_paths: int,
                        seed: int = 0) -> ConvergenceResult:
    """Compare exact-exponential and Euler-Maruyama steps on a shared record.

    One Brownian record is drawn at the finest ``dt``; coarser records are
    its partial sums, so every resolution sees the same path.
    """
    dts = np.sort(np.asarray(dts, dtype=float))[::-1]
    fine = dts[-1]
    ratios = dts / fine
    if np.any(np.abs(ratios - np.round(ratios)) > 1e-9):
        raise ValueError("every dt must be an integer multiple of the finest dt")
    ratios = np.round(ratios).astype(int)
    n_fine = int(round(gamma_t / (gamma * gen.dim_alg * fine)))
    if n_fine % ratios.max():
        raise ValueError("gammaT must span a whole number of coarsest steps")
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((n_paths, n_fine, gen.dim_alg)) * math.sqrt(gamma * fine)
    d = gen.dim_rep
    gaps, sq = [], []
    for dt, r in zip(dts, ratios):
        inc = W.reshape(n_paths, n_fine // r, r, gen.dim_alg).sum(axis=2)
        ops = []
        for mode in ("exact_exponential", "euler_maruyama"):
            K = np.broadcast_to(np.eye(d, dtype=np.complex128), (n_paths, d, d)).copy()
            ls = np.zeros(n_paths)
            propagate(gen, K, ls, inc, gamma, dt, mode)
            ops.append((K, ls))
        (k1, l1), (k2, l2) = ops
        rel = np.linalg.norm(k1 - np.exp(l2 - l1)[:, None, None] * k2, axis=(1, 2)) \
            / np.linalg.norm(k1, axis=(1, 2))
        gaps.append(rel.mean())
        sq.append((rel ** 2).mean())
    x = np.log(dts)
    slope = float(np.polyfit(x, np.log(gaps), 1)[0])
    sq_slope = float(np.polyfit(x, np.log(sq), 1)[0])
    return ConvergenceResult(dts=dts, mean_gap=np.array(gaps), mean_sq_gap=np.array(sq),
                             exponent=slope, sq_exponent=sq_slope)
