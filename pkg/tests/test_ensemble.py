import math
import warnings

import numpy as np
import pytest

from iso_collapse.ensemble import (EnsembleConfig, HeavyTailWarning, completeness_check,
                                   guarantee_bound, initial_state, physical_reweight,
                                   run_ensemble, splice_experiment, stepper_convergence)
from iso_collapse.lie_rep import build_spin_irrep, build_su3_irrep
from iso_collapse.sde_engine import TrajectoryConfig, simulate_ensemble


def test_initial_state_variants():
    g = build_spin_irrep(1)
    hw = initial_state(g, "highest_weight")
    assert hw[0, 0] == 1 and np.trace(hw) == 1
    np.testing.assert_allclose(initial_state(g, "maximally_mixed"), np.eye(3) / 3)
    with pytest.raises(ValueError):
        initial_state(g, "thermal")
    with pytest.raises(ValueError):
        initial_state(g, np.eye(3))
    with pytest.raises(ValueError):
        initial_state(g, np.diag([1.5, -0.5, 0.0]))
    with pytest.raises(ValueError):
        initial_state(g, np.eye(2) / 2)


def test_ensemble_config_validation():
    with pytest.raises(ValueError):
        EnsembleConfig(n_traj=0)
    with pytest.raises(ValueError):
        EnsembleConfig(eps_grid=(0.1, 0.0))
    with pytest.raises(ValueError):
        EnsembleConfig(gamma_t_grid=(-1.0,))
    cfg = EnsembleConfig(gamma_t_grid=(16, 4, 4.0))
    assert cfg.gamma_ts() == (4.0, 16.0)


@pytest.mark.parametrize("j, gt, eps", [(0.5, 100.0, 0.01), (1, 64.0, 0.1), (2, 16.0, 0.3)])
def test_guarantee_bound_spin_formula(j, gt, eps):
    g = build_spin_irrep(j)
    want = 1 - math.sqrt(6 / (math.pi * gt)) * math.log(2 / (j * eps))
    assert guarantee_bound(g, gt, eps) == pytest.approx(want)


def test_guarantee_bound_frozen_values():
    # 1 - sqrt(6 / (100 pi)) ln 400
    assert guarantee_bound(build_spin_irrep(0.5), 100.0, 0.01) == pytest.approx(
        0.171994, abs=1e-6)
    assert guarantee_bound(build_spin_irrep(1), 0.0, 0.1) == -math.inf
    su3 = build_su3_irrep("defining")
    want = 1 - math.sqrt(16 / (math.pi * 64)) * math.log(6 / 0.1)
    assert guarantee_bound(su3, 64.0, 0.1) == pytest.approx(want)


def test_run_ensemble_at_zero_time():
    g = build_spin_irrep(1)
    cfg = EnsembleConfig(trajectory=TrajectoryConfig(total_time=0.0), n_traj=120)
    stats = run_ensemble(g, cfg)
    snap = stats.snapshots[0]
    assert snap.impurity_quantiles[0.5] == pytest.approx(1.0)
    assert all(not row.informative and row.ok for row in snap.guarantee)
    assert stats.reweight is None and snap.median_alpha == 0.0


def test_run_ensemble_spin_half_bound_and_guarantee():
    g = build_spin_irrep(0.5)
    tcfg = TrajectoryConfig(gamma=1.0, dt=0.01, total_time=32.0)
    cfg = EnsembleConfig(trajectory=tcfg, n_traj=512, gamma_t_grid=(4.0, 32.0), base_seed=3,
                        rho=None)
    stats, snaps = run_ensemble(g, cfg, keep_snapshots=True)
    assert [s.gamma_t for s in stats.snapshots] == [4.0, 32.0]
    assert snaps.K.shape == (2, 512, 2, 2)
    assert stats.bounds_hold and stats.guarantee_holds
    first, last = stats.snapshots
    assert last.median_alpha > first.median_alpha
    assert last.impurity_quantiles[0.5] < first.impurity_quantiles[0.5]
    assert first.radial.heat_kernel_second_moment == pytest.approx(10 / 9)


def test_run_ensemble_sign_tracking_rank_one():
    g = build_spin_irrep(1)
    tcfg = TrajectoryConfig(gamma=1.0, dt=0.01, total_time=2.0)
    stats = run_ensemble(g, EnsembleConfig(trajectory=tcfg, n_traj=200, track_sign=True))
    rad = stats.snapshots[0].radial
    assert rad.signed_mean is not None and abs(rad.signed_mean) <= rad.norm_mean + 1e-12


def test_completeness_spin_one_short_time():
    g = build_spin_irrep(1)
    cfg = TrajectoryConfig(gamma=1.0, dt=0.01, total_time=0.3)
    res = completeness_check(g, cfg, 4000, base_seed=1)
    assert res.n_steps == 10 and not res.flagged
    assert res.within(4)
    assert res.ess > 3000


def test_completeness_zero_time_and_heavy_tail_warning():
    g = build_spin_irrep(0.5)
    res = completeness_check(g, TrajectoryConfig(total_time=0.0), 10)
    assert res.residual == 0.0 and res.n_steps == 0
    with pytest.warns(HeavyTailWarning):
        completeness_check(g, TrajectoryConfig(gamma=1.0, dt=0.01, total_time=1.5), 10)


def test_completeness_euler_stepper():
    g = build_su3_irrep("defining")
    cfg = TrajectoryConfig(gamma=1.0, dt=0.01, total_time=0.4, stepper="euler_maruyama")
    with warnings.catch_warnings():
        warnings.simplefilter("error", HeavyTailWarning)
        res = completeness_check(g, cfg, 3000, base_seed=2)
    assert res.within(4)


def test_physical_reweight_outcome_law_spin_half():
    g = build_spin_irrep(0.5)
    cfg = TrajectoryConfig(gamma=1.0, dt=0.01, total_time=16.0)
    n_steps = 16.0 / (3 * 0.01)
    n_steps = int(math.ceil(n_steps - 1e-9))
    snaps = simulate_ensemble(g, cfg, 3000, 5, [n_steps])
    K, ls = snaps.K[0], snaps.log_scale[0]
    hw = physical_reweight(g, K, ls, n_steps, cfg, "highest_weight")
    # outcome density proportional to 1 + cos(theta) has mean cosine 1/3
    assert hw.alignment_mean == pytest.approx(1 / 3, abs=4 * hw.alignment_se)
    assert abs(hw.unweighted_alignment_mean) < 4 * hw.unweighted_alignment_se
    mixed = physical_reweight(g, K, ls, n_steps, cfg, "maximally_mixed")
    assert mixed.mean_weight == pytest.approx(1.0, abs=4 * mixed.mean_weight_se)
    assert abs(mixed.alignment_mean) < 4 * mixed.alignment_se


def test_splice_converges_at_long_times():
    g = build_spin_irrep(1)
    cfg = TrajectoryConfig(gamma=1.0, dt=0.01, total_time=100.0)
    early = splice_experiment(g, cfg, 60, base_seed=1, shared="early")
    late = splice_experiment(g, cfg, 60, base_seed=1, shared="late")
    assert early.matched_median < 0.05 and late.matched_median < 0.05
    assert early.unmatched_median > 0.5 and late.unmatched_median > 0.5
    assert np.median(early.alpha_half) > 2
    with pytest.raises(ValueError):
        splice_experiment(g, cfg, 2, shared="middle")


def test_splice_matched_gap_shrinks_with_time():
    g = build_spin_irrep(1)
    meds = [splice_experiment(g, TrajectoryConfig(gamma=1.0, dt=0.01, total_time=gt), 60,
                              base_seed=2).matched_median for gt in (12.0, 48.0)]
    assert meds[1] < meds[0]


def test_stepper_convergence_strong_order_half():
    g = build_spin_irrep(1)
    res = stepper_convergence(g, 1.0, 0.96, [0.02, 0.005, 0.00125], 60, seed=4)
    assert np.all(np.diff(res.mean_gap) < 0)
    assert 0.8 <= res.sq_exponent <= 1.2
    assert 0.4 <= res.exponent <= 0.6


def test_stepper_convergence_grid_errors():
    g = build_spin_irrep(0.5)
    with pytest.raises(ValueError):
        stepper_convergence(g, 1.0, 0.96, [0.01, 0.003], 2)
    with pytest.raises(ValueError):
        stepper_convergence(g, 1.0, 0.1, [0.02, 0.01], 2)
