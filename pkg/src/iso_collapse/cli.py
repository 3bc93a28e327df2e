"""``iso-collapse`` command-line interface.

Subcommands: ``simulate``, ``verify``, ``diagram`` and ``completeness``.
Settings resolve in the order command-line flag, then ``--config`` (a flat
JSON object keyed by the long option names with dashes replaced by
underscores), then built-in defaults. Every run writes ``summary.json``
with ``schema_version``, the resolved ``config``, ``results`` and
``assertions``.

Exit codes: 0 all assertions passed, 1 an assertion failed, 2 invalid
configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import coherent, diagram, ensemble, lie_rep, sde_engine
from .numerics import expm

SCHEMA_VERSION = 1
DEFAULT_GAMMA_T = 4.0

DEFAULTS = {
    "group": "su2",
    "j": 0.5,
    "rep": "defining",
    "pq": None,
    "gamma": 1.0,
    "dt": 0.01,
    "T": None,
    "gammaT": None,
    "gammaT_grid": None,
    "ntraj": 1000,
    "seed": 0,
    "eps": list(ensemble.DEFAULT_EPS),
    "rho": "highest_weight",
    "stepper": "exact_exponential",
    "record_stride": 10,
    "threads": None,
    "out": "iso_collapse_out",
    "completeness": False,
    "kind": "weights",
    "format": "csv",
    "coupling": None,
    "verify_j_max": 12.5,
}


class ConfigError(ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


# ------------------------------------------------------------ JSON helpers

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        if np.iscomplexobj(x):
            return {"re": _jsonable(x.real.tolist()), "im": _jsonable(x.imag.tolist())}
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, Fraction):
        return float(x)
    return x


def _assertion(name, passed, **detail):
    return {"name": name, "passed": bool(passed), **_jsonable(detail)}


# ------------------------------------------------------------ config

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON file of option values")
    common.add_argument("--group", choices=["su2", "su3"])
    common.add_argument("--j", help="spin label for su2, e.g. 0.5 or 3/2")
    common.add_argument("--rep", choices=["defining", "adjoint"], help="su3 matrix representation")
    common.add_argument("--pq", nargs=2, type=int, metavar=("P", "Q"),
                        help="su3 highest weight p*phi1 + q*phi2 (diagram only)")
    common.add_argument("--gamma", type=float)
    common.add_argument("--dt", type=float)
    common.add_argument("--T", type=float, help="total time (alternative to --gammaT)")
    common.add_argument("--gammaT", type=float, help="dimensionless measurement strength")
    common.add_argument("--gammaT-grid", dest="gammaT_grid", type=float, nargs="+")
    common.add_argument("--ntraj", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--eps", type=float, nargs="+")
    common.add_argument("--rho", choices=["highest_weight", "maximally_mixed"])
    common.add_argument("--stepper", choices=list(sde_engine.STEPPERS))
    common.add_argument("--record-stride", dest="record_stride", type=int)
    common.add_argument("--threads", type=int, help="worker processes (env ISO_COLLAPSE_THREADS)")
    common.add_argument("--out", help="output directory")

    p = argparse.ArgumentParser(prog="iso-collapse", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="run an ensemble and check guarantees")
    s.add_argument("--completeness", action="store_true", default=None,
                   help="also estimate the POVM total at the final time")
    v = sub.add_parser("verify", parents=[common], help="run algebraic and numerical invariant checks")
    v.add_argument("--coupling", help="JSON file with 'kappa', 'sigma2' and optional 'n'")
    v.add_argument("--verify-j-max", dest="verify_j_max", type=float)
    d = sub.add_parser("diagram", parents=[common], help="emit weight diagrams or trajectory plots")
    d.add_argument("--kind", choices=list(diagram.KINDS))
    d.add_argument("--format", choices=["csv", "svg"])
    sub.add_parser("completeness", parents=[common], help="estimate the POVM total at small gammaT")
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "must be a flat JSON object")
        for k, v in data.items():
            if k not in DEFAULTS:
                raise ConfigError(k, "unknown configuration key")
            cfg[k] = v
    explicit = {k: v for k, v in vars(args).items() if k in DEFAULTS and v is not None}
    cfg.update(explicit)
    if cfg["T"] is None and cfg["gammaT"] is None:
        cfg["gammaT"] = DEFAULT_GAMMA_T
    if cfg["threads"] is None:
        env = os.environ.get("ISO_COLLAPSE_THREADS")
        cfg["threads"] = env if env else 1
    return _validate(cfg)


def _number(cfg, key, kind=float, positive=False, nonneg=False):
    v = cfg[key]
    try:
        if isinstance(v, bool):
            raise TypeError
        x = kind(v)
        if kind is int and float(v) != x:
            raise ValueError
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a {kind.__name__}, got {v!r}") from None
    if kind is float and not math.isfinite(x):
        raise ConfigError(key, "must be finite")
    if positive and not x > 0:
        raise ConfigError(key, f"must be positive, got {v!r}")
    if nonneg and x < 0:
        raise ConfigError(key, f"must be nonnegative, got {v!r}")
    return x


def _validate(cfg: dict) -> dict:
    if cfg["group"] not in ("su2", "su3"):
        raise ConfigError("group", "must be su2 or su3")
    if cfg["group"] == "su2":
        try:
            cfg["j"] = float(lie_rep.parse_spin(cfg["j"]))
        except (lie_rep.SpecError, ValueError, TypeError, ZeroDivisionError) as exc:
            raise ConfigError("j", str(exc)) from None
    if cfg["rep"] not in ("defining", "adjoint"):
        raise ConfigError("rep", "must be defining or adjoint")
    if cfg["pq"] is not None:
        pq = cfg["pq"]
        if (not isinstance(pq, (list, tuple)) or len(pq) != 2
                or any(isinstance(x, bool) or int(x) != x or x < 0 for x in pq)):
            raise ConfigError("pq", "must be two nonnegative integers")
        cfg["pq"] = [int(x) for x in pq]
    cfg["gamma"] = _number(cfg, "gamma", positive=True)
    cfg["dt"] = _number(cfg, "dt", positive=True)
    if cfg["gamma"] * cfg["dt"] > sde_engine.WEAK_GUARD:
        raise ConfigError("dt", f"gamma*dt must not exceed {sde_engine.WEAK_GUARD}")
    if cfg["T"] is not None:
        cfg["T"] = _number(cfg, "T", nonneg=True)
        if cfg["gammaT"] is not None and not math.isclose(
                _number(cfg, "gammaT", nonneg=True), cfg["gamma"] * cfg["T"], rel_tol=1e-12):
            raise ConfigError("gammaT", "conflicts with gamma*T")
        cfg["gammaT"] = cfg["gamma"] * cfg["T"]
    cfg["gammaT"] = _number(cfg, "gammaT", nonneg=True)
    cfg["T"] = cfg["gammaT"] / cfg["gamma"]
    if cfg["gammaT_grid"] is not None:
        if not isinstance(cfg["gammaT_grid"], (list, tuple)) or not cfg["gammaT_grid"]:
            raise ConfigError("gammaT_grid", "must be a nonempty list")
        cfg["gammaT_grid"] = [_number({"gammaT_grid": g}, "gammaT_grid", nonneg=True)
                              for g in cfg["gammaT_grid"]]
    cfg["ntraj"] = _number(cfg, "ntraj", kind=int, positive=True)
    cfg["seed"] = _number(cfg, "seed", kind=int, nonneg=True)
    if cfg["seed"] >= 2 ** 64:
        raise ConfigError("seed", "must fit in 64 unsigned bits")
    eps = cfg["eps"] if isinstance(cfg["eps"], (list, tuple)) else [cfg["eps"]]
    cfg["eps"] = [_number({"eps": e}, "eps", positive=True) for e in eps]
    if cfg["rho"] not in ("highest_weight", "maximally_mixed"):
        raise ConfigError("rho", "must be highest_weight or maximally_mixed")
    if cfg["stepper"] not in sde_engine.STEPPERS:
        raise ConfigError("stepper", f"must be one of {sde_engine.STEPPERS}")
    cfg["record_stride"] = _number(cfg, "record_stride", kind=int, positive=True)
    cfg["threads"] = _number(cfg, "threads", kind=int, positive=True)
    cfg["verify_j_max"] = _number(cfg, "verify_j_max", nonneg=True)
    if cfg["kind"] not in diagram.KINDS:
        raise ConfigError("kind", f"must be one of {diagram.KINDS}")
    if cfg["format"] not in ("csv", "svg"):
        raise ConfigError("format", "must be csv or svg")
    cfg["completeness"] = bool(cfg["completeness"])
    return cfg


def _generators(cfg):
    if cfg["group"] == "su2":
        return lie_rep.build_spin_irrep(cfg["j"])
    if cfg["pq"] is not None:
        raise ConfigError("pq", "diagram-only highest weights have no matrices; use --rep")
    return lie_rep.build_su3_irrep(cfg["rep"])


def _trajectory_config(cfg) -> sde_engine.TrajectoryConfig:
    return sde_engine.TrajectoryConfig(gamma=cfg["gamma"], dt=cfg["dt"], total_time=cfg["T"],
                                       stepper=cfg["stepper"], seed=cfg["seed"],
                                       record_stride=cfg["record_stride"])


# ------------------------------------------------------------ commands

def cmd_simulate(cfg: dict):
    gen = _generators(cfg)
    tcfg = _trajectory_config(cfg)
    grid = cfg["gammaT_grid"] or [cfg["gammaT"]]
    econf = ensemble.EnsembleConfig(trajectory=tcfg, n_traj=cfg["ntraj"], rho=cfg["rho"],
                                    eps_grid=tuple(cfg["eps"]), gamma_t_grid=tuple(grid),
                                    base_seed=cfg["seed"], threads=cfg["threads"],
                                    track_sign=gen.rank == 1)
    stats = ensemble.run_ensemble(gen, econf)
    out = Path(cfg["out"])
    rows, snap_results = [], []
    for s in stats.snapshots:
        r = s.radial
        rows.append((s.gamma_t, s.elapsed,
                     r.per_component if r else math.nan, r.per_component_se if r else math.nan,
                     r.predicted_per_component if r else math.nan,
                     (r.heat_kernel_second_moment if r and r.heat_kernel_second_moment is not None
                      else math.nan),
                     s.median_alpha, s.impurity_quantiles[0.5], s.bounds.fraction_below))
        snap_results.append({
            "gammaT": s.gamma_t, "elapsed": s.elapsed,
            "radial": None if r is None else {
                "variance": r.per_component, "variance_se": r.per_component_se,
                "predicted_variance": r.predicted_per_component,
                "second_moment_matrix": r.second_moment,
                "heat_kernel_second_moment": r.heat_kernel_second_moment,
                "norm_mean": r.norm_mean, "norm_mean_se": r.norm_mean_se,
                "predicted_norm_mean": r.predicted_norm_mean,
                "signed_mean": r.signed_mean, "signed_variance": r.signed_variance},
            "impurity_quantiles": s.impurity_quantiles,
            "bound_fraction_satisfied": s.bounds.fraction_below,
            "bound_min_margin": float(s.bounds.margin.min()),
            "equality_max_gap": s.bounds.max_equality_gap,
            "guarantee": [{"eps": g.eps, "empirical": g.empirical, "se": g.se, "bound": g.bound,
                           "informative": g.informative, "ok": g.ok} for g in s.guarantee],
        })
    diagram.write_csv(out / "ensemble_snapshots.csv",
                      ("gammaT", "elapsed", "variance", "variance_se", "predicted_variance",
                       "heat_kernel_second_moment", "median_alpha", "median_impurity",
                       "bound_fraction"), rows)
    traj = sde_engine.run_trajectory(gen, tcfg)
    if len(traj.snapshots) >= 1:
        diagram.write_csv(out / "trajectory.csv", diagram.TRAJECTORY_COLUMNS,
                          diagram.trajectory_rows(gen, traj.snapshots))
    results = {"group": gen.group, "dim_rep": gen.dim_rep, "snapshots": snap_results}
    if max(grid) == 0:
        results["identity_kraus"] = bool(np.allclose(traj.K, np.eye(gen.dim_rep)))
    if stats.reweight is not None:
        rw = stats.reweight
        results["reweight"] = {k: getattr(rw, k) for k in rw.__dataclass_fields__}
    assertions = [
        _assertion("impurity_left_right_equal", all(s.bounds.all_equal for s in stats.snapshots),
                   max_gap=max(s.bounds.max_equality_gap for s in stats.snapshots)),
        _assertion("impurity_bound_all_samples", all(s.bounds.all_below for s in stats.snapshots),
                   fraction=[s.bounds.fraction_below for s in stats.snapshots]),
        _assertion("guarantee_inequality", stats.guarantee_holds),
    ]
    if cfg["completeness"]:
        c = ensemble.completeness_check(gen, tcfg, cfg["ntraj"], cfg["seed"], cfg["threads"])
        results["completeness"] = {"residual": c.residual, "se_max": c.se_max, "ess": c.ess,
                                   "M": c.M, "normalizer": c.normalizer}
        assertions.append(_assertion("completeness", c.within() or c.residual == 0.0,
                                     residual=c.residual, se_max=c.se_max))
    return results, assertions


def _verify_checks(cfg):
    out = []
    j_vals = [k / 2 for k in range(1, int(2 * cfg["verify_j_max"]) + 1)]
    worst = 0.0
    ladder = 0.0
    refl = 0.0
    for j in j_vals:
        g = lie_rep.build_spin_irrep(j)
        worst = max(worst, float(np.abs(g.casimir() - g.casimir_eigenvalue * np.eye(g.dim_rep)).max()))
        jx, jy, jz = g.generators
        jp = jx + 1j * jy
        m = np.diag(jz).real
        expect = np.zeros_like(jp)
        for k in range(1, g.dim_rep):
            expect[k - 1, k] = math.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
        ladder = max(ladder, float(np.abs(jp - expect).max()))
        w = expm(-1j * math.pi * jy)
        refl = max(refl, float(np.abs(w @ jz @ w.conj().T + jz).max()))
    for kind in ("defining", "adjoint"):
        g = lie_rep.build_su3_irrep(kind)
        worst = max(worst, float(np.abs(g.casimir() - g.casimir_eigenvalue * np.eye(g.dim_rep)).max()))
    out.append(_assertion("casimir", worst < 1e-10, residual=worst))
    out.append(_assertion("ladder", ladder < 1e-10, residual=ladder))
    out.append(_assertion("weyl_reflection", refl < 1e-10, residual=refl))
    res = []
    for j in [k / 2 for k in range(0, 21)]:
        g = lie_rep.build_spin_irrep(j)
        n = max(8, int(2 * j) + 2)
        r = coherent.resolution_of_identity(g, n)
        res.append(r.residual)
    out.append(_assertion("resolution_of_identity", max(res) < 1e-10, residual=max(res)))
    g = _generators(cfg) if cfg["pq"] is None else lie_rep.build_spin_irrep(cfg["j"])
    tcfg = sde_engine.TrajectoryConfig(gamma=cfg["gamma"], dt=cfg["dt"],
                                       total_time=1000 * g.dim_alg * cfg["dt"], seed=cfg["seed"],
                                       record_stride=100)
    traj = sde_engine.run_trajectory(g, tcfg)
    det_err = abs(math.log(abs(np.linalg.det(traj.K))) + g.dim_rep * traj.log_scale)
    out.append(_assertion("determinant_accounting", det_err <= 1e-8, residual=det_err, steps=1000))
    conv = ensemble.stepper_convergence(g, cfg["gamma"], 0.12 * g.dim_alg,
                                        [1e-2, 1e-3, 1e-4], 64, cfg["seed"])
    out.append(_assertion("stepper_consistency", 0.8 <= conv.exponent <= 1.2,
                          exponent=conv.exponent, mean_square_exponent=conv.sq_exponent,
                          dts=conv.dts, mean_gap=conv.mean_gap))
    if cfg["coupling"]:
        try:
            data = json.loads(Path(cfg["coupling"]).read_text(encoding="utf-8"))
            kappa, sigma2 = data["kappa"], data["sigma2"]
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError("coupling", f"cannot read coupling file: {exc}") from None
        try:
            rep = sde_engine.design_isotropic_coupling(kappa, sigma2, g, cfg["gamma"], cfg["dt"],
                                                       data.get("n"))
        except ValueError as exc:
            raise ConfigError("coupling", str(exc)) from None
        out.append(_assertion("isotropic_coupling", rep.residual < 1e-10, residual=rep.residual))
    return out


def cmd_verify(cfg: dict):
    assertions = _verify_checks(cfg)
    return {"checks": len(assertions)}, assertions


def cmd_diagram(cfg: dict):
    out = Path(cfg["out"])
    kind, fmt = cfg["kind"], cfg["format"]
    if kind in ("roots", "weights"):
        if cfg["group"] != "su3":
            raise ConfigError("group", "weight diagrams need a rank-2 group (su3)")
        if cfg["pq"] is not None:
            rs = lie_rep.weight_diagram(*cfg["pq"])
            tag = "su3_%d_%d" % tuple(cfg["pq"])
        else:
            rs = lie_rep.build_su3_irrep(cfg["rep"]).roots
            tag = f"su3_{cfg['rep']}"
        path = diagram.emit_diagram(diagram.DiagramSpec(kind, rs, fmt), out / f"{tag}_{kind}.{fmt}")
        rows = diagram.weight_diagram_rows(rs, ("weight",))
        results = {"path": str(path), "n_weights": len(rows),
                   "dimension": int(sum(r[3] for r in rows)),
                   "multiplicities": sorted(int(r[3]) for r in rows)}
        return results, [_assertion("weyl_dimension", results["dimension"] == round(
            lie_rep.weyl_dimension(rs, rs.highest_weight)))]
    gen = _generators(cfg)
    traj = sde_engine.run_trajectory(gen, _trajectory_config(cfg))
    path = diagram.emit_diagram(diagram.DiagramSpec(kind, (gen, traj.snapshots), fmt),
                                out / f"{kind}.{fmt}")
    return {"path": str(path), "snapshots": len(traj.snapshots)}, []


def cmd_completeness(cfg: dict):
    gen = _generators(cfg)
    tcfg = _trajectory_config(cfg)
    if cfg["gammaT"] > 1:
        raise ConfigError("gammaT", "completeness runs need gammaT <= 1")
    c = ensemble.completeness_check(gen, tcfg, cfg["ntraj"], cfg["seed"], cfg["threads"])
    results = {"residual": c.residual, "se_max": c.se_max, "ess": c.ess, "M": c.M,
               "normalizer": c.normalizer, "steps": c.n_steps, "flagged": c.flagged}
    ok = c.residual == 0.0 or (c.within() and c.se_max <= 0.01)
    return results, [_assertion("completeness", ok, residual=c.residual, se_max=c.se_max)]


COMMANDS = {"simulate": cmd_simulate, "verify": cmd_verify, "diagram": cmd_diagram,
            "completeness": cmd_completeness}


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        results, assertions = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"iso-collapse: error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"iso-collapse: numerical failure: {exc}", file=sys.stderr)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(json.dumps(_jsonable({
            "schema_version": SCHEMA_VERSION, "command": args.command, "config": cfg,
            "results": {"partial": True, "error": str(exc)}, "assertions": []}), indent=2))
        return 3
    summary = {"schema_version": SCHEMA_VERSION, "command": args.command, "config": cfg,
               "results": results, "assertions": assertions}
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(summary), indent=2)
    (out / "summary.json").write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0 if all(a["passed"] for a in assertions) else 1


if __name__ == "__main__":
    sys.exit(main())
