"""Command-line surface.

Subcommands: simulate, estimate-cov, oracle-cov, limit-check, gp-sample,
dep-exp, self-check.  Exit codes: 0 success/PASS, 1 FAIL verdicts,
2 configuration errors.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys

import numpy as np

from . import gaussian_limits as gl
from .harness import (
    ConfigError,
    CovReport,
    ExperimentConfig,
    estimate_cov,
    limit_trend_test,
    load_config,
)
from .moment_oracle import QuadratureSpec, cov_matrix_XT
from .occupation import load_ensemble, run_ensemble, save_ensemble, save_record_csv


def _non_canonical() -> dict:
    return {"created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat()}


def _apply_common(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_override("master_seed", args.seed)
    if getattr(args, "workers", None) is not None:
        cfg = cfg.with_override("workers", args.workers)
    for ov in getattr(args, "override", None) or []:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r} must look like key=value")
        key, _, raw = ov.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        cfg = cfg.with_override(key, value)
    return cfg


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return _apply_common(cfg, args)


def _simulate_one(cfg: ExperimentConfig, T: float, out_dir, dump_records=False):
    params = cfg.model_params(T)
    if dump_records:
        ens, records = run_ensemble(
            params, cfg.phi, cfg.regime(), cfg.n_reps, cfg.master_seed,
            n_t=cfg.n_t, workers=cfg.workers, cap=cfg.cap, keep_records=True,
        )
        rec_dir = os.path.join(out_dir, "records")
        os.makedirs(rec_dir, exist_ok=True)
        for rep, rec in enumerate(records):
            if rec is not None:
                save_record_csv(rec, os.path.join(rec_dir, f"rep{rep:06d}.csv"))
    else:
        ens = run_ensemble(
            params, cfg.phi, cfg.regime(), cfg.n_reps, cfg.master_seed,
            n_t=cfg.n_t, workers=cfg.workers, cap=cfg.cap,
        )
    save_ensemble(ens, out_dir, extra_meta={
        "config_hash": cfg.content_hash(),
        "non_canonical": _non_canonical(),
    })
    return ens


def _cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    for T in cfg.T_list:
        out = os.path.join(args.out, f"T{T:g}")
        ens = _simulate_one(cfg, T, out, dump_records=args.dump_records)
        print(f"T={T:g}: {len(ens.rep_ids)} replications -> {out} "
              f"({ens.n_aborted} aborted)")
    return 0


def _cmd_estimate_cov(args) -> int:
    ens = load_ensemble(args.ensemble)
    report = estimate_cov(ens, n_boot=args.n_boot)
    report.save(args.out)
    print(f"covariance report ({len(report.times)} grid times) -> {args.out}")
    return 0


def _cmd_oracle_cov(args) -> int:
    cfg = _load_cfg(args)
    T = args.T if args.T is not None else cfg.T_list[-1]
    params = cfg.model_params(T)
    grid = np.arange(1, cfg.n_t + 1) / cfg.n_t if args.grid is None else np.asarray(
        [float(g) for g in args.grid.split(",")])
    spec = QuadratureSpec()
    mat = cov_matrix_XT(cfg.phi, params, cfg.regime(), grid, spec=spec, check=not args.no_check)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "oracle.csv"), "w") as f:
        f.write("s,t,value\n")
        for i, s in enumerate(grid):
            for j, t in enumerate(grid):
                if j < i:
                    continue
                f.write(f"{s!r},{t!r},{mat[i, j]!r}\n")
    meta = {
        "schema_version": 1,
        "T": T,
        "grid": [float(g) for g in grid],
        "refinement_checked": not args.no_check,
        "quadrature": {"step": spec.step, "time_nodes": spec.time_nodes,
                       "z_nodes": spec.z_nodes},
        "config_hash": cfg.content_hash(),
        "non_canonical": _non_canonical(),
    }
    with open(os.path.join(args.out, "oracle_meta.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"oracle covariance matrix ({len(grid)} grid times) -> {args.out}")
    return 0


def _cmd_limit_check(args) -> int:
    cfg = _load_cfg(args)
    lc = cfg.limits()
    lam = cfg.phi.integral
    reports: list[tuple[float, CovReport]] = []
    for T in cfg.T_list:
        out = os.path.join(args.out, f"T{T:g}")
        ens = _simulate_one(cfg, T, out)
        rep = estimate_cov(ens, n_boot=cfg.n_boot).with_limit(lc, lam)
        rep.save(out)
        reports.append((T, rep))
        print(f"T={T:g}: ensemble + covariance report -> {out}")
    verdict = limit_trend_test(reports, cfg.thresholds)
    os.makedirs(args.out, exist_ok=True)
    vd = verdict.to_json_dict()
    vd["config_hash"] = cfg.content_hash()
    vd["T_list"] = [float(t) for t in cfg.T_list]
    vd["non_canonical"] = _non_canonical()
    with open(os.path.join(args.out, "verdict.json"), "w") as f:
        json.dump(vd, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(os.path.join(args.out, "deviation_vs_T.csv"), "w") as f:
        f.write("T,median_rel_dev\n")
        for T, dev in zip(cfg.T_list, verdict.median_devs):
            f.write(f"{float(T)!r},{dev!r}\n")
    status = "PASS" if verdict.passed else "FAIL"
    print(f"verdict: {status}  median deviations: "
          + ", ".join(f"{d:.4f}" for d in verdict.median_devs))
    for r in verdict.reasons:
        print(f"  - {r}")
    return 0 if verdict.passed else 1


def _cmd_gp_sample(args) -> int:
    kernel = gl.CovKernel(args.family, args.H)
    grid = np.linspace(args.t_max / args.n_grid, args.t_max, args.n_grid)
    rng = np.random.default_rng(args.seed)
    if args.sampler == "cholesky":
        paths = gl.sample_paths(kernel, grid, args.n, rng)
    else:
        if args.family != "rl":
            raise ConfigError("--sampler moving-average is only defined for the rl family")
        paths = gl.rl_moving_average_paths(args.H, grid, rng, n=args.n)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "paths.csv"), "w") as f:
        f.write("path_id,t,value\n")
        for i, row in enumerate(paths):
            for t, v in zip(grid, row):
                f.write(f"{i},{t!r},{v!r}\n")
    if args.kernel_out:
        mat = gl.cov_matrix(kernel, grid)
        with open(args.kernel_out, "w") as f:
            f.write("s,t,value\n")
            for i, s in enumerate(grid):
                for j, t in enumerate(grid):
                    f.write(f"{s!r},{t!r},{mat[i, j]!r}\n")
    print(f"{args.n} paths on {args.n_grid} grid points -> {args.out}")
    return 0


def _cmd_dep_exp(args) -> int:
    kernel = gl.CovKernel(args.family, args.H)
    T_grid = [float(t) for t in args.T_grid.split(",")]
    u, v, s, t = (float(x) for x in args.quad.split(","))
    fit = gl.dependence_exponent_fit(kernel, u, v, s, t, T_grid)
    if not fit.decays:
        print(f"{args.family}(H={args.H}): {fit.message}")
    else:
        print(f"{args.family}(H={args.H}): dependence exponent estimate "
              f"{fit.exponent:.4f} over T in {T_grid}")
    return 0


def _cmd_self_check(args) -> int:
    from .selfcheck import run_self_check

    ok = run_self_check(verbose=True)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="occufluct",
        description="Branching-particle occupation-time fluctuation laboratory",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, needs_out=True):
        sp.add_argument("--config", help="JSON experiment config (defaults used if omitted)")
        sp.add_argument("--seed", type=int, help="master seed override")
        sp.add_argument("--workers", type=int, help="worker count override")
        sp.add_argument("--override", action="append", metavar="KEY=VALUE",
                        help="dotted-path config override (repeatable)")
        if needs_out:
            sp.add_argument("--out", default="out", help="output directory")

    sp = sub.add_parser("simulate", help="run ensembles for every T in the config")
    add_common(sp)
    sp.add_argument("--dump-records", action="store_true",
                    help="also write one occupation-record CSV per replication")
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser("estimate-cov", help="covariance report from a stored ensemble")
    sp.add_argument("--ensemble", required=True, help="directory with ensemble.csv")
    sp.add_argument("--out", default="out", help="output directory")
    sp.add_argument("--n-boot", type=int, default=1000)
    sp.set_defaults(func=_cmd_estimate_cov)

    sp = sub.add_parser("oracle-cov", help="exact covariance matrix by quadrature")
    add_common(sp)
    sp.add_argument("--T", type=float, help="horizon (default: last of T_list)")
    sp.add_argument("--grid", help="comma-separated scaled times (default: config grid)")
    sp.add_argument("--no-check", action="store_true",
                    help="skip the refinement convergence check")
    sp.set_defaults(func=_cmd_oracle_cov)

    sp = sub.add_parser("limit-check", help="full pipeline across the T list with verdict")
    add_common(sp)
    sp.set_defaults(func=_cmd_limit_check)

    sp = sub.add_parser("gp-sample", help="sample Gaussian limit paths")
    sp.add_argument("--family", required=True, choices=list(gl.FAMILIES))
    sp.add_argument("--H", type=float, default=0.5)
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--n-grid", type=int, default=20)
    sp.add_argument("--t-max", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sampler", choices=["cholesky", "moving-average"], default="cholesky")
    sp.add_argument("--kernel-out", help="also dump the covariance matrix CSV here")
    sp.add_argument("--out", default="out")
    sp.set_defaults(func=_cmd_gp_sample)

    sp = sub.add_parser("dep-exp", help="dependence exponent fit for a kernel")
    sp.add_argument("--family", required=True, choices=list(gl.FAMILIES))
    sp.add_argument("--H", type=float, required=True)
    sp.add_argument("--quad", default="0,1,2,3", help="u,v,s,t quadruple")
    sp.add_argument("--T-grid", default="100,1000,10000,100000")
    sp.set_defaults(func=_cmd_dep_exp)

    sp = sub.add_parser("self-check", help="closed-form invariant suite")
    sp.set_defaults(func=_cmd_self_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags, which matches the config-error code
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
