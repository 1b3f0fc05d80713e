"""Command-line entry point.

Subcommands:

  basis      build (or validate) the eigenbasis cache and write the
             spectral-inequality report
  simulate   integrate one trajectory; write trajectory, energy audit and
             manifest
  study      run a Monte Carlo study: invlimit | uniform | vorticity
  audit      energy-identity refinement study over a ladder of time steps

Exit codes: 0 success, 1 configuration/validation error, 2 numerical
failure (blow-up, coarse quadrature, tangency flag), 3 an acceptance
threshold named in the config was violated.
"""

from __future__ import annotations

import argparse
import copy
import logging
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .config import Config, ConfigError, load_config
from .diagnostics import basis_inequality_report, energy_audit
from .diskbasis import (BasisBuildError, CacheMismatchError, DomainSpec, QuadratureGrid,
                        StaleCacheError, build_basis, load_basis, save_basis)
from .experiments import (RunManifest, StudyAborted, StudySpec, fit_loglog, inviscid_study,
                          uniform_bound_study, vorticity_bound_study)
from .fileio import write_csv
from .galerkin import (AssemblyError, BlowUpError, ForcingTerm, SimConfig, Trajectory,
                       make_operator, simulate)
from .noise import NoisePath, NoiseSpec, coarsen_path, sample_path

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_THRESHOLD = 3

STUDY_KINDS = ("invlimit", "uniform", "vorticity")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the CLI reserves 2 for numerical
    # failures, so route usage problems to the config/validation exit code
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="diskns", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"diskns {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--seed", type=int, help="override noise.seed")
        p.add_argument("--out", help="override output.dir")
        p.add_argument("--nu", type=float, help="override sim.nu")
        p.add_argument("--modes", type=int, help="override basis.k_modes")
        p.add_argument("--dt", type=float, help="override sim.dt")
        p.add_argument("--tfinal", type=float, help="override sim.t_final")
        p.add_argument("--alpha", type=float, help="override domain.alpha")
        p.add_argument("--m", type=int, help="override noise.m")
        p.add_argument("--samples", type=int, help="override study.samples")
        p.add_argument("--plot-data", action="store_true",
                       help="also write tidy long-format study CSVs")

    common(sub.add_parser("basis", help="build or validate the basis cache"))
    common(sub.add_parser("simulate", help="integrate one trajectory"))
    ps = sub.add_parser("study", help="run a Monte Carlo study")
    ps.add_argument("kind", help="invlimit | uniform | vorticity")
    common(ps)
    common(sub.add_parser("audit", help="energy-identity dt-refinement study"))
    return parser


def _apply_overrides(cfg: Config, args: argparse.Namespace) -> Config:
    raw = copy.deepcopy(cfg.raw)

    def setraw(section: str, key: str, value) -> None:
        raw.setdefault(section, {})[key] = value

    if args.alpha is not None:
        cfg.domain = DomainSpec(alpha=args.alpha)
        setraw("domain", "alpha", args.alpha)
    if args.modes is not None:
        if args.modes < 1:
            raise ConfigError("--modes must be >= 1")
        cfg.k_modes = args.modes
        setraw("basis", "k_modes", args.modes)
    if args.seed is not None:
        cfg.noise.seed = args.seed
        if raw.get("noise") is not None:
            setraw("noise", "seed", args.seed)
    if args.m is not None:
        if args.m < 1:
            raise ConfigError("--m must be >= 1")
        cfg.noise.m = args.m
        if raw.get("noise") is not None:
            setraw("noise", "m", args.m)
    if args.nu is not None:
        if args.nu < 0:
            raise ConfigError("--nu must be >= 0")
        cfg.sim.nu = args.nu
        setraw("sim", "nu", args.nu)
    if args.dt is not None:
        if args.dt <= 0:
            raise ConfigError("--dt must be positive")
        cfg.sim.dt = args.dt
        setraw("sim", "dt", args.dt)
    if args.tfinal is not None:
        if args.tfinal <= 0:
            raise ConfigError("--tfinal must be positive")
        cfg.sim.t_final = args.tfinal
        setraw("sim", "t_final", args.tfinal)
    if args.samples is not None:
        if args.samples < 1:
            raise ConfigError("--samples must be >= 1")
        cfg.study.samples = args.samples
        setraw("study", "samples", args.samples)
    if args.out is not None:
        cfg.output.dir = args.out
        setraw("output", "dir", args.out)
    if args.plot_data:
        cfg.output.plot_data = True
        setraw("output", "plot_data", True)
    cfg.raw = raw
    return cfg


def _default_cache_path(cfg: Config) -> str:
    if cfg.cache:
        return cfg.cache
    name = f"basis_k{cfg.k_modes}_alpha{cfg.domain.alpha:g}.json"
    return os.path.join(cfg.output.dir, name)


def _resolve_basis(cfg: Config):
    """Load the cached basis when it matches the configuration, else build
    (and persist) it.  Returns (basis, cache_path, cache_hit)."""
    path = _default_cache_path(cfg)
    grid = QuadratureGrid(cfg.nr, cfg.ntheta) if cfg.grid_explicit else None
    if os.path.exists(path):
        try:
            basis = load_basis(path, expected_domain=cfg.domain)
            if basis.k_modes == cfg.k_modes and (grid is None or basis.grid == grid):
                log.info("basis cache hit: %s (checksum %s)", path, basis.checksum[:12])
                return basis, path, True
            log.info("basis cache %s has different K/grid; rebuilding", path)
        except StaleCacheError as exc:
            log.warning("%s; rebuilding", exc)
        # CacheMismatchError (wrong alpha) propagates: never silently clobber
        # a cache that is valid for a different configuration
    basis = build_basis(cfg.k_modes, cfg.domain, grid)
    save_basis(basis, path)
    log.info("basis built and cached at %s (checksum %s)", path, basis.checksum[:12])
    return basis, path, False


def _make_sim_config(cfg: Config, basis, nu: float | None = None,
                     with_noise: bool | None = None) -> SimConfig:
    sim = cfg.sim
    steps = int(round(sim.t_final / sim.dt))
    if steps < 1 or abs(steps * sim.dt - sim.t_final) > 1e-9 * max(1.0, sim.t_final):
        raise ConfigError("sim.t_final must be a positive integer multiple of sim.dt")
    use_noise = cfg.noise.enabled if with_noise is None else with_noise
    noise = (NoiseSpec(k_modes=cfg.k_modes, seed=cfg.noise.seed, dt=sim.dt,
                       steps=steps, m=cfg.noise.m) if use_noise else None)
    forcing = tuple(
        ForcingTerm(mode=f.mode, constant=f.constant if f.constant is not None else 0.0,
                    times=None if f.times is None else np.array(f.times, dtype=float),
                    values=None if f.values is None else np.array(f.values, dtype=float))
        for f in cfg.sim.forcing)
    initial = cfg.sim.initial.coefficients(basis.lambdas)
    return SimConfig(nu=sim.nu if nu is None else nu, dt=sim.dt, t_final=sim.t_final,
                     k_modes=cfg.k_modes, initial=initial, noise=noise,
                     forcing=forcing, save_stride=sim.save_stride)


def _write_trajectory_csv(path: str, traj: Trajectory, write_coeffs: bool) -> None:
    """One row per saved step.  noise_increment_ip accumulates the stochastic
    inner products of the steps since the previous saved row, so the column
    sums to the full stochastic integral."""
    header = ["t"]
    if write_coeffs:
        header += [f"c_{k + 1}" for k in range(traj.config.k_modes)]
    header += ["energy", "grad_energy", "boundary_form", "noise_increment_ip"]
    rows = []
    prev = 0
    for i, step_idx in enumerate(traj.saved_steps):
        noise_inc = float(np.sum(traj.noise_ip[prev:step_idx]))
        prev = step_idx
        row = [float(traj.times[step_idx])]
        if write_coeffs:
            row += [float(v) for v in traj.coeffs[i]]
        row += [float(traj.energy[step_idx]), float(traj.grad_energy[step_idx]),
                float(traj.boundary_form[step_idx]), noise_inc]
        rows.append(row)
    write_csv(path, header, rows)


def _write_audit_csv(path: str, audit, saved_steps: np.ndarray) -> None:
    names = list(audit.terms)
    header = ["t"] + names + ["residual"]
    rows = []
    for idx in saved_steps:
        rows.append([float(audit.times[idx])]
                    + [float(audit.terms[n][idx]) for n in names]
                    + [float(audit.residual[idx])])
    write_csv(path, header, rows)


def _manifest(cfg: Config, command: str, basis_checksum: str) -> RunManifest:
    return RunManifest(command=command, config=cfg.raw,
                       seed=cfg.noise.seed if cfg.noise.enabled else None,
                       basis_checksum=basis_checksum)


def cmd_basis(cfg: Config) -> int:
    t0 = time.time()
    os.makedirs(cfg.output.dir, exist_ok=True)
    basis, cache_path, hit = _resolve_basis(cfg)
    manifest = _manifest(cfg, "basis", basis.checksum)
    manifest_path = os.path.join(cfg.output.dir, "manifest.json")
    manifest.write(manifest_path)

    tables = basis.tables()
    vdev = tables.velocity_gram_deviation()
    zdev = tables.vorticity_gram_deviation()
    bres = tables.boundary_identity_residual()
    rows = basis_inequality_report(basis)
    report_path = os.path.join(cfg.output.dir, "inequality_report.csv")
    write_csv(report_path,
              ["k", "n", "parity", "lambda", "mu", "mu_sq_over_1plus_lambda",
               "zeta_h1_over_lambda_plus_1"],
              [[r.k, r.n, r.parity, r.lam, r.mu, r.mu_sq_ratio, r.zeta_h1_ratio]
               for r in rows])

    print(f"basis: K={basis.k_modes} alpha={basis.domain.alpha:g} "
          f"cache={'hit' if hit else 'built'} ({cache_path})")
    print(f"  velocity Gram deviation   {vdev:.3e}")
    print(f"  vorticity Gram deviation  {zdev:.3e}")
    print(f"  boundary identity residual {bres:.3e}")

    manifest.outputs = [cache_path, report_path]
    manifest.wall_clock_s = time.time() - t0
    ok = vdev <= 1e-8 and bres <= 1e-8
    if basis.domain.is_free_boundary:
        ok = ok and zdev <= 1e-8
    tangencies = [w for w in basis.build_warnings if "tangential" in w]
    if tangencies:
        for w in tangencies:
            print(f"  WARNING: {w}", file=sys.stderr)
    manifest.status = "complete" if ok and not tangencies else "check-failed"
    manifest.write(manifest_path)
    if not ok:
        print("basis checks FAILED", file=sys.stderr)
        return EXIT_NUMERICAL
    if tangencies:
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_simulate(cfg: Config) -> int:
    t0 = time.time()
    os.makedirs(cfg.output.dir, exist_ok=True)
    basis, cache_path, _ = _resolve_basis(cfg)
    sim_cfg = _make_sim_config(cfg, basis)
    manifest = _manifest(cfg, "simulate", basis.checksum)
    manifest_path = os.path.join(cfg.output.dir, "manifest.json")
    manifest.write(manifest_path)

    path = sample_path(sim_cfg.noise) if sim_cfg.noise is not None else None
    if path is not None:
        manifest.path_checksums = [path.checksum()]
    traj_path = os.path.join(cfg.output.dir, "trajectory.csv")
    audit_path = os.path.join(cfg.output.dir, "energy_audit.csv")
    try:
        traj = simulate(sim_cfg, path, basis)
    except BlowUpError as exc:
        partial_path = os.path.join(cfg.output.dir, "trajectory_partial.csv")
        _write_trajectory_csv(partial_path, exc.partial, cfg.sim.write_coeffs)
        manifest.outputs = [cache_path, partial_path]
        manifest.status = f"blow-up at step {exc.step_index}"
        manifest.wall_clock_s = time.time() - t0
        manifest.write(manifest_path)
        print(f"simulate: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    _write_trajectory_csv(traj_path, traj, cfg.sim.write_coeffs)
    audit = energy_audit(traj, sim_cfg, path)
    _write_audit_csv(audit_path, audit, traj.saved_steps)
    manifest.outputs = [cache_path, traj_path, audit_path]
    manifest.status = "complete"
    manifest.wall_clock_s = time.time() - t0
    manifest.write(manifest_path)
    print(f"simulate: {traj.n_steps} steps, final energy {traj.energy[-1]:.6g}, "
          f"audit residual {audit.final_residual:.3e} "
          f"(relative {audit.final_relative_residual:.3e})")
    return EXIT_OK


def _write_study_csvs(cfg: Config, kind: str, result, fit=None) -> list[str]:
    outdir = cfg.output.dir
    outputs = []
    main_path = os.path.join(outdir, f"study_{kind}.csv")
    if kind == "invlimit":
        mean, se = result.mean, result.std_err
        write_csv(main_path,
                  ["nu", "mean_sup_dist", "std_err", "min_sup_dist", "max_sup_dist"],
                  [[float(result.nu[i]), float(mean[i]), float(se[i]),
                    float(result.sample_sup[:, i].min()), float(result.sample_sup[:, i].max())]
                   for i in range(result.nu.size)])
        fit_path = os.path.join(outdir, "study_invlimit_fit.csv")
        write_csv(fit_path, ["slope", "intercept", "r_squared"],
                  [[result.fit.slope, result.fit.intercept, result.fit.r_squared]])
        outputs += [main_path, fit_path]
        if cfg.output.plot_data:
            long_path = os.path.join(outdir, "study_invlimit_long.csv")
            write_csv(long_path, ["nu", "sample", "sup_dist"],
                      [[float(result.nu[i]), s, float(result.sample_sup[s, i])]
                       for i in range(result.nu.size)
                       for s in range(result.sample_sup.shape[0])])
            outputs.append(long_path)
    else:
        est, se = result.estimate, result.std_err
        write_csv(main_path, ["nu", "estimate", "std_err"],
                  [[float(result.nu[i]), float(est[i]), float(se[i])]
                   for i in range(result.nu.size)])
        summary_path = os.path.join(outdir, f"study_{kind}_summary.csv")
        write_csv(summary_path, ["functional", "ratio_max_min"],
                  [[result.functional, result.ratio_max_min]])
        outputs += [main_path, summary_path]
        if cfg.output.plot_data:
            long_path = os.path.join(outdir, f"study_{kind}_long.csv")
            write_csv(long_path, ["nu", "sample", "value"],
                      [[float(result.nu[i]), s, float(result.sample_values[s, i])]
                       for i in range(result.nu.size)
                       for s in range(result.sample_values.shape[0])])
            outputs.append(long_path)
    return outputs


def cmd_study(cfg: Config, kind: str) -> int:
    if kind not in STUDY_KINDS:
        print(f"unknown study kind {kind!r}; expected one of {', '.join(STUDY_KINDS)}",
              file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.time()
    os.makedirs(cfg.output.dir, exist_ok=True)
    basis, cache_path, _ = _resolve_basis(cfg)
    manifest = _manifest(cfg, f"study {kind}", basis.checksum)
    manifest_path = os.path.join(cfg.output.dir, "manifest.json")
    manifest.write(manifest_path)

    nu_grid = tuple(cfg.study.nu_grid)
    samples = cfg.study.samples if cfg.noise.enabled else 1
    base = _make_sim_config(cfg, basis, nu=nu_grid[0])
    try:
        spec = StudySpec(base=base, nu_grid=nu_grid, samples=samples,
                         seed=cfg.noise.seed, workers=cfg.study.workers,
                         eval_stride=cfg.study.eval_stride)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    op = make_operator(basis)
    thr = cfg.study.thresholds
    violations: list[str] = []
    try:
        if kind == "invlimit":
            result = inviscid_study(spec, basis, op)
            print(f"study invlimit: slope={result.fit.slope:.4f} "
                  f"r2={result.fit.r_squared:.5f} "
                  f"monotone_within_se={result.monotone_within_se}")
            if thr.min_slope is not None and result.fit.slope < thr.min_slope:
                violations.append(f"slope {result.fit.slope:.4f} < {thr.min_slope}")
            if thr.min_r_squared is not None and result.fit.r_squared < thr.min_r_squared:
                violations.append(f"r_squared {result.fit.r_squared:.4f} < {thr.min_r_squared}")
            if thr.require_monotone and not result.monotone_within_se:
                violations.append("mean distances not monotone within one standard error")
        elif kind == "uniform":
            result = uniform_bound_study(spec, basis, op)
            print(f"study uniform: ratio_max_min={result.ratio_max_min:.4f}")
            if thr.max_ratio is not None and result.ratio_max_min > thr.max_ratio:
                violations.append(f"ratio {result.ratio_max_min:.4f} > {thr.max_ratio}")
        else:
            try:
                result = vorticity_bound_study(spec, basis, cfg.study.p, op)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            print(f"study vorticity (p={cfg.study.p:g}): "
                  f"ratio_max_min={result.ratio_max_min:.4f}")
            if thr.max_ratio is not None and result.ratio_max_min > thr.max_ratio:
                violations.append(f"ratio {result.ratio_max_min:.4f} > {thr.max_ratio}")
    except StudyAborted as exc:
        manifest.status = str(exc)
        manifest.wall_clock_s = time.time() - t0
        manifest.write(manifest_path)
        print(f"study {kind}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    outputs = _write_study_csvs(cfg, kind, result)
    manifest.outputs = [cache_path] + outputs
    manifest.path_checksums = sorted(set(result.path_checksums))
    manifest.wall_clock_s = time.time() - t0
    manifest.status = "complete" if not violations else "threshold-violated"
    manifest.write(manifest_path)
    for v in violations:
        print(f"study {kind}: threshold violated: {v}", file=sys.stderr)
    return EXIT_THRESHOLD if violations else EXIT_OK


def cmd_audit(cfg: Config) -> int:
    t0 = time.time()
    os.makedirs(cfg.output.dir, exist_ok=True)
    basis, cache_path, _ = _resolve_basis(cfg)
    manifest = _manifest(cfg, "audit", basis.checksum)
    manifest_path = os.path.join(cfg.output.dir, "manifest.json")
    manifest.write(manifest_path)

    factors = sorted(set(cfg.audit.dt_factors), reverse=True)
    if factors[-1] != 1:
        raise ConfigError("audit.dt_factors must include 1 (the configured dt is finest)")
    base = _make_sim_config(cfg, basis)
    fine_path = sample_path(base.noise) if base.noise is not None else None
    if fine_path is not None:
        manifest.path_checksums = [fine_path.checksum()]
    for f in factors:
        if base.n_steps % f != 0:
            raise ConfigError(f"audit.dt_factors: {f} does not divide {base.n_steps} steps")

    op = make_operator(basis)
    rows = []
    finest_audit = None
    finest_traj = None
    try:
        for f in factors:
            if fine_path is not None:
                pathf = coarsen_path(fine_path, f)
                noise_f = pathf.spec
            else:
                pathf, noise_f = None, None
            cfg_f = SimConfig(nu=base.nu, dt=base.dt * f, t_final=base.t_final,
                              k_modes=base.k_modes, initial=base.initial,
                              noise=noise_f, forcing=base.forcing,
                              save_stride=base.save_stride)
            traj = simulate(cfg_f, pathf, basis, op)
            audit = energy_audit(traj, cfg_f, pathf)
            rows.append([base.dt * f, abs(audit.final_residual),
                         audit.final_relative_residual])
            if f == 1:
                finest_audit, finest_traj = audit, traj
    except BlowUpError as exc:
        manifest.status = f"blow-up: {exc}"
        manifest.wall_clock_s = time.time() - t0
        manifest.write(manifest_path)
        print(f"audit: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    dts = np.array([r[0] for r in rows])
    residuals = np.array([r[1] for r in rows])
    if np.all(residuals > 0.0):
        order = float(np.polyfit(np.log(dts), np.log(residuals), 1)[0])
    else:
        order = math.inf  # residual hit roundoff; contraction is beyond measurable
    refine_path = os.path.join(cfg.output.dir, "audit_refinement.csv")
    write_csv(refine_path, ["dt", "abs_residual", "relative_residual"], rows)
    audit_path = os.path.join(cfg.output.dir, "energy_audit.csv")
    _write_audit_csv(audit_path, finest_audit, finest_traj.saved_steps)

    rel = rows[-1][2]
    print(f"audit: residual order {order:.3f}; relative residual {rel:.3e} at dt={base.dt:g}")
    violations = []
    if cfg.audit.min_order is not None and order < cfg.audit.min_order:
        violations.append(f"order {order:.3f} < {cfg.audit.min_order}")
    if (cfg.audit.max_relative_residual is not None
            and rel > cfg.audit.max_relative_residual):
        violations.append(f"relative residual {rel:.3e} > {cfg.audit.max_relative_residual}")
    manifest.outputs = [cache_path, refine_path, audit_path]
    manifest.wall_clock_s = time.time() - t0
    manifest.status = "complete" if not violations else "threshold-violated"
    manifest.write(manifest_path)
    for v in violations:
        print(f"audit: threshold violated: {v}", file=sys.stderr)
    return EXIT_THRESHOLD if violations else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = _apply_overrides(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=getattr(logging, cfg.output.verbosity.upper()),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "basis":
            return cmd_basis(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "study":
            return cmd_study(cfg, args.kind)
        if args.command == "audit":
            return cmd_audit(cfg)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CacheMismatchError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BasisBuildError, AssemblyError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
