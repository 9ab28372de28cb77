"""Command-line interface.

Subcommands
-----------
``simulate``             integrate chains, write one trajectory CSV per chain
``estimate-stationary``  merge chain histograms, optionally compare against
                         the closed-form density and export excursion rates
``verify``               run the deterministic check battery, one
                         ``CHECK name PASS|FAIL value tol`` line per check
``dump-preset``          print a shipped preset config

Chains run with seeds ``seed + 0 .. seed + chains - 1``; the worker count
comes from ``SPINDRIFT_WORKERS`` (default 1) and never changes results.
Exit codes: 0 success / all checks pass, 1 check failure, 2 bad config.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunConfig, build_run_config, load_config
from .errors import CertificateError, ConfigError, SpindriftError
from .excursions import loglog_slope, rate_table_csv
from .fields import default_anchors, fields_from_anchors
from .integrator import (RNG_DESCRIPTION, AnalysisRequest, run_analysis, run_chains,
                         simulate)
from .presets import PRESETS, preset_text
from .stationary import (WristbandDensity, compare_to_density, jacobian_check,
                         verify_density_identities)

SLOPE_BAND = (-1.1, -0.9)
WALL_RATE_TOL = 0.05
ROUNDTRIP_TOL = 1e-9
JACOBIAN_TOL = 1e-5
IDENTITY_PAIRS = ((1.0, 1.0), (2.0, 1.0), (0.5, 1.5))


def _workers() -> int:
    raw = os.environ.get("SPINDRIFT_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _load(args) -> RunConfig:
    text = preset_text(args.preset) if args.preset else None
    if text is not None:
        cfg = build_run_config(text)
    else:
        cfg = load_config(args.config)
    if args.seed_override is not None:
        cfg = replace(cfg, sim=replace(cfg.sim, seed=args.seed_override))
        cfg.echo["sim.seed"] = args.seed_override
    if args.chains is not None:
        if args.chains < 1:
            raise ConfigError("chains must be >= 1")
        cfg = replace(cfg, chains=args.chains)
        cfg.echo["sim.chains"] = args.chains
    return cfg


def _echo_config(cfg: RunConfig, out, quiet: bool) -> None:
    if quiet:
        return
    out.write(f"rng = {RNG_DESCRIPTION}\n")
    for key in sorted(cfg.echo):
        out.write(f"config {key} = {cfg.echo[key]}\n")


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    stats = run_chains(cfg.sim, cfg.domain, cfg.fields,
                       AnalysisRequest(record=True), cfg.chains, _workers())
    lines = []
    for i, st in enumerate(stats):
        path = out_dir / f"trajectory_{i:03d}.csv"
        with open(path, "w", encoding="utf-8") as fh:
            st.trajectory.to_csv(fh)
        fx = " ".join(f"{v:.17g}" for v in st.final_position)
        fs = " ".join(f"{v:.17g}" for v in st.final_spin)
        lines.append(
            f"chain {i} seed={cfg.sim.seed + i} steps={st.n_steps} "
            f"final_x=({fx}) final_s=({fs}) L={st.final_local_time:.17g} "
            f"wall_clock={st.wall_clock:.3f}s"
        )
    with open(out_dir / "summary.txt", "w", encoding="utf-8") as fh:
        fh.write("run = simulate\n")
        fh.write(f"rng = {RNG_DESCRIPTION}\n")
        for key in sorted(cfg.echo):
            fh.write(f"config {key} = {cfg.echo[key]}\n")
        for ln in lines:
            fh.write(ln + "\n")
        fh.write(f"total_wall_clock = {time.perf_counter() - t0:.3f}s\n")
    if not args.quiet:
        _echo_config(cfg, sys.stdout, quiet=False)
        for ln in lines:
            print(ln)
        print(f"wrote {cfg.chains} trajectories to {out_dir}")
    return 0


def cmd_estimate_stationary(args) -> int:
    cfg = _load(args)
    if cfg.analysis.histogram_axes is None:
        raise ConfigError("estimate-stationary needs a histogram block in [analysis]")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sim = cfg.sim
    if cfg.analysis.eps_grid is not None and sim.record_stride != 1:
        # excursion statistics need every step; force the finest stride
        sim = replace(sim, record_stride=1)
    request = AnalysisRequest(histogram_axes=cfg.analysis.histogram_axes,
                              eps_grid=cfg.analysis.eps_grid, record=False)
    t0 = time.perf_counter()
    stats = run_chains(sim, cfg.domain, cfg.fields, request, cfg.chains, _workers())
    hist = stats[0].histogram
    exc = stats[0].excursions
    for st in stats[1:]:
        hist = hist.merge(st.histogram)
        exc = exc.merge(st.excursions) if exc is not None else None
    with open(out_dir / "histogram.csv", "w", encoding="utf-8") as fh:
        hist.to_csv(fh)

    report_lines = [
        "run = estimate-stationary",
        f"rng = {RNG_DESCRIPTION}",
    ]
    report_lines += [f"config {k} = {cfg.echo[k]}" for k in sorted(cfg.echo)]
    report_lines.append(f"total_weight = {hist.total_weight:.17g}")
    report_lines.append(f"overflow_weight = {hist.overflow:.17g}")
    damp = max(st.damping_residual for st in stats)
    report_lines.append(f"damping_residual_max = {damp:.6e}")

    if cfg.analysis.compare_density:
        dens = WristbandDensity(cfg.analysis.density_top, cfg.analysis.density_bottom)
        cmp_res = compare_to_density(hist, dens)
        report_lines.append(f"l1_vs_analytic = {cmp_res.l1:.6f}")
        for cell, emp, ana in cmp_res.corner_report:
            report_lines.append(
                f"corner_cell {cell[0]},{cell[1]} empirical={emp:.6f} analytic={ana:.6f}")
    if exc is not None:
        with open(out_dir / "rates.csv", "w", encoding="utf-8") as fh:
            rate_table_csv(exc.rate_table(), fh)
        try:
            slope = loglog_slope(exc.rate_table())
            report_lines.append(f"excursion_slope = {slope:.4f}")
        except SpindriftError:
            report_lines.append("excursion_slope = n/a (no counts)")
    report_lines.append(f"total_wall_clock = {time.perf_counter() - t0:.3f}s")
    with open(out_dir / "report.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(report_lines) + "\n")
    if not args.quiet:
        print("\n".join(report_lines))
        print(f"wrote histogram.csv to {out_dir}")
    return 0


class _CheckPrinter:
    def __init__(self):
        self.all_pass = True

    def emit(self, name: str, passed: bool, value, tol) -> None:
        self.all_pass &= passed
        status = "PASS" if passed else "FAIL"
        print(f"CHECK {name} {status} value={value} tol={tol}")


def cmd_verify(args) -> int:
    cfg = _load(args)
    checker = _CheckPrinter()

    for top, bot in IDENTITY_PAIRS:
        tag = f"{top:g}_{bot:g}".replace(".", "p")
        report = verify_density_identities(top, bot,
                                           intercept_scale=args.perturb_intercept)
        for chk in report.checks:
            checker.emit(f"density_{chk.name}_{tag}", chk.passed,
                         f"{chk.max_error:.3e}", f"{chk.tol:g}")
            print(f"DETAIL density_{chk.name}_{tag} worst_at={chk.worst_point}")

    rng = np.random.default_rng(cfg.sim.seed)
    for p in (2, 3):
        damping = rng.uniform(0.5, 2.0, size=p)
        while True:
            vectors = rng.standard_normal((p, p))
            if abs(np.linalg.det(vectors)) > 0.1:
                break
        t_points = rng.uniform(0.01, 1.0, size=(50, p))
        err = jacobian_check(damping, vectors, t_points)
        checker.emit(f"jacobian_identity_p{p}", err < JACOBIAN_TOL,
                     f"{err:.3e}", f"{JACOBIAN_TOL:g}")

    worst = _steering_roundtrip_error(cfg, n_instances=100, seed=cfg.sim.seed)
    checker.emit("steering_roundtrip", worst < ROUNDTRIP_TOL,
                 f"{worst:.3e}", f"{ROUNDTRIP_TOL:g}")

    try:
        anchors = default_anchors(cfg.domain, cfg.fields, seed=cfg.sim.seed)
        checker.emit("positive_span", True, f"p={anchors.spin_dim}", "spanning")
    except CertificateError as exc:
        witness = ("" if exc.witness is None
                   else np.array2string(np.asarray(exc.witness), precision=3))
        checker.emit("positive_span", False, f"witness={witness}", "spanning")

    from .domain import Wristband

    if isinstance(cfg.domain, Wristband):
        dt = min(cfg.sim.dt, 2.5e-5)
        sim = replace(cfg.sim, dt=dt, horizon=args.verify_horizon,
                      burn_in=0.0, record_stride=1)
        eps = cfg.analysis.eps_grid or (0.05, 0.1, 0.2, 0.4)
        stats = run_analysis(sim, cfg.domain, cfg.fields,
                             AnalysisRequest(eps_grid=eps, record=False))
        try:
            slope = loglog_slope(stats.excursions.rate_table())
            in_band = SLOPE_BAND[0] <= slope <= SLOPE_BAND[1]
            checker.emit("excursion_slope", in_band, f"{slope:.4f}",
                         f"[{SLOPE_BAND[0]},{SLOPE_BAND[1]}]")
            top, bot = stats.excursions.wall_rates(0)
            rel = abs(top / bot - 1.0)
            checker.emit("wall_rate_symmetry", rel < WALL_RATE_TOL,
                         f"{rel:.4f}", f"{WALL_RATE_TOL:g}")
        except SpindriftError as exc:
            checker.emit("excursion_slope", False, f"error={exc}", "n/a")
        checker.emit("damping_bound", stats.damping_residual <= 1e-9,
                     f"{stats.damping_residual:.3e}", "1e-09")

    return 0 if checker.all_pass else 1


def _steering_roundtrip_error(cfg: RunConfig, n_instances: int, seed: int) -> float:
    from .domain import Wristband, unit_disk
    from .fields import AnchorSet, check_positive_span
    from .skorokhod import construct_steering_driver, solve_deterministic

    rng = np.random.default_rng(seed)
    worst = 0.0
    domains = [Wristband(), unit_disk()]
    for i in range(n_instances):
        p = int(rng.integers(1, 4))
        domain = domains[i % 2]
        pts = domain.boundary_points(64)
        idx = rng.choice(len(pts), size=p + 1, replace=False)
        while True:
            vectors = rng.uniform(-1, 1, size=(p + 1, p))
            if check_positive_span(vectors).holds:
                break
        anchors = AnchorSet(points=pts[idx], forcing_vectors=vectors,
                            damping_values=rng.uniform(0.5, 2.0, size=p + 1))
        fields = fields_from_anchors(domain, anchors)
        if isinstance(domain, Wristband):
            x0 = np.array([rng.uniform(0, domain.period),
                           rng.uniform(-0.9, 0.9) * domain.half_width])
            z = np.array([rng.uniform(0, domain.period),
                          rng.uniform(-0.8, 0.8) * domain.half_width])
        else:
            ang, rad = rng.uniform(0, 2 * math.pi, 2), rng.uniform(0, 0.8, 2)
            x0 = rad[0] * np.array([math.cos(ang[0]), math.sin(ang[0])])
            z = rad[1] * np.array([math.cos(ang[1]), math.sin(ang[1])])
        s0 = rng.uniform(-2, 2, size=p)
        driver = construct_steering_driver(domain, fields, anchors, x0, s0, z,
                                           total_time=rng.uniform(0.5, 3.0))
        solved = solve_deterministic(driver, domain, fields, x0, s0)
        err = max(float(np.linalg.norm(solved.final_spin)),
                  domain.distance(solved.final_position, z))
        worst = max(worst, err)
    return worst


def cmd_dump_preset(args) -> int:
    sys.stdout.write(preset_text(args.name))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spindrift",
        description="Reflected diffusions with boundary-driven spin.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        if needs_config:
            grp = p.add_mutually_exclusive_group(required=True)
            grp.add_argument("--config", help="path to a run config file")
            grp.add_argument("--preset", choices=sorted(PRESETS),
                             help="name of a shipped preset")
        p.add_argument("--out-dir", default=".", help="output directory")
        p.add_argument("--seed-override", type=int, default=None)
        p.add_argument("--chains", type=int, default=None)
        p.add_argument("--quiet", action="store_true")

    p_sim = sub.add_parser("simulate", help="integrate chains, write CSVs")
    add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_est = sub.add_parser("estimate-stationary",
                           help="merged occupancy histogram and comparisons")
    add_common(p_est)
    p_est.set_defaults(func=cmd_estimate_stationary)

    p_ver = sub.add_parser("verify", help="run the deterministic check battery")
    add_common(p_ver)
    p_ver.add_argument("--verify-horizon", type=float, default=2000.0,
                       help="horizon of the excursion-scaling run")
    p_ver.add_argument("--perturb-intercept", type=float, default=1.0,
                       help="fault-injection scale on the density intercept "
                            "(1.0 = unperturbed)")
    p_ver.set_defaults(func=cmd_verify)

    p_dump = sub.add_parser("dump-preset", help="print a shipped preset")
    p_dump.add_argument("name", choices=sorted(PRESETS))
    p_dump.set_defaults(func=cmd_dump_preset)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SpindriftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
