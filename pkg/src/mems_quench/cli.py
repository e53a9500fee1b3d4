"""Command-line interface.

Exit codes: 0 success, 2 configuration or input error, 3 solver abort (NaN),
4 step limit reached without quenching, 5 a verified invariant failed.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .core import Field, RadialGrid
from .io import (
    ConfigError,
    Experiment,
    build_experiment,
    fmt,
    parse_config_text,
    read_config,
    read_csv,
    read_manifest,
    write_csv,
    write_manifest,
    atomic_write_text,
)
from .regions import U_field, constructed_u0, gamma_map, p1_radius
from .selfsim import to_selfsim
from .solver import SolverAbort, estimate_from_center, estimate_quench_time, run_to_quench
from .spectral import build_basis, component_norms, decompose
from .theta import ThetaTrace, finite_diff_theta_prime
from .verify import (
    center_rate_slope,
    final_decade_mean,
    final_profile_ratio,
    intermediate_profile_error,
    theta_bounds_report,
)

log = logging.getLogger("mems_quench")

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_MAX_STEPS, EXIT_VERIFY = 0, 2, 3, 4, 5
RATE_TOLERANCE = 0.03


def initial_field(exp: Experiment) -> Field:
    grid = exp.grid()
    if exp.shrink is not None:
        _, _, u0 = constructed_u0(exp.shrink, exp.params, grid, exp.initial)
        return u0
    if not 0 <= exp.u0_value < 1:
        raise ConfigError("u0_value must lie in [0, 1)")
    v = np.full(grid.size, exp.u0_value)
    if exp.config.diffusion_enabled:
        v[-1] = 0.0
    return Field(grid, v, 0.0)


def execute_run(exp: Experiment, run_dir: Path) -> dict:
    """Integrate one experiment and write its files; returns the manifest."""
    run_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    u0 = initial_field(exp)
    status, abort_msg = None, None
    try:
        trace = run_to_quench(u0, exp.params, exp.config)
        status = trace.status
    except SolverAbort as exc:
        trace, status, abort_msg = exc.trace, "aborted", str(exc)
    files = {}
    snap_dir = run_dir / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    snap_files = []
    for i, snap in enumerate(trace.snapshots):
        name = f"snapshots/snap_{i:05d}.csv"
        write_csv(run_dir / name, ["r", "u"], [snap.grid.nodes, snap.values])
        snap_files.append(name)
    write_csv(run_dir / "snapshot_times.csv", ["index", "t"], [np.arange(len(trace.snapshots)), trace.snapshot_times])
    write_csv(run_dir / "center.csv", ["t", "one_minus_u_center"], [trace.center_t, 1.0 - trace.center_u])
    th = trace.theta_trace
    if len(th) >= 2:
        th = finite_diff_theta_prime(th)
    write_csv(run_dir / "theta.csv", ["t", "mu", "theta", "theta_prime"], [th.t, th.mu, th.theta, th.theta_prime])
    files.update(snapshots=snap_files, snapshot_times="snapshot_times.csv", center="center.csv", theta="theta.csv")
    estimate = None
    if status == "quenched":
        try:
            estimate = estimate_quench_time(trace, exp.params)
        except ValueError as exc:
            log.warning("quench estimate unavailable: %s", exc)
    manifest = {
        "config": exp.raw,
        "params": exp.params,
        "run_config": {k: v for k, v in exp.config.__dict__.items() if k != "snapshot_times"},
        "shrink": exp.shrink,
        "status": status,
        "steps": trace.steps,
        "rejections": trace.rejections,
        "quench_node": int(trace.argmax[-1]),
        "quench_point": float(u0.grid.nodes[trace.argmax[-1]]),
        "estimate": estimate,
        "files": files,
    }
    if abort_msg:
        manifest["abort"] = abort_msg
    atomic_write_text(run_dir / "timings.json", json.dumps({"wall_seconds": time.perf_counter() - started}) + "\n")
    manifest["files"]["timings"] = "timings.json"
    write_manifest(run_dir, manifest)
    return manifest


def _status_code(status: str) -> int:
    return {"quenched": EXIT_OK, "aborted": EXIT_ABORT, "max_steps": EXIT_MAX_STEPS}.get(status, EXIT_ABORT)


def cmd_simulate(args) -> int:
    exp = build_experiment(read_config(args.config))
    manifest = execute_run(exp, Path(args.out))
    est = manifest["estimate"]
    print(f"status={manifest['status']} steps={manifest['steps']}" + (f" T_hat={fmt(est.T_hat)} theta_star={fmt(est.theta_star_hat)}" if est else ""))
    return _status_code(manifest["status"])


class RunData:
    """Read-only view of a run directory."""

    def __init__(self, run_dir):
        self.dir = Path(run_dir)
        try:
            self.manifest = read_manifest(self.dir)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read run manifest in {run_dir}: {exc}") from None
        self.exp = build_experiment(self.manifest["config"])
        self.params = self.exp.params
        _, times = read_csv(self.dir / self.manifest["files"]["snapshot_times"])
        self.snap_times = times[:, 1] if times.size else np.zeros(0)
        _, center = read_csv(self.dir / self.manifest["files"]["center"])
        self.center_t, self.center_gap = center[:, 0], center[:, 1]
        _, th = read_csv(self.dir / self.manifest["files"]["theta"])
        self.theta = ThetaTrace.from_samples(th[:, 0], th[:, 1], th[:, 2], th[:, 3])

    def snapshot(self, i) -> Field:
        _, d = read_csv(self.dir / self.manifest["files"]["snapshots"][i])
        return Field(RadialGrid(d[:, 0]), d[:, 1], float(self.snap_times[i]))

    def theta_at(self, t) -> float:
        return float(np.interp(t, self.theta.t, self.theta.theta))

    def T_hat(self) -> float:
        est = self.manifest.get("estimate")
        if est:
            return float(est["T_hat"])
        if self.exp.shrink is not None:
            return self.exp.shrink.T
        raise ConfigError("run has no quench estimate")


def frame_and_components(run: RunData, index: int):
    snap = run.snapshot(index)
    T = run.T_hat()
    theta = run.theta_at(snap.time)
    U = U_field(snap, theta, run.params)
    M0 = run.exp.shrink.M0 if run.exp.shrink else 20.0
    K0 = run.exp.shrink.K0 if run.exp.shrink else 10.0
    frame = to_selfsim(U, snap.time, T, M0, theta, run.params)
    basis = build_basis(run.params.dim, 6)
    comps = decompose((frame.y, frame.q), frame.s, K0, basis, outside=frame.outside_value(run.params))
    return frame, comps, basis


def component_record(comps, norms, frame_file: str) -> str:
    lines = [f"s={fmt(comps.s)}", f"K0={fmt(comps.K0)}", f"q0={fmt(comps.q0)}"]
    lines += [f"q1_{i}={fmt(v)}" for i, v in enumerate(comps.q1)]
    lines += [f"q2_{i}{j}={fmt(comps.q2[i, j])}" for i in range(comps.q2.shape[0]) for j in range(comps.q2.shape[1])]
    lines += [f"norm_{k}={fmt(v)}" for k, v in norms.as_dict().items()]
    lines.append(f"fields={frame_file}")
    return "\n".join(lines) + "\n"


def cmd_transform(args) -> int:
    run = RunData(args.run_dir)
    if run.snap_times.size == 0:
        raise ConfigError("run has no snapshots")
    t = float(args.t)
    if t < run.snap_times[0] or t > run.snap_times[-1]:
        raise ConfigError(f"t={t} is not bracketed by the stored snapshots")
    index = int(np.argmin(np.abs(run.snap_times - t)))
    frame, comps, basis = frame_and_components(run, index)
    out = run.dir / "frames"
    out.mkdir(exist_ok=True)
    frame_name = f"frames/frame_{index:05d}.csv"
    write_csv(run.dir / frame_name, ["y", "W", "w", "q"], [frame.y, frame.W, frame.w, frame.q])
    comp_name = f"frames/components_{index:05d}.csv"
    write_csv(run.dir / comp_name, ["y", "q_minus", "q_perp", "q_e"], [comps.y, comps.q_minus, comps.q_perp, comps.q_e])
    norms = component_norms(comps, basis)
    atomic_write_text(run.dir / f"frames/components_{index:05d}.txt", component_record(comps, norms, comp_name))
    print(f"s={fmt(frame.s)} q0={fmt(comps.q0)} frame={frame_name}")
    return EXIT_OK


def cmd_decompose(args) -> int:
    try:
        header, data = read_csv(args.frame_csv)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read frame {args.frame_csv}: {exc}") from None
    if "y" not in header or "q" not in header:
        raise ConfigError("frame CSV needs columns y and q")
    y, q = data[:, header.index("y")], data[:, header.index("q")]
    basis = build_basis(args.dim, 6)
    comps = decompose((y, q), args.s, args.K0, basis, outside=(lambda r: np.zeros(np.shape(r))) if args.zero_outside else None)
    norms = component_norms(comps, basis)
    text = component_record(comps, norms, str(args.frame_csv))
    if args.out:
        atomic_write_text(Path(args.out), text)
    sys.stdout.write(text)
    return EXIT_OK


def verify_run(run: RunData) -> tuple[dict, list]:
    params = run.params
    failures = []
    report = {}
    if np.any(run.theta.theta < 1.0):
        failures.append("theta below 1")
    est = estimate_from_center(run.center_t, run.center_gap, params.p_exp, run.exp.config.quench_stop)
    report["estimate"] = est

    class _T:  # minimal trace view for the slope helper
        center_t = run.center_t
        center_u = 1.0 - run.center_gap
        quench_stop = run.exp.config.quench_stop

    slope, decades = center_rate_slope(_T, est)
    report["center_rate_slope"] = slope
    report["rate_decades"] = decades
    if abs(slope - 1.0 / (params.p_exp + 1.0)) > RATE_TOLERANCE:
        failures.append(f"rate slope {slope:.4f} outside tolerance")
    theta_rep = theta_bounds_report(run.theta, est, params)
    report["theta"] = theta_rep
    if not theta_rep.theta_at_least_one:
        failures.append("theta report: theta below 1")
    final = run.snapshot(len(run.snap_times) - 1)
    if run.exp.shrink is not None and final.time < est.T_hat:
        sp = run.exp.shrink.with_T(est.T_hat) if est.T_hat < math.exp(-2) else None
        if sp is not None:
            x_min = p1_radius(final.time, sp)
            try:
                series = final_profile_ratio(final, est.theta_star_hat, params, x_min, sp.eps0)
                report["final_ratio_mean"] = final_decade_mean(series, sp.eps0)
                write_csv(run.dir / "final_ratio.csv", ["x", "ratio"], [series[:, 0], series[:, 1]])
            except ValueError as exc:
                report["final_ratio_error"] = str(exc)
        E = []
        for i, t in enumerate(run.snap_times):
            if 0 < est.T_hat - t < 1 and t <= final.time:
                snap = run.snapshot(i)
                if 1.0 - snap.values[0] <= 10.0 * run.exp.config.quench_stop:
                    E.append((-math.log(est.T_hat - t), intermediate_profile_error(snap, est.T_hat, est.theta_star_hat, params, run.exp.config.quench_stop)[1]))
        if E:
            E = np.array(E)
            write_csv(run.dir / "profile_error.csv", ["s", "E"], [E[:, 0], E[:, 1]])
            report["profile_error_max"] = float(E[:, 1].max())
        frame, comps, basis = frame_and_components(run, len(run.snap_times) - 1)
        rebuilt = comps.low_order() + comps.q_minus
        from .spectral import cutoff_chi

        target = cutoff_chi(comps.y, comps.s, comps.K0) * comps.r_values
        if np.max(np.abs(rebuilt - target)) > 1e-10 * max(1.0, np.max(np.abs(target))):
            failures.append("spectral reconstruction failure")
    report["failures"] = failures
    return report, failures


def cmd_verify(args) -> int:
    run = RunData(args.run_dir)
    if run.manifest.get("status") != "quenched":
        raise ConfigError("verify needs a quenched run")
    report, failures = verify_run(run)
    manifest = dict(run.manifest)
    manifest["verify"] = report
    files = dict(manifest["files"])
    for extra in ("final_ratio.csv", "profile_error.csv"):
        if (run.dir / extra).exists():
            files[extra.split(".")[0]] = extra
    manifest["files"] = files
    write_manifest(run.dir, manifest)
    for f in failures:
        print(f"FAIL {f}")
    print("verify: " + ("pass" if not failures else "fail"))
    return EXIT_OK if not failures else EXIT_VERIFY


def cmd_gamma_map(args) -> int:
    exp = build_experiment(read_config(args.config))
    if exp.shrink is None:
        raise ConfigError("gamma-map needs T_horizon")
    from .regions import InitialDataParams

    d = exp.initial
    if args.d0 is not None or args.d1 is not None:
        d1 = tuple(float(x) for x in args.d1.split(",")) if args.d1 else d.d1
        d = InitialDataParams(float(args.d0) if args.d0 is not None else d.d0, d1)
    q0, q1 = gamma_map(d, exp.shrink, exp.params, exp.grid())
    print(f"q0={fmt(q0)} " + " ".join(f"q1_{i}={fmt(v)}" for i, v in enumerate(q1)))
    return EXIT_OK


def parse_overrides(items) -> list:
    pairs = []
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=v1,v2,...")
        key, values = item.split("=", 1)
        vals = [v.strip() for v in values.split(",") if v.strip()]
        if not vals:
            raise ConfigError(f"override {key!r} has no values")
        pairs.append((key.strip(), vals))
    return pairs


def _sweep_worker(job):
    text, run_dir = job
    exp = build_experiment(parse_config_text(text))
    Path(run_dir).mkdir(parents=True, exist_ok=True)
    atomic_write_text(Path(run_dir) / "config.txt", text)
    try:
        m = execute_run(exp, Path(run_dir))
    except Exception as exc:  # recorded per run, never fatal for the sweep
        return {"status": "error", "error": str(exc)}
    est = m["estimate"]
    return {
        "status": m["status"],
        "T_hat": est.T_hat if est else math.nan,
        "theta_star_hat": est.theta_star_hat if est else math.nan,
    }


def cmd_sweep(args) -> int:
    base = read_config(args.config)
    overrides = parse_overrides(args.override)
    keys = [k for k, _ in overrides]
    combos = list(itertools.product(*[v for _, v in overrides])) or [()]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for i, combo in enumerate(combos):
        cfg = dict(base)
        cfg.update(dict(zip(keys, combo)))
        text = "".join(f"{k} = {v}\n" for k, v in cfg.items())
        build_experiment(parse_config_text(text))
        jobs.append((text, str(out / f"run_{i:03d}")))
    workers = int(base.get("workers", 0)) or os.cpu_count() or 1
    if workers == 1 or len(jobs) == 1:
        results = [_sweep_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    lines = [",".join(["run"] + keys + ["status", "T_hat", "theta_star_hat"])]
    for i, (combo, res) in enumerate(zip(combos, results)):
        lines.append(",".join([f"run_{i:03d}", *combo, res["status"], fmt(res.get("T_hat", math.nan)), fmt(res.get("theta_star_hat", math.nan))]))
    atomic_write_text(out / "aggregate.csv", "\n".join(lines) + "\n")
    ok = sum(r["status"] == "quenched" for r in results)
    aborted = any(r["status"] == "aborted" for r in results)
    print(f"sweep: {ok}/{len(results)} quenched")
    return EXIT_OK if ok >= 1 and not aborted else EXIT_ABORT if aborted else EXIT_MAX_STEPS


def cmd_report(args) -> int:
    m = RunData(args.run_dir).manifest
    est = m.get("estimate") or {}
    print(f"status: {m.get('status')}")
    print(f"steps: {m.get('steps')}  quench node: {m.get('quench_node')}")
    if est:
        print(f"T_hat: {est['T_hat']}  theta_star_hat: {est['theta_star_hat']}")
    if "verify" in m:
        v = m["verify"]
        print(f"rate slope: {v.get('center_rate_slope')}  failures: {v.get('failures')}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mems-quench", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate to quenching and write a run directory")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("transform", help="similarity frame and spectral components at the snapshot nearest t")
    p.add_argument("run_dir")
    p.add_argument("--t", required=True, type=float)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("decompose", help="Hermite decomposition of a frame CSV")
    p.add_argument("frame_csv")
    p.add_argument("--s", required=True, type=float)
    p.add_argument("--K0", type=float, default=10.0)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--zero-outside", action="store_true", help="treat q as zero beyond the last node")
    p.add_argument("--out")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("verify", help="run all diagnostics on a quenched run")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gamma-map", help="unstable components (q0, q1) of the constructed data")
    p.add_argument("config")
    p.add_argument("--d0", type=float)
    p.add_argument("--d1")
    p.set_defaults(func=cmd_gamma_map)

    p = sub.add_parser("sweep", help="cartesian parameter sweep")
    p.add_argument("config")
    p.add_argument("--override", action="append", default=[], help="key=v1,v2,...")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="summarise a run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverAbort as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
