"""Command-line front door.

Subcommands: ``solve`` a single query, ``eval`` a batch comparison,
``lalut`` to dump a joint's latitude tables, ``filter-trace`` to run the
motion filter over a scripted set-point sequence.

Exit codes: 0 on success, 1 on usage or parse errors, 2 when a solve
finished best-effort above the error threshold.
"""

from __future__ import annotations

import math
import os
import sys
import time

import click
import numpy as np

from .errors import orientation_error, posture_error
from .evaluation import (
    KNOWN_SOLVERS,
    SweepConfig,
    filter_dls_results,
    run_batch,
    summarize,
    write_histogram_csv,
    write_results_csv,
    write_summary_csv,
)
from .geometry import X_HAT, Y_HAT, qaa, qmul
from .io import (
    SkeletonFileError,
    hyperparams_from_dict,
    load_config,
    resolve_skeleton,
)
from .motion_filter import FilterParams, run_filter, write_trace
from .skeleton import Posture, pose_from_thetas
from .solver import ErikParams, solve


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _parse_angles(text: str, degrees: bool) -> np.ndarray:
    try:
        values = np.array([float(v) for v in text.split(",")])
    except ValueError:
        _fail(f"cannot parse angle list {text!r}")
    return np.radians(values) if degrees else values


@click.group()
def main():
    """Expressive inverse kinematics toolkit."""


@main.command("solve")
@click.option("--skeleton", "skeleton_spec", required=True,
              help="Catalog letter A-G or a skeleton YAML file.")
@click.option("--posture", "posture_text", required=True,
              help="Comma-separated joint angles of the target posture.")
@click.option("--target", "target_text", required=True,
              help="Target orientation: 'w,x,y,z' quaternion or 'yaw,pitch,roll'.")
@click.option("--config", "config_path", default=None,
              help="Optional run-configuration YAML.")
@click.option("--threshold", type=float, default=None,
              help="Override the acceptance threshold.")
@click.option("--weights", "weights_text", default=None,
              help="Override error weights as 'orientation,posture'.")
@click.option("--seed", type=int, default=None, help="Offset-trick jitter seed.")
@click.option("--degrees", is_flag=True, help="Interpret input angles as degrees.")
def cmd_solve(skeleton_spec, posture_text, target_text, config_path,
              threshold, weights_text, seed, degrees):
    """Solve one posture/orientation query and print the breakdown."""
    try:
        skeleton = resolve_skeleton(skeleton_spec)
    except (SkeletonFileError, OSError) as exc:
        _fail(str(exc))
    config = load_config(config_path) if config_path else {}
    hp = hyperparams_from_dict(config, skeleton)
    if threshold is not None:
        hp.weights.threshold = threshold
    if weights_text is not None:
        parts = weights_text.split(",")
        if len(parts) != 2:
            _fail("--weights expects 'orientation,posture'")
        hp.weights.orientation_weight = float(parts[0])
        hp.weights.posture_weight = float(parts[1])
    if seed is not None:
        hp.offset_jitter_seed = seed

    angles = _parse_angles(posture_text, degrees)
    if len(angles) != skeleton.n_dofs:
        _fail(f"posture has {len(angles)} angles, skeleton has {skeleton.n_dofs}")
    psi = pose_from_thetas(skeleton, angles, Posture)

    parts = target_text.split(",")
    if len(parts) == 4:
        tau = np.array([float(v) for v in parts])
        n = np.linalg.norm(tau)
        if n < 1e-9:
            _fail("target quaternion is zero")
        tau = tau / n
    elif len(parts) == 3:
        ypr = _parse_angles(target_text, degrees)
        tau = qmul(qaa(Y_HAT, ypr[0]), qmul(qaa(X_HAT, ypr[1]), qaa(Y_HAT, ypr[2])))
    else:
        _fail("--target expects 4 quaternion or 3 yaw,pitch,roll components")

    t0 = time.perf_counter()
    result = solve(ErikParams(tau=tau, psi=psi), hp)
    elapsed = (time.perf_counter() - t0) * 1000.0
    sol = result.solution
    e_o = orientation_error(sol.omega(skeleton.n_dofs - 1), tau,
                            hp.ext_symmetric_endpoint)
    e_p = posture_error(sol, psi, skeleton, hp.weights.aggravation)
    e_c = (hp.weights.orientation_weight * e_o + hp.weights.posture_weight * e_p)

    for i, theta in enumerate(sol.thetas):
        shown = math.degrees(theta) if degrees else theta
        click.echo(f"joint[{i}] = {shown:+.6f}")
    click.echo(f"err_combined   = {e_c:.6f}")
    click.echo(f"err_orientation= {e_o:.6f}")
    click.echo(f"err_posture    = {e_p:.6f}")
    click.echo(f"iterations     = {result.iterations}")
    click.echo(f"time_ms        = {elapsed:.3f}")
    if e_c > hp.weights.threshold:
        click.echo("status         = best-effort (threshold unmet)")
        sys.exit(2)
    click.echo("status         = ok")


@main.command("eval")
@click.option("--skeleton", "skeleton_text", default="C",
              help="Comma-separated catalog letters, e.g. 'B,C'.")
@click.option("--solver", "solver_text", default="erik",
              help=f"Comma-separated solvers from {KNOWN_SOLVERS}.")
@click.option("--posture-step", type=float, default=None,
              help="Posture sweep step in radians.")
@click.option("--orient-counts", "orient_text", default=None,
              help="Orientation grid sizes as 'h,v,t'.")
@click.option("--threshold", type=float, default=0.04)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--desk-scale", is_flag=True,
              help="Preset small sweep (5 values per joint, (8,8,3) orientations).")
@click.option("--filter-nopost", is_flag=True,
              help="Filter DLS samples by the posture-free singularity check.")
@click.option("--jobs", type=int, default=1, help="Worker processes.")
@click.option("--degrees", is_flag=True, help="Interpret --posture-step in degrees.")
def cmd_eval(skeleton_text, solver_text, posture_step, orient_text, threshold,
             seed, out_dir, desk_scale, filter_nopost, jobs, degrees):
    """Run the brute-force batch and write result/summary/histogram CSVs."""
    solvers = [s.strip() for s in solver_text.split(",") if s.strip()]
    if not solvers:
        _fail("empty solver list")
    bad = [s for s in solvers if s not in KNOWN_SOLVERS]
    if bad:
        _fail(f"unknown solvers {bad}; expected {KNOWN_SOLVERS}")
    names = [s.strip().upper() for s in skeleton_text.split(",") if s.strip()]
    for name in names:
        if name not in "ABCDEFG" or len(name) != 1:
            _fail(f"unknown catalog skeleton {name!r}")

    sweep = SweepConfig(seed=seed)
    if desk_scale:
        sweep.posture_step = math.pi / 2.0
        sweep.orientation_counts = (8, 8, 3)
    if posture_step is not None:
        sweep.posture_step = math.radians(posture_step) if degrees else posture_step
    if orient_text is not None:
        counts = tuple(int(v) for v in orient_text.split(","))
        if len(counts) != 3:
            _fail("--orient-counts expects 'h,v,t'")
        sweep.orientation_counts = counts

    try:
        os.makedirs(out_dir, exist_ok=True)
        probe = os.path.join(out_dir, ".write_probe")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        _fail(f"output directory not writable: {exc}")

    run_solvers = list(solvers)
    if filter_nopost and "dls100_nopost" not in run_solvers:
        run_solvers.append("dls100_nopost")
    results = run_batch(names, run_solvers, sweep, parallelism=jobs)

    if filter_nopost:
        nopost = [r for r in results if r.solver == "dls100_nopost"]
        kept = [r for r in results if not r.solver.startswith("dls")
                or r.solver == "dls100_nopost"]
        dls = [r for r in results
               if r.solver.startswith("dls") and r.solver != "dls100_nopost"]
        results = kept + filter_dls_results(dls, nopost, threshold)
        results.sort(key=lambda r: (r.skeleton, r.posture_id, r.target_id, r.solver))

    write_results_csv(os.path.join(out_dir, "results.csv"), results)
    summary = summarize(results)
    write_summary_csv(os.path.join(out_dir, "summary.csv"), summary)
    write_histogram_csv(os.path.join(out_dir, "histograms.csv"), results)

    click.echo(f"{'skeleton':<9}{'solver':<15}{'samples':>8}{'iters':>8}"
               f"{'time_ms':>9}{'combined':>10}{'orient':>9}{'posture':>9}")
    for (sk, solver), stats in summary.items():
        click.echo(f"{sk:<9}{solver:<15}{stats['samples']:>8}"
                   f"{stats['iter_mean']:>8.2f}{stats['time_mean']:>9.2f}"
                   f"{stats['err_combined_mean']:>10.5f}"
                   f"{stats['err_orientation_mean']:>9.5f}"
                   f"{stats['err_posture_mean']:>9.5f}")


@main.command("lalut")
@click.option("--skeleton", "skeleton_spec", required=True)
@click.option("--joint", type=int, required=True, help="0-based joint index.")
@click.option("--out", "out_path", default="-", help="CSV path or '-' for stdout.")
def cmd_lalut(skeleton_spec, joint, out_path):
    """Dump both signed latitude tables of one joint as CSV."""
    try:
        skeleton = resolve_skeleton(skeleton_spec)
    except (SkeletonFileError, OSError) as exc:
        _fail(str(exc))
    if not 0 <= joint < skeleton.n_dofs:
        _fail(f"joint index {joint} out of range (skeleton has {skeleton.n_dofs})")
    lut = skeleton.links[joint].lalut
    lines = [f"# step={lut.step:.9g}", "table,latitude,angle"]
    for lat, ang in zip(lut.pos_lats, lut.pos_angles):
        lines.append(f"positive,{lat:.9g},{ang:.9g}")
    for lat, ang in zip(lut.neg_lats, lut.neg_angles):
        lines.append(f"negative,{lat:.9g},{ang:.9g}")
    text = "\n".join(lines) + "\n"
    if out_path == "-":
        click.echo(text, nl=False)
    else:
        with open(out_path, "w") as fh:
            fh.write(text)


@main.command("filter-trace")
@click.option("--script", "script_path", required=True,
              help="Text file with one set-point per line.")
@click.option("--out", "out_path", required=True)
@click.option("--velocity-limit", type=float, default=0.1)
@click.option("--acceleration-limit", type=float, default=0.02)
@click.option("--jerk-limit", type=float, default=0.005)
@click.option("--p-min", type=float, default=-math.pi)
@click.option("--p-max", type=float, default=math.pi)
@click.option("--beta", type=float, default=1.0)
@click.option("--sigma", type=float, default=0.5)
@click.option("--rho", type=float, default=0.0)
@click.option("--rate", type=float, default=50.0)
@click.option("--x0", type=float, default=0.0)
def cmd_filter_trace(script_path, out_path, velocity_limit, acceleration_limit,
                     jerk_limit, p_min, p_max, beta, sigma, rho, rate, x0):
    """Run a scripted set-point sequence through the motion filter."""
    try:
        params = FilterParams(velocity_limit, acceleration_limit, jerk_limit,
                              p_min, p_max, beta, sigma, rho, rate)
    except ValueError as exc:
        _fail(str(exc))
    try:
        with open(script_path) as fh:
            set_points = [float(line) for line in fh if line.strip()]
    except (OSError, ValueError) as exc:
        _fail(f"cannot read set-point script: {exc}")
    rows = run_filter(params, set_points, x0)
    write_trace(out_path, rows)
    click.echo(f"wrote {len(rows)} ticks to {out_path}")


if __name__ == "__main__":
    main()
