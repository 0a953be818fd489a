"""Brute-force evaluation protocol: posture sweeps, orientation clouds,
batch execution of the expressive solver against the DLS baselines, result
filtering and statistics export.

Samples are independent (posture, target, solver) triples, so batches run
embarrassingly parallel across processes; results are merged into a
deterministic order regardless of scheduling.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import ErrorWeights, orientation_error, posture_error
from .geometry import X_HAT, Y_HAT, Z_HAT, clamp_mag, qaa, qmul, quat_axis
from .jacobian import (
    JacobianTask,
    assemble_jacobian,
    chain_state,
    dls_svd_inverse,
    maciejewski_damping,
    nullspace_projector,
    svd,
    task_residual,
)
from .skeleton import Posture, Skeleton, Solution, pose_from_thetas, safe_angle
from .solver import ErikHyperparams, ErikParams, solve


# ---------------------------------------------------------------------------
# Configuration and records
# ---------------------------------------------------------------------------

@dataclass
class SweepConfig:
    """Resolution of the evaluation grids.

    ``posture_step`` sweeps every non-twister-end joint from its minimum to
    its maximum; ``orientation_counts`` are the yaw/pitch/twist grid sizes
    over (-pi, pi].
    """

    posture_step: float = math.pi / 4.0
    orientation_counts: tuple = (12, 12, 5)
    seed: int = 0


@dataclass
class SampleResult:
    skeleton: str
    posture_id: int
    target_id: int
    solver: str
    iterations: int
    time_ms: float
    err_combined: float
    err_orientation: float
    err_posture: float
    failed: bool = False


RESULT_HEADER = ("skeleton,posture_id,target_id,solver,iterations,time_ms,"
                 "err_combined,err_orientation,err_posture")

KNOWN_SOLVERS = ("erik", "dls100", "dls200", "dls400", "dls100_nopost")


# ---------------------------------------------------------------------------
# Sample generation
# ---------------------------------------------------------------------------

def generate_postures(skeleton: Skeleton, step: float) -> list[Posture]:
    """Cartesian product of per-joint angle grids, resolved to postures.

    Root and end-point twist joints stay at zero: they only revolve or
    twist the chain without changing its shape, and sweeping them would
    explode the sample count for no expressive gain.
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    grids = []
    for link in skeleton.links:
        if link.is_twister and (link.is_root or link.is_end):
            grids.append(np.array([0.0]))
            continue
        n = int(math.floor((link.max_theta - link.min_theta) / step + 1e-9)) + 1
        values = link.min_theta + step * np.arange(n)
        if values[-1] < link.max_theta - 1e-9:
            values = np.append(values, link.max_theta)
        grids.append(values)
    postures = []
    for combo in product(*grids):
        postures.append(pose_from_thetas(skeleton, np.array(combo), Posture))
    return postures


def _axis_grid(n: int) -> np.ndarray:
    """``n`` angles over (-pi, pi]; a single count collapses to zero.

    The half-open grid always contains +pi, and whenever ``n`` is a
    multiple of 4 it also contains 0 and +-pi/2, which is how the default
    counts guarantee the axis-aligned and edge orientations.
    """
    if n <= 1:
        return np.array([0.0])
    return -math.pi + 2.0 * math.pi * np.arange(1, n + 1) / n


def generate_orientation_cloud(counts, include_roll: bool = True) -> list[np.ndarray]:
    """Yaw-pitch-twist composed target orientations with duplicates removed.

    Duplicates arise at the gimbal seams (e.g. pitch +-pi) where different
    angle triples compose to the same rotation; each unique rotation is
    kept once, in grid order.
    """
    n_h, n_v, n_t = counts
    if min(n_h, n_v, n_t) < 1:
        raise ValueError("orientation counts must be positive")
    yaws = _axis_grid(n_h)
    pitches = _axis_grid(n_v)
    twists = _axis_grid(n_t) if include_roll else np.array([0.0])
    seen = set()
    cloud = []
    for h in yaws:
        q_h = qaa(Y_HAT, h)
        for v in pitches:
            q_hv = qmul(q_h, qaa(X_HAT, v))
            for t in twists:
                q = qmul(q_hv, qaa(Y_HAT, t))
                if q[0] < 0.0 or (q[0] == 0.0 and q[1] < 0.0):
                    q = -q
                key = tuple(np.round(q, 9))
                if key in seen:
                    continue
                seen.add(key)
                cloud.append(q)
    return cloud


def dls_target_correction(tau) -> np.ndarray:
    """Flip a target upside down when its up-side is unreachable.

    Hemisphere rule on the target's forward (Z) column: forward-facing
    targets keep their Y column down, backward-facing ones keep it up.
    The correction is a world pi turn about Z, which preserves the
    hemisphere predicate, so applying it twice changes nothing more.
    """
    forward = quat_axis(tau, "z")
    up = quat_axis(tau, "y")
    facing_forward = forward[2] >= 0.0
    if facing_forward and up[1] > 0.0:
        return qmul(qaa(Z_HAT, math.pi), tau)
    if not facing_forward and up[1] < 0.0:
        return qmul(qaa(Z_HAT, math.pi), tau)
    return np.asarray(tau, dtype=float)


# ---------------------------------------------------------------------------
# Per-sample solvers
# ---------------------------------------------------------------------------

def _solve_erik_sample(skeleton, hp, psi, tau):
    t0 = time.perf_counter()
    res = solve(ErikParams(tau=tau, psi=psi), hp)
    dt = (time.perf_counter() - t0) * 1000.0
    sol = res.solution
    e_o = orientation_error(sol.omega(skeleton.n_dofs - 1), tau,
                            hp.ext_symmetric_endpoint)
    e_p = posture_error(sol, psi, skeleton, hp.weights.aggravation)
    e_c = (hp.weights.orientation_weight * e_o
           + hp.weights.posture_weight * e_p)
    return res.iterations, dt, e_c, e_o, e_p


def _solve_dls_sample(skeleton, weights, psi, tau, max_iterations,
                      use_posture_task, tolerance=1e-3, d_max=1.0, b_max=1.0):
    """Two-priority DLS baseline on the same goals.

    The primary task is the tip orientation, the secondary keeps joint
    angles near the target posture through the primary null space.  Joint
    limits are enforced by clamping after every step.  Iterates until the
    primary residual drops below ``tolerance`` or the cap is hit.
    """
    n = skeleton.n_dofs
    task = JacobianTask("rotation", tau)
    psi_thetas = psi.thetas
    j2 = np.eye(n)
    for idx in (0, n - 1):
        if skeleton.links[idx].is_twister:
            j2[idx, idx] = 0.0

    thetas = np.zeros(n)
    best = thetas.copy()
    best_err = math.inf
    iterations = 0
    t0 = time.perf_counter()
    state = chain_state(skeleton, thetas)
    for _ in range(max_iterations):
        iterations += 1
        e1 = clamp_mag(task_residual(state, task), d_max)
        err = float(np.linalg.norm(e1))
        if err <= best_err:
            best_err = err
            best = thetas.copy()
        if err <= tolerance:
            break
        j1 = assemble_jacobian(skeleton, thetas, task, state)
        f1 = svd(j1)
        sigma_min = float(f1.d[f1.r - 1]) if f1.r > 0 else 0.0
        lam1 = maciejewski_damping(sigma_min, err, b_max)
        primary = dls_svd_inverse(j1, lam1) @ e1
        if use_posture_task:
            e2 = psi_thetas - (thetas + primary)
            j2p = j2 @ nullspace_projector(j1)
            f2 = svd(j2p)
            s2 = float(f2.d[f2.r - 1]) if f2.r > 0 else 0.0
            lam2 = maciejewski_damping(s2, float(np.linalg.norm(e2)), b_max)
            delta = primary + dls_svd_inverse(j2p, lam2) @ (e2 - j2 @ primary)
        else:
            delta = primary
        thetas = thetas + delta
        thetas = np.array([safe_angle(skeleton.links[i], thetas[i])
                           for i in range(n)])
        state = chain_state(skeleton, thetas)
    dt = (time.perf_counter() - t0) * 1000.0

    sol = pose_from_thetas(skeleton, best, Solution)
    e_o = orientation_error(sol.omega(n - 1), tau, True)
    e_p = posture_error(sol, psi, skeleton, weights.aggravation)
    e_c = weights.orientation_weight * e_o + weights.posture_weight * e_p
    return iterations, dt, e_c, e_o, e_p


# ---------------------------------------------------------------------------
# Batch execution
# ---------------------------------------------------------------------------

_WORKER = {}


def _worker_init(catalog_names, sweep, hp_overrides):
    """Build the per-worker sample space once; tasks then carry indices."""
    from .catalog import build_skeleton

    skeletons = {}
    postures = {}
    for name in catalog_names:
        sk = build_skeleton(name)
        skeletons[name] = sk
        postures[name] = generate_postures(sk, sweep.posture_step)
    _WORKER["skeletons"] = skeletons
    _WORKER["postures"] = postures
    _WORKER["cloud"] = generate_orientation_cloud(sweep.orientation_counts)
    _WORKER["weights"] = ErrorWeights()
    _WORKER["hp"] = {
        name: ErikHyperparams(skeleton=skeletons[name], **(hp_overrides or {}))
        for name in catalog_names
    }


def _run_sample(task):
    sk_name, posture_id, target_id, solver = task
    sk = _WORKER["skeletons"][sk_name]
    psi = _WORKER["postures"][sk_name][posture_id]
    tau = _WORKER["cloud"][target_id]
    try:
        if solver == "erik":
            stats = _solve_erik_sample(sk, _WORKER["hp"][sk_name], psi, tau)
        elif solver.startswith("dls"):
            base = solver.replace("_nopost", "")
            cap = int(base[3:])
            tau = dls_target_correction(tau)
            stats = _solve_dls_sample(sk, _WORKER["weights"], psi, tau, cap,
                                      use_posture_task="_nopost" not in solver)
        else:
            raise ValueError(f"unknown solver {solver!r}")
        iterations, dt, e_c, e_o, e_p = stats
        return SampleResult(sk_name, posture_id, target_id, solver,
                            iterations, dt, e_c, e_o, e_p)
    except Exception:
        return SampleResult(sk_name, posture_id, target_id, solver,
                            -1, 0.0, math.nan, math.nan, math.nan, failed=True)


def run_batch(skeleton_names, solvers, sweep: SweepConfig,
              parallelism: int = 1, hp_overrides: dict | None = None) -> list[SampleResult]:
    """Solve every (posture, target) pair with every requested solver.

    Failures of individual samples become failed records instead of
    aborting the batch.  Results come back sorted by (skeleton, posture,
    target, solver) regardless of worker scheduling.
    """
    if isinstance(skeleton_names, str):
        skeleton_names = [skeleton_names]
    unknown = [s for s in solvers if s not in KNOWN_SOLVERS]
    if unknown:
        raise ValueError(f"unknown solvers: {unknown}; expected {KNOWN_SOLVERS}")
    _worker_init(skeleton_names, sweep, hp_overrides)
    tasks = []
    for name in skeleton_names:
        n_postures = len(_WORKER["postures"][name])
        n_targets = len(_WORKER["cloud"])
        for p, t, s in product(range(n_postures), range(n_targets), solvers):
            tasks.append((name, p, t, s))
    if parallelism <= 1:
        results = [_run_sample(t) for t in tasks]
    else:
        with ProcessPoolExecutor(
                max_workers=parallelism, initializer=_worker_init,
                initargs=(skeleton_names, sweep, hp_overrides)) as pool:
            results = list(pool.map(_run_sample, tasks,
                                    chunksize=max(1, len(tasks) // (parallelism * 8))))
    results.sort(key=lambda r: (r.skeleton, r.posture_id, r.target_id, r.solver))
    return results


def filter_dls_results(results, nopost_results, threshold: float) -> list[SampleResult]:
    """Drop samples whose no-posture counterpart shows a singular blow-up.

    A sample is removed when the matching (posture, target) record of the
    posture-free run has an orientation error strictly above three times
    the threshold; those failures indicate kinematic singularities rather
    than posture-constraint cost.
    """
    lookup = {}
    for r in nopost_results:
        lookup[(r.skeleton, r.posture_id, r.target_id)] = r.err_orientation
    kept = []
    for r in results:
        key = (r.skeleton, r.posture_id, r.target_id)
        if key not in lookup:
            raise ValueError(f"no no-posture counterpart for sample {key}")
        if lookup[key] > 3.0 * threshold:
            continue
        kept.append(r)
    return kept


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def summarize(results) -> dict:
    """Per (skeleton, solver) statistics over iterations, time and errors."""
    if not results:
        raise ValueError("cannot summarize an empty result set")
    groups = {}
    for r in results:
        if r.failed:
            continue
        groups.setdefault((r.skeleton, r.solver), []).append(r)
    summary = {}
    for key, rows in sorted(groups.items()):
        iters = np.array([r.iterations for r in rows], dtype=float)
        times = np.array([r.time_ms for r in rows])
        stats = {
            "samples": len(rows),
            "iter_min": float(iters.min()),
            "iter_max": float(iters.max()),
            "iter_mean": float(iters.mean()),
            "iter_sd": float(iters.std()),
            "time_min": float(times.min()),
            "time_max": float(times.max()),
            "time_mean": float(times.mean()),
            "time_sd": float(times.std()),
        }
        for col in ("err_combined", "err_orientation", "err_posture"):
            vals = np.array([getattr(r, col) for r in rows])
            stats[f"{col}_mean"] = float(vals.mean())
            stats[f"{col}_sd"] = float(vals.std())
        summary[key] = stats
    return summary


def histogram_data(results, bins: int = 50) -> list[dict]:
    """Binned error histograms plus fitted normal parameters per group."""
    groups = {}
    for r in results:
        if not r.failed:
            groups.setdefault((r.skeleton, r.solver), []).append(r)
    rows = []
    for (sk, solver), group in sorted(groups.items()):
        for col in ("err_combined", "err_orientation", "err_posture"):
            vals = np.array([getattr(r, col) for r in group])
            counts, edges = np.histogram(vals, bins=bins,
                                         range=(0.0, max(1e-9, vals.max())))
            rows.append({
                "skeleton": sk, "solver": solver, "measure": col,
                "normal_mean": float(vals.mean()), "normal_sd": float(vals.std()),
                "bin_edges": edges.tolist(), "bin_counts": counts.tolist(),
            })
    return rows


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def write_results_csv(path, results) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(RESULT_HEADER + "\n")
        writer = csv.writer(fh)
        for r in results:
            writer.writerow([r.skeleton, r.posture_id, r.target_id, r.solver,
                             r.iterations, _fmt(r.time_ms), _fmt(r.err_combined),
                             _fmt(r.err_orientation), _fmt(r.err_posture)])


def write_summary_csv(path, summary: dict) -> None:
    keys = next(iter(summary.values())).keys() if summary else []
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["skeleton", "solver", *keys])
        for (sk, solver), stats in summary.items():
            writer.writerow([sk, solver] + [_fmt(v) for v in stats.values()])


def write_histogram_csv(path, results, bins: int = 50) -> None:
    rows = histogram_data(results, bins)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["skeleton", "solver", "measure", "normal_mean",
                         "normal_sd", "bin_lo", "bin_hi", "count"])
        for row in rows:
            edges = row["bin_edges"]
            for i, count in enumerate(row["bin_counts"]):
                writer.writerow([row["skeleton"], row["solver"], row["measure"],
                                 _fmt(row["normal_mean"]), _fmt(row["normal_sd"]),
                                 _fmt(edges[i]), _fmt(edges[i + 1]), count])
