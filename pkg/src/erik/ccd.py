"""Coordinate-descent sub-solvers: CCD and the two BWCD variants.

BWCD sweeps root-first so that warping concentrates at the base of the
chain, where it disturbs the overall shape least; CCD sweeps tip-first.
The posture variant works in Cartesian space and ignores joint limits,
the solution variants work in angle space and enforce them.  Every exit
path of the solution variants corrects the end-point twist against the
target orientation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import (
    EPS_GEO,
    dot,
    epa,
    project_onto_plane,
    qaa,
    qmul,
    quat_axis,
    quat_to_matrix,
    rot_v_q,
    signed_angle,
    vnorm,
)
from .skeleton import (
    Posture,
    Skeleton,
    Solution,
    apply_fk,
    avoid_joint_edges,
    safe_angle,
    safe_twist,
)


@dataclass
class CcdConfig:
    max_iterations: int = 20
    precision: float = 1e-3       # acceptance bound on the direction error
    stall_precision: float = 1e-5  # two consecutive errors closer than this stall
    round_decimals: int = 3        # "is this correction significant" rounding

    def __post_init__(self):
        if not 0.0 < self.precision < 1.0:
            raise ValueError("precision must lie in (0, 1)")


def ccd_test(t, ee, cfg: CcdConfig) -> tuple[bool, float]:
    """Acceptance check between a target direction and the tip direction.

    The error is the rounded half-distance of the dot product: 0 when
    aligned, 0.5 when orthogonal, 1 when antipodal.
    """
    err = round(-(dot(t, ee) - 1.0) * 0.5, cfg.round_decimals)
    return err <= cfg.precision, err


def _significant(alpha: float, cfg: CcdConfig) -> bool:
    return round(abs(alpha), cfg.round_decimals) > 0.0


def bw_twist(tau_m, omega_m) -> float:
    """Twist about the current frame's Y column that best aligns it to the target.

    Works on 3x3 rotation matrices.  The X or Z column pair is chosen by
    whichever is less collinear with the twist axis, so the measured angle
    stays well conditioned.
    """
    omega_y = omega_m[:, 1]
    d_zy = dot(tau_m[:, 2], omega_y)
    d_xy = dot(tau_m[:, 0], omega_y)
    if abs(d_zy) >= 1.0 - EPS_GEO or abs(d_xy) < abs(d_zy):
        return signed_angle(omega_m[:, 0],
                            project_onto_plane(tau_m[:, 0], omega_y), omega_y)
    return signed_angle(omega_m[:, 2],
                        project_onto_plane(tau_m[:, 2], omega_y), omega_y)


def _finish_twist(theta: Solution, tau, skeleton: Skeleton) -> Solution:
    """End-point twist correction applied on every exit path."""
    ee = skeleton.n_dofs - 1
    link = skeleton.links[ee]
    delta = bw_twist(quat_to_matrix(tau), quat_to_matrix(theta.omega(ee)))
    raw = theta.states[ee].theta + delta
    if link.is_twister:
        theta.states[ee].theta = safe_twist(link, raw)
    else:
        theta.states[ee].theta = safe_angle(link, raw)
    apply_fk(theta, ee)
    return theta


def bwcd_posture(psi: Posture, tau_dir, cfg: CcdConfig,
                 skeleton: Skeleton, trace: list | None = None) -> Posture:
    """Warp a posture in Cartesian space until its tip points at ``tau_dir``.

    Root-first sweeps rotate every descendant frame about the joint's world
    axis and re-accumulate positions; joint limits are deliberately not
    enforced and the root position never moves.
    """
    psi = psi.copy()
    n = skeleton.n_dofs
    ee = n - 1
    for _ in range(cfg.max_iterations):
        for k in range(n):
            pd = rot_v_q(skeleton.end.segment_dir, psi.superpoint.basis)
            ok, err = ccd_test(tau_dir, pd, cfg)
            if trace is not None:
                trace.append(err)
            if ok:
                return psi
            r = rot_v_q(skeleton.links[k].rotation_axis, psi.states[k].basis)
            pdp = project_onto_plane(pd, r)
            tdp = project_onto_plane(tau_dir, r)
            if vnorm(pdp) <= EPS_GEO or vnorm(tdp) <= EPS_GEO:
                continue
            alpha = signed_angle(pdp, tdp, r)
            if not _significant(alpha, cfg):
                continue
            q = epa(qaa(r, alpha), skeleton.links[k].rotation_axis)
            p = psi.states[k].pos.copy()
            psi.states[k].theta += alpha
            for j in range(k, n):
                psi.states[j].pos = p
                child = psi.states[j + 1]
                child.basis = qmul(q, child.basis)
                p = p + rot_v_q(skeleton.links[j].segment, child.basis)
            psi.superpoint.pos = p
        pd = rot_v_q(skeleton.end.segment_dir, psi.superpoint.basis)
        ok, err = ccd_test(tau_dir, pd, cfg)
        if trace is not None:
            trace.append(err)
        if ok:
            return psi
    return psi


def bwcd_solution(theta: Solution, tau, cfg: CcdConfig,
                  skeleton: Skeleton, trace: list | None = None) -> Solution:
    """Angle-space BWCD with joint limits; ``tau`` is a full orientation.

    The swept direction goal is the target's Y column; on exit the
    end-point twist is aligned to the full target orientation.
    """
    theta = theta.copy()
    n = skeleton.n_dofs
    ee = n - 1
    tau_dir = quat_axis(tau, "y")
    for _ in range(cfg.max_iterations):
        eod = theta.dir(ee)
        for k in range(n):
            ok, err = ccd_test(tau_dir, eod, cfg)
            if trace is not None:
                trace.append(err)
            if ok:
                return _finish_twist(theta, tau, skeleton)
            link = skeleton.links[k]
            r = rot_v_q(link.rotation_axis, theta.omega(k))
            top = project_onto_plane(tau_dir, r)
            eop = project_onto_plane(eod, r)
            if vnorm(top) <= EPS_GEO or vnorm(eop) <= EPS_GEO:
                continue
            raw = theta.states[k].theta + signed_angle(eop, top, r)
            if link.is_twister:
                theta.states[k].theta = safe_twist(link, raw)
            else:
                theta.states[k].theta = safe_angle(link, raw)
            apply_fk(theta, k)
            eod = theta.dir(ee)
        ok, err = ccd_test(tau_dir, eod, cfg)
        if trace is not None:
            trace.append(err)
        if ok:
            return _finish_twist(theta, tau, skeleton)
    return _finish_twist(theta, tau, skeleton)


def ccd(theta: Solution, tau, cfg: CcdConfig, skeleton: Skeleton,
        avoid_edges: bool = False, disturbance: float = 0.0,
        trace: list | None = None) -> Solution:
    """Classic tip-first CCD toward the target direction, with joint limits.

    Exits early when the direction error stalls between two consecutive
    sweeps.  When ``avoid_edges`` is set, angles landing exactly on their
    limits are nudged inside by ``disturbance`` after every update.
    """
    theta = theta.copy()
    n = skeleton.n_dofs
    ee = n - 1
    td = quat_axis(tau, "y")
    ed = theta.dir(ee)
    err = math.inf
    for _ in range(cfg.max_iterations):
        last_err = err
        for k in range(ee, -1, -1):
            ok, err = ccd_test(td, ed, cfg)
            if trace is not None:
                trace.append(err)
            if ok:
                return _finish_twist(theta, tau, skeleton)
            link = skeleton.links[k]
            r = rot_v_q(link.rotation_axis, theta.states[k].basis)
            tdp = project_onto_plane(td, r)
            edp = project_onto_plane(ed, r)
            if vnorm(tdp) <= EPS_GEO or vnorm(edp) <= EPS_GEO:
                continue
            raw = theta.states[k].theta + signed_angle(edp, tdp, r)
            if link.is_twister:
                theta.states[k].theta = safe_twist(link, raw)
            else:
                theta.states[k].theta = safe_angle(link, raw)
            if avoid_edges:
                avoid_joint_edges(theta, disturbance)
            apply_fk(theta, k)
            ed = theta.dir(ee)
        ok, err = ccd_test(td, ed, cfg)
        if trace is not None:
            trace.append(err)
        if ok:
            return _finish_twist(theta, tau, skeleton)
        if abs(err - last_err) <= cfg.stall_precision:
            return _finish_twist(theta, tau, skeleton)
    return _finish_twist(theta, tau, skeleton)
