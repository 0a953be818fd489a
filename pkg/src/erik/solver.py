"""Iterative expressive-IK pipeline.

One solve proceeds as: warp the target posture toward the target direction
(Cartesian BWCD, limits off), then iterate a tip-to-root forward phase that
re-hangs every frame off its child while matching the warped posture, and a
root-to-tip backward phase that reattaches the chain under joint limits.
Candidates are accepted against a combined orientation/posture error; when
the error history stalls, a target-offset trick and two CCD fallbacks trade
posture fidelity for orientation accuracy.  The best candidate seen is
always returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ccd import CcdConfig, bw_twist, bwcd_posture, bwcd_solution, ccd
from .errors import ErrorWeights, combined_error
from .geometry import (
    EPS_GEO,
    X_HAT,
    Y_HAT,
    cross,
    dot,
    epa,
    project_onto_plane,
    qaa,
    qconj,
    qmul,
    quat_axis,
    quat_rotation_angle,
    quat_to_matrix,
    quat_twist_angle,
    rot_v_q,
    signed_angle,
    v_diff_as_q,
    vnorm,
    ypr_decompose,
)
from .skeleton import (
    Posture,
    Skeleton,
    Solution,
    apply_fk,
    avoid_joint_edge,
    avoid_joint_edges,
    empty_solution,
    latitude,
    local_swing,
    query_lalut,
    safe_angle,
    safe_twist,
)

HALF_PI = math.pi / 2.0


# ---------------------------------------------------------------------------
# Configuration containers
# ---------------------------------------------------------------------------

@dataclass
class ErikParams:
    """Per-call goals: target orientation, target posture, previous solution."""

    tau: np.ndarray
    psi: Posture
    previous: Solution | None = None


@dataclass
class ErikHyperparams:
    """Solver configuration; stable across calls for one embodiment."""

    skeleton: Skeleton
    weights: ErrorWeights = field(default_factory=ErrorWeights)
    max_erik_iterations: int = 12
    ccd: CcdConfig = field(default_factory=CcdConfig)
    disturbance: float = math.pi / 90.0
    ext_symmetric_endpoint: bool = True
    ext_avoid_edges: bool = True
    ext_nonconv_offset: bool = True
    ext_nonconv_ccd: bool = True
    nonconv_window: int = 4
    offset_jitter_seed: int | None = None  # adds seeded jitter to the offset trick
    seed_from_previous: bool = False       # start from params.previous instead of zero

    def __post_init__(self):
        if self.max_erik_iterations < 1:
            raise ValueError("max_erik_iterations must be at least 1")


@dataclass
class ErikAux:
    """Execution state of one solve."""

    tau: np.ndarray
    psi: Posture
    theta: Solution
    best: Solution
    previous: Solution
    error_history: list = field(default_factory=list)
    tried_nonconv_offset: bool = False
    rng: np.random.Generator | None = None


@dataclass
class ErikResult:
    solution: Solution
    iterations: int
    error_history: list


# ---------------------------------------------------------------------------
# Setup and bookkeeping
# ---------------------------------------------------------------------------

def initialize_solution(tau, psi: Posture, hp: ErikHyperparams,
                        previous: Solution | None = None) -> ErikAux:
    """Build the execution container and score the starting candidate.

    A twister end-point folds the posture's tip twist into the working
    target so the expressive twist survives the solve.
    """
    sk = hp.skeleton
    work_tau = np.asarray(tau, dtype=float).copy()
    if sk.end.is_twister:
        work_tau = qmul(work_tau, qaa(Y_HAT, psi.states[sk.n_dofs - 1].theta))
    if hp.seed_from_previous and previous is not None:
        start = previous.copy()
    else:
        start = empty_solution(sk)
    combined_error(start, tau, psi, hp.weights, hp.ext_symmetric_endpoint)
    rng = (np.random.default_rng(hp.offset_jitter_seed)
           if hp.offset_jitter_seed is not None else None)
    return ErikAux(tau=work_tau, psi=psi.copy(), theta=start.copy(),
                   best=start.copy(), previous=start, rng=rng)


def solution_ok(aux: ErikAux, params: ErikParams, hp: ErikHyperparams) -> bool:
    """Score the current candidate against the original goals.

    Frames are re-derived from the angle vector first, the error lands in
    the history, and the best-seen solution is refreshed on ties or
    improvements.
    """
    apply_fk(aux.theta)
    err = combined_error(aux.theta, params.tau, params.psi, hp.weights,
                         hp.ext_symmetric_endpoint)
    aux.error_history.append(err)
    if err <= aux.best.error:
        aux.best = aux.theta.copy()
    return err <= hp.weights.threshold


def nonconvergence_detected(aux: ErikAux, hp: ErikHyperparams) -> bool:
    """Stall or cycle heuristic over the recorded error history."""
    hist = aux.error_history
    w = hp.nonconv_window
    if len(hist) < w + 1:
        return False
    stall = hp.ccd.stall_precision
    recent = hist[-w:]
    if min(recent) > min(hist[:-w]) - stall:
        return True
    for i in range(len(recent)):
        for j in range(i + 2, len(recent)):
            if abs(recent[i] - recent[j]) <= stall:
                return True
    return False


def nonconv_offset_trick(aux: ErikAux, hp: ErikHyperparams) -> ErikAux:
    """Shift the working target slightly about the root and its child axes.

    The offset sign at each joint points away from the nearer limit.  Used
    at most once per solve.
    """
    sk = hp.skeleton
    delta = hp.disturbance
    if aux.rng is not None and delta > 0.0:
        delta = delta + float(aux.rng.uniform(-delta, delta))

    def _offset(k: int) -> np.ndarray:
        link = sk.links[k]
        axis = rot_v_q(link.rotation_axis, aux.theta.states[k].basis)
        th = aux.theta.states[k].theta
        sign = 1.0 if abs(th - link.min_theta) > abs(th - link.max_theta) else -1.0
        return qaa(axis, sign * delta)

    q = _offset(0)
    if sk.n_dofs > 1:
        q = qmul(_offset(1), q)
    aux.tau = qmul(q, aux.tau)
    aux.tried_nonconv_offset = True
    return aux


def select_best_solution(aux: ErikAux) -> Solution:
    if aux.theta.error <= aux.best.error:
        return aux.theta
    return aux.best


# ---------------------------------------------------------------------------
# Roll propagation
# ---------------------------------------------------------------------------

def propagate_roll_down(q, k: int, theta: Solution) -> Solution:
    """Right-multiply the bases of ``k``'s ancestors (root included) by ``q``.

    For the root itself the single root basis is rolled.
    """
    i = k
    while True:
        i = i - 1 if i > 0 else 0
        theta.states[i].basis = qmul(theta.states[i].basis, q)
        if i == 0:
            return theta


def propagate_roll_up(q, k: int, theta: Solution, flip_pitch: bool = False) -> Solution:
    """Right-multiply descendant bases by ``q``; optionally negate pitch angles."""
    sk = theta.skeleton
    ee = sk.n_dofs - 1
    i = k
    while i < ee:
        child = theta.states[i + 1]
        child.basis = qmul(child.basis, q)
        link = sk.links[i + 1]
        if flip_pitch and not link.is_twister:
            child.theta = safe_angle(link, -child.theta)
        i += 1
    return theta


def _pitch_ra(sk: Skeleton, k: int) -> np.ndarray:
    """Reference pitch axis of a joint: its own axis, or a neighbour's for twisters."""
    link = sk.links[k]
    if link.is_twister:
        if link.is_root:
            if k + 1 < sk.n_dofs:
                return sk.links[k + 1].rotation_axis
            return X_HAT  # single-joint twister: any axis orthogonal to Y
        return sk.links[k - 1].rotation_axis
    return link.rotation_axis


# ---------------------------------------------------------------------------
# Forward phase (tip -> root)
# ---------------------------------------------------------------------------

def forward_phase(k: int, tau, psi: Posture, theta: Solution,
                  hp: ErikHyperparams) -> Solution:
    """Re-derive joint ``k``'s frame and angle from its child and the posture.

    ``tau`` is the working target at the end-point and the child's basis
    everywhere else.  The chain is deliberately left detached from the
    root; the backward phase reattaches it.
    """
    sk = hp.skeleton
    link = sk.links[k]
    st = theta.states[k]

    if link.is_end:
        st.pos = psi.states[k].pos.copy()

    if not link.is_root:
        # point the incoming bone the way the posture points it
        s = rot_v_q(link.segment_dir, st.basis)
        pseg = psi.states[k].pos - psi.states[k - 1].pos
        pn = vnorm(pseg)
        if pn > EPS_GEO:
            st.basis = qmul(v_diff_as_q(s, pseg / pn), st.basis)
        # roll about the bone toward the posture's frame
        pra = _pitch_ra(sk, k)
        r_p = rot_v_q(pra, psi.states[k].basis)
        r_s = rot_v_q(pra, st.basis)
        d = theta.dir(k)
        ps = project_onto_plane(r_s, d)
        pp = project_onto_plane(r_p, d)
        if vnorm(ps) > EPS_GEO and vnorm(pp) > EPS_GEO:
            st.basis = qmul(st.basis, qaa(Y_HAT, signed_angle(ps, pp, d)))

    if not link.is_twister:
        _align_swing_plane(k, psi, theta, sk)

    if not link.is_end:
        _align_child_roll(k, theta, sk)

    q_local = qmul(qconj(st.basis), tau)
    q_y, q_p, q_r = ypr_decompose(q_local, _pitch_ra(sk, k))
    roll = quat_twist_angle(q_r, Y_HAT)
    if link.is_end and roll > HALF_PI:
        q_r = qaa(_quat_vector_axis(q_r), math.pi - roll)
    elif link.is_end and roll < -HALF_PI:
        q_r = qaa(_quat_vector_axis(q_r), -math.pi - roll)

    if link.is_twister:
        st.theta = safe_twist(
            link, quat_twist_angle(q_y, Y_HAT) + quat_twist_angle(q_r, Y_HAT))
    else:
        tau_dir = quat_axis(tau, "y")
        st.theta = local_swing(link, rot_v_q(tau_dir, qconj(st.basis)))
        if quat_rotation_angle(q_r) > EPS_GEO:
            propagate_roll_down(q_r, k, theta)

    return finish_forward(k, theta, hp)


def _quat_vector_axis(q) -> np.ndarray:
    v = np.array([q[1], q[2], q[3]])
    n = vnorm(v)
    if n < 1e-12:
        return Y_HAT.copy()
    return v / n


def _align_swing_plane(k: int, psi: Posture, theta: Solution, sk: Skeleton) -> None:
    """Roll the chain so the swing plane of joint ``k`` matches the posture's.

    Walks toward the root looking for the first non-collinear pair of
    posture segments to define the reference bend normal; straight
    postures legitimately find none and apply no roll.
    """
    ee = sk.n_dofs - 1
    s_vec = psi.states[k + 1].pos - psi.states[k].pos
    r_p = np.zeros(3)
    n_idx: int | None = k
    flipped = False
    m = k
    while vnorm(r_p) <= EPS_GEO and n_idx is not None:
        m = n_idx
        if n_idx == 0:
            p_vec = sk.links[0].segment_dir
        else:
            p_vec = psi.states[n_idx].pos - psi.states[n_idx - 1].pos
        pn = vnorm(p_vec)
        sn = vnorm(s_vec)
        if pn > EPS_GEO and sn > EPS_GEO:
            r_p = cross(p_vec / pn, s_vec / sn)
        if n_idx == 0 and not flipped:
            if k + 2 <= sk.n_dofs:
                s_vec = psi.states[k + 2].pos - psi.states[k + 1].pos
            flipped = True
            n_idx = 1 if ee >= 1 else None
        else:
            s_vec = p_vec
            n_idx = n_idx - 1 if n_idx > 0 else None

    if vnorm(r_p) <= EPS_GEO:
        return
    m = min(m, ee)
    pra = _pitch_ra(sk, m)
    # align the solution's pitch plane (sign-insensitive axis) to the
    # posture's bend plane; which hemisphere the joint then swings into is
    # the latitude table's decision, not a roll decision
    s = rot_v_q(pra, theta.states[m].basis)
    d = theta.dir(m)
    ps = project_onto_plane(s, d)
    pr = project_onto_plane(r_p, d)
    if vnorm(ps) > EPS_GEO and vnorm(pr) > EPS_GEO:
        if dot(ps, pr) < 0.0:
            ps = -ps
        ang = signed_angle(ps, pr, d)
        propagate_roll_down(qaa(Y_HAT, ang), k, theta)


def _align_child_roll(k: int, theta: Solution, sk: Skeleton) -> None:
    """Remove roll disagreement between joint ``k`` and its child frame.

    The reference image of the axis goes through ``k``'s world orientation
    (identical to the basis image for twister children), so a consistent
    chain measures zero at any bend magnitude.
    """
    link = sk.links[k]
    child_link = sk.links[k + 1]
    a = link.rotation_axis if child_link.is_twister else child_link.rotation_axis
    r = rot_v_q(a, theta.omega(k))
    r_c = rot_v_q(a, theta.states[k + 1].basis)
    if child_link.is_twister and dot(r_c, r) < 0.0:
        propagate_roll_up(qaa(Y_HAT, math.pi), k, theta, True)
        return
    if link.is_twister:
        # a twister absorbs roll disagreement through its own angle
        return
    d = theta.dir(k)
    pc = project_onto_plane(r_c, d)
    pr = project_onto_plane(r, d)
    if vnorm(pc) > EPS_GEO and vnorm(pr) > EPS_GEO:
        # sign-insensitive: a pi disagreement is a hemisphere artifact of
        # the still-unassigned local angle, not a real roll error
        if dot(pc, pr) < 0.0:
            pc = -pc
        ang = signed_angle(pc, pr, d)
        propagate_roll_up(qaa(Y_HAT, ang), k, theta, False)


def finish_forward(k: int, theta: Solution, hp: ErikHyperparams) -> Solution:
    """Snap joint ``k``'s frame onto its child's and refresh descendants.

    The basis is chosen so the joint's world orientation reproduces the
    child's already-computed basis exactly; the position is back-derived
    along the connecting segment.
    """
    sk = hp.skeleton
    link = sk.links[k]
    st = theta.states[k]
    if hp.ext_avoid_edges:
        st.theta = avoid_joint_edge(link, st.theta, hp.disturbance)
    if not link.is_end:
        child_basis = theta.states[k + 1].basis
        st.basis = epa(qmul(child_basis, qconj(theta.local(k))),
                       link.rotation_axis)
        st.pos = theta.states[k + 1].pos - rot_v_q(link.segment, child_basis)
        apply_fk(theta, k)
    return theta


# ---------------------------------------------------------------------------
# Backward phase (root -> tip)
# ---------------------------------------------------------------------------

def backward_phase(aux: ErikAux, k: int, params: ErikParams,
                   hp: ErikHyperparams) -> Solution:
    """Reattach joint ``k`` to its parent and re-solve its angle under limits.

    Mirroring the forward phase, the per-joint goal is the working target
    only at the end-point; interior joints chase the frame the forward
    phase computed for their child, which is what lets a consistent chain
    pass through unchanged.
    """
    sk = hp.skeleton
    link = sk.links[k]
    theta = aux.theta
    st = theta.states[k]
    theta.set_frame_from_parent(k)
    if link.is_end:
        tau = aux.tau
    else:
        tau = theta.states[k + 1].basis

    if link.is_twister:
        if not link.is_end:
            backward_child_roll(k, theta, hp)
        tau_m = quat_to_matrix(tau)
        best = bw_twist(tau_m, quat_to_matrix(theta.omega(k))) + st.theta
        if link.is_end and hp.ext_symmetric_endpoint:
            flipped_m = quat_to_matrix(qmul(tau, qaa(Y_HAT, math.pi)))
            alt = bw_twist(flipped_m, quat_to_matrix(theta.omega(k))) + st.theta
            if abs(alt) < abs(best):
                best = alt
        st.theta = safe_twist(link, best)
    else:
        q = qmul(qconj(st.basis), tau)
        lam, sig = latitude(link, quat_axis(q, "y"))
        th = safe_angle(link, query_lalut(link, lam, sig))
        if not link.is_end:
            th_alt = safe_angle(link, query_lalut(link, lam, -sig))
            sv = rot_v_q(link.segment_dir,
                         qmul(st.basis, qaa(link.rotation_axis, th)))
            sv_alt = rot_v_q(link.segment_dir,
                             qmul(st.basis, qaa(link.rotation_axis, th_alt)))
            d = rot_v_q(link.segment_dir, theta.omega(k + 1))
            if dot(sv_alt, d) > dot(sv, d):
                th, th_alt = th_alt, th
                sv, sv_alt = sv_alt, sv
            d = rot_v_q(link.segment_dir, tau)
            if dot(sv_alt, d) > dot(sv, d):
                th = th_alt
        st.theta = th
        if k > 0 and sk.links[k - 1].is_twister:
            _compensate_parent_twist(k, tau, theta, sk)

    return finish_backward(k, theta, sk)


def _compensate_parent_twist(k: int, tau, theta: Solution, sk: Skeleton) -> None:
    """Absorb the roll a swing joint cannot express into its twister parent."""
    link = sk.links[k]
    parent = sk.links[k - 1]
    st = theta.states[k]
    r_t = rot_v_q(link.rotation_axis, tau)
    r_k = rot_v_q(link.rotation_axis, st.basis)
    r_p = rot_v_q(parent.rotation_axis, theta.states[k - 1].basis)
    if (abs(dot(r_t, r_p)) >= 1.0 - EPS_GEO
            or abs(dot(r_k, r_p)) >= 1.0 - EPS_GEO):
        r_t = rot_v_q(link.oa, tau)
        r_k = rot_v_q(link.oa, st.basis)
    p = project_onto_plane(r_t, r_p)
    if not link.is_end:
        cd = theta.dir(k + 1)
        q = qaa(cd, signed_angle(r_t, p, cd))
        p = project_onto_plane(rot_v_q(link.rotation_axis, qmul(q, tau)), r_p)
    gamma = signed_angle(project_onto_plane(r_k, r_p), p, r_p)
    theta.states[k - 1].theta = safe_twist(
        parent, gamma + theta.states[k - 1].theta)
    theta.set_frame_from_parent(k)


def backward_child_roll(k: int, theta: Solution, hp: ErikHyperparams) -> Solution:
    """Roll the child basis of twister ``k`` about the child direction.

    Chooses the best-conditioned basis column (y, falling back to x or z
    when collinear with the child direction) and keeps whichever of the
    two roll candidates aligns that column closer to the parent's.
    """
    sk = hp.skeleton
    child_link = sk.links[k + 1]
    child = theta.states[k + 1]
    ky = quat_axis(theta.states[k].basis, "y")
    if abs(dot(rot_v_q(child_link.rotation_axis, child.basis), ky)) <= EPS_GEO:
        return theta
    c_d = theta.dir(k + 1)
    axis = "y"
    if abs(dot(quat_axis(child.basis, "y"), c_d)) >= 1.0 - EPS_GEO \
            or abs(dot(theta.dir(k), c_d)) >= 1.0 - EPS_GEO:
        if abs(dot(quat_axis(child.basis, "z"), c_d)) >= 1.0 - EPS_GEO \
                or abs(dot(quat_axis(child.basis, "x"), theta.dir(k))) <= EPS_GEO:
            axis = "x"
        else:
            axis = "z"
    c_v = quat_axis(child.basis, axis)
    p_v = quat_axis(theta.states[k].basis, axis)
    c_p = project_onto_plane(c_v, c_d)
    p_p = project_onto_plane(p_v, c_d)
    ang = signed_angle(c_p, p_p, c_d)
    ang_neg = signed_angle(c_p, p_p, -c_d)
    q = qmul(qaa(c_d, ang), child.basis)
    q_neg = qmul(qaa(c_d, ang_neg), child.basis)
    if dot(quat_axis(q, axis), p_v) < dot(quat_axis(q_neg, axis), p_v):
        child.basis = q_neg
    else:
        child.basis = q
    return theta


def finish_backward(k: int, theta: Solution, sk: Skeleton) -> Solution:
    """Re-derive orientations down any twister-parent run ending at ``k``."""
    if k > 0 and sk.links[k - 1].is_twister:
        finish_backward(k - 1, theta, sk)
    theta.set_ori_from_parent(k)
    return theta


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def solve(params: ErikParams, hp: ErikHyperparams) -> ErikResult:
    """Full pipeline; returns the solution plus iteration statistics."""
    sk = hp.skeleton
    if len(params.psi.states) != sk.n_dofs + 1:
        raise ValueError("posture chain length does not match the skeleton")
    ee = sk.n_dofs - 1
    aux = initialize_solution(params.tau, params.psi, hp, params.previous)
    aux.psi = bwcd_posture(aux.psi, quat_axis(aux.tau, "y"), hp.ccd, sk)
    if hp.ext_avoid_edges:
        avoid_joint_edges(aux.psi, hp.disturbance)

    iterations = 0
    for i in range(1, hp.max_erik_iterations + 1):
        iterations = i
        for k in range(ee, -1, -1):
            t = aux.tau if k == ee else aux.theta.states[k + 1].basis
            forward_phase(k, t, aux.psi, aux.theta, hp)
        for k in range(ee + 1):
            backward_phase(aux, k, params, hp)
        if solution_ok(aux, params, hp):
            return ErikResult(aux.theta, iterations, aux.error_history)
        aux.theta = bwcd_solution(aux.theta, aux.tau, hp.ccd, sk)
        if solution_ok(aux, params, hp):
            return ErikResult(aux.theta, iterations, aux.error_history)
        if nonconvergence_detected(aux, hp):
            if hp.ext_nonconv_offset and not aux.tried_nonconv_offset:
                nonconv_offset_trick(aux, hp)
                continue
            if hp.ext_nonconv_ccd:
                aux.theta = ccd(aux.theta, aux.tau, hp.ccd, sk,
                                hp.ext_avoid_edges, hp.disturbance)
                if solution_ok(aux, params, hp):
                    return ErikResult(aux.theta, iterations, aux.error_history)
                aux.theta = ccd(empty_solution(sk), aux.tau, hp.ccd, sk,
                                hp.ext_avoid_edges, hp.disturbance)
                if solution_ok(aux, params, hp):
                    return ErikResult(aux.theta, iterations, aux.error_history)
            return ErikResult(select_best_solution(aux), iterations,
                              aux.error_history)
    return ErikResult(select_best_solution(aux), iterations, aux.error_history)


def calculate_erik(params: ErikParams, hp: ErikHyperparams) -> Solution:
    """Solve and return just the chosen limit-compliant solution."""
    return solve(params, hp).solution
