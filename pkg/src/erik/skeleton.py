"""Joint model for serial chains of 1-DoF revolute joints.

A chain is described root-first by :class:`Link` records.  Every link owns
the segment that connects it to its child, a rotation axis, and angular
limits.  On construction each link precomputes two auxiliary axes and a
latitude look-up table (LALUT) that inverts "segment elevation" back into
a local joint angle.

Poses come in two flavours: a :class:`Posture` is a target shape that may
violate joint limits, a :class:`Solution` always respects them.  Both carry
one extra 0-DoF state at the tip (the superpoint) so that end-point math
always has a child frame to work with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    EPS_GEO,
    QUAT_IDENTITY,
    X_HAT,
    Y_HAT,
    Z_HAT,
    cross,
    dot,
    normalize,
    qaa,
    qmul,
    quat_axis,
    rot_v_q,
    vnorm,
)

DEFAULT_LALUT_STEP = math.pi / 180.0


# ---------------------------------------------------------------------------
# Links and the LALUT
# ---------------------------------------------------------------------------

@dataclass
class Lalut:
    """Latitude -> local angle tables, one per hemisphere sign."""

    pos_lats: np.ndarray
    pos_angles: np.ndarray
    neg_lats: np.ndarray
    neg_angles: np.ndarray
    step: float
    bottom_lat: float
    top_lat: float


@dataclass
class Link:
    """One revolute joint: geometry, limits and precomputed helpers."""

    index: int                      # 0-based position from the root
    segment: np.ndarray             # child segment, local frame
    rotation_axis: np.ndarray       # unit local rotation axis
    min_theta: float
    max_theta: float
    is_root: bool = False
    is_end: bool = False
    # derived on initialization
    oa: np.ndarray = field(default=None, repr=False)
    poa: np.ndarray = field(default=None, repr=False)
    lalut: Lalut = field(default=None, repr=False)
    is_twister: bool = False

    def __post_init__(self):
        self.segment = np.asarray(self.segment, dtype=float)
        self.rotation_axis = normalize(self.rotation_axis)
        if not (self.min_theta <= 0.0 <= self.max_theta):
            raise ValueError("joint limits must bracket zero")
        if self.max_theta - self.min_theta > 2.0 * math.pi + EPS_GEO:
            raise ValueError("joint range cannot exceed a full turn")
        seg_norm = vnorm(self.segment)
        if seg_norm > EPS_GEO:
            self.segment_dir = self.segment / seg_norm
        else:
            self.segment_dir = Y_HAT.copy()
        self.is_twister = abs(dot(self.rotation_axis, self.segment_dir)) >= 1.0 - EPS_GEO
        init_joint_frames(self)
        self.lalut = build_lalut(self)

    @property
    def bottom_lat(self) -> float:
        return self.lalut.bottom_lat

    @property
    def top_lat(self) -> float:
        return self.lalut.top_lat


def init_joint_frames(link: Link) -> Link:
    """Fill the orthogonal (``oa``) and parent-orthogonal (``poa``) axes.

    Cross products with coordinate-axis fallbacks cover the parallel
    configurations; the local parent direction is +Y by convention.
    """
    r = link.rotation_axis
    s = link.segment_dir
    if abs(dot(r, s)) < 1.0 - EPS_GEO:
        oa = cross(r, s)
    elif abs(dot(s, X_HAT)) >= 1.0 - EPS_GEO:
        oa = cross(r, Y_HAT)
    else:
        oa = cross(r, Z_HAT)
    if abs(dot(r, Y_HAT)) < 1.0 - EPS_GEO:
        poa = cross(r, Y_HAT)
    elif abs(dot(r, X_HAT)) <= EPS_GEO:
        poa = X_HAT.copy()
    else:
        poa = Z_HAT.copy()
    link.oa = normalize(oa)
    link.poa = normalize(poa)
    return link


def latitude(link: Link, t) -> tuple[float, float]:
    """Latitude of a unit local direction ``t`` against the +Y parent.

    Returns ``(lam, sigma)`` with ``lam`` in [0, 1] (0 at the south pole,
    1 at the north pole) and ``sigma`` the +-1 hemisphere sign taken from
    the parent-orthogonal axis.
    """
    lam = (dot(t, Y_HAT) + 1.0) * 0.5
    sigma = -1.0 if dot(t, link.poa) < 0.0 else 1.0
    return lam, sigma


def build_lalut(link: Link, step: float = DEFAULT_LALUT_STEP) -> Lalut:
    """Sweep the joint range and tabulate latitude -> angle per hemisphere."""
    if step <= 0.0:
        raise ValueError("step must be positive")
    angles = [link.min_theta]
    a = link.min_theta + step
    while a < link.max_theta - 1e-12:
        angles.append(a)
        a += step
    if link.max_theta > link.min_theta:
        angles.append(link.max_theta)
    pos, neg = [], []
    bottom, top = math.inf, -math.inf
    for a in angles:
        u = rot_v_q(link.segment_dir, qaa(link.rotation_axis, a))
        lam, sigma = latitude(link, u)
        bottom = min(bottom, lam)
        top = max(top, lam)
        (pos if sigma >= 0.0 else neg).append((lam, a))

    def _pack(entries):
        entries.sort(key=lambda e: (e[0], abs(e[1])))
        lats, angs = [], []
        for lam, ang in entries:
            if lats and lam - lats[-1] < 1e-12:
                continue
            lats.append(lam)
            angs.append(ang)
        return np.asarray(lats), np.asarray(angs)

    pos_l, pos_a = _pack(pos)
    neg_l, neg_a = _pack(neg)
    return Lalut(pos_l, pos_a, neg_l, neg_a, step, bottom, top)


def query_lalut(link: Link, lam: float, sigma: float) -> float:
    """Interpolated local angle for a latitude, queried on the signed table.

    The latitude is clamped into the achievable band first; a hemisphere
    whose table is empty falls back to the populated one.
    """
    lut = link.lalut
    lam = max(lut.bottom_lat, min(lut.top_lat, lam))
    if sigma >= 0.0:
        lats, angs = lut.pos_lats, lut.pos_angles
        alt_lats, alt_angs = lut.neg_lats, lut.neg_angles
    else:
        lats, angs = lut.neg_lats, lut.neg_angles
        alt_lats, alt_angs = lut.pos_lats, lut.pos_angles
    if len(lats) == 0:
        lats, angs = alt_lats, alt_angs
    if len(lats) == 1:
        return float(angs[0])
    if lam <= lats[0]:
        return float(angs[0])
    if lam >= lats[-1]:
        return float(angs[-1])
    hi = int(np.searchsorted(lats, lam))
    lo = hi - 1
    t = (lam - lats[lo]) / (lats[hi] - lats[lo])
    return float(angs[lo] + t * (angs[hi] - angs[lo]))


# ---------------------------------------------------------------------------
# Angle sanitation
# ---------------------------------------------------------------------------

def safe_angle(link: Link, theta: float, cycle: bool = False) -> float:
    """Clamp ``theta`` into the joint limits, optionally wrapping first."""
    if cycle:
        theta = theta - 2.0 * math.pi * round(theta / (2.0 * math.pi))
    return min(link.max_theta, max(link.min_theta, theta))


def safe_twist(link: Link, theta: float) -> float:
    """Cyclic variant of :func:`safe_angle` for twister joints.

    When wrapping and clamping leave a residual, non-end-point joints
    reflect the overflow to the opposite limit, which keeps twist chains
    continuous across the +-pi seam.  The result always lies in the
    joint's limits.
    """
    clamped = safe_angle(link, theta, cycle=True)
    beta = math.fmod(theta - clamped, math.pi)
    if abs(beta) > 0.0 and not link.is_end:
        if theta <= link.min_theta:
            clamped = -link.min_theta + beta
        elif theta >= link.max_theta:
            clamped = -link.max_theta + beta
    return min(link.max_theta, max(link.min_theta, clamped))


def local_swing(link: Link, t_local) -> float:
    """Limit-safe swing angle pointing the segment toward ``t_local``."""
    lam, sigma = latitude(link, t_local)
    return safe_angle(link, query_lalut(link, lam, sigma))


# ---------------------------------------------------------------------------
# Skeleton
# ---------------------------------------------------------------------------

class Skeleton:
    """Immutable chain description plus derived constants."""

    def __init__(self, links: list[Link], name: str = "",
                 aggravation: float = 2.0):
        if not links:
            raise ValueError("a skeleton needs at least one link")
        self.links = links
        self.name = name
        self.n_dofs = len(links)
        for i, link in enumerate(links):
            link.index = i
            link.is_root = i == 0
            link.is_end = i == self.n_dofs - 1
        self.aggravation = aggravation
        self.posture_norm = sum(
            aggravation ** (i + 1)
            for i, link in enumerate(links) if not link.is_twister)
        self.end = links[-1]
        self.root = links[0]

    def __repr__(self):
        return f"Skeleton({self.name or 'unnamed'}, {self.n_dofs} links)"


# ---------------------------------------------------------------------------
# Poses (postures and solutions)
# ---------------------------------------------------------------------------

@dataclass
class JointState:
    theta: float
    basis: np.ndarray
    pos: np.ndarray

    def copy(self) -> "JointState":
        return JointState(self.theta, self.basis.copy(), self.pos.copy())


class Pose:
    """Chain state: one :class:`JointState` per link plus the superpoint.

    ``states[n_dofs]`` is the superpoint, a fake 0-DoF joint extending the
    end-point segment so that the tip always has a child frame.  Local and
    world orientations are derived views over ``(theta, basis)`` so they
    can never go stale.
    """

    __slots__ = ("skeleton", "states")

    def __init__(self, skeleton: Skeleton, states=None):
        self.skeleton = skeleton
        if states is None:
            states = [JointState(0.0, QUAT_IDENTITY.copy(), np.zeros(3))
                      for _ in range(skeleton.n_dofs + 1)]
        self.states = states

    # -- derived frames -----------------------------------------------------
    def local(self, i: int) -> np.ndarray:
        if i >= self.skeleton.n_dofs:
            return QUAT_IDENTITY.copy()
        return qaa(self.skeleton.links[i].rotation_axis, self.states[i].theta)

    def omega(self, i: int) -> np.ndarray:
        if i >= self.skeleton.n_dofs:
            return self.states[i].basis.copy()
        return qmul(self.states[i].basis, self.local(i))

    def dir(self, i: int) -> np.ndarray:
        """World direction of joint ``i``'s segment."""
        if i >= self.skeleton.n_dofs:
            return quat_axis(self.omega(i), "y")
        return rot_v_q(self.skeleton.links[i].segment_dir, self.omega(i))

    # -- convenience --------------------------------------------------------
    @property
    def thetas(self) -> np.ndarray:
        return np.array([s.theta for s in self.states[:self.skeleton.n_dofs]])

    @property
    def end_index(self) -> int:
        return self.skeleton.n_dofs - 1

    @property
    def superpoint(self) -> JointState:
        return self.states[self.skeleton.n_dofs]

    def copy(self):
        clone = type(self)(self.skeleton, [s.copy() for s in self.states])
        return clone

    def set_frame_from_parent(self, i: int) -> None:
        """Re-derive basis and position of joint ``i`` from its parent."""
        if i == 0:
            self.states[0].basis = QUAT_IDENTITY.copy()
            self.states[0].pos = np.zeros(3)
            return
        st = self.states[i]
        st.basis = self.omega(i - 1)
        st.pos = self.states[i - 1].pos + rot_v_q(
            self.skeleton.links[i - 1].segment, st.basis)

    def set_ori_from_parent(self, i: int) -> None:
        if i == 0:
            self.states[0].basis = QUAT_IDENTITY.copy()
            return
        self.states[i].basis = self.omega(i - 1)


class Posture(Pose):
    """Target pose; joint limits may be violated."""


class Solution(Pose):
    """Limit-compliant pose carrying a cached combined error value."""

    __slots__ = ("error",)

    def __init__(self, skeleton: Skeleton, states=None, error: float = math.inf):
        super().__init__(skeleton, states)
        self.error = error

    def copy(self) -> "Solution":
        clone = super().copy()
        clone.error = self.error
        return clone


def apply_fk(pose: Pose, start: int = 0) -> Pose:
    """Propagate frames from ``start`` to the tip (superpoint included).

    ``start``'s own basis and position are the anchor and stay untouched;
    every descendant is re-derived from its parent, which also refreshes
    the superpoint.
    """
    for i in range(start + 1, pose.skeleton.n_dofs + 1):
        pose.set_frame_from_parent(i)
    return pose


def pose_from_thetas(skeleton: Skeleton, thetas, cls=Posture) -> Pose:
    pose = cls(skeleton)
    for i, t in enumerate(thetas):
        pose.states[i].theta = float(t)
    apply_fk(pose)
    return pose


def solution_from_thetas(skeleton: Skeleton, thetas) -> Solution:
    sol = Solution(skeleton)
    for i, t in enumerate(thetas):
        sol.states[i].theta = safe_angle(skeleton.links[i], float(t))
    apply_fk(sol)
    return sol


def empty_solution(skeleton: Skeleton) -> Solution:
    """The zero pose: every joint at angle zero, frames resolved."""
    return solution_from_thetas(skeleton, np.zeros(skeleton.n_dofs))


def avoid_joint_edge(link: Link, theta: float, delta: float) -> float:
    """Offset an angle sitting exactly on a limit into the interior.

    Locked joints (zero range) are left alone since either offset would
    violate a limit.
    """
    if link.max_theta - link.min_theta <= EPS_GEO:
        return theta
    if abs(theta - link.min_theta) <= EPS_GEO:
        return theta + delta
    if abs(theta - link.max_theta) <= EPS_GEO:
        return theta - delta
    return theta


def avoid_joint_edges(pose: Pose, delta: float) -> Pose:
    """Apply :func:`avoid_joint_edge` to every joint, refreshing frames."""
    changed = False
    for i, link in enumerate(pose.skeleton.links):
        st = pose.states[i]
        nudged = avoid_joint_edge(link, st.theta, delta)
        if nudged != st.theta:
            st.theta = nudged
            changed = True
    if changed:
        apply_fk(pose)
    return pose
