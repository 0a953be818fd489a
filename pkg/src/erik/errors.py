"""Weighted two-measure scoring of candidate solutions.

The orientation measure is a normalized quaternion distance between the
end-point orientation and the target; the posture measure compares the
bend at each non-twister joint against the target posture, weighting
joints closer to the tip more heavily.  Both lie in [0, 1] and combine as
a weighted sum that is tested against an acceptance threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import Y_HAT, dot, qaa, qmul, rot_v_q, vnorm
from .skeleton import Posture, Skeleton, Solution

_SQRT2 = math.sqrt(2.0)


@dataclass
class ErrorWeights:
    orientation_weight: float = 1.0
    posture_weight: float = 0.2
    threshold: float = 0.04
    aggravation: float = 2.0

    def __post_init__(self):
        if self.orientation_weight == 0.0 and self.posture_weight == 0.0:
            raise ValueError("error weights cannot both be zero")


def _quat_distance(tau, omega) -> float:
    """min(|tau - omega|, |tau + omega|) / sqrt(2), in [0, 1]."""
    d = (tau[0] * omega[0] + tau[1] * omega[1]
         + tau[2] * omega[2] + tau[3] * omega[3])
    return math.sqrt(max(0.0, 2.0 - 2.0 * abs(d))) / _SQRT2


def orientation_error(ee_omega, tau, symmetric_ee: bool = False) -> float:
    """Distance between the end-point orientation and the target.

    Sign-insensitive on both quaternions.  With ``symmetric_ee`` the
    end-point flipped upside down (a pi turn about its own world Y axis)
    also counts, halving the error for symmetric tips.
    """
    err = _quat_distance(tau, ee_omega)
    if symmetric_ee:
        flipped = qmul(qaa(rot_v_q(Y_HAT, ee_omega), math.pi), ee_omega)
        err = min(err, _quat_distance(tau, flipped))
    return err


def posture_norm(skeleton: Skeleton, aggravation: float) -> float:
    """Normalizer of the posture measure: sum of alpha^i over non-twisters.

    ``i`` is the 1-based chain position, so deviations closer to the tip
    weigh more.
    """
    return sum(aggravation ** (i + 1)
               for i, link in enumerate(skeleton.links) if not link.is_twister)


def posture_error(theta: Solution, psi: Posture, skeleton: Skeleton,
                  aggravation: float = 2.0) -> float:
    """Shape deviation between a solution and the target posture.

    Walks the chain root to tip, skipping twisters, and accumulates the
    aggravated difference of consecutive-segment alignment terms.  All
    segment vectors are normalized so each term lies in [0, 1].
    """
    if len(theta.states) != len(psi.states):
        raise ValueError("solution and posture chain lengths differ")
    if skeleton.aggravation == aggravation:
        norm = skeleton.posture_norm
    else:
        norm = posture_norm(skeleton, aggravation)
    if norm <= 0.0:
        return 0.0
    s = t = skeleton.root.segment_dir
    acc = 0.0
    i = 0
    for k, link in enumerate(skeleton.links):
        if link.is_twister:
            continue
        u = theta.states[k + 1].pos - theta.states[k].pos
        v = psi.states[k + 1].pos - psi.states[k].pos
        un = vnorm(u)
        vn = vnorm(v)
        if un > 0.0:
            u = u / un
        if vn > 0.0:
            v = v / vn
        d_su = 1.0 - (1.0 + dot(s, u)) * 0.5
        d_tv = 1.0 - (1.0 + dot(t, v)) * 0.5
        acc += (aggravation ** i) * abs(d_tv - d_su)
        i += 1
        s, t = u, v
    return acc / norm


def combined_error(theta: Solution, tau, psi: Posture, weights: ErrorWeights,
                   symmetric_ee: bool = False,
                   skeleton: Skeleton | None = None) -> float:
    """Weighted sum of the two measures; cached on the solution."""
    sk = skeleton if skeleton is not None else theta.skeleton
    err = 0.0
    if weights.orientation_weight != 0.0:
        err += weights.orientation_weight * orientation_error(
            theta.omega(sk.n_dofs - 1), tau, symmetric_ee)
    if weights.posture_weight != 0.0:
        err += weights.posture_weight * posture_error(
            theta, psi, sk, weights.aggravation)
    theta.error = err
    return err
