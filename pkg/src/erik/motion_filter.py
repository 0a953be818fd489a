"""Jerk/acceleration/velocity-limited set-point tracking per joint.

The filter smooths successive solver outputs into continuous motion.  Each
tick takes the latest set-point, derives an induced velocity, shapes it
through a soft position limiter and a character-shaping response curve,
then cascades tanh-saturated jerk, acceleration and velocity increments
into the output position.

Time is measured in ticks: the recurrences use a unit time step, all
limits act in per-tick units (so a position change per tick is bounded by
half the velocity limit, and so on down the derivative chain), and the
tick rate only matters when converting from per-second units via
:func:`per_second_params`.

Everything broadcasts over numpy arrays, so thousands of independent
joints can be filtered in one call.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass
class FilterParams:
    velocity_limit: float        # per-tick position change scale
    acceleration_limit: float
    jerk_limit: float
    p_min: float
    p_max: float
    beta: float = 1.0            # position-limiter exponent (soft -> hard)
    sigma: float = 0.0           # smoothness in [0, 1]
    rho: float = 0.0             # responsiveness in [0, 1)
    rate: float = 50.0           # ticks per second

    def __post_init__(self):
        if not self.p_min < self.p_max:
            raise ValueError("p_min must be below p_max")
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError("sigma must lie in [0, 1]")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        for name in ("velocity_limit", "acceleration_limit", "jerk_limit"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    @property
    def dt(self) -> float:
        return 1.0 / self.rate


@dataclass
class FilterState:
    x_prev: float | np.ndarray
    xdot_prev: float | np.ndarray = 0.0
    xddot_prev: float | np.ndarray = 0.0
    t_index: int = 0


def per_second_params(velocity: float, acceleration: float, jerk: float,
                      p_min: float, p_max: float, rate: float = 50.0,
                      **kwargs) -> FilterParams:
    """Build :class:`FilterParams` from per-second limits."""
    dt = 1.0 / rate
    return FilterParams(velocity * dt, acceleration * dt * dt,
                        jerk * dt * dt * dt, p_min, p_max, rate=rate, **kwargs)


def _saturate(x, k: float):
    """tanh envelope: odd, monotone, bounded by k/2."""
    half = 0.5 * k
    return half * np.tanh(x / half)


def _shape(v, sigma: float, rho: float):
    """Character response curve: v scaled by a tanh gate on its magnitude."""
    mag = np.abs(v) / (1.0 - rho)
    gate = 0.5 * (np.tanh(np.power(mag, 1.0 - sigma) - np.pi) + 1.0)
    return v * gate


def _soft_limit(xdot, x, params: FilterParams):
    """Scale velocities pushing toward a bound by distance to that bound."""
    alpha = 0.5 * (params.p_max - params.p_min)
    center = params.p_min + alpha
    offset = (x - params.p_min - alpha) / alpha
    factor = 1.0 - np.power(offset * offset, params.beta)
    outward = ((x > center) & (xdot > 0.0)) | ((x < center) & (xdot < 0.0))
    return np.where(outward, xdot * factor, xdot)


def filter_step(state: FilterState, set_point, params: FilterParams):
    """Advance the filter one tick toward ``set_point``.

    Returns ``(new_state, output_position)``; the output becomes the next
    tick's position history.  The induced velocity is the full remaining
    gap per tick; the jerk/acceleration/velocity cascade then decides how
    much of it may actually happen this tick.
    """
    x_prev = np.asarray(state.x_prev, dtype=float)
    xdot_prev = np.asarray(state.xdot_prev, dtype=float)
    xddot_prev = np.asarray(state.xddot_prev, dtype=float)
    s = np.asarray(set_point, dtype=float)

    induced = s - x_prev
    v = _soft_limit(induced, x_prev, params)
    shaped = _shape(v, params.sigma, params.rho)
    xi = xddot_prev + _saturate(
        (shaped - xdot_prev) - xddot_prev, params.jerk_limit)
    psi = xdot_prev + _saturate(xi - xdot_prev, params.acceleration_limit)
    chi = x_prev + _saturate(psi, params.velocity_limit)

    if chi.ndim == 0:
        chi_out = float(chi)
        new_state = FilterState(chi_out, float(psi), float(xi), state.t_index + 1)
        return new_state, chi_out
    new_state = FilterState(chi, psi, xi, state.t_index + 1)
    return new_state, chi


def filter_chain_step(states: list[FilterState], solution,
                      params: list[FilterParams]):
    """Independent :func:`filter_step` per joint; no cross-joint coupling.

    ``solution`` may be a Solution or any sequence of joint angles.
    """
    angles = getattr(solution, "thetas", solution)
    angles = np.asarray(angles, dtype=float)
    if len(states) != len(angles) or len(params) != len(angles):
        raise ValueError("one filter state and parameter set per joint required")
    new_states = []
    outputs = np.empty(len(angles))
    for i, (st, p) in enumerate(zip(states, params)):
        new_st, out = filter_step(st, angles[i], p)
        new_states.append(new_st)
        outputs[i] = out
    return new_states, outputs


def run_filter(params: FilterParams, set_points, x0: float):
    """Feed a scripted set-point sequence through the filter.

    Returns tick rows ``(t, set_point, output, velocity, acceleration)``
    suitable for :func:`write_trace`.
    """
    state = FilterState(float(x0))
    rows = []
    for t, s in enumerate(set_points):
        state, out = filter_step(state, float(s), params)
        rows.append((t, float(s), out, float(state.xdot_prev),
                     float(state.xddot_prev)))
    return rows


def write_trace(path, rows) -> None:
    """Dump tick rows as CSV with a fixed header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "set_point", "output", "velocity", "acceleration"])
        for row in rows:
            writer.writerow([row[0]] + [f"{v:.6g}" for v in row[1:]])
