"""Jacobian IK baselines: matrix assembly, inversion strategies, the
iterative solver loop, two-priority composition and classic DH chains.

These exist to benchmark the expressive solver against the standard
damped-least-squares family on the same orientation/posture tasks.
Matrices are small and dense; the numerics ride on ``numpy.linalg``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import clamp_mag, clamp_max_abs, matrix_to_quat, qconj, qmul, rot_v_q
from .skeleton import Posture, Skeleton, pose_from_thetas, safe_angle

RANK_CUTOFF = 1e-10  # singular values below cutoff * sigma_max count as zero


# ---------------------------------------------------------------------------
# Chains
# ---------------------------------------------------------------------------

@dataclass
class DhLink:
    """Classic Denavit-Hartenberg row (theta offset, twist, length, offset)."""

    theta_offset: float
    alpha: float
    a: float
    d: float


def dh_transform(link: DhLink, theta: float) -> np.ndarray:
    """Homogeneous transform of one classic DH row at joint angle ``theta``."""
    ct, st = math.cos(theta + link.theta_offset), math.sin(theta + link.theta_offset)
    ca, sa = math.cos(link.alpha), math.sin(link.alpha)
    return np.array([
        [ct, -st * ca, st * sa, link.a * ct],
        [st, ct * ca, -ct * sa, link.a * st],
        [0.0, sa, ca, link.d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def dh_forward(chain: list[DhLink], thetas) -> list[np.ndarray]:
    """World frames of every joint plus the tool frame (len(chain) + 1)."""
    frames = [np.eye(4)]
    t = np.eye(4)
    for link, theta in zip(chain, thetas):
        t = t @ dh_transform(link, float(theta))
        frames.append(t.copy())
    return frames


@dataclass
class ChainState:
    """World quantities a Jacobian needs, independent of chain flavour."""

    axes: np.ndarray      # (n, 3) world rotation axis per joint
    origins: np.ndarray   # (n, 3) world joint positions
    ee_pos: np.ndarray
    ee_quat: np.ndarray


def chain_state(chain, thetas) -> ChainState:
    """Evaluate FK for either a :class:`Skeleton` or a list of DH rows."""
    if isinstance(chain, Skeleton):
        # Postures don't clamp: Jacobian iterates may sit outside limits.
        pose = pose_from_thetas(chain, thetas, Posture)
        n = chain.n_dofs
        axes = np.empty((n, 3))
        origins = np.empty((n, 3))
        for i in range(n):
            axes[i] = rot_v_q(chain.links[i].rotation_axis, pose.states[i].basis)
            origins[i] = pose.states[i].pos
        return ChainState(axes, origins, pose.superpoint.pos.copy(),
                          pose.omega(n - 1))
    frames = dh_forward(chain, thetas)
    axes = np.array([f[:3, 2] for f in frames[:-1]])
    origins = np.array([f[:3, 3] for f in frames[:-1]])
    tool = frames[-1]
    return ChainState(axes, origins, tool[:3, 3].copy(),
                      matrix_to_quat(tool[:3, :3]))


# ---------------------------------------------------------------------------
# Tasks and assembly
# ---------------------------------------------------------------------------

@dataclass
class JacobianTask:
    """Either a 3D position goal or a 3D orientation goal for the tip."""

    kind: str                 # "translation" | "rotation"
    target: np.ndarray        # position vector or unit quaternion

    def __post_init__(self):
        if self.kind not in ("translation", "rotation"):
            raise ValueError("task kind must be 'translation' or 'rotation'")
        self.target = np.asarray(self.target, dtype=float)


def task_residual(state: ChainState, task: JacobianTask) -> np.ndarray:
    """Task-space error vector for the current chain state.

    Orientation residuals are the vector part of the world rotation still
    needed to reach the target, sign-normalized to the shorter arc.
    """
    if task.kind == "translation":
        return task.target - state.ee_pos
    diff = qmul(task.target, qconj(state.ee_quat))
    if diff[0] < 0.0:
        diff = -diff
    return diff[1:].copy()


def assemble_jacobian(chain, thetas, task: JacobianTask,
                      state: ChainState | None = None) -> np.ndarray:
    """Geometric Jacobian of the task map at ``thetas`` (3 x n).

    Revolute translation columns are ``axis x (ee - joint)``; rotation
    columns are the world rotation axis itself.
    """
    if state is None:
        state = chain_state(chain, thetas)
    n = state.axes.shape[0]
    j = np.empty((3, n))
    if task.kind == "translation":
        for i in range(n):
            j[:, i] = np.cross(state.axes[i], state.ee_pos - state.origins[i])
    else:
        for i in range(n):
            j[:, i] = state.axes[i]
    return j


# ---------------------------------------------------------------------------
# Factorizations and steps
# ---------------------------------------------------------------------------

@dataclass
class SvdFactors:
    u: np.ndarray
    d: np.ndarray  # singular values, descending
    v: np.ndarray  # n x n, columns are right singular vectors
    r: int         # numerical rank


def svd(j: np.ndarray) -> SvdFactors:
    """Full SVD with an explicit numerical rank."""
    u, s, vt = np.linalg.svd(np.asarray(j, dtype=float), full_matrices=True)
    if s.size and s[0] > 0.0:
        r = int(np.sum(s > RANK_CUTOFF * s[0]))
    else:
        r = 0
    return SvdFactors(u=u, d=s, v=vt.T, r=r)


def pseudoinverse(j: np.ndarray) -> np.ndarray:
    """SVD-truncated Moore-Penrose inverse with the package rank cutoff."""
    f = svd(j)
    m, n = j.shape
    out = np.zeros((n, m))
    for i in range(f.r):
        out += (1.0 / f.d[i]) * np.outer(f.v[:, i], f.u[:, i])
    return out


def dls_inverse(j: np.ndarray, lam: float) -> np.ndarray:
    """Damped least squares inverse J^T (J J^T + lam^2 I)^-1."""
    m = j.shape[0]
    return j.T @ np.linalg.solve(j @ j.T + (lam * lam) * np.eye(m), np.eye(m))


def dls_svd_inverse(j: np.ndarray, lam: float) -> np.ndarray:
    """The same damped inverse assembled from singular vectors."""
    f = svd(j)
    n, m = j.shape[1], j.shape[0]
    out = np.zeros((n, m))
    for i in range(f.r):
        out += (f.d[i] / (f.d[i] ** 2 + lam * lam)) * np.outer(f.v[:, i], f.u[:, i])
    return out


def sdls_step(j: np.ndarray, e: np.ndarray, gamma_max: float = math.pi / 4.0) -> np.ndarray:
    """Selectively damped least squares: per-singular-vector step clamping."""
    f = svd(j)
    m, n = j.shape
    rho = np.abs(j)  # |d task_l / d theta_j|
    alphas = f.u.T @ e
    delta = np.zeros(n)
    for i in range(f.r):
        n_i = float(np.sum(np.abs(f.u[:m, i])))
        m_i = 0.0
        for ell in range(m):
            m_i += (1.0 / f.d[i]) * float(np.sum(np.abs(f.v[:, i]) * rho[ell, :]))
        gamma_i = min(1.0, n_i / m_i if m_i > 0.0 else 1.0) * gamma_max
        phi = clamp_max_abs((alphas[i] / f.d[i]) * f.v[:, i], gamma_i)
        delta = delta + phi
    return clamp_max_abs(delta, gamma_max)


def maciejewski_damping(sigma_min: float, e_norm: float, b_max: float) -> float:
    """Adaptive damping factor bounding the solution norm by ``b_max``."""
    if b_max <= 0.0:
        raise ValueError("b_max must be positive")
    d = e_norm / b_max
    if sigma_min <= d / 2.0:
        return d / 2.0
    if sigma_min <= d:
        return math.sqrt(sigma_min * (d - sigma_min))
    return 0.0


def solve_step(j: np.ndarray, e: np.ndarray, method: str = "pseudoinverse",
               lam: float = 0.0, gamma_max: float = math.pi / 4.0,
               alpha: float | None = None) -> np.ndarray:
    """One joint-space increment for the task residual ``e``.

    Methods: ``transpose`` (scaled by ``alpha`` or the standard optimal
    scalar), ``pseudoinverse``, ``dls(lam)``, ``dls_svd(lam)``,
    ``sdls(gamma_max)``.
    """
    j = np.asarray(j, dtype=float)
    e = np.asarray(e, dtype=float)
    if method == "transpose":
        jte = j.T @ e
        if alpha is None:
            jjte = j @ jte
            den = float(jjte @ jjte)
            alpha = float(e @ jjte) / den if den > 0.0 else 0.0
        return alpha * jte
    if method == "pseudoinverse":
        return pseudoinverse(j) @ e
    if method == "dls":
        return dls_inverse(j, lam) @ e
    if method == "dls_svd":
        return dls_svd_inverse(j, lam) @ e
    if method == "sdls":
        return sdls_step(j, e, gamma_max)
    raise ValueError(f"unknown method {method!r}")


def nullspace_projector(j: np.ndarray) -> np.ndarray:
    """P = I - J^+ J, the orthogonal projector onto J's kernel."""
    n = j.shape[1]
    return np.eye(n) - pseudoinverse(j) @ j


def two_priority_dls(j1: np.ndarray, e1: np.ndarray,
                     j2: np.ndarray, e2: np.ndarray,
                     lam1: float, lam2: float) -> np.ndarray:
    """Two-task step with the first task strictly prioritized.

    delta = J1^dag_l1 e1 + (J2 P_N(J1))^dag_l2 (e2 - J2 J1^dag_l1 e1)
    """
    primary = dls_svd_inverse(j1, lam1) @ e1
    p_n = nullspace_projector(j1)
    correction = dls_svd_inverse(j2 @ p_n, lam2) @ (e2 - j2 @ primary)
    return primary + correction


def multi_priority_dls(tasks: list[tuple[np.ndarray, np.ndarray, float]]) -> np.ndarray:
    """General p-level priority recursion; ``tasks`` are (J, e, lam) tuples."""
    if not tasks:
        raise ValueError("need at least one task")
    j1, e1, lam1 = tasks[0]
    delta = dls_svd_inverse(j1, lam1) @ e1
    stacked = j1
    for j_i, e_i, lam_i in tasks[1:]:
        p_n = nullspace_projector(stacked)
        delta = delta + dls_svd_inverse(j_i @ p_n, lam_i) @ (e_i - j_i @ delta)
        stacked = np.vstack([stacked, j_i])
    return delta


# ---------------------------------------------------------------------------
# Iterative solver
# ---------------------------------------------------------------------------

@dataclass
class IterativeConfig:
    max_iterations: int = 100
    error_tolerance: float = 1e-3
    d_max: float = 1.0      # ClampMag bound on the task residual
    b_max: float = 1.0      # Maciejewski solution-norm bound
    method: str = "dls"
    lam: float = 0.1
    gamma_max: float = math.pi / 4.0
    adaptive_damping: bool = False  # derive lam per step from sigma_min
    clamp_limits: bool = False      # clamp iterates into Skeleton joint limits


@dataclass
class IterativeResult:
    thetas: np.ndarray
    error_trace: list
    iterations: int


def iterative_solve(chain, theta0, task: JacobianTask,
                    cfg: IterativeConfig) -> IterativeResult:
    """Standard Jacobian iteration with best-iterate tracking.

    The returned angles are the initial angles plus the displacement of
    the best iterate seen, so the reported error never exceeds the
    minimum of the trace.
    """
    theta0 = np.asarray(theta0, dtype=float)
    thetas = theta0.copy()
    best_delta = np.zeros_like(thetas)
    best_error = math.inf
    trace: list[float] = []
    state = chain_state(chain, thetas)
    iterations = 0
    for _ in range(cfg.max_iterations):
        iterations += 1
        e = clamp_mag(task_residual(state, task), cfg.d_max)
        err = float(np.linalg.norm(e))
        trace.append(err)
        if err <= best_error:
            best_error = err
            best_delta = thetas - theta0
        if err <= cfg.error_tolerance:
            break
        j = assemble_jacobian(chain, thetas, task, state)
        lam = cfg.lam
        if cfg.adaptive_damping and cfg.method in ("dls", "dls_svd"):
            f = svd(j)
            sigma_min = float(f.d[f.r - 1]) if f.r > 0 else 0.0
            lam = maciejewski_damping(sigma_min, err, cfg.b_max)
        delta = solve_step(j, e, cfg.method, lam, cfg.gamma_max)
        thetas = thetas + delta
        if cfg.clamp_limits and isinstance(chain, Skeleton):
            thetas = np.array([
                safe_angle(chain.links[i], thetas[i]) for i in range(len(thetas))])
        state = chain_state(chain, thetas)
    return IterativeResult(theta0 + best_delta, trace, iterations)
