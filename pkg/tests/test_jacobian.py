import math

import numpy as np
import pytest

from erik.catalog import build_skeleton, skeleton_c_dh_chain
from erik.geometry import Z_HAT, qconj, qmul
from erik.jacobian import (
    DhLink,
    IterativeConfig,
    JacobianTask,
    assemble_jacobian,
    chain_state,
    dh_forward,
    dls_inverse,
    dls_svd_inverse,
    iterative_solve,
    maciejewski_damping,
    multi_priority_dls,
    nullspace_projector,
    pseudoinverse,
    solve_step,
    svd,
    task_residual,
    two_priority_dls,
)
from erik.skeleton import Link, Skeleton

RNG = np.random.default_rng(0)


def random_skeleton_config(rng):
    name = rng.choice(list("BCDEFG"))
    sk = build_skeleton(str(name))
    thetas = rng.uniform(-1.2, 1.2, sk.n_dofs)
    return sk, thetas


def finite_difference_jacobian(chain, thetas, task, h=1e-6):
    """Central differences of the task map; the spec's independent oracle."""
    thetas = np.asarray(thetas, dtype=float)
    n = len(thetas)
    cols = []
    for j in range(n):
        plus = thetas.copy()
        plus[j] += h
        minus = thetas.copy()
        minus[j] -= h
        sp = chain_state(chain, plus)
        sm = chain_state(chain, minus)
        if task.kind == "translation":
            cols.append((sp.ee_pos - sm.ee_pos) / (2 * h))
        else:
            dq = qmul(sp.ee_quat, qconj(sm.ee_quat))
            if dq[0] < 0:
                dq = -dq
            cols.append(2.0 * dq[1:] / (2 * h))
    return np.column_stack(cols)


class TestAssembly:
    def test_single_revolute_translation_column(self):
        link = Link(0, np.array([1.0, 0, 0]), Z_HAT.copy(), -math.pi, math.pi)
        sk = Skeleton([link])
        j = assemble_jacobian(sk, [0.0], JacobianTask("translation", np.zeros(3)))
        # EE at (L, 0, 0), axis Z: column = Z x (L,0,0) = (0, L, 0)
        assert np.allclose(j[:, 0], [0, 1, 0], atol=1e-12)

    def test_rotation_columns_are_axes(self):
        sk, thetas = random_skeleton_config(np.random.default_rng(1))
        state = chain_state(sk, thetas)
        j = assemble_jacobian(sk, thetas, JacobianTask("rotation", np.array([1.0, 0, 0, 0])))
        assert np.allclose(j.T, state.axes)

    @pytest.mark.parametrize("kind", ["translation", "rotation"])
    def test_matches_finite_differences(self, kind):
        rng = np.random.default_rng(2)
        for _ in range(25):
            sk, thetas = random_skeleton_config(rng)
            target = np.zeros(3) if kind == "translation" else np.array([1.0, 0, 0, 0])
            task = JacobianTask(kind, target)
            j = assemble_jacobian(sk, thetas, task)
            fd = finite_difference_jacobian(sk, thetas, task)
            scale = max(1.0, np.abs(j).max())
            assert np.abs(j - fd).max() / scale < 1e-4

    def test_dh_chain_translation_fd(self):
        chain = skeleton_c_dh_chain()
        rng = np.random.default_rng(3)
        for _ in range(10):
            thetas = rng.uniform(-1.2, 1.2, len(chain))
            task = JacobianTask("translation", np.zeros(3))
            j = assemble_jacobian(chain, thetas, task)
            fd = finite_difference_jacobian(chain, thetas, task)
            assert np.abs(j - fd).max() / max(1.0, np.abs(j).max()) < 1e-4


class TestSvd:
    def test_diagonal(self):
        f = svd(np.diag([3.0, -2.0, 0.5]))
        assert np.allclose(f.d, [3.0, 2.0, 0.5])
        assert f.r == 3

    def test_rank_one(self):
        j = np.outer([1.0, 2.0], [3.0, 0.0, 4.0])
        f = svd(j)
        assert f.r == 1
        assert f.d[0] == pytest.approx(np.sqrt(5) * 5)

    def test_reconstruction(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            m, n = rng.integers(1, 9, size=2)
            j = rng.normal(size=(m, n))
            f = svd(j)
            d = np.zeros((m, n))
            np.fill_diagonal(d, f.d)
            assert np.abs(f.u @ d @ f.v.T - j).max() <= 1e-8 * max(1.0, np.linalg.norm(j))
            assert np.allclose(f.u @ f.u.T, np.eye(m), atol=1e-10)
            assert np.allclose(f.v @ f.v.T, np.eye(n), atol=1e-10)
            assert np.all(np.diff(f.d) <= 1e-12)


class TestSolveStep:
    def test_zero_residual_zero_step(self):
        j = RNG.normal(size=(3, 5))
        e = np.zeros(3)
        for method in ("transpose", "pseudoinverse", "dls", "dls_svd", "sdls"):
            assert np.allclose(solve_step(j, e, method, lam=0.1), np.zeros(5))

    def test_undamped_square_equals_inverse(self):
        rng = np.random.default_rng(5)
        j = rng.normal(size=(4, 4)) + 4 * np.eye(4)
        e = rng.normal(size=4)
        assert np.allclose(solve_step(j, e, "dls", lam=0.0),
                           np.linalg.solve(j, e), atol=1e-8)

    def test_dls_equals_dls_svd(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            m, n = rng.integers(2, 7, size=2)
            j = rng.normal(size=(m, n))
            lam = rng.uniform(0.01, 1.0)
            assert np.abs(dls_inverse(j, lam) - dls_svd_inverse(j, lam)).max() < 1e-8

    def test_rank_deficient_pseudoinverse(self):
        j = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])  # rank 1
        p = pseudoinverse(j)
        assert np.allclose(j @ p @ j, j, atol=1e-10)

    def test_sdls_respects_gamma(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            j = rng.normal(size=(3, 6))
            e = rng.normal(size=3)
            gamma = rng.uniform(0.1, 1.0)
            step = solve_step(j, e, "sdls", gamma_max=gamma)
            assert np.abs(step).max() <= gamma + 1e-12


class TestMaciejewski:
    def test_third_branch_zero(self):
        assert maciejewski_damping(2.0, 1.0, 1.0) == 0.0

    def test_first_branch_half_d(self):
        assert maciejewski_damping(0.3, 1.0, 1.0) == pytest.approx(0.5)

    def test_middle_branch(self):
        d = 1.0
        s = 0.75 * d
        assert maciejewski_damping(s, d, 1.0) == pytest.approx(
            math.sqrt(s * (d - s)))

    def test_invalid_bound(self):
        with pytest.raises(ValueError):
            maciejewski_damping(0.5, 1.0, 0.0)


class TestPriorities:
    def test_nullspace_property(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            j = rng.normal(size=(3, 6))  # full row rank w.h.p.
            p = nullspace_projector(j)
            z = rng.normal(size=6)
            assert np.linalg.norm(j @ (p @ z)) <= 1e-6 * max(1.0, np.linalg.norm(z))

    def test_zero_secondary_reduces_to_primary(self):
        rng = np.random.default_rng(9)
        j1 = rng.normal(size=(3, 5))
        e1 = rng.normal(size=3)
        j2 = np.eye(5)
        step = two_priority_dls(j1, e1, j2, np.zeros(5), 0.1, 0.1)
        primary = dls_svd_inverse(j1, 0.1) @ e1
        correction = dls_svd_inverse(j2 @ nullspace_projector(j1), 0.1) @ (-j2 @ primary)
        assert np.allclose(step, primary + correction, atol=1e-12)

    def test_square_full_rank_secondary_vanishes(self):
        rng = np.random.default_rng(10)
        j1 = rng.normal(size=(4, 4)) + 4 * np.eye(4)
        e1 = rng.normal(size=4)
        e2 = rng.normal(size=4)
        step = two_priority_dls(j1, e1, np.eye(4), e2, 0.0, 0.0)
        # no null space: the secondary contributes nothing
        assert np.allclose(step, np.linalg.solve(j1, e1), atol=1e-6)

    def test_primary_residual_not_degraded(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            j1 = rng.normal(size=(3, 7))
            e1 = rng.normal(size=3)
            j2 = np.eye(7)
            e2 = rng.normal(size=7)
            lam = 1e-6
            composed = two_priority_dls(j1, e1, j2, e2, lam, lam)
            primary_only = dls_svd_inverse(j1, lam) @ e1
            r_composed = np.linalg.norm(j1 @ composed - e1)
            r_primary = np.linalg.norm(j1 @ primary_only - e1)
            assert r_composed <= r_primary + 1e-6

    def test_multi_priority_two_levels_matches(self):
        rng = np.random.default_rng(12)
        j1 = rng.normal(size=(3, 6))
        e1 = rng.normal(size=3)
        j2 = np.eye(6)
        e2 = rng.normal(size=6)
        a = two_priority_dls(j1, e1, j2, e2, 0.1, 0.2)
        b = multi_priority_dls([(j1, e1, 0.1), (j2, e2, 0.2)])
        assert np.allclose(a, b, atol=1e-12)


class TestIterativeSolve:
    def test_immediate_return_at_target(self):
        sk = build_skeleton("C")
        thetas = np.zeros(sk.n_dofs)
        state = chain_state(sk, thetas)
        task = JacobianTask("translation", state.ee_pos)
        res = iterative_solve(sk, thetas, task, IterativeConfig())
        assert res.iterations == 1
        assert np.allclose(res.thetas, thetas)

    def test_two_link_planar_reach(self):
        links = [
            Link(0, np.array([0.0, 1, 0]), Z_HAT.copy(), -math.pi, math.pi),
            Link(1, np.array([0.0, 1, 0]), Z_HAT.copy(), -math.pi, math.pi),
        ]
        sk = Skeleton(links)
        # analytic two-link target at distance sqrt(2)
        target = np.array([-1.0, 1.0, 0.0])
        cfg = IterativeConfig(max_iterations=100, error_tolerance=1e-4,
                              method="pseudoinverse")
        res = iterative_solve(sk, np.zeros(2), JacobianTask("translation", target), cfg)
        state = chain_state(sk, res.thetas)
        assert np.linalg.norm(state.ee_pos - target) < 1e-3

    def test_returned_error_not_above_trace_minimum(self):
        sk = build_skeleton("C")
        rng = np.random.default_rng(13)
        target = rng.normal(size=4)
        target /= np.linalg.norm(target)
        cfg = IterativeConfig(max_iterations=50, method="dls", lam=0.2)
        res = iterative_solve(sk, np.zeros(sk.n_dofs),
                              JacobianTask("rotation", target), cfg)
        state = chain_state(sk, res.thetas)
        final = np.linalg.norm(task_residual(state, JacobianTask("rotation", target)))
        assert final <= min(res.error_trace) + 1e-9

    def test_cap_barely_matters_once_converged(self):
        # longer caps cannot make the best-tracked result worse
        sk = build_skeleton("C")
        rng = np.random.default_rng(14)
        target = rng.normal(size=4)
        target /= np.linalg.norm(target)
        task = JacobianTask("rotation", target)
        errs = {}
        for cap in (100, 400):
            cfg = IterativeConfig(max_iterations=cap, method="dls_svd",
                                  adaptive_damping=True, clamp_limits=True)
            res = iterative_solve(sk, np.zeros(sk.n_dofs), task, cfg)
            state = chain_state(sk, res.thetas)
            errs[cap] = np.linalg.norm(task_residual(state, task))
        assert errs[400] <= errs[100] + 1e-9


class TestDhForward:
    def test_all_zero_chain_identity(self):
        chain = [DhLink(0, 0, 0, 0)] * 3
        frames = dh_forward(chain, [0, 0, 0])
        for f in frames:
            assert np.allclose(f, np.eye(4))

    def test_single_planar_link(self):
        chain = [DhLink(0, 0, 2.0, 0)]
        for theta in (0.0, 0.5, -1.2):
            frames = dh_forward(chain, [theta])
            assert np.allclose(frames[-1][:3, 3],
                               [2 * math.cos(theta), 2 * math.sin(theta), 0],
                               atol=1e-12)

    def test_catalog_c_rows(self):
        chain = skeleton_c_dh_chain()
        rows = [(l.theta_offset, l.alpha, l.a, l.d) for l in chain]
        hp = math.pi / 2
        assert rows == [(0.0, hp, 0.0, 10.0), (hp, 0.0, 30.0, 0.0),
                        (0.0, hp, 30.0, 0.0), (hp, hp, 0.0, 0.0),
                        (hp, 0.0, 0.0, 40.0)]

    def test_matrix_product_oracle(self):
        # frame composition equals the explicit product of row transforms
        from erik.jacobian import dh_transform
        chain = skeleton_c_dh_chain()
        rng = np.random.default_rng(15)
        thetas = rng.uniform(-1, 1, len(chain))
        frames = dh_forward(chain, thetas)
        t = np.eye(4)
        for link, theta in zip(chain, thetas):
            t = t @ dh_transform(link, theta)
        assert np.allclose(frames[-1], t, atol=1e-12)
