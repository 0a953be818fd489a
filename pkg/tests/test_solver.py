import math

import numpy as np
import pytest

from erik.catalog import build_skeleton
from erik.errors import combined_error, orientation_error
from erik.geometry import (
    X_HAT,
    Y_HAT,
    Z_HAT,
    qaa,
    qconj,
    qmul,
    quat_axis,
    quat_rotation_angle,
    rot_v_q,
)
from erik.skeleton import (
    Posture,
    apply_fk,
    empty_solution,
    pose_from_thetas,
    solution_from_thetas,
)
from erik.solver import (
    ErikAux,
    ErikHyperparams,
    ErikParams,
    backward_phase,
    calculate_erik,
    forward_phase,
    initialize_solution,
    nonconv_offset_trick,
    nonconvergence_detected,
    propagate_roll_down,
    propagate_roll_up,
    solution_ok,
    solve,
)


def sweepable_posture(sk, rng, scale=1.0):
    """Random posture with root/end twisters at zero, like the sweep space."""
    thetas = np.array([
        0.0 if (l.is_twister and (l.is_root or l.is_end))
        else rng.uniform(l.min_theta * scale, l.max_theta * scale)
        for l in sk.links])
    return thetas, pose_from_thetas(sk, thetas, Posture)


def random_target(rng):
    return qmul(qaa(Y_HAT, rng.uniform(-math.pi, math.pi)),
                qmul(qaa(X_HAT, rng.uniform(-math.pi, math.pi)),
                     qaa(Y_HAT, rng.uniform(-math.pi, math.pi))))


def limits_ok(sol):
    return all(
        l.min_theta - 1e-12 <= sol.states[i].theta <= l.max_theta + 1e-12
        for i, l in enumerate(sol.skeleton.links))


class TestInitializeSolution:
    def test_non_twister_end_keeps_target(self):
        links = build_skeleton("A").links
        # rebuild with a pitch end-point
        from erik.skeleton import Link, Skeleton
        sk = Skeleton([
            Link(0, np.array([0.0, 1, 0]), Y_HAT.copy(), -1.5, 1.5),
            Link(1, np.array([0.0, 1, 0]), X_HAT.copy(), -1.5, 1.5),
        ])
        psi = pose_from_thetas(sk, [0.0, 0.7], Posture)
        tau = random_target(np.random.default_rng(0))
        aux = initialize_solution(tau, psi, ErikHyperparams(skeleton=sk))
        assert np.allclose(aux.tau, tau)

    def test_twister_end_zero_angle_identity_adjustment(self):
        sk = build_skeleton("B")
        psi = pose_from_thetas(sk, [0.0, 0.4, 0.1, 0.0], Posture)
        tau = random_target(np.random.default_rng(1))
        aux = initialize_solution(tau, psi, ErikHyperparams(skeleton=sk))
        assert np.allclose(aux.tau, tau)

    def test_twister_end_folds_posture_twist(self):
        sk = build_skeleton("B")
        psi = pose_from_thetas(sk, [0.0, 0.4, 0.1, 0.6], Posture)
        tau = random_target(np.random.default_rng(2))
        aux = initialize_solution(tau, psi, ErikHyperparams(skeleton=sk))
        assert np.allclose(aux.tau, qmul(tau, qaa(Y_HAT, 0.6)))

    def test_empty_solution_scored(self):
        sk = build_skeleton("C")
        hp = ErikHyperparams(skeleton=sk)
        rng = np.random.default_rng(3)
        _, psi = sweepable_posture(sk, rng)
        tau = random_target(rng)
        aux = initialize_solution(tau, psi, hp)
        expected = empty_solution(sk)
        want = combined_error(expected, tau, psi, hp.weights,
                              hp.ext_symmetric_endpoint)
        assert aux.previous.error == pytest.approx(want)
        assert aux.best.error == pytest.approx(want)
        assert aux.theta.error == pytest.approx(want)

    def test_copies_are_independent(self):
        sk = build_skeleton("C")
        rng = np.random.default_rng(4)
        _, psi = sweepable_posture(sk, rng)
        aux = initialize_solution(random_target(rng), psi,
                                  ErikHyperparams(skeleton=sk))
        aux.theta.states[0].theta = 0.5
        assert aux.best.states[0].theta == 0.0


class TestRollPropagation:
    def test_down_identity_unchanged(self):
        sk = build_skeleton("C")
        sol = empty_solution(sk)
        before = [s.basis.copy() for s in sol.states]
        propagate_roll_down(np.array([1.0, 0, 0, 0]), 3, sol)
        for a, b in zip(before, sol.states):
            assert np.allclose(a, b.basis)

    def test_down_inverse_restores(self):
        sk = build_skeleton("C")
        rng = np.random.default_rng(5)
        sol = solution_from_thetas(sk, rng.uniform(-1, 1, sk.n_dofs))
        before = [s.basis.copy() for s in sol.states]
        q = qaa(Y_HAT, 0.7)
        propagate_roll_down(q, 3, sol)
        propagate_roll_down(qconj(q), 3, sol)
        for a, b in zip(before, sol.states):
            assert np.allclose(a, b.basis, atol=1e-12)

    def test_down_touches_ancestors_only(self):
        sk = build_skeleton("C")
        sol = empty_solution(sk)
        before = [s.basis.copy() for s in sol.states]
        propagate_roll_down(qaa(Y_HAT, 0.3), 2, sol)
        assert not np.allclose(before[0], sol.states[0].basis)
        assert not np.allclose(before[1], sol.states[1].basis)
        assert np.allclose(before[2], sol.states[2].basis)

    def test_down_root_only_chain(self):
        from erik.skeleton import Link, Skeleton
        sk = Skeleton([Link(0, np.array([0.0, 1, 0]), Y_HAT.copy(), -3, 3)])
        sol = empty_solution(sk)
        propagate_roll_down(qaa(Y_HAT, 0.3), 0, sol)
        assert np.allclose(sol.states[0].basis, qaa(Y_HAT, 0.3))

    def test_up_identity_no_flip_unchanged(self):
        sk = build_skeleton("C")
        sol = empty_solution(sk)
        before = [(s.theta, s.basis.copy()) for s in sol.states]
        propagate_roll_up(np.array([1.0, 0, 0, 0]), 1, sol, False)
        for (t, b), s in zip(before, sol.states):
            assert s.theta == t and np.allclose(b, s.basis)

    def test_up_flip_skips_twisters(self):
        from erik.skeleton import Link, Skeleton
        sk = Skeleton([Link(i, np.array([0.0, 1, 0]), Y_HAT.copy(), -3, 3)
                       for i in range(3)])
        sol = solution_from_thetas(sk, [0.1, 0.2, 0.3])
        propagate_roll_up(qaa(Y_HAT, math.pi), 0, sol, True)
        assert np.allclose(sol.thetas, [0.1, 0.2, 0.3])

    def test_up_flip_negates_pitch_and_preserves_direction(self):
        sk = build_skeleton("B")
        sol = solution_from_thetas(sk, [0.0, 0.6, 0.0, 0.0])
        ee = sk.n_dofs - 1
        before_dir = sol.dir(ee).copy()
        propagate_roll_up(qaa(Y_HAT, math.pi), 0, sol, True)
        assert sol.states[1].theta == pytest.approx(-0.6)
        # a pi roll of the bases with negated pitch keeps the chain's
        # world direction (the flip re-expresses the same geometry)
        assert np.allclose(sol.dir(ee), before_dir, atol=1e-9)


class TestSolutionOk:
    def test_threshold_boundary_inclusive(self):
        sk = build_skeleton("B")
        hp = ErikHyperparams(skeleton=sk)
        rng = np.random.default_rng(6)
        thetas, psi = sweepable_posture(sk, rng)
        tau = psi.omega(sk.n_dofs - 1)
        aux = initialize_solution(tau, psi, hp)
        aux.theta = solution_from_thetas(sk, thetas)
        params = ErikParams(tau=tau, psi=psi)
        assert solution_ok(aux, params, hp)  # error ~ 0 <= threshold
        assert aux.error_history[-1] <= hp.weights.threshold

    def test_best_updated_on_improvement(self):
        sk = build_skeleton("B")
        hp = ErikHyperparams(skeleton=sk)
        rng = np.random.default_rng(7)
        thetas, psi = sweepable_posture(sk, rng)
        tau = psi.omega(sk.n_dofs - 1)
        aux = initialize_solution(tau, psi, hp)
        assert aux.best.error > 0.0
        aux.theta = solution_from_thetas(sk, thetas)
        solution_ok(aux, ErikParams(tau=tau, psi=psi), hp)
        assert aux.best.error == pytest.approx(aux.theta.error)

    def test_deterministic_repeat(self):
        sk = build_skeleton("C")
        hp = ErikHyperparams(skeleton=sk)
        rng = np.random.default_rng(8)
        _, psi = sweepable_posture(sk, rng)
        tau = random_target(rng)
        aux = initialize_solution(tau, psi, hp)
        params = ErikParams(tau=tau, psi=psi)
        solution_ok(aux, params, hp)
        solution_ok(aux, params, hp)
        assert aux.error_history[-1] == aux.error_history[-2]


class TestNonconvergence:
    def hp(self):
        return ErikHyperparams(skeleton=build_skeleton("A"))

    def make_aux(self, history):
        sk = build_skeleton("A")
        sol = empty_solution(sk)
        return ErikAux(tau=np.array([1.0, 0, 0, 0]),
                       psi=pose_from_thetas(sk, np.zeros(3), Posture),
                       theta=sol, best=sol.copy(), previous=sol.copy(),
                       error_history=list(history))

    def test_strictly_decreasing_is_converging(self):
        aux = self.make_aux([0.9, 0.7, 0.5, 0.3, 0.1])
        assert not nonconvergence_detected(aux, self.hp())

    def test_constant_history_detected(self):
        aux = self.make_aux([0.5] * 5)
        assert nonconvergence_detected(aux, self.hp())

    def test_two_cycle_detected(self):
        aux = self.make_aux([0.5, 0.3, 0.5, 0.3, 0.5])
        assert nonconvergence_detected(aux, self.hp())

    def test_needs_window_plus_one(self):
        aux = self.make_aux([0.5] * 4)
        assert not nonconvergence_detected(aux, self.hp())


class TestOffsetTrick:
    def test_deterministic_sign_away_from_near_limit(self):
        sk = build_skeleton("C")
        hp = ErikHyperparams(skeleton=sk)
        rng = np.random.default_rng(9)
        _, psi = sweepable_posture(sk, rng)
        tau = random_target(rng)
        aux = initialize_solution(tau, psi, hp)
        # zero pose is centered: |theta - min| == |theta - max| picks -delta
        before = aux.tau.copy()
        nonconv_offset_trick(aux, hp)
        assert aux.tried_nonconv_offset
        expected = qmul(
            qaa(rot_v_q(sk.links[1].rotation_axis, aux.theta.states[1].basis),
                -hp.disturbance),
            qmul(qaa(rot_v_q(sk.links[0].rotation_axis,
                             aux.theta.states[0].basis), -hp.disturbance),
                 before))
        assert np.allclose(aux.tau, expected, atol=1e-12)

    def test_zero_disturbance_is_identity(self):
        sk = build_skeleton("C")
        hp = ErikHyperparams(skeleton=sk, disturbance=0.0)
        rng = np.random.default_rng(10)
        _, psi = sweepable_posture(sk, rng)
        tau = random_target(rng)
        aux = initialize_solution(tau, psi, hp)
        before = aux.tau.copy()
        nonconv_offset_trick(aux, hp)
        assert orientation_error(aux.tau, before) == pytest.approx(0.0, abs=1e-12)

    def test_angle_bound(self):
        sk = build_skeleton("C")
        hp = ErikHyperparams(skeleton=sk)
        rng = np.random.default_rng(11)
        for _ in range(20):
            _, psi = sweepable_posture(sk, rng)
            tau = random_target(rng)
            aux = initialize_solution(tau, psi, hp)
            aux.theta = solution_from_thetas(
                sk, rng.uniform(-1.5, 1.5, sk.n_dofs))
            before = aux.tau.copy()
            nonconv_offset_trick(aux, hp)
            diff = qmul(aux.tau, qconj(before))
            assert quat_rotation_angle(diff) <= 2 * hp.disturbance + 1e-9


class TestSweepFixedPoint:
    @pytest.mark.parametrize("name", list("ABCDEFG"))
    def test_forward_backward_reproduces_consistent_chain(self, name):
        sk = build_skeleton(name)
        hp = ErikHyperparams(skeleton=sk, ext_avoid_edges=False,
                             ext_symmetric_endpoint=False)
        rng = np.random.default_rng(12)
        ee = sk.n_dofs - 1
        for _ in range(8):
            thetas, psi = sweepable_posture(sk, rng, scale=0.9)
            tau = psi.omega(ee)
            aux = initialize_solution(tau, psi, hp)
            params = ErikParams(tau=tau, psi=psi)
            for k in range(ee, -1, -1):
                t = aux.tau if k == ee else aux.theta.states[k + 1].basis
                forward_phase(k, t, aux.psi, aux.theta, hp)
            for k in range(ee + 1):
                backward_phase(aux, k, params, hp)
            apply_fk(aux.theta)
            err = combined_error(aux.theta, tau, psi, hp.weights, False)
            assert err < 0.01
            assert np.abs(aux.theta.thetas - thetas).max() < 0.02


class TestCalculateErik:
    def test_fixed_point_returns_posture(self):
        sk = build_skeleton("C")
        hp = ErikHyperparams(skeleton=sk)
        rng = np.random.default_rng(13)
        thetas, psi = sweepable_posture(sk, rng, scale=0.8)
        tau = psi.omega(sk.n_dofs - 1)
        sol = calculate_erik(ErikParams(tau=tau, psi=psi), hp)
        assert sol.error <= hp.weights.threshold
        assert np.abs(sol.thetas - thetas).max() < 0.01

    def test_limit_compliance_randomized(self):
        rng = np.random.default_rng(14)
        for name in ("A", "C", "G"):
            sk = build_skeleton(name)
            hp = ErikHyperparams(skeleton=sk)
            for _ in range(10):
                _, psi = sweepable_posture(sk, rng)
                sol = calculate_erik(
                    ErikParams(tau=random_target(rng), psi=psi), hp)
                assert limits_ok(sol)

    def test_best_error_non_increasing(self):
        sk = build_skeleton("A")
        hp = ErikHyperparams(skeleton=sk)
        rng = np.random.default_rng(15)
        _, psi = sweepable_posture(sk, rng)
        # an unreachable target forces many iterations
        tau = qaa(X_HAT, math.pi)
        res = solve(ErikParams(tau=tau, psi=psi), hp)
        best_seen = math.inf
        for e in res.error_history:
            best_seen = min(best_seen, e)
        assert res.solution.error <= best_seen + 1e-12

    def test_iteration_cap(self):
        sk = build_skeleton("A")
        hp = ErikHyperparams(skeleton=sk, max_erik_iterations=5)
        rng = np.random.default_rng(16)
        _, psi = sweepable_posture(sk, rng)
        res = solve(ErikParams(tau=qaa(X_HAT, math.pi), psi=psi), hp)
        assert res.iterations <= 5

    def test_deterministic_given_seed(self):
        sk = build_skeleton("C")
        rng = np.random.default_rng(17)
        _, psi = sweepable_posture(sk, rng)
        tau = qaa(X_HAT, math.pi - 0.1)
        outs = []
        for _ in range(2):
            hp = ErikHyperparams(skeleton=sk, offset_jitter_seed=99)
            sol = calculate_erik(ErikParams(tau=tau, psi=psi.copy()), hp)
            outs.append(sol.thetas)
        assert np.array_equal(outs[0], outs[1])

    def test_wrong_chain_rejected(self):
        sk_c = build_skeleton("C")
        sk_a = build_skeleton("A")
        psi = pose_from_thetas(sk_a, np.zeros(3), Posture)
        with pytest.raises(ValueError):
            calculate_erik(ErikParams(tau=np.array([1.0, 0, 0, 0]), psi=psi),
                           ErikHyperparams(skeleton=sk_c))

    def test_below_horizon_fails_on_skeleton_a(self):
        sk = build_skeleton("A")
        hp = ErikHyperparams(skeleton=sk)
        psi = pose_from_thetas(sk, np.zeros(3), Posture)
        sol = calculate_erik(ErikParams(tau=qaa(X_HAT, math.pi), psi=psi), hp)
        e = orientation_error(sol.omega(2), qaa(X_HAT, math.pi), True)
        assert e > hp.weights.threshold

    def test_skeleton_b_solves_arbitrary_targets(self):
        sk = build_skeleton("B")
        hp = ErikHyperparams(skeleton=sk)
        rng = np.random.default_rng(18)
        ok = 0
        for _ in range(40):
            _, psi = sweepable_posture(sk, rng)
            tau = random_target(rng)
            sol = calculate_erik(ErikParams(tau=tau, psi=psi), hp)
            e = orientation_error(sol.omega(sk.n_dofs - 1), tau, True)
            ok += e <= hp.weights.threshold
        assert ok >= 39

    def test_seed_from_previous(self):
        sk = build_skeleton("C")
        rng = np.random.default_rng(19)
        thetas, psi = sweepable_posture(sk, rng, scale=0.5)
        prev = solution_from_thetas(sk, thetas)
        tau = psi.omega(sk.n_dofs - 1)
        hp = ErikHyperparams(skeleton=sk, seed_from_previous=True)
        sol = calculate_erik(
            ErikParams(tau=tau, psi=psi, previous=prev), hp)
        assert sol.error <= hp.weights.threshold
