import math

import numpy as np
import pytest

from aquatow import frames, models
from aquatow.models import (N_X, N_U, SL_P_O, SL_V_O, SL_ETA_B, SL_NU_B,
                            SL_ETA_U, UAV_POS_IDX, UAV_VEL_IDX)


def random_params(rng):
    """Random block-diagonal parameter set (no translation/rotation coupling)."""
    d = rng.uniform(1.0, 5.0, size=6)
    obj = models.ObjectParams(
        m_o=float(d[0]),
        M_I=np.diag(d),
        M_A=np.diag(rng.uniform(0.1, 2.0, size=6)),
        D=np.diag(rng.uniform(0.1, 3.0, size=6)),
        G=np.diag([0.0, 0.0, rng.uniform(1, 10), rng.uniform(0, 2),
                   rng.uniform(0, 2), 0.0]))
    Mb = np.diag(rng.uniform(10, 50, size=3))
    usv = models.UsvParams(M_I=Mb, M_A=0.2 * Mb,
                           D=np.diag(rng.uniform(1, 10, size=3)),
                           d_tau=float(rng.uniform(1, 3)),
                           tau_max=100.0)
    uav = models.UavParams(a1=float(rng.uniform(0.5, 2)),
                           b1=float(rng.uniform(0.5, 2)))
    return obj, usv, uav


class TestObjectDerivative:
    def test_equilibrium(self):
        p = models.default_object_params()
        eta_dot, nu_dot = models.object_derivative(
            models.ObjectState.zero(), np.zeros(6), p)
        np.testing.assert_allclose(eta_dot, 0)
        np.testing.assert_allclose(nu_dot, 0)

    def test_unit_force(self):
        p = models.default_object_params()
        e1 = np.zeros(6)
        e1[0] = 1.0
        _, nu_dot = models.object_derivative(models.ObjectState.zero(), e1, p)
        np.testing.assert_allclose(nu_dot, np.linalg.solve(p.M, e1), atol=1e-14)

    def test_exponential_decay_rate(self):
        d = 2.5
        p = models.ObjectParams(m_o=3.0, M_I=3.0 * np.eye(6),
                                M_A=np.zeros((6, 6)), D=d * np.eye(6),
                                G=np.zeros((6, 6)))
        v0 = np.array([1.0, -2.0, 0.5, 0.1, 0.0, 0.3])
        _, nu_dot = models.object_derivative(
            models.ObjectState(eta=np.zeros(6), nu=v0), np.zeros(6), p)
        np.testing.assert_allclose(nu_dot, -(d / 3.0) * v0, atol=1e-14)


class TestTetherWrench:
    def test_zero(self):
        p = models.default_object_params()
        F_u, F_b, tau = models.tether_wrench(np.zeros(3), np.zeros(3), p)
        np.testing.assert_allclose(tau, 0)

    def test_diagonal_mass(self):
        p = models.default_object_params()
        m_eff = p.M[0, 0]
        F_u, F_b, tau = models.tether_wrench(
            np.array([1.0, 0, 0]), np.zeros(3), p)
        np.testing.assert_allclose(F_u, [m_eff, 0, 0, 0, 0, 0])
        np.testing.assert_allclose(F_b, 0)

    def test_superposition(self):
        rng = np.random.default_rng(7)
        p = models.default_object_params()
        for _ in range(10):
            a = rng.normal(size=3)
            b = rng.normal(size=3)
            b[2] = 0.0
            _, _, tau_ab = models.tether_wrench(a, b, p)
            _, _, tau_a = models.tether_wrench(a, np.zeros(3), p)
            _, _, tau_b = models.tether_wrench(np.zeros(3), b, p)
            np.testing.assert_allclose(tau_ab, tau_a + tau_b, atol=1e-10)

    def test_rejects_vertical_usv_accel(self):
        p = models.default_object_params()
        with pytest.raises(ValueError):
            models.tether_wrench(np.zeros(3), np.array([0.0, 0, 1.0]), p)


class TestAssumptionChecks:
    def test_no_lifting_zero_wrench(self):
        p = models.default_object_params()
        assert models.check_no_lifting(np.zeros(6), np.zeros(6), p)

    def test_no_lifting_boundary_is_strict(self):
        p = models.default_object_params()
        tau = np.zeros(6)
        tau[2] = p.m_o * p.g_mag
        assert not models.check_no_lifting(tau, np.zeros(6), p)

    def test_no_lifting_tilted_matches_frame_oracle(self):
        p = models.default_object_params()
        eta = np.array([0, 0, 0, 0.1, 0.2, 0.3])
        tau = np.zeros(6)
        tau[2] = p.m_o * p.g_mag
        J = frames.euler_to_transform(0.1, 0.2, 0.3)
        expected = (J @ tau)[2] < p.m_o * p.g_mag
        assert models.check_no_lifting(tau, eta, p) == expected

    def test_no_lifting_yaw_invariant(self):
        p = models.default_object_params()
        rng = np.random.default_rng(3)
        tau = rng.normal(size=6) * 20
        eta = np.array([1.0, 2.0, 0.1, 0.05, -0.08, 0.4])
        ref = models.check_no_lifting(tau, eta, p)
        for psi in np.linspace(-3, 3, 11):
            eta2 = eta.copy()
            eta2[5] = psi
            assert models.check_no_lifting(tau, eta2, p) == ref

    def test_check_taut(self):
        assert not models.check_taut(np.zeros(6))
        assert not models.check_taut(np.array([1e-9, 0, 0, 0, 0, 0]))
        assert models.check_taut(np.array([5.0, 0, 0, 0, 0, 0]))


class TestUsvDerivative:
    def test_rest(self):
        p = models.default_usv_params()
        eta_dot, nu_dot = models.usv_derivative(models.UsvState.zero(),
                                                np.zeros(2), p)
        np.testing.assert_allclose(eta_dot, 0)
        np.testing.assert_allclose(nu_dot, 0)

    def test_equal_thrusts_pure_surge(self):
        p = models.default_usv_params()
        tau = p.B_b @ np.array([40.0, 40.0])
        assert tau[2] == pytest.approx(0.0)
        assert tau[0] == pytest.approx(80.0)

    def test_opposite_thrusts_pure_yaw(self):
        p = models.default_usv_params()
        tau = p.B_b @ np.array([40.0, -40.0])
        assert tau[0] == pytest.approx(0.0)
        assert tau[2] == pytest.approx(40.0 * p.d_tau)


class TestUavDerivative:
    def test_zero(self):
        p = models.default_uav_params()
        np.testing.assert_allclose(
            models.uav_derivative(models.UavState.zero(), np.zeros(3), p), 0)

    def test_block_structure(self):
        p = models.UavParams(a1=2.0, b1=3.0)
        eta = np.zeros(6)
        eta[1] = 4.0   # x-velocity
        d = models.uav_derivative(models.UavState(eta=eta), np.zeros(3), p)
        np.testing.assert_allclose(d, [8.0, 0, 0, 0, 0, 0])

    def test_double_integrator_closed_form(self):
        from aquatow.plant import rk4_step
        p = models.UavParams(a1=1.0, b1=1.0)
        u = np.array([0.4, -0.2, 0.1])
        eta = np.zeros(6)
        dt, T = 0.01, 2.0
        for _ in range(int(T / dt)):
            eta = rk4_step(
                lambda x: models.uav_derivative(models.UavState(eta=x), u, p),
                eta, dt)
        np.testing.assert_allclose(eta[0::2], 0.5 * u * T ** 2, atol=1e-9)
        np.testing.assert_allclose(eta[1::2], u * T, atol=1e-12)


class TestCoupledModel:
    def test_kinematic_selector_rows(self):
        m = models.assemble_coupled_model(models.default_object_params(),
                                          models.default_usv_params(),
                                          models.default_uav_params())
        np.testing.assert_allclose(m.A[SL_P_O, SL_V_O], np.eye(3))
        np.testing.assert_allclose(m.A[SL_ETA_B, SL_NU_B], np.eye(3))

    def test_actuator_column_ownership(self):
        m = models.assemble_coupled_model(models.default_object_params(),
                                          models.default_usv_params(),
                                          models.default_uav_params())
        obj_acc = set(range(3, 6))
        usv_rows = set(range(9, 12)) | obj_acc
        uav_rows = set(range(12, 18)) | obj_acc
        for col, allowed in ((0, usv_rows), (1, usv_rows),
                             (2, uav_rows), (3, uav_rows), (4, uav_rows)):
            touched = set(np.nonzero(m.B[:, col])[0])
            assert touched <= allowed

    def test_matches_per_body_composition(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            obj, usv, uav = random_params(rng)
            m = models.assemble_coupled_model(obj, usv, uav)
            x = rng.normal(size=N_X)
            u = rng.normal(size=N_U)
            xdot = m.A @ x + m.B @ u

            # per-body oracle in the vessel-parallel frame
            nu_b = x[SL_NU_B]
            nu_b_dot = np.linalg.solve(usv.M, usv.B_b @ u[:2] - usv.D @ nu_b)
            usv_acc = np.array([nu_b_dot[0], nu_b_dot[1], 0.0])
            uav_acc = uav.a1 * uav.b1 * u[2:5]
            _, _, tau = models.tether_wrench(uav_acc, usv_acc, obj)
            M3 = obj.M[:3, :3]
            v_o = x[SL_V_O]
            p_o = x[SL_P_O]
            v_o_dot = np.linalg.solve(
                M3, tau[:3] - obj.D[:3, :3] @ v_o - obj.G[:3, :3] @ p_o)
            eta_u = x[SL_ETA_U]
            eta_u_dot = uav.A_u @ eta_u + uav.B_u @ u[2:5]

            expected = np.concatenate([v_o, v_o_dot, nu_b, nu_b_dot, eta_u_dot])
            np.testing.assert_allclose(xdot, expected, atol=1e-10)

    def test_single_robot_drops_uav(self):
        m = models.assemble_coupled_model(models.default_object_params(),
                                          models.default_usv_params(),
                                          models.default_uav_params(),
                                          single_robot=True)
        np.testing.assert_allclose(m.B[:, 2:], 0)
        np.testing.assert_allclose(m.A[SL_ETA_U, SL_ETA_U], 0)


class TestDiscretize:
    def test_zero_A(self):
        B = np.arange(N_X * N_U, dtype=float).reshape(N_X, N_U)
        m = models.CoupledLinearModel(A=np.zeros((N_X, N_X)), B=B)
        d = models.discretize(m, 0.05)
        np.testing.assert_allclose(d.A_d, np.eye(N_X))
        np.testing.assert_allclose(d.B_d, 0.05 * B)

    def test_scalar_exponential(self):
        a, dt = -1.7, 0.05
        A = np.zeros((N_X, N_X))
        A[0, 0] = a
        d = models.discretize(models.CoupledLinearModel(A=A, B=np.zeros((N_X, N_U))), dt)
        assert d.A_d[0, 0] == pytest.approx(math.exp(a * dt), abs=abs(a * dt) ** 5)

    def test_semigroup_property(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(N_X, N_X)) * 0.5
        m = models.CoupledLinearModel(A=A, B=np.zeros((N_X, N_U)))
        dt = 0.1
        full = models.discretize(m, dt).A_d
        half = models.discretize(m, dt / 2).A_d
        err = np.max(np.abs(half @ half - full))
        # both agree with exp(A dt) to O(dt^5); their difference is of the same order
        assert err < 10 * np.linalg.norm(A, 2) ** 5 * dt ** 5 / 120

    def test_double_integrator_exact(self):
        A = np.zeros((N_X, N_X))
        A[0, 1] = 1.0
        B = np.zeros((N_X, N_U))
        B[1, 0] = 1.0
        dt = 0.1
        d = models.discretize(models.CoupledLinearModel(A=A, B=B), dt)
        assert d.A_d[0, 1] == pytest.approx(dt, abs=1e-12)
        assert d.B_d[0, 0] == pytest.approx(dt ** 2 / 2, abs=1e-12)
        assert d.B_d[1, 0] == pytest.approx(dt, abs=1e-12)


class TestLinearity:
    def test_superposition_of_coupled_model(self):
        rng = np.random.default_rng(11)
        obj, usv, uav = random_params(rng)
        m = models.assemble_coupled_model(obj, usv, uav)
        x1, x2 = rng.normal(size=N_X), rng.normal(size=N_X)
        u1, u2 = rng.normal(size=N_U), rng.normal(size=N_U)
        f = lambda x, u: m.A @ x + m.B @ u
        np.testing.assert_allclose(f(x1 + x2, u1 + u2),
                                   f(x1, u1) + f(x2, u2), atol=1e-10)
