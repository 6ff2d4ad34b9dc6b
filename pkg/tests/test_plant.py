import math

import numpy as np
import pytest

from aquatow import models, plant
from aquatow.mission import Disturbance
from aquatow.models import ObjectState, UavState, UsvState
from aquatow.plant import Plant, PlantState, TetherModel, rk4_step, tether_force


def make_plant(**kw):
    return Plant(models.default_object_params(),
                 models.default_usv_params(),
                 models.default_uav_params(),
                 usv_tether=kw.pop("usv_tether", TetherModel(rest_length=4.0)),
                 uav_tether=kw.pop("uav_tether", TetherModel(rest_length=5.0)),
                 **kw)


def taut_state(t=0.0):
    """Object at origin, USV ahead on a just-taut tether, UAV off to the side."""
    usv = UsvState(eta=np.array([5.0, 0.0, 0.0]), nu=np.zeros(3))
    uav_eta = np.zeros(6)
    uav_eta[0::2] = [0.0, 4.0, 3.0]
    return PlantState(object=ObjectState.zero(), usv=usv,
                      uav=UavState(eta=uav_eta), t=t)


class TestTetherForce:
    def test_slack_is_zero(self):
        m = TetherModel(rest_length=5.0)
        f = tether_force(np.zeros(3), np.zeros(3),
                         np.array([3.0, 0, 0]), np.zeros(3), m)
        np.testing.assert_allclose(f, 0)

    def test_stretched_hand_value(self):
        m = TetherModel(stiffness=100.0, damping=0.0, rest_length=2.0)
        f = tether_force(np.zeros(3), np.zeros(3),
                         np.array([3.0, 0, 0]), np.zeros(3), m)
        np.testing.assert_allclose(f, [100.0, 0, 0])

    def test_damping_term(self):
        m = TetherModel(stiffness=100.0, damping=10.0, rest_length=2.0)
        f = tether_force(np.zeros(3), np.zeros(3),
                         np.array([3.0, 0, 0]), np.array([2.0, 0, 0]), m)
        np.testing.assert_allclose(f, [120.0, 0, 0])

    def test_never_pushes(self):
        m = TetherModel(stiffness=100.0, damping=10.0, rest_length=2.0)
        # approaching fast enough that spring + damper would go negative
        f = tether_force(np.zeros(3), np.zeros(3),
                         np.array([2.1, 0, 0]), np.array([-50.0, 0, 0]), m)
        np.testing.assert_allclose(f, 0)

    def test_newton_third_law(self):
        m = TetherModel(rest_length=1.0)
        rng = np.random.default_rng(0)
        pa, pb = rng.normal(size=3) * 3, rng.normal(size=3) * 3
        va, vb = rng.normal(size=3), rng.normal(size=3)
        f_ab = tether_force(pa, va, pb, vb, m)
        f_ba = tether_force(pb, vb, pa, va, m)
        np.testing.assert_allclose(f_ab, -f_ba, atol=1e-12)


class TestRk4:
    def test_exact_on_cubic(self):
        # x' = 3t^2 with t carried as a state: exact for RK4
        def f(s):
            return np.array([3.0 * s[1] ** 2, 1.0])

        s = np.array([0.0, 0.0])
        for _ in range(10):
            s = rk4_step(f, s, 0.1)
        assert s[0] == pytest.approx(1.0, abs=1e-12)

    def test_convergence_order(self):
        # x' = -x, compare error at t=1 across step sizes; slope ~ 4
        errs = []
        dts = [0.1, 0.05, 0.025]
        for dt in dts:
            x = np.array([1.0])
            for _ in range(round(1.0 / dt)):
                x = rk4_step(lambda s: -s, x, dt)
            errs.append(abs(x[0] - math.exp(-1.0)))
        slopes = [math.log(errs[i] / errs[i + 1]) / math.log(2)
                  for i in range(len(errs) - 1)]
        for s in slopes:
            assert 3.7 <= s <= 4.3


class TestPackUnpack:
    def test_round_trip(self):
        rng = np.random.default_rng(1)
        st = PlantState(
            object=ObjectState(eta=rng.normal(size=6), nu=rng.normal(size=6)),
            usv=UsvState(eta=rng.normal(size=3), nu=rng.normal(size=3)),
            uav=UavState(eta=rng.normal(size=6)), t=1.5)
        x = Plant.pack(st)
        back = Plant.unpack(x, st.t, True)
        np.testing.assert_allclose(Plant.pack(back), x)
        assert back.t == st.t

    def test_no_uav(self):
        st = Plant.unpack(np.zeros(plant.STATE_DIM), 0.0, False)
        assert st.uav is None


class TestAttachPoint:
    def test_position_behind_stern(self):
        p = make_plant()
        x = np.zeros(plant.STATE_DIM)
        x[12:15] = [2.0, 0.0, 0.0]   # USV at (2,0) heading +x
        p_att, v_att = p._usv_attach_world(x)
        np.testing.assert_allclose(p_att, [1.0, 0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(v_att, 0)

    def test_rotates_with_yaw(self):
        p = make_plant()
        x = np.zeros(plant.STATE_DIM)
        x[14] = math.pi / 2
        p_att, _ = p._usv_attach_world(x)
        np.testing.assert_allclose(p_att, [0.0, -1.0, 0.0], atol=1e-12)

    def test_yaw_rate_adds_tangential_velocity(self):
        p = make_plant()
        x = np.zeros(plant.STATE_DIM)
        x[17] = 2.0   # yaw rate r
        _, v_att = p._usv_attach_world(x)
        # attach at (-1, 0): velocity r x offset = (0, -2, 0)
        np.testing.assert_allclose(v_att, [0.0, -2.0, 0.0], atol=1e-12)


class TestDynamics:
    def test_rest_state_with_slack_tethers_stays_at_rest(self):
        p = make_plant()
        st = PlantState(object=ObjectState.zero(),
                        usv=UsvState(eta=np.array([3.0, 0, 0]), nu=np.zeros(3)),
                        uav=UavState.zero())
        nxt = p.step(st, np.zeros(2), np.zeros(3), [], 1e-3)
        np.testing.assert_allclose(Plant.pack(nxt), Plant.pack(st), atol=1e-12)

    def test_thrust_accelerates_usv_forward(self):
        p = make_plant()
        st = taut_state()
        nxt = st
        for _ in range(100):
            nxt = p.step(nxt, np.array([50.0, 50.0]), np.zeros(3), [], 1e-3)
        assert nxt.usv.nu[0] > 0.01
        assert abs(nxt.usv.nu[2]) < 1e-6

    def test_taut_tether_drags_object(self):
        p = make_plant()
        st = taut_state()
        nxt = st
        for _ in range(2000):
            nxt = p.step(nxt, np.array([100.0, 100.0]), np.zeros(3), [], 1e-3)
        assert nxt.object.eta[0] > 0.05
        d = p.diagnostics(nxt)
        assert d.usv_taut

    def test_disturbance_gating(self):
        p = make_plant()
        dist = Disturbance(force=np.array([500.0, 0, 0]), t_start=0.05,
                           duration=0.02)
        st = taut_state()
        # before onset: no motion
        nxt = st
        for _ in range(40):
            nxt = p.step(nxt, np.zeros(2), np.zeros(3), [dist], 1e-3)
        np.testing.assert_allclose(nxt.object.nu, 0, atol=1e-9)
        # through the pulse: object picks up speed
        for _ in range(60):
            nxt = p.step(nxt, np.zeros(2), np.zeros(3), [dist], 1e-3)
        assert nxt.object.nu[0] > 0.1

    def test_energy_dissipates_without_input(self):
        p = make_plant()
        st = taut_state()
        st.object.nu[:3] = [0.5, 0.2, 0.0]
        e0 = p.mechanical_energy(st)
        nxt = st
        for _ in range(500):
            nxt = p.step(nxt, np.zeros(2), np.zeros(3), [], 1e-3)
        assert p.mechanical_energy(nxt) < e0

    def test_energy_conserved_without_damping(self):
        obj = models.default_object_params(damping=np.zeros(6))
        usv = models.UsvParams(M_I=np.diag([180.0, 180.0, 120.0]),
                               M_A=np.zeros((3, 3)), D=np.zeros((3, 3)),
                               d_tau=2.4, tau_max=250.0)
        p = Plant(obj, usv, models.default_uav_params(),
                  usv_tether=TetherModel(rest_length=4.0, damping=0.0),
                  uav_tether=None)
        st = PlantState(object=ObjectState.zero(),
                        usv=UsvState(eta=np.array([5.0, 0, 0]),
                                     nu=np.array([0.5, 0, 0])),
                        uav=None)
        e0 = p.mechanical_energy(st)
        nxt = st
        for _ in range(1000):
            nxt = p.step(nxt, np.zeros(2), np.zeros(3), [], 1e-4)
        e1 = p.mechanical_energy(nxt)
        assert abs(e1 - e0) < 1e-3 * max(e0, 1.0)

    def test_uav_reaction_uses_uav_mass(self):
        p = make_plant(uav_mass=2.0)
        st = taut_state()
        st.uav.eta[2] = 6.0   # stretch the 5 m tether to 6.7 m
        x = Plant.pack(st)
        _, f_uav = p.tether_forces(x)
        dx = p._derivative(x, np.zeros(2), np.zeros(3), np.zeros(3))
        np.testing.assert_allclose(dx[19:24:2], -f_uav / 2.0, atol=1e-9)

    def test_blowup_raises(self):
        p = make_plant()
        st = taut_state()
        st.object.eta[0] = 9e5
        st.object.nu[0] = 1e5
        with pytest.raises(plant.NumericBlowup):
            nxt = st
            for _ in range(100):
                nxt = p.step(nxt, np.zeros(2), np.zeros(3), [], 1.0)

    def test_determinism(self):
        p1, p2 = make_plant(), make_plant()
        a, b = taut_state(), taut_state()
        for k in range(200):
            u_b = np.array([20.0 + k * 0.1, 18.0])
            u_u = np.array([0.1, -0.1, 0.0])
            a = p1.step(a, u_b, u_u, [], 1e-3)
            b = p2.step(b, u_b, u_u, [], 1e-3)
        np.testing.assert_array_equal(Plant.pack(a), Plant.pack(b))


class TestDiagnostics:
    def test_lengths(self):
        p = make_plant()
        d = p.diagnostics(taut_state())
        assert d.usv_length == pytest.approx(4.0)
        assert d.uav_length == pytest.approx(5.0)

    def test_taut_flags(self):
        p = make_plant()
        st = taut_state()
        st.usv.eta[0] = 5.2   # stretch the USV tether only
        d = p.diagnostics(st)
        assert d.usv_taut
        assert not d.uav_taut

    def test_no_lifting_ok_nominal(self):
        p = make_plant()
        assert p.diagnostics(taut_state()).no_lifting_ok

    def test_no_lifting_violated_by_strong_vertical_pull(self):
        p = make_plant()
        st = taut_state()
        st.uav.eta[0::2] = [0.0, 0.0, 5.5]   # directly overhead, stretched
        d = p.diagnostics(st)
        assert d.uav_tension[2] > p.obj_params.m_o * p.obj_params.g_mag
        assert not d.no_lifting_ok
