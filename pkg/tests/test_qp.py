import numpy as np
import pytest
import scipy.sparse as sparse

from aquatow import qp as qpmod
from aquatow.qp import SparseQP, SolverSettings, Status, AdmmSolver, solve

from oracles import solve_qp_bruteforce, random_feasible_qp


def make_qp(P, q, A, l, u):
    return SparseQP(P=sparse.csc_matrix(np.atleast_2d(P)),
                    q=np.atleast_1d(q),
                    A_c=sparse.csc_matrix(np.atleast_2d(A)),
                    l=np.atleast_1d(l), u=np.atleast_1d(u))


class TestValidation:
    def test_rejects_crossed_bounds(self):
        with pytest.raises(ValueError):
            make_qp([[1.0]], [0.0], [[1.0]], [1.0], [-1.0])

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            SparseQP(P=sparse.eye(2, format="csc"), q=np.zeros(3),
                     A_c=sparse.eye(2, format="csc"),
                     l=np.zeros(2), u=np.ones(2))

    def test_inf_bounds_clipped(self):
        p = make_qp([[1.0]], [0.0], [[1.0]], [-np.inf], [np.inf])
        assert p.l[0] == -qpmod.INF
        assert p.u[0] == qpmod.INF

    def test_settings_validate(self):
        with pytest.raises(ValueError):
            SolverSettings(rho=-1.0).validate()
        with pytest.raises(ValueError):
            SolverSettings(alpha=2.5).validate()


class TestAnalyticExamples:
    def test_unconstrained_scalar(self):
        # min 0.5*2x^2 - 4x  -> x = 2
        sol = solve(make_qp([[2.0]], [-4.0], np.zeros((0, 1)),
                            np.zeros(0), np.zeros(0)))
        assert sol.status is Status.SOLVED
        assert sol.x[0] == pytest.approx(2.0, abs=1e-4)

    def test_active_upper_bound(self):
        # min 0.5 x^2 - 4x s.t. x <= 1  -> x = 1, y = 3 at the bound
        sol = solve(make_qp([[1.0]], [-4.0], [[1.0]], [-np.inf], [1.0]))
        assert sol.status is Status.SOLVED
        assert sol.x[0] == pytest.approx(1.0, abs=1e-4)
        assert sol.y[0] == pytest.approx(3.0, abs=1e-3)

    def test_equality_row(self):
        # min ||x||^2 s.t. x0 + x1 = 1 -> (0.5, 0.5)
        sol = solve(make_qp(2 * np.eye(2), np.zeros(2),
                            [[1.0, 1.0]], [1.0], [1.0]))
        assert sol.status is Status.SOLVED
        np.testing.assert_allclose(sol.x, [0.5, 0.5], atol=1e-4)

    def test_projection_onto_box(self):
        # min ||x - c||^2 s.t. -1 <= x <= 1 elementwise
        c = np.array([3.0, -0.4, -7.0])
        sol = solve(make_qp(2 * np.eye(3), -2 * c, np.eye(3),
                            -np.ones(3), np.ones(3)))
        assert sol.status is Status.SOLVED
        np.testing.assert_allclose(sol.x, np.clip(c, -1, 1), atol=1e-4)


class TestOracleComparison:
    def test_random_qps_match_bruteforce(self):
        rng = np.random.default_rng(2024)
        checked = 0
        for _ in range(60):
            P, q, A, l, u = random_feasible_qp(rng)
            x_star = solve_qp_bruteforce(P, q, A, l, u)
            if x_star is None:
                continue
            sol = solve(make_qp(P, q, A, l, u))
            assert sol.status is Status.SOLVED
            obj = lambda x: 0.5 * x @ P @ x + q @ x
            assert obj(sol.x) <= obj(x_star) + 1e-3 * (1 + abs(obj(x_star)))
            np.testing.assert_allclose(sol.x, x_star, atol=2e-3,
                                       rtol=2e-3)
            checked += 1
        assert checked >= 50

    def test_kkt_residuals_small_at_solution(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            P, q, A, l, u = random_feasible_qp(rng)
            p = make_qp(P, q, A, l, u)
            sol = solve(p)
            assert sol.status is Status.SOLVED
            pr, dr = qpmod.kkt_residuals(p, sol.x, sol.y)
            scale = 1.0 + float(np.linalg.norm(q, np.inf))
            assert pr <= 1e-4 * scale
            assert dr <= 1e-4 * scale


class TestWarmStartAndUpdates:
    def test_warm_start_no_worse(self):
        rng = np.random.default_rng(9)
        P, q, A, l, u = random_feasible_qp(rng)
        p = make_qp(P, q, A, l, u)
        cold = solve(p)
        assert cold.status is Status.SOLVED
        warm = solve(make_qp(P, q, A, l, u), warm=(cold.x, cold.y))
        assert warm.status is Status.SOLVED
        assert warm.iterations <= cold.iterations

    def test_warm_dimension_mismatch_falls_back(self):
        P, q, A, l, u = random_feasible_qp(np.random.default_rng(1))
        sol = solve(make_qp(P, q, A, l, u),
                    warm=(np.zeros(1), np.zeros(1)))
        assert sol.status is Status.SOLVED

    def test_update_vectors_reuses_factorization(self):
        p = make_qp(2 * np.eye(2), np.zeros(2), np.eye(2),
                    -np.ones(2), np.ones(2))
        solver = AdmmSolver(p)
        s1 = solver.solve()
        np.testing.assert_allclose(s1.x, 0, atol=1e-4)
        solver.update_vectors(q=np.array([-10.0, 10.0]))
        s2 = solver.solve(warm=(s1.x, s1.y))
        np.testing.assert_allclose(s2.x, [1.0, -1.0], atol=1e-4)


class TestScalingInvariance:
    def test_objective_scaling(self):
        # scaling (P, q) by c leaves the minimizer unchanged
        P, q, A, l, u = random_feasible_qp(np.random.default_rng(17))
        s1 = solve(make_qp(P, q, A, l, u))
        s2 = solve(make_qp(10 * P, 10 * q, A, l, u))
        assert s1.status is Status.SOLVED and s2.status is Status.SOLVED
        np.testing.assert_allclose(s1.x, s2.x, atol=5e-3)


class TestInfeasibility:
    def test_primal_infeasible(self):
        # x >= 1 and x <= -1 simultaneously
        sol = solve(make_qp([[1.0]], [0.0],
                            [[1.0], [1.0]], [1.0, -np.inf], [np.inf, -1.0]))
        assert sol.status is Status.PRIMAL_INFEASIBLE

    def test_dual_infeasible(self):
        # min -x with no constraints binding in the descent direction
        sol = solve(make_qp([[0.0]], [-1.0], [[1.0]], [0.0], [np.inf]))
        assert sol.status is Status.DUAL_INFEASIBLE


class TestDump:
    def test_round_trippable_text(self, tmp_path):
        p = make_qp(2 * np.eye(2), np.array([1.0, -2.0]),
                    [[1.0, 1.0]], [0.0], [3.0])
        path = tmp_path / "qp.txt"
        qpmod.dump_qp(p, path)
        text = path.read_text().splitlines()
        assert text[0] == "2 1"
        assert any(line.startswith("q ") for line in text)
