"""Sparse convex QP solver based on ADMM operator splitting.

Solves  min 0.5 x'Px + q'x  s.t.  l <= A_c x <= u  with warm starting and a
single KKT factorization reused across iterations. The iteration follows the
standard operator-splitting scheme with over-relaxation and residual-balanced
penalty adaptation.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as sla

INF = 1e30  # sentinel for infinite bounds in storage


class Status(Enum):
    SOLVED = "solved"
    MAX_ITER = "max_iter"
    PRIMAL_INFEASIBLE = "primal_infeasible"
    DUAL_INFEASIBLE = "dual_infeasible"


@dataclass
class SparseQP:
    P: sparse.csc_matrix
    q: np.ndarray
    A_c: sparse.csc_matrix
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.P = sparse.csc_matrix(self.P)
        self.A_c = sparse.csc_matrix(self.A_c)
        self.q = np.asarray(self.q, dtype=float)
        self.l = np.clip(np.asarray(self.l, dtype=float), -INF, INF)
        self.u = np.clip(np.asarray(self.u, dtype=float), -INF, INF)
        n = self.P.shape[0]
        m = self.A_c.shape[0]
        if self.P.shape != (n, n) or self.A_c.shape[1] != n:
            raise ValueError("inconsistent QP dimensions")
        if self.q.shape != (n,) or self.l.shape != (m,) or self.u.shape != (m,):
            raise ValueError("inconsistent QP vector sizes")
        if np.any(self.l > self.u + 1e-12):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def m(self) -> int:
        return self.A_c.shape[0]


@dataclass
class QPSolution:
    x: np.ndarray
    y: np.ndarray
    status: Status
    iterations: int
    primal_res: float
    dual_res: float


@dataclass
class SolverSettings:
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_abs: float = 1e-5
    eps_rel: float = 1e-5
    max_iter: int = 4000
    adapt_interval: int = 25       # residual balancing cadence
    check_interval: int = 10
    eps_infeas: float = 1e-8

    def validate(self) -> None:
        if self.rho <= 0 or self.sigma <= 0:
            raise ValueError("rho and sigma must be positive")
        if not 0 < self.alpha < 2:
            raise ValueError("alpha must lie in (0, 2)")


def kkt_residuals(qp: SparseQP, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Infinity-norm primal and dual KKT residuals at (x, y)."""
    Ax = qp.A_c @ x
    primal = float(np.linalg.norm(np.clip(Ax, qp.l, qp.u) - Ax, np.inf)) if qp.m else 0.0
    dual = float(np.linalg.norm(qp.P @ x + qp.q + qp.A_c.T @ y, np.inf))
    return primal, dual


def dump_qp(qp: SparseQP, path) -> None:
    """Plain-text triplet dump for offline inspection."""
    with open(path, "w") as f:
        f.write(f"{qp.n} {qp.m}\n")
        coo = sparse.triu(qp.P).tocoo()
        f.write(f"P {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            f.write(f"{i} {j} {v:.17g}\n")
        coo = qp.A_c.tocoo()
        f.write(f"A {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            f.write(f"{i} {j} {v:.17g}\n")
        for name, vec in (("q", qp.q), ("l", qp.l), ("u", qp.u)):
            f.write(f"{name} " + " ".join(f"{v:.17g}" for v in vec) + "\n")


class AdmmSolver:
    """Single-caller solver instance holding the KKT factorization.

    The problem is Ruiz-equilibrated once up front; iterations run on the
    scaled data while termination is judged on unscaled residuals.
    """

    SCALING_ITERS = 10
    _NORM_FLOOR = 1e-8

    def __init__(self, qp: SparseQP, settings: SolverSettings | None = None):
        self.qp = qp
        self.settings = settings or SolverSettings()
        self.settings.validate()
        self._compute_scaling()
        self._apply_scaling()
        self._rho = None
        self._factor = None
        self._set_rho(self.settings.rho)

    def _compute_scaling(self) -> None:
        """Modified Ruiz equilibration of the KKT matrix plus cost scaling."""
        qp = self.qp
        n, m = qp.n, qp.m
        d = np.ones(n)
        e = np.ones(m)
        c = 1.0
        P = qp.P.tocsc()
        A = qp.A_c.tocsc()
        q = qp.q

        def col_inf(mat):
            if mat.shape[0] == 0:
                return np.zeros(mat.shape[1])
            return np.asarray(abs(mat).max(axis=0).todense()).ravel()

        for _ in range(self.SCALING_ITERS):
            Ps = sparse.diags(d) @ (c * P) @ sparse.diags(d)
            As = (sparse.diags(e) @ A @ sparse.diags(d)) if m else A
            norm_x = np.maximum(col_inf(Ps), col_inf(As))
            norm_y = col_inf(As.T) if m else np.zeros(0)
            delta_d = 1.0 / np.sqrt(np.clip(norm_x, self._NORM_FLOOR, None))
            delta_e = 1.0 / np.sqrt(np.clip(norm_y, self._NORM_FLOOR, None))
            delta_d[norm_x < self._NORM_FLOOR] = 1.0
            if m:
                delta_e[norm_y < self._NORM_FLOOR] = 1.0
            d *= delta_d
            e *= delta_e
            # cost normalization
            Ps = sparse.diags(d) @ (c * P) @ sparse.diags(d)
            cost_norm = max(float(np.mean(col_inf(Ps))),
                            float(np.linalg.norm(c * d * q, np.inf))
                            if n else 0.0)
            c /= np.clip(cost_norm, self._NORM_FLOOR, 1.0 / self._NORM_FLOOR)
        self._d = d
        self._e = e
        self._c = c

    def _apply_scaling(self) -> None:
        qp = self.qp
        D = sparse.diags(self._d)
        self._Ps = (D @ (self._c * qp.P) @ D).tocsc()
        self._As = ((sparse.diags(self._e) @ qp.A_c @ D).tocsc()
                    if qp.m else qp.A_c)
        self._scale_vectors()

    def _scale_vectors(self) -> None:
        qp = self.qp
        self._qs = self._c * self._d * qp.q
        ls = self._e * qp.l
        us = self._e * qp.u
        self._ls = np.clip(ls, -INF, INF)
        self._us = np.clip(us, -INF, INF)

    def _set_rho(self, rho: float) -> None:
        qp = self.qp
        # equality rows (l == u) get a much stiffer penalty
        eq = np.abs(qp.u - qp.l) < 1e-9
        rho_vec = np.full(qp.m, rho)
        rho_vec[eq] = rho * 1e3
        self._rho = rho
        self._rho_vec = rho_vec
        K = sparse.bmat([
            [self._Ps + self.settings.sigma * sparse.eye(qp.n), self._As.T],
            [self._As, -sparse.diags(1.0 / rho_vec) if qp.m else None],
        ], format="csc") if qp.m else sparse.csc_matrix(
            self._Ps + self.settings.sigma * sparse.eye(qp.n))
        self._factor = sla.splu(K)

    def update_vectors(self, q=None, l=None, u=None) -> None:
        """Cheap in-place update of q/l/u for receding-horizon re-solves."""
        if q is not None:
            self.qp.q = np.asarray(q, dtype=float)
        if l is not None:
            self.qp.l = np.clip(np.asarray(l, dtype=float), -INF, INF)
        if u is not None:
            self.qp.u = np.clip(np.asarray(u, dtype=float), -INF, INF)
        self._scale_vectors()

    def solve(self, warm: tuple[np.ndarray, np.ndarray] | None = None) -> QPSolution:
        qp, st = self.qp, self.settings
        n, m = qp.n, qp.m
        d, e, c = self._d, self._e, self._c

        if warm is not None and (len(warm[0]) != n or len(warm[1]) != m):
            warm = None
        if warm is not None:
            x = np.asarray(warm[0], dtype=float) / d
            y = c * np.asarray(warm[1], dtype=float) / e if m else np.zeros(0)
        else:
            x = np.zeros(n)
            y = np.zeros(m)
        z = np.clip(self._As @ x, self._ls, self._us) if m else np.zeros(0)

        if m == 0:
            # unconstrained: direct regularized solve
            x_un = d * self._factor.solve(-self._qs)
            pr, dr = kkt_residuals(qp, x_un, y)
            status = Status.SOLVED if dr <= st.eps_abs + st.eps_rel * max(
                1.0, float(np.linalg.norm(qp.q, np.inf))) else Status.MAX_ITER
            return QPSolution(x_un, y, status, 1, pr, dr)

        rho_vec = self._rho_vec
        status = Status.MAX_ITER
        pr = dr = np.inf
        it = 0
        rhs = np.empty(n + m)
        for it in range(1, st.max_iter + 1):
            x_prev, y_prev = x, y

            rhs[:n] = st.sigma * x - self._qs
            rhs[n:] = z - y / rho_vec
            sol = self._factor.solve(rhs)
            x_tilde = sol[:n]
            z_tilde = z + (sol[n:] - y) / rho_vec

            x = st.alpha * x_tilde + (1 - st.alpha) * x
            z_relaxed = st.alpha * z_tilde + (1 - st.alpha) * z
            z = np.clip(z_relaxed + y / rho_vec, self._ls, self._us)
            y = y + rho_vec * (z_relaxed - z)

            if it % st.check_interval == 0 or it == st.max_iter:
                # termination is judged on the unscaled problem
                x_un = d * x
                y_un = e * y / c
                z_un = z / e
                Ax = qp.A_c @ x_un
                Px = qp.P @ x_un
                Aty = qp.A_c.T @ y_un
                pr = float(np.linalg.norm(Ax - z_un, np.inf))
                dr = float(np.linalg.norm(Px + qp.q + Aty, np.inf))
                eps_pr = st.eps_abs + st.eps_rel * max(
                    float(np.linalg.norm(Ax, np.inf)),
                    float(np.linalg.norm(z_un, np.inf)))
                eps_dr = st.eps_abs + st.eps_rel * max(
                    float(np.linalg.norm(Px, np.inf)),
                    float(np.linalg.norm(Aty, np.inf)),
                    float(np.linalg.norm(qp.q, np.inf)))
                if pr <= eps_pr and dr <= eps_dr:
                    status = Status.SOLVED
                    break

                dy = e * (y - y_prev) / c
                dx = d * (x - x_prev)
                if self._primal_infeasible(dy):
                    status = Status.PRIMAL_INFEASIBLE
                    break
                if self._dual_infeasible(dx):
                    status = Status.DUAL_INFEASIBLE
                    break

                if it % st.adapt_interval == 0 and pr > 0 and dr > 0:
                    scale = float(np.sqrt((pr / max(eps_pr, 1e-30))
                                          / (dr / max(eps_dr, 1e-30))))
                    if scale > 5.0 or scale < 0.2:
                        self._set_rho(self._rho * scale)
                        rho_vec = self._rho_vec

        return QPSolution(d * x, e * y / c if m else y, status, it, pr, dr)

    def _primal_infeasible(self, dy: np.ndarray) -> bool:
        st, qp = self.settings, self.qp
        norm_dy = float(np.linalg.norm(dy, np.inf))
        if norm_dy < st.eps_infeas:
            return False
        dy = dy / norm_dy
        if float(np.linalg.norm(qp.A_c.T @ dy, np.inf)) > st.eps_infeas:
            return False
        u_fin = np.where(qp.u >= INF, 0.0, qp.u)
        l_fin = np.where(qp.l <= -INF, 0.0, qp.l)
        support = float(u_fin @ np.maximum(dy, 0) + l_fin @ np.minimum(dy, 0))
        return support < -st.eps_infeas

    def _dual_infeasible(self, dx: np.ndarray) -> bool:
        st, qp = self.settings, self.qp
        norm_dx = float(np.linalg.norm(dx, np.inf))
        if norm_dx < st.eps_infeas:
            return False
        dx = dx / norm_dx
        if float(np.linalg.norm(qp.P @ dx, np.inf)) > st.eps_infeas:
            return False
        if float(qp.q @ dx) > -st.eps_infeas:
            return False
        Adx = qp.A_c @ dx
        for i in range(qp.m):
            if qp.u[i] < INF and Adx[i] > st.eps_infeas:
                return False
            if qp.l[i] > -INF and Adx[i] < -st.eps_infeas:
                return False
        return True


def solve(qp: SparseQP, settings: SolverSettings | None = None,
          warm: tuple[np.ndarray, np.ndarray] | None = None) -> QPSolution:
    """One-shot convenience wrapper around AdmmSolver."""
    return AdmmSolver(qp, settings).solve(warm=warm)
