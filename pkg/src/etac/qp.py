"""Dense operator-splitting (ADMM) solver for convex QPs.

Solves ``min 1/2 x'Hx + g'x  s.t.  lower <= A x <= upper`` with the
splitting ``z = A x``: a regularised KKT solve, a projection of ``z`` onto
the box and a dual ascent step, iterated until primal and dual residuals
meet ``eps_abs + eps_rel * scale``. Problems here are small (tens of
variables) so the reduced KKT matrix is inverted densely and cached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

SOLVED = "solved"
MAX_ITER = "max_iter"
PRIMAL_INFEASIBLE = "primal_infeasible"

_RHO_MIN = 1e-6
_RHO_MAX = 1e6
_RHO_EQ_SCALE = 1e3


class QpNumericalError(ArithmeticError):
    pass


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    A: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = self.H.shape[0]
        self.g = np.asarray(self.g, dtype=float).reshape(n)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        m = self.A.shape[0]
        self.lower = np.asarray(self.lower, dtype=float).reshape(m)
        self.upper = np.asarray(self.upper, dtype=float).reshape(m)
        if self.H.shape != (n, n):
            raise ValueError("H must be square")
        if not np.allclose(self.H, self.H.T, rtol=1e-12, atol=1e-12):
            raise ValueError("H must be symmetric")
        if n and np.linalg.eigvalsh(self.H)[0] < -1e-10 * max(1.0, np.abs(self.H).max()):
            raise ValueError("H must be positive semidefinite")
        if np.any(self.lower > self.upper):
            bad = int(np.argmax(self.lower > self.upper))
            raise ValueError(f"lower > upper in constraint row {bad}")
        if not (np.all(np.isfinite(self.H)) and np.all(np.isfinite(self.g)) and np.all(np.isfinite(self.A))):
            raise ValueError("QP data must be finite")

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def objective(self, x) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x)


@dataclass
class QpSettings:
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    max_iter: int = 4000
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    eps_pinf: float = 1e-5
    adaptive_rho: bool = True
    adaptive_rho_interval: int = 25
    adaptive_rho_tolerance: float = 5.0
    polish: bool = True


@dataclass
class QpSolution:
    x: np.ndarray
    y: np.ndarray
    status: str
    primal_residual: float
    dual_residual: float
    iterations: int
    objective: float = math.nan
    polished: bool = False

    @property
    def x_star(self) -> np.ndarray:
        return self.x


@dataclass
class WarmStart:
    x: np.ndarray
    y: np.ndarray | None = None


def kkt_residuals(problem: QpProblem, x, y) -> tuple[float, float]:
    """Bound violation of ``A x`` and stationarity ``||Hx + g + A'y||_inf``."""
    Ax = problem.A @ x
    viol = np.maximum(problem.lower - Ax, 0.0) + np.maximum(Ax - problem.upper, 0.0)
    prim = float(np.max(viol)) if viol.size else 0.0
    dual = float(np.max(np.abs(problem.H @ x + problem.g + problem.A.T @ y))) if x.size else 0.0
    return prim, dual


def _inf_norm(v) -> float:
    return float(np.abs(v).max()) if v.size else 0.0


class QpSolver:
    """ADMM solver that keeps its factorisation between solves with unchanged matrices."""

    def __init__(self, settings: QpSettings | None = None):
        self.settings = settings or QpSettings()
        self._key = None
        self._rho_vec = None
        self._Kinv = None
        self.factorizations = 0

    def _rho_vector(self, problem: QpProblem, rho: float) -> np.ndarray:
        r = np.full(problem.m, rho)
        free = np.isinf(problem.lower) & np.isinf(problem.upper)
        eq = (problem.upper - problem.lower) < 1e-4
        r[free] = _RHO_MIN
        r[eq & ~free] = _RHO_EQ_SCALE * rho
        return r

    def _factor(self, problem: QpProblem, rho_vec):
        s = self.settings
        K = problem.H + s.sigma * np.eye(problem.n) + problem.A.T @ (rho_vec[:, None] * problem.A)
        cf = sla.cho_factor(K, lower=True, check_finite=False)
        self._Kinv = sla.cho_solve(cf, np.eye(problem.n), check_finite=False)
        self._rho_vec = rho_vec
        self.factorizations += 1

    def _matrices_changed(self, problem: QpProblem) -> bool:
        if self._key is None:
            return True
        H, A, lo, up = self._key
        return not (H.shape == problem.H.shape and A.shape == problem.A.shape
                    and np.array_equal(H, problem.H) and np.array_equal(A, problem.A)
                    and np.array_equal(np.isinf(lo), np.isinf(problem.lower))
                    and np.array_equal(up - lo < 1e-4, problem.upper - problem.lower < 1e-4)
                    and np.array_equal(np.isinf(up), np.isinf(problem.upper)))

    def solve(self, problem: QpProblem, warm_start: WarmStart | None = None) -> QpSolution:
        s = self.settings
        n, m = problem.n, problem.m
        H, g, A, lo, up = problem.H, problem.g, problem.A, problem.lower, problem.upper

        if self._matrices_changed(problem):
            self._factor(problem, self._rho_vector(problem, s.rho))
            self._key = (H.copy(), A.copy(), lo.copy(), up.copy())
        rho_vec = self._rho_vec
        Kinv = self._Kinv

        if warm_start is not None and warm_start.x is not None:
            x = np.array(warm_start.x, dtype=float).reshape(n)
            y = np.zeros(m) if warm_start.y is None else np.array(warm_start.y, dtype=float).reshape(m)
        else:
            x = np.zeros(n)
            y = np.zeros(m)
        z = np.clip(A @ x, lo, up)

        alpha, sigma = s.alpha, s.sigma
        best = None
        status = MAX_ITER
        it = 0
        for it in range(1, s.max_iter + 1):
            x_tilde = Kinv @ (sigma * x - g + A.T @ (rho_vec * z - y))
            z_tilde = A @ x_tilde
            x = alpha * x_tilde + (1.0 - alpha) * x
            z_relax = alpha * z_tilde + (1.0 - alpha) * z
            z = np.clip(z_relax + y / rho_vec, lo, up)
            dy = rho_vec * (z_relax - z)
            y = y + dy

            Ax = A @ x
            Hx = H @ x
            ATy = A.T @ y
            r_prim = _inf_norm(Ax - z)
            r_dual = _inf_norm(Hx + g + ATy)
            if not (math.isfinite(r_prim) and math.isfinite(r_dual)):
                raise QpNumericalError(f"non-finite ADMM iterate at iteration {it}")
            scale_p = max(_inf_norm(Ax), _inf_norm(z))
            scale_d = max(_inf_norm(Hx), _inf_norm(ATy), _inf_norm(g))
            eps_p = s.eps_abs + s.eps_rel * scale_p
            eps_d = s.eps_abs + s.eps_rel * scale_d
            score = max(r_prim / eps_p, r_dual / eps_d)
            if best is None or score < best[0]:
                best = (score, x.copy(), y.copy())
            if r_prim <= eps_p and r_dual <= eps_d:
                status = SOLVED
                break
            if m and self._primal_infeasible(dy, A, lo, up):
                status = PRIMAL_INFEASIBLE
                break

            if s.adaptive_rho and it % s.adaptive_rho_interval == 0:
                ratio = math.sqrt((r_prim / (scale_p + 1e-30)) / (r_dual / (scale_d + 1e-30) + 1e-30))
                if ratio > s.adaptive_rho_tolerance or ratio < 1.0 / s.adaptive_rho_tolerance:
                    new_rho = rho_vec * ratio
                    free = np.isinf(lo) & np.isinf(up)
                    new_rho[~free] = np.clip(new_rho[~free], _RHO_MIN, _RHO_MAX)
                    self._factor(problem, new_rho)
                    rho_vec, Kinv = self._rho_vec, self._Kinv

        if status == PRIMAL_INFEASIBLE:
            prim, dual = kkt_residuals(problem, x, y)
            return QpSolution(x, y, status, prim, dual, it)
        if status == MAX_ITER and best is not None:
            _, x, y = best

        polished = False
        if s.polish and status in (SOLVED, MAX_ITER):
            result = _polish(problem, x, y, z=np.clip(A @ x, lo, up))
            if result is not None:
                xp, yp = result
                if _score(problem, xp, yp) <= max(_score(problem, x, y), 1e-9):
                    x, y, polished = xp, yp, True
                    if status == MAX_ITER and _score(problem, x, y) <= max(s.eps_abs, 1e-9):
                        status = SOLVED
        prim, dual = kkt_residuals(problem, x, y)
        return QpSolution(x, y, status, prim, dual, it, problem.objective(x), polished)

    def _primal_infeasible(self, dy, A, lo, up) -> bool:
        norm_dy = _inf_norm(dy)
        if norm_dy < 1e-12:
            return False
        eps = self.settings.eps_pinf * norm_dy
        if _inf_norm(A.T @ dy) > eps:
            return False
        pos, neg = np.maximum(dy, 0.0), np.minimum(dy, 0.0)
        # an infinite bound paired with a nonzero multiplier voids the certificate
        if np.any(np.isinf(up) & (pos > eps)) or np.any(np.isinf(lo) & (neg < -eps)):
            return False
        support = np.sum(np.where(np.isinf(up), 0.0, up) * pos) + np.sum(np.where(np.isinf(lo), 0.0, lo) * neg)
        return support < -eps


def _score(problem: QpProblem, x, y) -> float:
    prim, dual = kkt_residuals(problem, x, y)
    # complementary slackness of the multipliers
    Ax = problem.A @ x
    lo_fin, up_fin = np.isfinite(problem.lower), np.isfinite(problem.upper)
    slack_lo = np.minimum(y[lo_fin], 0.0) * (Ax[lo_fin] - problem.lower[lo_fin])
    slack_up = np.maximum(y[up_fin], 0.0) * (problem.upper[up_fin] - Ax[up_fin])
    comp = max(_inf_norm(slack_lo), _inf_norm(slack_up))
    return max(prim, dual, comp)


def _polish(problem: QpProblem, x, y, z):
    """Solve the equality-constrained KKT system on the active set guessed from ``(z, y)``."""
    H, g, A, lo, up = problem.H, problem.g, problem.A, problem.lower, problem.upper
    n = problem.n
    low_act = (z - lo < -y) & np.isfinite(lo)
    up_act = (up - z < y) & np.isfinite(up)
    up_act &= ~low_act
    act = np.flatnonzero(low_act | up_act)
    b = np.where(low_act, lo, up)[act]
    Aa = A[act]
    k = act.size
    K = np.zeros((n + k, n + k))
    K[:n, :n] = H
    K[:n, n:] = Aa.T
    K[n:, :n] = Aa
    rhs = np.concatenate([-g, b])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = None
    if sol is None or not np.allclose(K @ sol, rhs, rtol=1e-9, atol=1e-9):
        # dependent active rows: fall back to the minimum-norm solution
        try:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        except np.linalg.LinAlgError:
            return None
    if not np.all(np.isfinite(sol)):
        return None
    xp = sol[:n]
    yp = np.zeros(problem.m)
    yp[act] = sol[n:]
    # multipliers must carry the sign of their active side
    yp[low_act] = np.minimum(yp[low_act], 0.0)
    yp[up_act] = np.maximum(yp[up_act], 0.0)
    return xp, yp


def solve_qp(problem: QpProblem, settings: QpSettings | None = None,
             warm_start: WarmStart | None = None) -> QpSolution:
    return QpSolver(settings).solve(problem, warm_start)


def warm_start_shift(previous, stages: int | None = None, shift: int = 1):
    """Shift a stacked stage sequence forward, repeating the final stage.

    ``previous`` is either an array with one row (or entry) per stage or a
    :class:`WarmStart`, in which case only the primal part is shifted.
    """
    if isinstance(previous, WarmStart):
        return WarmStart(warm_start_shift(previous.x, stages, shift), None)
    seq = np.asarray(previous, dtype=float)
    if stages is not None and seq.ndim == 1:
        seq = seq.reshape(stages, -1)
        flat = True
    else:
        flat = False
    if shift <= 0 or seq.shape[0] == 0:
        out = seq.copy()
    else:
        k = min(shift, seq.shape[0])
        out = np.concatenate([seq[k:], np.repeat(seq[-1:], k, axis=0)], axis=0)
    return out.ravel() if flat else out
