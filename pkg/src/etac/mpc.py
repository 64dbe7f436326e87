"""Linear MPC over the adapted Koopman model, in condensed or sparse QP form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .edmd import KoopmanModel
from .qp import PRIMAL_INFEASIBLE, QpProblem, QpSettings, QpSolution, QpSolver, WarmStart, warm_start_shift


class MpcInfeasibleError(RuntimeError):
    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class ModelBlowUpError(ArithmeticError):
    pass


def _as_matrix(v, n):
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return a * np.eye(n)
    return a.reshape(n, n)


@dataclass
class MpcConfig:
    horizon: int = 20
    P: float = 100.0
    P_b: float = 200.0
    R: float = 1.0
    x_min: float = -2.0
    x_max: float = 0.5
    u_min: float = -3.0
    u_max: float = 3.0
    x_ref: float = -0.3
    formulation: str = "sparse"

    def __post_init__(self):
        if self.formulation not in ("condensed", "sparse"):
            raise ValueError("formulation must be 'condensed' or 'sparse'")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError("horizon must be an integer >= 1")
        self.horizon = int(self.horizon)
        if np.min(np.linalg.eigvalsh(np.atleast_2d(self.P))) < 0 or np.min(np.linalg.eigvalsh(np.atleast_2d(self.P_b))) < 0:
            raise ValueError("P and P_b must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(np.atleast_2d(self.R))) <= 0:
            raise ValueError("R must be positive definite")
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be below x_max")
        if not self.u_min <= self.u_max:
            raise ValueError("u_min must not exceed u_max")
        if not self.x_min <= self.x_ref <= self.x_max:
            raise ValueError("x_ref must lie within [x_min, x_max]")


def prediction_matrices(A, B, C, horizon):
    """Stacked ``Phi`` (outputs from ``z0``) and ``Gamma`` (outputs from inputs) for stages 1..b."""
    q, m = B.shape
    n = C.shape[0]
    Phi = np.zeros((horizon * n, q))
    Gamma = np.zeros((horizon * n, horizon * m))
    Ak = np.eye(q)
    CAkB = []
    for k in range(horizon):
        CAkB.append(C @ Ak @ B)
        Ak = A @ Ak
        Phi[k * n:(k + 1) * n] = C @ Ak
    for k in range(horizon):
        for j in range(k + 1):
            Gamma[k * n:(k + 1) * n, j * m:(j + 1) * m] = CAkB[k - j]
    if not (np.all(np.isfinite(Phi)) and np.all(np.isfinite(Gamma))):
        raise ModelBlowUpError("powers of the adapted A are not finite")
    return Phi, Gamma


def build_qp(model: KoopmanModel, z0, config: MpcConfig) -> QpProblem:
    """Condensed tracking QP in the stacked inputs ``U = (u_0, ..., u_{b-1})``.

    The stage-0 output term is a constant and is dropped from the cost.
    Output bounds apply to predicted stages 1..b, input bounds to 0..b-1.
    """
    A, B, C = model.A_hat, model.B_hat, model.C
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise ModelBlowUpError("adapted model is not finite")
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (model.q,):
        raise ValueError(f"z0 must have length {model.q}")
    b, n, m = config.horizon, C.shape[0], B.shape[1]
    Phi, Gamma = prediction_matrices(A, B, C, b)
    P = _as_matrix(config.P, n)
    W = np.kron(np.eye(b), P)
    W[-n:, -n:] = _as_matrix(config.P_b, n)
    R = np.kron(np.eye(b), _as_matrix(config.R, m))
    free = Phi @ z0 - np.tile(np.atleast_1d(config.x_ref).astype(float), b)
    GW = Gamma.T @ W
    H = 2.0 * (GW @ Gamma + R)
    H = 0.5 * (H + H.T)
    g = 2.0 * GW @ free
    Ac = np.vstack([Gamma, np.eye(b * m)])
    lower = np.concatenate([np.full(b * n, config.x_min) - Phi @ z0, np.full(b * m, config.u_min)])
    upper = np.concatenate([np.full(b * n, config.x_max) - Phi @ z0, np.full(b * m, config.u_max)])
    return QpProblem(H, g, Ac, lower, upper)


def tracking_cost(model: KoopmanModel, z0, U, config: MpcConfig) -> float:
    """Full horizon cost including the stage-0 output term."""
    A, B, C = model.A_hat, model.B_hat, model.C
    U = np.asarray(U, dtype=float).reshape(config.horizon, -1)
    n = C.shape[0]
    P, Pb, R = _as_matrix(config.P, n), _as_matrix(config.P_b, n), _as_matrix(config.R, U.shape[1])
    z = np.asarray(z0, dtype=float)
    ref = np.atleast_1d(config.x_ref)
    J = 0.0
    for u in U:
        e = C @ z - ref
        J += e @ P @ e + u @ R @ u
        z = A @ z + B @ u
    e = C @ z - ref
    return float(J + e @ Pb @ e)


def build_sparse_qp(model: KoopmanModel, z0, config: MpcConfig) -> tuple[QpProblem, float]:
    """Same problem with explicit states ``(z_1..z_b, u_0..u_{b-1})`` and dynamics as equalities.

    Returns the QP and the constant cost offset so that
    ``objective + offset`` equals :func:`tracking_cost`.
    """
    A, B, C = model.A_hat, model.B_hat, model.C
    q, m = B.shape
    n = C.shape[0]
    b = config.horizon
    z0 = np.asarray(z0, dtype=float)
    ref = np.atleast_1d(config.x_ref).astype(float)
    P, Pb, R = _as_matrix(config.P, n), _as_matrix(config.P_b, n), _as_matrix(config.R, m)
    nz, nu = b * q, b * m
    H = np.zeros((nz + nu, nz + nu))
    g = np.zeros(nz + nu)
    for k in range(1, b + 1):
        W = Pb if k == b else P
        sl = slice((k - 1) * q, k * q)
        H[sl, sl] = 2.0 * C.T @ W @ C
        g[sl] = -2.0 * C.T @ W @ ref
    H[nz:, nz:] = 2.0 * np.kron(np.eye(b), R)
    e0 = C @ z0 - ref
    offset = float(e0 @ P @ e0)
    offset += sum(float(ref @ (Pb if k == b else P) @ ref) for k in range(1, b + 1))
    Aeq = np.zeros((nz, nz + nu))
    beq = np.zeros(nz)
    for k in range(b):
        Aeq[k * q:(k + 1) * q, k * q:(k + 1) * q] = np.eye(q)
        if k > 0:
            Aeq[k * q:(k + 1) * q, (k - 1) * q:k * q] = -A
        else:
            beq[:q] = A @ z0
        Aeq[k * q:(k + 1) * q, nz + k * m:nz + (k + 1) * m] = -B
    Ax = np.zeros((b * n, nz + nu))
    for k in range(b):
        Ax[k * n:(k + 1) * n, k * q:(k + 1) * q] = C
    Au = np.hstack([np.zeros((nu, nz)), np.eye(nu)])
    Ac = np.vstack([Aeq, Ax, Au])
    lower = np.concatenate([beq, np.full(b * n, config.x_min), np.full(nu, config.u_min)])
    upper = np.concatenate([beq, np.full(b * n, config.x_max), np.full(nu, config.u_max)])
    return QpProblem(H, g, Ac, lower, upper), offset


class MpcController:
    """Receding-horizon solver that warm-starts each solve from the shifted previous one."""

    def __init__(self, config: MpcConfig, settings: QpSettings | None = None, warm_start: bool = True):
        self.config = config
        self.solver = QpSolver(settings)
        self.warm_start = warm_start
        self._previous: QpSolution | None = None
        self.last_solution: QpSolution | None = None
        self.last_problem: QpProblem | None = None

    def reset(self):
        self._previous = None

    def solve(self, model: KoopmanModel, z0, steps_since_last: int = 1) -> np.ndarray:
        warm = None
        if self.warm_start and self._previous is not None:
            b = self.config.horizon
            prev = self._previous.x
            if self.config.formulation == "sparse":
                nz = b * model.q
                x = np.concatenate([warm_start_shift(prev[:nz], stages=b, shift=steps_since_last),
                                    warm_start_shift(prev[nz:], stages=b, shift=steps_since_last)])
            else:
                x = warm_start_shift(prev, stages=b, shift=steps_since_last)
            warm = WarmStart(x)
        U = solve_mpc(model, z0, self.config, warm=warm, solver=self.solver, _keep=self)
        self._previous = self.last_solution
        return U


def solve_mpc(model: KoopmanModel, z0, config: MpcConfig, warm=None, solver: QpSolver | None = None,
              _keep: MpcController | None = None) -> np.ndarray:
    """Optimal input sequence, shape ``(horizon, m)``."""
    sparse = config.formulation == "sparse"
    if sparse:
        problem, _ = build_sparse_qp(model, z0, config)
    else:
        problem = build_qp(model, z0, config)
    if warm is not None and not isinstance(warm, WarmStart):
        warm = WarmStart(np.asarray(warm, dtype=float).ravel())
    solver = solver or QpSolver()
    sol = solver.solve(problem, warm)
    if _keep is not None:
        _keep.last_solution = sol
        _keep.last_problem = problem
    if sol.status == PRIMAL_INFEASIBLE:
        n = model.C.shape[0]
        Ax = problem.A @ sol.x
        viol = np.maximum(problem.lower - Ax, 0) + np.maximum(Ax - problem.upper, 0)
        first = config.horizon * model.q if sparse else 0
        row = int(np.argmax(viol[first:first + config.horizon * n]))
        stage = row // n + 1
        raise MpcInfeasibleError(f"MPC problem infeasible; output bounds conflict at predicted stage {stage}",
                                 stage=stage)
    U = sol.x[config.horizon * model.q:] if sparse else sol.x
    U = np.clip(U, config.u_min, config.u_max)
    return U.reshape(config.horizon, model.m)
