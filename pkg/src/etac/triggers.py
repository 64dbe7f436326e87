"""Lyapunov-based event triggers for adaptation and control, and their analytic bounds."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class TriggerParams:
    """Thresholds and decay rates for both triggers.

    ``sigma``/``beta`` govern the adaptation trigger on ``V_a = e'e``;
    ``gamma``/``alpha`` and the weight ``Q`` govern the control trigger on
    ``V_c = e~' Q e~``. ``horizon`` caps the number of held inputs.
    """

    sigma: float = 5e-8
    beta: float = 0.09
    gamma: float = 1e-4
    alpha: float = 0.09
    Q: np.ndarray = None
    horizon: int = 20

    def __post_init__(self):
        if self.Q is None:
            self.Q = 100.0 * np.eye(2)
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if self.sigma <= 0 or self.gamma <= 0:
            raise ValueError("sigma and gamma must be positive")
        if not (0 < self.alpha < 1 and 0 < self.beta < 1):
            raise ValueError("alpha and beta must lie in (0, 1)")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.Q.shape[0] != self.Q.shape[1] or not np.allclose(self.Q, self.Q.T, rtol=0, atol=1e-12):
            raise ValueError("Q must be square and symmetric")
        try:
            np.linalg.cholesky(self.Q)
        except np.linalg.LinAlgError:
            raise ValueError("Q must be positive definite") from None


def lyapunov_a(e) -> float:
    e = np.atleast_1d(np.asarray(e, dtype=float))
    return float(e @ e)


def lyapunov_c(e_tilde, Q) -> float:
    e_tilde = np.asarray(e_tilde, dtype=float)
    return float(e_tilde @ Q @ e_tilde)


def adaptation_decrease(e_k, e_prev, beta: float) -> float:
    """``V_a(e_k) - V_a(e_prev) + beta * V_a(e_prev)``.

    The decay term is taken on the earlier error so that a non-trigger
    certifies ``V_a(e_k) <= (1 - beta) V_a(e_prev) + sigma``.
    """
    v_k, v_prev = lyapunov_a(e_k), lyapunov_a(e_prev)
    return (v_k - v_prev) + beta * v_prev


def adaptation_trigger(e_k, e_prev, params: TriggerParams) -> bool:
    return adaptation_decrease(e_k, e_prev, params.beta) > params.sigma


def control_matrix(A_hat, B_hat, Q) -> np.ndarray:
    """Block matrix ``M = [[A'QA - Q, A'QB], [B'QA, B'QB]]``."""
    AQ = A_hat.T @ Q
    BQ = B_hat.T @ Q
    return np.block([[AQ @ A_hat - Q, AQ @ B_hat], [BQ @ A_hat, BQ @ B_hat]])


def control_epsilon(model, e_tilde, u, z_ref, params: TriggerParams) -> float:
    """Control Lyapunov residual ``eps_k``; the hold is acceptable while ``eps_k <= gamma``.

    Expanded quadratic form of ``V_c(e~_{k+1}) - V_c(e~_k) + alpha V_c(e~_k)``
    under the adapted model with a constant reference.
    """
    A, B, Q = model.A_hat, model.B_hat, params.Q
    e_tilde = np.asarray(e_tilde, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    z_ref = np.asarray(z_ref, dtype=float)
    q = A.shape[0]
    if e_tilde.shape != (q,) or z_ref.shape != (q,) or u.shape != (B.shape[1],) or Q.shape != (q, q):
        raise ValueError("dimension mismatch in control_epsilon")
    qv = np.concatenate([e_tilde, u])
    d = A @ z_ref - z_ref
    Qd = Q @ d
    return float(
        qv @ control_matrix(A, B, Q) @ qv
        + params.alpha * (e_tilde @ Q @ e_tilde)
        + 2.0 * (e_tilde @ A.T @ Qd)
        + 2.0 * (u @ B.T @ Qd)
        + d @ Qd
    )


def control_trigger(epsilon: float, i: int, params: TriggerParams) -> bool:
    if i < 0:
        raise ValueError("hold counter must be non-negative")
    return epsilon > params.gamma or i > params.horizon


@dataclass
class Bounds:
    prediction_bound: float
    tracking_bound: float
    zeno_steps: float
    z_max: float
    lipschitz: float
    m_bar: float


def theoretic_bounds(params: TriggerParams, model, x_bounds, u_bounds) -> Bounds:
    """Ultimate bounds on prediction and tracking error and the minimum inter-event step count."""
    eig = np.linalg.eigvalsh(params.Q)
    if eig[0] <= 0:
        raise ValueError("Q must be positive definite")
    pred = math.sqrt(params.sigma / params.beta)
    track = pred + math.sqrt(params.gamma / (params.alpha * eig[0]))
    L1 = max(abs(x_bounds[0]), abs(x_bounds[1]))
    L2 = max(abs(u_bounds[0]), abs(u_bounds[1]))
    z_max = math.sqrt(L1 ** 2 + L1 ** 4)
    L_v = 4.0 * eig[-1] * z_max
    M_A = np.linalg.norm(model.A_hat - np.eye(model.q), 2)
    M_B = np.linalg.norm(model.B_hat, 2)
    m_bar = M_A * z_max + M_B * L2
    denom = L_v * m_bar * (2.0 + params.alpha)
    zeno = math.inf if denom == 0 else params.gamma / denom
    return Bounds(pred, track, zeno, z_max, L_v, m_bar)


EVENT_FIELDS = ("k", "V_a", "adaptation_triggered", "epsilon", "control_triggered", "i")


@dataclass
class EventRecord:
    k: int
    V_a: float
    adaptation_triggered: bool
    epsilon: float
    control_triggered: bool
    i: int


@dataclass
class EventLog:
    records: list = field(default_factory=list)

    def append(self, record: EventRecord):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def control_gaps(self) -> list[int]:
        ks = [r.k for r in self.records if r.control_triggered]
        return [b - a for a, b in zip(ks, ks[1:])]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(EVENT_FIELDS)
            for r in self.records:
                w.writerow([r.k, f"{r.V_a:.9g}", int(r.adaptation_triggered), f"{r.epsilon:.9g}",
                            int(r.control_triggered), r.i])
