"""Online pseudo-inverse correction of the Koopman model."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .edmd import KoopmanModel
from .linalg import DEFAULT_RCOND, pseudo_inverse


class AdaptationRejected(ValueError):
    """An update would make the adapted model non-finite."""


@dataclass
class ModelUpdate:
    dA: np.ndarray
    dB: np.ndarray

    def __post_init__(self):
        self.dA = np.atleast_2d(np.asarray(self.dA, dtype=float))
        self.dB = np.asarray(self.dB, dtype=float).reshape(self.dA.shape[0], -1)
        if not (np.all(np.isfinite(self.dA)) and np.all(np.isfinite(self.dB))):
            raise AdaptationRejected("model update has non-finite entries")

    @classmethod
    def zero(cls, q: int, m: int = 1) -> "ModelUpdate":
        return cls(np.zeros((q, q)), np.zeros((q, m)))

    @property
    def stacked(self) -> np.ndarray:
        return np.hstack([self.dA, self.dB])


class AdaptationWindow:
    """Ring buffer of the latest ``capacity`` regressor/error pairs, oldest first.

    Each entry keeps the previous lifted state, the input applied from it, the
    observed lifted state that followed and the prediction error recorded at
    insertion. With ``recompute=True`` the errors are re-evaluated against
    the model current at update time instead.
    """

    def __init__(self, capacity: int = 10, forgetting: float = 0.95, recompute: bool = False):
        if capacity < 1:
            raise ValueError("window capacity must be >= 1")
        if not 0.0 < forgetting <= 1.0:
            raise ValueError("forgetting factor must lie in (0, 1]")
        self.capacity = int(capacity)
        self.forgetting = float(forgetting)
        self.recompute = recompute
        self._entries = deque(maxlen=self.capacity)

    def __len__(self):
        return len(self._entries)

    def clear(self):
        self._entries.clear()

    def push(self, z_prev, u_prev, dz, z_obs=None):
        z_prev = np.asarray(z_prev, dtype=float).copy()
        u_prev = np.atleast_1d(np.asarray(u_prev, dtype=float)).copy()
        dz = np.asarray(dz, dtype=float).copy()
        if dz.shape != z_prev.shape:
            raise ValueError("dz and z_prev must have the same shape")
        z_obs = None if z_obs is None else np.asarray(z_obs, dtype=float).copy()
        self._entries.append((z_prev, u_prev, dz, z_obs))

    def weights(self) -> np.ndarray:
        """``nu**age`` for each entry, oldest first (newest has weight 1)."""
        n = len(self._entries)
        return self.forgetting ** np.arange(n - 1, -1, -1, dtype=float)

    def matrices(self, model: KoopmanModel | None = None):
        """Return ``(dZ_weighted, S)`` with columns ordered oldest to newest."""
        if not self._entries:
            raise ValueError("adaptation window is empty")
        Z = np.stack([e[0] for e in self._entries], axis=1)
        U = np.stack([e[1] for e in self._entries], axis=1)
        if self.recompute and model is not None:
            Zo = np.stack([e[3] for e in self._entries], axis=1)
            dZ = Zo - model.A_hat @ Z - model.B_hat @ U
        else:
            dZ = np.stack([e[2] for e in self._entries], axis=1)
        return dZ * self.weights(), np.vstack([Z, U])


def prediction_error(model: KoopmanModel, z_prev, u_prev, z_obs) -> np.ndarray:
    """Observed minus predicted lifted state under the adapted model."""
    z_prev = np.asarray(z_prev, dtype=float)
    z_obs = np.asarray(z_obs, dtype=float)
    u_prev = np.atleast_1d(np.asarray(u_prev, dtype=float))
    if z_prev.shape != (model.q,) or z_obs.shape != (model.q,) or u_prev.shape != (model.m,):
        raise ValueError("dimension mismatch between model and prediction-error arguments")
    return z_obs - (model.A_hat @ z_prev + model.B_hat @ u_prev)


def compute_update_single(z_prev, u_prev, dz, tol: float = DEFAULT_RCOND) -> ModelUpdate:
    """Rank-one correction ``[dA dB] = dz s^+`` with ``s = [z_prev; u_prev]``.

    The corrected model reproduces ``dz`` exactly on the regressor ``s``;
    a zero regressor yields a zero update.
    """
    z_prev = np.asarray(z_prev, dtype=float)
    u_prev = np.atleast_1d(np.asarray(u_prev, dtype=float))
    dz = np.asarray(dz, dtype=float)
    q = z_prev.size
    s = np.concatenate([z_prev, u_prev])
    if not np.any(s):
        return ModelUpdate.zero(q, u_prev.size)
    X = np.outer(dz, pseudo_inverse(s[:, None], tol).ravel())
    return ModelUpdate(X[:, :q], X[:, q:])


def compute_update_windowed(window: AdaptationWindow, model: KoopmanModel | None = None,
                            tol: float = DEFAULT_RCOND) -> ModelUpdate:
    """Minimum-norm ``[dA dB]`` minimising ``||dZ_w - [dA dB] S||_F`` over the window.

    Forgetting weights scale the error columns only; the regressor columns
    stay unweighted.
    """
    dZ, S = window.matrices(model)
    q = dZ.shape[0]
    X = dZ @ pseudo_inverse(S, tol)
    return ModelUpdate(X[:, :q], X[:, q:])


def apply_update(model: KoopmanModel, update: ModelUpdate) -> KoopmanModel:
    """Add the correction to the adapted estimate in place; nominal matrices are untouched."""
    if update.dA.shape != model.A_hat.shape or update.dB.shape != model.B_hat.shape:
        raise ValueError("update dimensions do not match the model")
    with np.errstate(over="ignore", invalid="ignore"):
        A_new = model.A_hat + update.dA
        B_new = model.B_hat + update.dB
    if not (np.all(np.isfinite(A_new)) and np.all(np.isfinite(B_new))):
        raise AdaptationRejected("adapted model would become non-finite; update rejected")
    model.A_hat = A_new
    model.B_hat = B_new
    return model
