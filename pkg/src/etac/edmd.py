"""Offline training data and the least-squares Koopman fit."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import DEFAULT_RCOND, numerical_rank, pseudo_inverse
from .observables import DEFAULT_DICTIONARY, ObservableDictionary
from . import plant

log = logging.getLogger(__name__)


class SingularRegressorError(np.linalg.LinAlgError):
    pass


@dataclass
class TrajectoryDataset:
    """Snapshot triples ``(x_j, u_j, x_{j+1})`` tagged with trajectory id and step."""

    traj_id: np.ndarray
    step: np.ndarray
    x: np.ndarray
    u: np.ndarray
    x_next: np.ndarray
    n_traj: int = 0
    traj_len: int = 0
    truncated: int = 0

    def __len__(self):
        return len(self.x)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["traj_id", "step", "x", "u", "x_next"])
            for row in zip(self.traj_id, self.step, self.x, self.u, self.x_next):
                w.writerow([int(row[0]), int(row[1])] + [repr(float(v)) for v in row[2:]])

    @classmethod
    def from_csv(cls, path) -> "TrajectoryDataset":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: empty dataset")
        col = lambda k, t=float: np.array([t(r[k]) for r in rows])
        traj = col("traj_id", int)
        return cls(traj, col("step", int), col("x"), col("u"), col("x_next"),
                   n_traj=len(np.unique(traj)))


@dataclass
class KoopmanModel:
    """Lifted linear model ``z+ = A z + B u``, ``x = C z`` plus its adapted copy."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray = None
    A_hat: np.ndarray = None
    B_hat: np.ndarray = None

    def __post_init__(self):
        self.A = np.array(self.A, dtype=float, ndmin=2)
        self.B = np.array(self.B, dtype=float).reshape(self.A.shape[0], -1)
        q = self.A.shape[0]
        if self.A.shape != (q, q):
            raise ValueError(f"A must be square, got {self.A.shape}")
        if self.C is None:
            self.C = np.zeros((1, q))
            self.C[0, 0] = 1.0
        self.C = np.array(self.C, dtype=float, ndmin=2)
        n = self.C.shape[0]
        expected_C = np.hstack([np.eye(n), np.zeros((n, q - n))])
        if not np.array_equal(self.C, expected_C):
            raise ValueError("C must be [I 0]")
        self.A_hat = self.A.copy() if self.A_hat is None else np.array(self.A_hat, dtype=float)
        self.B_hat = self.B.copy() if self.B_hat is None else np.array(self.B_hat, dtype=float).reshape(self.B.shape)
        if self.A_hat.shape != self.A.shape:
            raise ValueError("A_hat shape mismatch")
        for name in ("A", "B", "A_hat", "B_hat"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")

    @property
    def q(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def copy(self) -> "KoopmanModel":
        return KoopmanModel(self.A.copy(), self.B.copy(), self.C.copy(), self.A_hat.copy(), self.B_hat.copy())

    def reset(self):
        """Discard adaptation, returning to the nominal fit."""
        self.A_hat = self.A.copy()
        self.B_hat = self.B.copy()

    def predict(self, z, u, adapted: bool = True) -> np.ndarray:
        A, B = (self.A_hat, self.B_hat) if adapted else (self.A, self.B)
        return A @ np.asarray(z, dtype=float) + B @ np.atleast_1d(np.asarray(u, dtype=float))

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "m": self.m,
            "n": self.C.shape[0],
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KoopmanModel":
        model = cls(np.array(d["A"]), np.array(d["B"]), np.array(d["C"]) if "C" in d else None)
        if model.q != d.get("q", model.q) or model.m != d.get("m", model.m):
            raise ValueError("model dimensions disagree with stored q/m")
        return model

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "KoopmanModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def generate_training_data(n_traj: int = 100, traj_len: int = 150, rng_seed: int = 0, dt: float = 0.01,
                           h_range=(1.0, 10.0), v_range=(-2.0, 2.0), u_range=(-3.0, 3.0),
                           h_touchdown: float = plant.TOUCHDOWN_HEIGHT, x_bounds=None) -> TrajectoryDataset:
    """Simulate the nominal plant (no ground effect, static deck, no noise).

    Each trajectory uses its own RNG stream spawned from ``rng_seed``.
    Trajectories that reach the surface, or whose optic flow leaves
    ``x_bounds`` when given, are truncated and counted.
    """
    x_lo, x_hi = (-math.inf, math.inf) if x_bounds is None else x_bounds
    if n_traj < 1 or traj_len < 2:
        raise ValueError("need n_traj >= 1 and traj_len >= 2")
    streams = np.random.SeedSequence(rng_seed).spawn(n_traj)
    ids, steps, xs, us, xn = [], [], [], [], []
    truncated = 0
    for j, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        state = plant.PlantState.from_height_velocity(rng.uniform(*h_range), rng.uniform(*v_range))
        inputs = rng.uniform(u_range[0], u_range[1], traj_len - 1)
        for k, u in enumerate(inputs):
            nxt = plant.step(state, u, dt=dt, h_touchdown=h_touchdown)
            if nxt.touchdown or not x_lo <= nxt.x <= x_hi:
                truncated += 1
                break
            ids.append(j)
            steps.append(k)
            xs.append(state.x)
            us.append(u)
            xn.append(nxt.x)
            state = nxt
    if truncated:
        log.info("%d of %d training trajectories truncated", truncated, n_traj)
    return TrajectoryDataset(np.array(ids, dtype=int), np.array(steps, dtype=int), np.array(xs),
                             np.array(us), np.array(xn), n_traj=n_traj, traj_len=traj_len,
                             truncated=truncated)


def fit_edmd(dataset: TrajectoryDataset, dictionary: ObservableDictionary = DEFAULT_DICTIONARY,
             ridge: float = 1e-8, rcond: float = DEFAULT_RCOND) -> KoopmanModel:
    """Least-squares fit of ``[A B]`` minimising the one-step lifted residual.

    Solves ``min sum ||z_{j+1} - A z_j - B u_j||^2 + ridge ||[A B]||_F^2``
    through the pseudo-inverse of the ridge-augmented regressor.
    """
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    N = len(dataset)
    if N == 0:
        raise ValueError("cannot fit a model to an empty dataset")
    Z = np.stack([dictionary.lift(x) for x in dataset.x], axis=1)
    Zn = np.stack([dictionary.lift(x) for x in dataset.x_next], axis=1)
    U = np.atleast_2d(np.asarray(dataset.u, dtype=float))
    return fit_lifted(Z, U, Zn, ridge=ridge, rcond=rcond)


def fit_lifted(Z, U, Z_next, ridge: float = 1e-8, rcond: float = DEFAULT_RCOND) -> KoopmanModel:
    """Fit from already-lifted snapshot matrices (columns are samples)."""
    Z = np.atleast_2d(Z)
    U = np.atleast_2d(U)
    Z_next = np.atleast_2d(Z_next)
    q, N = Z.shape
    S = np.vstack([Z, U])
    p = S.shape[0]
    if N == 0:
        raise ValueError("cannot fit a model to an empty dataset")
    if not (np.all(np.isfinite(S)) and np.all(np.isfinite(Z_next))):
        raise ValueError("dataset contains non-finite entries")
    if ridge == 0.0:
        if N < p or numerical_rank(S, rcond) < p:
            raise SingularRegressorError(
                "regressor [Z; U] is rank deficient; use ridge > 0 to regularise the fit")
        AB = Z_next @ pseudo_inverse(S, rcond)
    else:
        # min ||Z_next - X S||^2 + ridge ||X||^2 == plain LS on [S, sqrt(ridge) I]
        S_aug = np.hstack([S, math.sqrt(ridge) * np.eye(p)])
        T_aug = np.hstack([Z_next, np.zeros((q, p))])
        AB = T_aug @ pseudo_inverse(S_aug, rcond)
    return KoopmanModel(AB[:, :q], AB[:, q:])


def residual(model: KoopmanModel, Z, U, Z_next, adapted: bool = False) -> float:
    A, B = (model.A_hat, model.B_hat) if adapted else (model.A, model.B)
    return float(np.sum((np.atleast_2d(Z_next) - A @ np.atleast_2d(Z) - B @ np.atleast_2d(U)) ** 2))
