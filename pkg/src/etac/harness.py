"""Closed-loop experiment runner: plant, adaptation, triggers and MPC wired per step."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import plant
from .adaptation import AdaptationRejected, AdaptationWindow, apply_update, compute_update_windowed
from .config import RunConfig
from .edmd import KoopmanModel, fit_edmd, generate_training_data
from .mpc import ModelBlowUpError, MpcController, MpcInfeasibleError
from .qp import QpNumericalError
from .observables import ObservableDictionary
from .triggers import (EventLog, EventRecord, adaptation_trigger, control_epsilon, control_trigger,
                       lyapunov_a)

log = logging.getLogger(__name__)

TRAJECTORY_FIELDS = ("t", "h_rel", "h_abs", "h_platform", "v", "x_true", "x_meas", "x_pred", "u",
                     "V_a", "epsilon", "adapt_event", "control_event")


class RunAborted(RuntimeError):
    def __init__(self, message, row, result=None):
        super().__init__(f"{message} (at row {row})")
        self.row = row
        self.result = result


@dataclass
class RunResult:
    config: RunConfig
    rows: list = field(default_factory=list)
    events: EventLog = field(default_factory=EventLog)
    compute_times: list = field(default_factory=list)
    mpc_costs: list = field(default_factory=list)
    touchdown: bool = False
    final_state: plant.PlantState | None = None
    aborted: str | None = None

    def column(self, name) -> np.ndarray:
        idx = TRAJECTORY_FIELDS.index(name)
        return np.array([r[idx] for r in self.rows], dtype=float)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRAJECTORY_FIELDS)
            for r in self.rows:
                w.writerow([f"{v:.9g}" for v in r[:11]] + [int(r[11]), int(r[12])])


def training_dataset(config: RunConfig):
    """Nominal training data with inputs and optic flow kept inside the MPC bounds."""
    mc = config.model
    return generate_training_data(mc.n_traj, mc.traj_len, rng_seed=mc.train_seed, dt=config.plant.dt,
                                  u_range=(config.mpc.u_min, config.mpc.u_max),
                                  h_touchdown=config.plant.h_touchdown,
                                  x_bounds=(config.mpc.x_min, config.mpc.x_max))


def train_model(config: RunConfig, data=None) -> KoopmanModel:
    if data is None:
        data = training_dataset(config)
    return fit_edmd(data, ObservableDictionary(config.model.degree), ridge=config.model.ridge)


def resolve_model(config: RunConfig) -> KoopmanModel:
    if config.model.source == "train":
        return train_model(config)
    return KoopmanModel.load(config.model.source)


def build_environment(config: RunConfig):
    """Deck motion, ground-effect model and measurement RNG for one seeded run."""
    pc = config.plant
    platform_ss, noise_ss = np.random.SeedSequence(config.seed).spawn(2)
    if pc.platform:
        motion = plant.PlatformMotion.random(np.random.default_rng(platform_ss), pc.platform_components,
                                             pc.platform_amplitude)
    else:
        motion = plant.PlatformMotion.static(0.0)
    ge = plant.GroundEffectModel(pc.ground_effect, pc.rotor_radius, pc.zeta_cap)
    return motion, ge, np.random.default_rng(noise_ss)


def run_closed_loop(config: RunConfig, model: KoopmanModel) -> RunResult:
    """Simulate one landing until touchdown or ``max_time``.

    The supplied model is copied; its adapted matrices start from the nominal fit.
    """
    dictionary = ObservableDictionary(model.q)
    model = model.copy()
    model.reset()
    params = config.trigger_params(model.q)
    mpc_cfg = config.mpc
    b = mpc_cfg.horizon
    pc = config.plant
    motion, ge, rng = build_environment(config)
    window = AdaptationWindow(config.adaptation.window, config.adaptation.forgetting,
                              recompute=config.adaptation.recompute)
    controller = MpcController(mpc_cfg)
    z_ref = dictionary.lift(mpc_cfg.x_ref)
    ttac = config.mode == "TTAC"

    state = plant.PlantState.from_height_velocity(config.h0, config.v0)
    result = RunResult(config)
    n_steps = int(math.ceil(config.max_time / pc.dt - 1e-9))

    z_prev = u_prev = None
    e_prev = 0.0
    U_star = None
    k_ev = 0
    for k in range(n_steps):
        x_meas = plant.measure_optic_flow(state, pc.snr_db, rng)
        t0 = time.perf_counter()
        z_obs = dictionary.lift(x_meas)

        if z_prev is None:
            z_hat = z_obs
        else:
            z_hat = model.predict(z_prev, u_prev)
        x_pred = float(z_hat[0])
        e_k = x_meas - x_pred
        V_a = lyapunov_a(e_k)

        # the time-triggered schedule fires at step 0 too, with nothing to learn from yet
        adapt_event = ttac and z_prev is None
        if config.adapts and z_prev is not None:
            fire = ttac or adaptation_trigger(e_k, e_prev, params)
            if fire or config.adaptation.push == "always":
                window.push(z_prev, u_prev, z_obs - z_hat, z_obs)
            if fire:
                # a rejected update still counts as an event: the trigger fired and the log must say so
                adapt_event = True
                try:
                    apply_update(model, compute_update_windowed(window, model, config.adaptation.rcond))
                except AdaptationRejected as exc:
                    log.warning("step %d: %s", k, exc)

        if U_star is not None:
            i = k - k_ev
            u_cand = U_star[min(i, b - 1)]
            eps = control_epsilon(model, z_hat - z_ref, u_cand, z_ref, params)
        else:
            i, u_cand, eps = 0, None, math.inf

        control_event = ttac or U_star is None or control_trigger(eps, i, params)
        if control_event:
            try:
                U_star = controller.solve(model, z_obs, steps_since_last=k - k_ev)
            except (MpcInfeasibleError, ModelBlowUpError, QpNumericalError, np.linalg.LinAlgError,
                    ValueError) as exc:
                result.aborted = str(exc)
                result.final_state = state
                raise RunAborted(str(exc), k, result) from exc
            result.mpc_costs.append((k, controller.last_solution.objective))
            k_ev = k
            i = 0
            u = U_star[0]
        else:
            u = u_cand
        result.compute_times.append(time.perf_counter() - t0)

        h_p = motion.height(state.t)
        result.rows.append((state.t, state.h, state.h + h_p, h_p, state.v, state.x, x_meas, x_pred,
                            float(u[0]), V_a, eps, adapt_event, control_event))
        result.events.append(EventRecord(k, V_a, adapt_event, eps, control_event, i))

        z_prev, u_prev, e_prev = z_obs, u, e_k
        state = plant.step(state, float(u[0]), motion, ge, pc.dt, pc.h_touchdown)
        if state.touchdown:
            result.touchdown = True
            break
    result.final_state = state
    return result


METRIC_FIELDS = ("iterations", "avg_compute_time_s", "control_effort", "rmse_last4s", "rmse_window_s",
                 "rmse_full_run", "terminal_time", "terminal_altitude", "terminal_velocity",
                 "touchdown", "adaptation_events", "control_events", "total_events",
                 "events_avoided")


def compute_metrics(result: RunResult, window_s: float = 4.0) -> dict:
    """Table-style summary of one run."""
    if not result.rows:
        raise ValueError("cannot compute metrics of an empty run")
    dt = result.config.plant.dt
    t = result.column("t")
    x = result.column("x_true")
    u = result.column("u")
    n = len(t)
    t_end = result.final_state.t if result.final_state is not None else t[-1] + dt
    full = (t_end - t[0]) < window_s - 1e-9
    mask = np.ones(n, bool) if full else t >= t_end - window_s - 1e-9
    err = x[mask] - result.config.mpc.x_ref
    adapt = int(result.column("adapt_event").sum())
    control = int(result.column("control_event").sum())
    fs = result.final_state
    return {
        "iterations": n,
        "avg_compute_time_s": float(np.mean(result.compute_times)),
        "control_effort": float(np.sum(np.abs(u)) * dt),
        "rmse_last4s": float(np.sqrt(np.mean(err ** 2))),
        "rmse_window_s": float(window_s),
        "rmse_full_run": bool(full),
        "terminal_time": float(t_end),
        "terminal_altitude": float(fs.h) if fs is not None else float(result.column("h_rel")[-1]),
        "terminal_velocity": float(fs.v) if fs is not None else float(result.column("v")[-1]),
        "touchdown": bool(result.touchdown),
        "adaptation_events": adapt,
        "control_events": control,
        "total_events": adapt + control,
        "events_avoided": 2 * n - adapt - control,
    }


def write_metrics(metrics: dict, path):
    with open(path, "w") as fh:
        json.dump(metrics, fh, indent=2)
        fh.write("\n")
