"""Vertical landing plant: optic-flow dynamics with ground effect and a moving deck.

State is the height ``h`` above the (moving) landing surface and the optic
flow ``x = v / h`` where ``v = dh/dt`` is the relative vertical rate, so a
descent has ``x < 0`` and ``h(t) = h(0) exp(x t)`` at constant flow. The
commanded acceleration ``u`` is amplified by the ground-effect factor
``zeta(h)``::

    dx/dt = -x**2 + zeta*u/h + (zeta - 1)*g/h - a_p(t)/h
    dh/dt = x*h
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GRAVITY = 9.81
TOUCHDOWN_HEIGHT = 0.05


@dataclass(frozen=True)
class PlantState:
    h: float
    x: float
    t: float = 0.0
    touchdown: bool = False

    @property
    def v(self) -> float:
        return self.x * self.h

    @classmethod
    def from_height_velocity(cls, h0: float, v0: float, t: float = 0.0) -> "PlantState":
        if h0 <= 0:
            raise ValueError(f"initial height must be positive, got {h0}")
        return cls(h=float(h0), x=float(v0) / float(h0), t=float(t))


@dataclass(frozen=True)
class PlatformMotion:
    """Deck height as an averaged sum of sinusoids around ``offset``.

    Each component contributes ``amplitude * sin(omega * t + theta)`` and the
    sum is divided by ``divisor`` (the component count by default), keeping
    the excursion within one amplitude of the offset.
    """

    amplitudes: tuple = ()
    omegas: tuple = ()
    thetas: tuple = ()
    offset: float = 0.0
    divisor: float | None = None

    def __post_init__(self):
        n = len(self.amplitudes)
        if len(self.omegas) != n or len(self.thetas) != n:
            raise ValueError("amplitudes, omegas and thetas must have equal length")

    @property
    def _scale(self) -> float:
        n = len(self.amplitudes)
        if n == 0:
            return 0.0
        return 1.0 / (self.divisor if self.divisor is not None else n)

    @classmethod
    def static(cls, offset: float = 0.0) -> "PlatformMotion":
        return cls(offset=offset)

    @classmethod
    def random(cls, rng: np.random.Generator, n_components: int = 10, amplitude: float = 0.5,
               omega_range=(0.1, 1.0), offset: float | None = None) -> "PlatformMotion":
        omegas = rng.uniform(omega_range[0], omega_range[1], n_components)
        thetas = rng.uniform(0.0, 2 * math.pi, n_components)
        return cls(
            amplitudes=tuple([float(amplitude)] * n_components),
            omegas=tuple(float(w) for w in omegas),
            thetas=tuple(float(th) for th in thetas),
            offset=float(amplitude if offset is None else offset),
        )

    def height(self, t: float) -> float:
        s = sum(a * math.sin(w * t + th) for a, w, th in zip(self.amplitudes, self.omegas, self.thetas))
        return self.offset + self._scale * s

    def accel(self, t: float) -> float:
        s = sum(a * w * w * math.sin(w * t + th) for a, w, th in zip(self.amplitudes, self.omegas, self.thetas))
        return -self._scale * s


def platform_height(motion: PlatformMotion, t: float) -> float:
    return motion.height(t)


def platform_accel(motion: PlatformMotion, t: float) -> float:
    return motion.accel(t)


@dataclass(frozen=True)
class GroundEffectModel:
    """Cheeseman-Bennett in-ground-effect thrust ratio, capped at ``zeta_cap``."""

    enabled: bool = True
    rotor_radius: float = 0.15
    zeta_cap: float = 2.0

    def factor(self, h: float) -> float:
        if h <= 0:
            raise ValueError(f"ground effect undefined for height {h} <= 0")
        if not self.enabled:
            return 1.0
        r = self.rotor_radius / (4.0 * h)
        if r >= 1.0:
            return self.zeta_cap
        return min(self.zeta_cap, 1.0 / (1.0 - r * r))


def ground_effect_factor(model: GroundEffectModel, h: float) -> float:
    return model.factor(h)


NO_GROUND_EFFECT = GroundEffectModel(enabled=False)
STATIC_PLATFORM = PlatformMotion.static()


def derivatives(t: float, x: float, h: float, u: float, motion: PlatformMotion,
                ge: GroundEffectModel, g: float = GRAVITY) -> tuple[float, float]:
    """Right-hand side ``(dx/dt, dh/dt)``."""
    zeta = ge.factor(h)
    a_p = motion.accel(t) if motion.amplitudes else 0.0
    dx = -x * x + (zeta * u + (zeta - 1.0) * g - a_p) / h
    return dx, x * h


def step(state: PlantState, u: float, motion: PlatformMotion = STATIC_PLATFORM,
         ge: GroundEffectModel = NO_GROUND_EFFECT, dt: float = 0.01,
         h_touchdown: float = TOUCHDOWN_HEIGHT) -> PlantState:
    """Advance one zero-order-hold step with classical RK4."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if state.touchdown:
        return state
    if state.h <= 0:
        raise ValueError("plant height must be positive before stepping")
    t, x, h = state.t, state.x, state.h

    def f(tt, xx, hh):
        # a stage evaluated below the surface lands the vehicle
        if hh <= 0 or not math.isfinite(hh):
            raise _BelowGround
        return derivatives(tt, xx, hh, u, motion, ge)

    try:
        k1x, k1h = f(t, x, h)
        k2x, k2h = f(t + dt / 2, x + dt / 2 * k1x, h + dt / 2 * k1h)
        k3x, k3h = f(t + dt / 2, x + dt / 2 * k2x, h + dt / 2 * k2h)
        k4x, k4h = f(t + dt, x + dt * k3x, h + dt * k3h)
    except _BelowGround:
        return PlantState(h=h_touchdown, x=x, t=t + dt, touchdown=True)
    x_new = x + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
    h_new = h + dt / 6 * (k1h + 2 * k2h + 2 * k3h + k4h)
    if h_new <= h_touchdown:
        return PlantState(h=h_new if h_new > 0 else h_touchdown, x=x_new, t=t + dt, touchdown=True)
    return PlantState(h=h_new, x=x_new, t=t + dt)


class _BelowGround(Exception):
    pass


def measure_optic_flow(state: PlantState, snr_db: float | None, rng: np.random.Generator | None) -> float:
    """Noisy optic flow, ``sigma_n = |x| * 10**(-snr_db / 20)``; ``snr_db=None`` disables noise."""
    if snr_db is None:
        return state.x
    if snr_db <= 0:
        raise ValueError("snr_db must be positive")
    sigma = abs(state.x) * 10.0 ** (-snr_db / 20.0)
    return state.x + sigma * rng.standard_normal()


def noise_std(x: float, snr_db: float) -> float:
    return abs(x) * 10.0 ** (-snr_db / 20.0)
