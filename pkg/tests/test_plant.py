import math

import numpy as np
import scipy.integrate
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etac import plant
from etac.plant import (GRAVITY, NO_GROUND_EFFECT, STATIC_PLATFORM, GroundEffectModel, PlantState, PlatformMotion,
                        ground_effect_factor, measure_optic_flow, noise_std, platform_accel, platform_height)


def riccati(x0, t):
    return x0 / (1.0 + x0 * t)


def test_riccati_closed_form_per_step():
    state = PlantState(h=5.0, x=0.2)
    for _ in range(100):
        nxt = plant.step(state, 0.0, dt=0.01)
        assert abs(nxt.x - riccati(state.x, 0.01)) <= 1e-8
        state = nxt


def test_riccati_over_ten_seconds():
    x0 = 0.2
    state = PlantState(h=5.0, x=x0)
    worst = 0.0
    for _ in range(1000):
        state = plant.step(state, 0.0, STATIC_PLATFORM, NO_GROUND_EFFECT, 0.01)
        worst = max(worst, abs(state.x - riccati(x0, state.t)))
    assert worst <= 1e-6


def test_log_height_integrates_flow():
    # d(ln h)/dt = x, so h(t) = h(0) exp(x t) whenever x is held constant
    state = PlantState(h=4.0, x=-0.3)
    xs, hs = [state.x], [state.h]
    for _ in range(200):
        state = plant.step(state, state.x ** 2 * state.h + 0.05, dt=0.01)
        xs.append(state.x)
        hs.append(state.h)
    integral = scipy.integrate.trapezoid(xs, dx=0.01)
    assert math.log(hs[-1] / hs[0]) == pytest.approx(integral, abs=1e-6)


def test_equilibrium_input_zeroes_flow_rate():
    for x, h in [(-0.3, 4.0), (0.1, 3.0), (-1.2, 0.5)]:
        dx, dh = plant.derivatives(0.0, x, h, x * x * h, STATIC_PLATFORM, NO_GROUND_EFFECT)
        assert abs(dx) <= 1e-15
        assert dh == x * h


def test_equilibrium_input_zero_order_hold_drift():
    # the input is held over each step, so the flow drifts only at second order in dt
    state = PlantState(h=3.0, x=-0.3)
    for _ in range(100):
        state = plant.step(state, state.x ** 2 * state.h, dt=0.01)
    assert abs(state.x + 0.3) <= 100 * 0.3 ** 3 * 0.01 ** 2


def test_rk4_fourth_order():
    # one-step error against a fine reference shrinks ~16x per halving of dt
    ge = GroundEffectModel(True, 0.15)
    motion = PlatformMotion((0.5,), (0.7,), (0.3,), 0.5, divisor=1)
    s0 = PlantState(h=1.0, x=-0.4)

    def advance(dt, n):
        s = s0
        for _ in range(n):
            s = plant.step(s, 0.5, motion, ge, dt)
        return s

    ref = advance(0.2 / 256, 256)
    err = [abs(advance(0.2 / n, n).x - ref.x) for n in (1, 2)]
    ratio = err[0] / err[1]
    assert 8.0 <= ratio <= 32.0


def test_velocity_identity():
    s = PlantState.from_height_velocity(5.0, 1.0)
    assert s.x == pytest.approx(0.2)
    assert abs(s.v - 1.0) <= 1e-12


def test_touchdown_flagged_and_frozen():
    s = PlantState(h=0.0502, x=-0.5)
    s = plant.step(s, 0.0, dt=0.01)
    assert s.touchdown
    assert plant.step(s, 1.0, dt=0.01) is s


def test_step_rejects_bad_inputs():
    with pytest.raises(ValueError):
        plant.step(PlantState(h=1.0, x=0.0), 0.0, dt=0.0)
    with pytest.raises(ValueError):
        PlantState.from_height_velocity(0.0, 1.0)


class TestPlatform:
    def test_zero_phase_at_origin(self):
        m = PlatformMotion((0.5, 0.5), (0.3, 0.8), (0.0, 0.0), offset=0.5)
        assert platform_height(m, 0.0) == 0.5
        assert platform_accel(m, 0.0) == 0.0

    def test_single_component(self):
        m = PlatformMotion((0.5,), (1.0,), (math.pi / 2,), offset=0.2, divisor=1)
        assert platform_height(m, 0.0) == pytest.approx(0.7)
        assert platform_accel(m, 0.0) == pytest.approx(-0.5)

    def test_accel_is_second_derivative(self, rng):
        m = PlatformMotion.random(rng)
        t, h = 3.7, 1e-3
        fd = (m.height(t + h) - 2 * m.height(t) + m.height(t - h)) / h ** 2
        assert m.accel(t) == pytest.approx(fd, abs=1e-6)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0, 200))
    def test_amplitude_bound(self, seed, t):
        m = PlatformMotion.random(np.random.default_rng(seed))
        assert abs(m.height(t) - m.offset) <= 0.5 + 1e-12

    def test_random_ranges(self, rng):
        m = PlatformMotion.random(rng)
        assert len(m.omegas) == 10
        assert all(0.1 <= w <= 1.0 for w in m.omegas)
        assert all(0.0 <= th < 2 * math.pi for th in m.thetas)

    def test_static(self):
        assert STATIC_PLATFORM.height(12.0) == 0.0
        assert STATIC_PLATFORM.accel(12.0) == 0.0


class TestGroundEffect:
    def test_far_field(self):
        assert abs(ground_effect_factor(GroundEffectModel(True, 0.15), 1e6) - 1.0) <= 1e-10

    def test_formula_value(self):
        assert ground_effect_factor(GroundEffectModel(True, 0.15), 0.3) == pytest.approx(1 / (1 - 0.125 ** 2))

    def test_disabled(self):
        assert ground_effect_factor(NO_GROUND_EFFECT, 0.01) == 1.0

    def test_cap(self):
        ge = GroundEffectModel(True, 0.15, zeta_cap=2.0)
        assert ge.factor(0.01) == 2.0
        assert ge.factor(0.15 / 4) == 2.0

    def test_domain_error(self):
        with pytest.raises(ValueError):
            GroundEffectModel().factor(0.0)

    @given(st.floats(1e-4, 1e4), st.floats(0.01, 1.0))
    def test_factor_at_least_one_and_monotone(self, h, radius):
        ge = GroundEffectModel(True, radius)
        z = ge.factor(h)
        assert 1.0 <= z <= ge.zeta_cap
        assert ge.factor(2 * h) <= z
        assert (z - 1.0) * GRAVITY / h >= 0.0


class TestMeasurement:
    def test_disabled(self):
        s = PlantState(h=1.0, x=-0.3)
        assert measure_optic_flow(s, None, None) == -0.3

    def test_noise_std_example(self):
        assert noise_std(-0.3, 35.0) == pytest.approx(5.33e-3, rel=1e-3)

    def test_empirical_snr(self, rng):
        x = -0.3
        s = PlantState(h=1.0, x=x)
        samples = np.array([measure_optic_flow(s, 35.0, rng) for _ in range(100_000)])
        noise = samples - x
        snr = 20 * math.log10(abs(x) / noise.std())
        assert abs(snr - 35.0) <= 0.5
        assert abs(noise.mean()) <= 5 * noise.std() / math.sqrt(noise.size)

    def test_rejects_non_positive_snr(self, rng):
        with pytest.raises(ValueError):
            measure_optic_flow(PlantState(h=1.0, x=0.1), 0.0, rng)
