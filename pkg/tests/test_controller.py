import numpy as np
import pytest

from cyborg_beetle.controller import (
    ControlError,
    ControlGoal,
    MocapEstimator,
    StateEstimate,
    closed_loop_sim,
    control_step,
)
from cyborg_beetle.geometry import Vec3
from cyborg_beetle.stimulus import StimTarget


def est(t_ms=1000.0, alt=2.0, speed=2.0):
    return StateEstimate(t_ms=t_ms, altitude_m=alt, speed_mps=speed)


ALT_GOAL = ControlGoal(mode="altitude_hold", target=2.0, kp=60.0,
                       deadband=0.1)
BRAKE_GOAL = ControlGoal(mode="brake_to_speed", target=1.2, kp=5.0,
                         deadband=0.23)


class TestGoalValidation:
    def test_refractory_must_cover_train(self):
        with pytest.raises(ControlError):
            ControlGoal(mode="altitude_hold", target=2.0, refractory_ms=400.0)

    def test_unknown_mode(self):
        with pytest.raises(ControlError):
            ControlGoal(mode="hover", target=2.0)

    def test_negative_deadband(self):
        with pytest.raises(ControlError):
            ControlGoal(mode="altitude_hold", target=2.0, deadband=-0.1)

    def test_json_round_trip(self):
        back = ControlGoal.from_json(ALT_GOAL.to_json())
        assert back == ALT_GOAL


class TestControlStep:
    def test_zero_error_holds(self):
        cmd, status = control_step(est(alt=2.0), ALT_GOAL, 1000.0)
        assert cmd is None and status == "hold"

    def test_gain_law_example(self):
        # 0.5 m below target, kp = 60 Hz/m, f_lo = 63 -> min(63+30, 100)
        cmd, status = control_step(est(alt=1.5), ALT_GOAL, 1000.0)
        assert status == "fired"
        assert cmd.frequency_hz == pytest.approx(93.0)
        assert cmd.target is StimTarget.BOTH
        assert cmd.duration_ms == 500.0

    def test_frequency_clamps_at_anchor(self):
        cmd, _ = control_step(est(alt=0.0), ALT_GOAL, 1000.0)
        assert cmd.frequency_hz == 100.0

    def test_single_sided_altitude(self):
        # above target: stimulation cannot push down
        cmd, status = control_step(est(alt=3.0), ALT_GOAL, 1000.0)
        assert cmd is None and status == "hold"

    def test_single_sided_speed(self):
        cmd, status = control_step(est(speed=0.8), BRAKE_GOAL, 1000.0)
        assert cmd is None and status == "hold"

    def test_brake_fires_above_target(self):
        cmd, status = control_step(est(speed=2.0), BRAKE_GOAL, 1000.0)
        assert status == "fired"
        assert cmd.frequency_hz == pytest.approx(63.0 + 5.0 * 0.8)

    def test_stale_telemetry_holds(self):
        cmd, status = control_step(est(t_ms=900.0, alt=0.0), ALT_GOAL,
                                   1000.0)
        assert cmd is None and status == "stale"
        cmd, status = control_step(None, ALT_GOAL, 1000.0)
        assert cmd is None and status == "stale"

    def test_refractory_blocks_even_with_large_error(self):
        cmd, status = control_step(est(alt=0.0), ALT_GOAL, 1000.0,
                                   last_command_ms=500.0)
        assert cmd is None and status == "refractory"
        cmd, status = control_step(est(alt=0.0), ALT_GOAL, 1000.0,
                                   last_command_ms=250.0)
        assert status == "fired"


class TestClosedLoop:
    def test_altitude_hold_halves_rms_error_under_sink(self):
        controlled = closed_loop_sim(ALT_GOAL, duration_s=30.0,
                                     sink_accel=0.3, seed=4)
        baseline = closed_loop_sim(None, duration_s=30.0, sink_accel=0.3,
                                   seed=4)
        rms_c = controlled.rms_altitude_error(2.0)
        rms_u = baseline.rms_altitude_error(2.0)
        assert rms_c <= 0.5 * rms_u
        assert len(controlled.commands) > 0
        assert len(baseline.commands) == 0

    def test_commands_respect_refractory(self):
        res = closed_loop_sim(ALT_GOAL, duration_s=20.0, sink_accel=0.3,
                              seed=4)
        times = [t for t, _ in res.commands]
        assert all(b - a >= ALT_GOAL.refractory_ms - 1e-9
                   for a, b in zip(times, times[1:]))

    def test_brake_to_speed_terminal_accuracy(self):
        for target in (1.2, 1.6):
            goal = ControlGoal(mode="brake_to_speed", target=target, kp=5.0,
                               deadband=0.23)
            res = closed_loop_sim(goal, duration_s=30.0, seed=5)
            assert abs(res.speed[-1] - target) <= 0.3
            assert abs(res.mean_final_speed() - target) <= 0.3

    def test_controller_never_fires_on_wrong_side(self):
        # start below the speed target: braking can never help
        goal = ControlGoal(mode="brake_to_speed", target=2.5, kp=5.0,
                           deadband=0.23)
        res = closed_loop_sim(goal, duration_s=5.0, seed=6)
        assert res.commands == []


class TestEstimator:
    def test_speed_from_differenced_positions(self):
        estim = MocapEstimator(sigma_m=0.0)
        assert estim.update(0.0, Vec3(0.0, 0.0, 2.0)) is None
        e = estim.update(50.0, Vec3(0.1, 0.0, 2.0))
        assert e.speed_mps == pytest.approx(2.0)
        assert e.altitude_m == 2.0

    def test_noise_is_deterministic(self):
        a = MocapEstimator(sigma_m=0.001, seed=3)
        b = MocapEstimator(sigma_m=0.001, seed=3)
        a.update(0.0, Vec3(0, 0, 2))
        b.update(0.0, Vec3(0, 0, 2))
        ea = a.update(50.0, Vec3(0.1, 0, 2))
        eb = b.update(50.0, Vec3(0.1, 0, 2))
        assert ea == eb
