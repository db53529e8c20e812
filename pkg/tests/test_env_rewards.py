"""Reward family: exact values, gates, and implication properties."""

import numpy as np
import pytest

from bicup.env.physics import PhysicsConfig, PhysicsState
from bicup.env.rewards import (NUM_REWARDS, REWARD_NAMES, RewardConfig,
                               compute_rewards)

PHYS = PhysicsConfig()
REW = RewardConfig()
ACTION = np.zeros(2)


def state_at(rel_x, rel_z, cup=(0.0, 0.5), cup_vel=(0.0, 0.0)):
    cup = np.array(cup, dtype=np.float64)
    return PhysicsState(cup_pos=cup,
                        cup_vel=np.array(cup_vel, dtype=np.float64),
                        ball_pos=cup + np.array([rel_x, rel_z]),
                        ball_vel=np.zeros(2))


def rewards_at(rel_x, rel_z, **kw):
    return compute_rewards(state_at(rel_x, rel_z, **kw), ACTION, PHYS, REW)


class TestExactValues:
    def test_shaped_height_is_half_at_base_level(self):
        r = rewards_at(0.1, 0.0)
        assert r[5] == 0.5

    def test_shaped_lateral_peak(self):
        # 1 / (2 pi sigma^2) at x = 0, about 19.6488
        r = rewards_at(0.0, 0.2)
        expected = 1.0 / (2.0 * np.pi * REW.lateral_sigma ** 2)
        assert r[6] == pytest.approx(expected, rel=1e-12)
        assert r[6] == pytest.approx(19.6488, abs=1e-3)

    def test_shaped_lateral_two_sigma_ratio(self):
        peak = rewards_at(0.0, 0.2)[6]
        off = rewards_at(2.0 * REW.lateral_sigma, 0.2)[6]
        assert off / peak == pytest.approx(np.exp(-2.0), rel=1e-12)

    def test_shaped_lateral_gated_below_base(self):
        assert rewards_at(0.0, -1e-9)[6] == 0.0
        assert rewards_at(0.0, -0.3)[6] == 0.0
        assert rewards_at(0.0, 0.0)[6] > 0.0

    def test_near_mouth_peak_and_falloff(self):
        at_mouth = rewards_at(0.0, PHYS.cup_height)
        assert at_mouth[3] == pytest.approx(1.0, abs=1e-12)
        one_scale = rewards_at(REW.mouth_scale, PHYS.cup_height)
        assert one_scale[3] == pytest.approx(1.0 - np.tanh(1.0), rel=1e-12)

    def test_speed_penalty_l1(self):
        r = compute_rewards(
            state_at(0.0, -0.4, cup_vel=(0.5, -0.25)), ACTION, PHYS, REW)
        assert r[7] == pytest.approx(-0.075, abs=1e-12)


class TestIndicators:
    def test_hanging_ball_scores_nothing(self):
        r = rewards_at(0.0, -PHYS.string_length)
        assert np.all(r[[0, 1, 2, 4]] == 0.0)
        assert r[3] < 0.01                 # shaped, cannot be exactly zero
        assert r[5] < 0.5

    def test_above_base_strict(self):
        assert rewards_at(0.3, 0.0)[0] == 0.0
        assert rewards_at(0.3, 1e-9)[0] == 1.0

    def test_above_rim_threshold(self):
        # cup at the origin keeps the relative z free of rounding
        assert rewards_at(0.0, PHYS.cup_height, cup=(0.0, 0.0))[1] == 0.0
        assert rewards_at(0.0, PHYS.cup_height + 1e-9, cup=(0.0, 0.0))[1] == 1.0

    def test_high_above_threshold(self):
        assert rewards_at(0.0, REW.high_height, cup=(0.0, 0.0))[2] == 0.0
        assert rewards_at(0.0, REW.high_height + 1e-9, cup=(0.0, 0.0))[2] == 1.0

    def test_in_cup_needs_interior(self):
        half = PHYS.cup_radius - PHYS.ball_radius
        assert rewards_at(0.0, 0.08)[4] == 1.0
        assert rewards_at(half, 0.08)[4] == 0.0
        assert rewards_at(half - 1e-6, 0.08)[4] == 1.0
        assert rewards_at(0.0, 0.0)[4] == 0.0
        assert rewards_at(0.0, PHYS.cup_height)[4] == 0.0


class TestProperties:
    def test_range_and_implication_invariants(self):
        rng = np.random.default_rng(0)
        n = 100_000
        cups_x = rng.uniform(*PHYS.workspace_x, n)
        cups_z = rng.uniform(*PHYS.workspace_z, n)
        ang = rng.uniform(-np.pi, np.pi, n)
        rad = rng.uniform(0.0, PHYS.string_length, n)
        vels = rng.uniform(-3.0, 3.0, (n, 2))
        for i in range(n):
            cup = np.array([cups_x[i], cups_z[i]])
            rel = rad[i] * np.array([np.sin(ang[i]), np.cos(ang[i])])
            s = PhysicsState(cup_pos=cup, cup_vel=vels[i],
                             ball_pos=cup + rel, ball_vel=np.zeros(2))
            r = compute_rewards(s, ACTION, PHYS, REW)
            assert r[0] in (0.0, 1.0) and r[1] in (0.0, 1.0)
            assert r[2] in (0.0, 1.0) and r[4] in (0.0, 1.0)
            assert 0.0 <= r[5] <= 1.0
            assert r[6] >= 0.0
            assert r[7] <= 0.0
            if r[4]:
                assert r[0] == 1.0
            if r[1]:
                assert r[0] == 1.0

    def test_shaped_height_strictly_increasing(self):
        zs = np.linspace(-0.4, 0.4, 200)
        vals = [rewards_at(0.0, z)[5] for z in zs]
        assert np.all(np.diff(vals) > 0.0)

    def test_shaped_lateral_peaks_at_center(self):
        for x in (0.05, -0.1, 0.2):
            assert rewards_at(x, 0.1)[6] < rewards_at(0.0, 0.1)[6]

    def test_pure_function_of_state(self):
        s = state_at(0.03, 0.12, cup_vel=(0.4, -0.8))
        a = compute_rewards(s, ACTION, PHYS, REW)
        b = compute_rewards(s, ACTION, PHYS, REW)
        assert np.array_equal(a, b)

    def test_names_cover_vector(self):
        assert len(REWARD_NAMES) == NUM_REWARDS == 8

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RewardConfig(lateral_sigma=0.0).validate()
        with pytest.raises(ValueError):
            RewardConfig(speed_penalty=-0.1).validate()
