import numpy as np
import pytest

from aai import artic


class TestRegressionDelta:
    def test_constant_is_zero(self):
        x = np.full((20, 3), 7.0)
        assert np.array_equal(artic.regression_delta(x, 2), np.zeros((20, 3)))

    def test_ramp_interior_slope_one(self):
        x = np.arange(30, dtype=float)[:, None]
        d = artic.regression_delta(x, 2)
        # (1*2 + 2*4) / (2*(1+4)) = 1 on interior frames
        assert np.allclose(d[2:-2, 0], 1.0, atol=1e-12)

    def test_single_frame_is_zero(self):
        assert np.array_equal(artic.regression_delta(np.array([[3.0, 4.0]]), 2),
                              np.zeros((1, 2)))

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(17, 2))
        n = 2
        padded = np.pad(x, ((n, n), (0, 0)), mode="edge")
        expected = np.zeros_like(x)
        for t in range(17):
            acc = np.zeros(2)
            for k in range(1, n + 1):
                acc += k * (padded[n + t + k] - padded[n + t - k])
            expected[t] = acc / (2 * (1 + 4))
        assert np.allclose(artic.regression_delta(x, n), expected, atol=1e-12)


class TestAugmentKinematics:
    def test_stationary_gives_zero_kinematics(self):
        traj = artic.ArticulatoryTrajectory(np.tile(np.arange(12.0), (30, 1)))
        out = artic.augment_kinematics(traj)
        assert out.frames.shape == (30, 24)
        assert np.array_equal(out.frames[:, 12:], np.zeros((30, 12)))

    def test_moving_upper_lip(self):
        frames = np.zeros((40, 12))
        frames[:, 0] = np.arange(40.0)  # UL_x ramps, UL_y and everything else fixed
        out = artic.augment_kinematics(artic.ArticulatoryTrajectory(frames))
        assert np.allclose(out.frames[4:-4, 12], 1.0, atol=1e-12)   # UL speed
        assert np.allclose(out.frames[4:-4, 18], 0.0, atol=1e-12)   # UL acceleration
        assert np.allclose(out.frames[:, 13:18], 0.0, atol=1e-12)   # other speeds
        assert np.allclose(out.frames[:, 19:], 0.0, atol=1e-12)

    def test_circular_motion_speed(self):
        dt = 0.01
        t = np.arange(400) * dt
        omega = 2 * np.pi * 1.0
        frames = np.zeros((400, 12))
        frames[:, 6] = np.cos(omega * t)  # TT_x
        frames[:, 7] = np.sin(omega * t)  # TT_y
        out = artic.augment_kinematics(artic.ArticulatoryTrajectory(frames))
        speed = out.frames[10:-10, 15]  # TT speed column
        # central finite differences on the sampled circle
        dx = (frames[2:, 6] - frames[:-2, 6]) / 2.0
        dy = (frames[2:, 7] - frames[:-2, 7]) / 2.0
        expected = np.sqrt(dx ** 2 + dy ** 2)[9:-9].mean()
        assert abs(speed.mean() - expected) < 5e-4
        assert abs(speed.mean() - omega * dt) < 5e-3

    def test_positions_pass_through(self):
        rng = np.random.default_rng(1)
        frames = rng.normal(size=(25, 12))
        out = artic.augment_kinematics(artic.ArticulatoryTrajectory(frames))
        assert np.array_equal(out.frames[:, :12], frames)

    def test_translation_invariance(self):
        rng = np.random.default_rng(2)
        frames = rng.normal(size=(25, 12))
        shifted = frames + rng.normal(size=12)
        a = artic.augment_kinematics(artic.ArticulatoryTrajectory(frames))
        b = artic.augment_kinematics(artic.ArticulatoryTrajectory(shifted))
        assert np.allclose(a.frames[:, 12:], b.frames[:, 12:], atol=1e-12)

    def test_velocity_nonnegative(self):
        rng = np.random.default_rng(3)
        out = artic.augment_kinematics(artic.ArticulatoryTrajectory(rng.normal(size=(50, 12))))
        assert np.all(out.frames[:, 12:18] >= 0.0)

    def test_wrong_width_rejected(self):
        with pytest.raises(ValueError):
            artic.ArticulatoryTrajectory(np.zeros((10, 11)))


class TestPreprocessTrajectory:
    def test_length_halved(self):
        rng = np.random.default_rng(4)
        out = artic.preprocess_trajectory(rng.normal(size=(400, 12)))
        assert out.frames.shape == (200, 12)

    def test_constant_unchanged(self):
        raw = np.tile(np.linspace(-3, 3, 12), (400, 1))
        out = artic.preprocess_trajectory(raw)
        assert np.allclose(out.frames, raw[:200], rtol=1e-12)

    def test_jitter_attenuated(self):
        t200 = np.arange(2000) / 200.0
        slow = np.sin(2 * np.pi * 2.0 * t200)
        jitter = 0.5 * np.sin(2 * np.pi * 40.0 * t200)
        raw = np.tile((slow + jitter)[:, None], (1, 12))
        out = artic.preprocess_trajectory(raw)
        t100 = np.arange(out.num_frames) / 100.0
        residual = out.frames[:, 0] - np.sin(2 * np.pi * 2.0 * t100)
        # 40 dB attenuation of the 0.5-amplitude jitter -> residual rms << 0.005
        core = residual[100:-100]
        assert np.sqrt(np.mean(core ** 2)) <= 0.5 * 0.01

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            artic.preprocess_trajectory(np.zeros((150, 12)))


def test_channel_layout():
    assert artic.CHANNELS == ("UL_x", "UL_y", "LL_x", "LL_y", "JAW_x", "JAW_y",
                              "TT_x", "TT_y", "TB_x", "TB_y", "TD_x", "TD_y")
    assert len(artic.AUGMENTED_COLUMNS) == 24
