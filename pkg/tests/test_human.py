import numpy as np
import pytest

from hoifit.camera import CameraIntrinsics, project_points
from hoifit.errors import (
    InvalidInputError,
    PlacementUnderconstrainedError,
    TrajectoryGapError,
)
from hoifit.human import (
    HumanEvidence,
    HumanFrame,
    PlacedHuman,
    compute_scale,
    facing_direction,
    ground_normal,
    hand_trajectory,
    human_fit_energy,
    solve_placement,
)
from hoifit.so3 import rotvec_to_matrix

from conftest import assert_grad_close, fd_gradient, upright_skeleton

CAM = CameraIntrinsics(500.0, np.array([160.0, 120.0]), (320, 240))


def evidence_from_frames(frames, window=None, height=170.0):
    window = window or (0, len(frames) - 1)
    return HumanEvidence(tuple(frames), window, height)


def scaled_skeleton_frame(units_height, cam=None, placement=None):
    """Skeleton normalized to the requested estimator height, with targets."""
    frame = upright_skeleton(scale=units_height / 1.70)
    if placement is None:
        return frame
    scale, translation = placement
    targets = {}
    for name, kp in frame.keypoints3d.items():
        world = scale * kp + translation
        targets[name] = project_points(world, cam)
    return HumanFrame(frame.keypoints3d, targets, frame.valid)


class TestComputeScale:
    def test_ratio(self):
        ev = evidence_from_frames([scaled_skeleton_frame(1.70)])
        assert compute_scale(ev) == pytest.approx(100.0)

    def test_unit_height(self):
        ev = evidence_from_frames([scaled_skeleton_frame(1.0)])
        assert compute_scale(ev) == pytest.approx(170.0)

    def test_median_over_frames(self):
        ev = evidence_from_frames([scaled_skeleton_frame(h) for h in (1.6, 1.7, 1.8)])
        assert compute_scale(ev) == pytest.approx(100.0)

    def test_requires_landmarks(self):
        frame = scaled_skeleton_frame(1.7)
        invalid = HumanFrame(frame.keypoints3d, {}, {n: n != "headTop" for n in frame.keypoints3d})
        with pytest.raises(InvalidInputError):
            compute_scale(evidence_from_frames([invalid]))


class TestHumanFitEnergy:
    def test_zero_at_exact_projection(self):
        translation = np.array([10.0, -5.0, 220.0])
        frame = scaled_skeleton_frame(1.70, CAM, (100.0, translation))
        ev = evidence_from_frames([frame])
        placed = PlacedHuman(translation[None, :], 100.0)
        value, grad = human_fit_energy(ev, placed, CAM)
        assert value == pytest.approx(0.0, abs=1e-18)
        assert np.allclose(grad, 0.0, atol=1e-9)

    def test_single_offset_squared_norm(self):
        translation = np.array([0.0, 0.0, 200.0])
        base = scaled_skeleton_frame(1.70, CAM, (100.0, translation))
        # Keep a single 2D target and shift it by (3, 4) px.
        targets = {"rightPalm": base.targets2d["rightPalm"] + np.array([3.0, 4.0])}
        frames = [HumanFrame(base.keypoints3d, targets, base.valid)]
        frames += [HumanFrame(base.keypoints3d, {}, base.valid)] * 4  # N=5 frames
        ev = evidence_from_frames(frames)
        placed = PlacedHuman(np.tile(translation, (5, 1)), 100.0)
        value, _ = human_fit_energy(ev, placed, CAM)
        assert value == pytest.approx(25.0 / 5.0)

    def test_gradient_matches_fd(self, rng):
        translation = np.array([5.0, 8.0, 180.0])
        frame = scaled_skeleton_frame(1.70, CAM, (100.0, translation))
        jittered = {n: uv + rng.normal(0, 4, 2) for n, uv in frame.targets2d.items()}
        ev = evidence_from_frames([HumanFrame(frame.keypoints3d, jittered, frame.valid)])

        def value(x):
            placed = PlacedHuman(x.reshape(1, 3), 100.0)
            return human_fit_energy(ev, placed, CAM)[0]

        _, grad = human_fit_energy(ev, PlacedHuman(translation[None], 100.0), CAM)
        num = fd_gradient(value, translation)
        assert_grad_close(grad.ravel(), num, rel=1e-4)


class TestSolvePlacement:
    def test_round_trip_recovers_translation(self):
        truth = [np.array([12.0, -3.0, 240.0]), np.array([13.0, -2.0, 238.0])]
        frames = [scaled_skeleton_frame(1.70, CAM, (100.0, t)) for t in truth]
        ev = evidence_from_frames(frames)
        placed = solve_placement(ev, CAM)
        assert placed.scale == pytest.approx(100.0)
        for got, want in zip(placed.translations_cm, truth):
            assert np.linalg.norm(got - want) < 1.0
        assert human_fit_energy(ev, placed, CAM)[0] < 1e-6

    def test_infeasible_targets_still_return(self):
        translation = np.array([0.0, 0.0, 200.0])
        frame = scaled_skeleton_frame(1.70, CAM, (100.0, translation))
        # A rigid 3D translation cannot realize a non-rigid 2D warp.
        warped = {
            n: uv + np.array([20.0, 0.0]) * (i % 2) for i, (n, uv) in enumerate(frame.targets2d.items())
        }
        ev = evidence_from_frames([HumanFrame(frame.keypoints3d, warped, frame.valid)])
        placed = solve_placement(ev, CAM)
        assert placed.residuals[0] > 0.0

    def test_underconstrained_frame_error(self):
        translation = np.array([0.0, 0.0, 200.0])
        good = scaled_skeleton_frame(1.70, CAM, (100.0, translation))
        bad_targets = {"headTop": good.targets2d["headTop"], "leftHip": good.targets2d["leftHip"]}
        bad = HumanFrame(good.keypoints3d, bad_targets, good.valid)
        ev = evidence_from_frames([good, bad])
        with pytest.raises(PlacementUnderconstrainedError) as err:
            solve_placement(ev, CAM)
        assert err.value.frames == [1]


class TestDirections:
    def test_facing_canonical(self):
        frame = upright_skeleton()
        assert np.allclose(facing_direction(frame), [0.0, 0.0, -1.0], atol=1e-6)

    def test_ground_canonical(self):
        frame = upright_skeleton()
        assert np.allclose(ground_normal(frame), [0.0, 1.0, 0.0], atol=1e-6)

    def test_rotation_equivariance(self, rng):
        for _ in range(5):
            rotvec = rng.normal(size=3)
            rot = rotvec_to_matrix(rotvec)
            base = upright_skeleton()
            rotated = upright_skeleton(rotation=rot)
            assert np.allclose(facing_direction(rotated), rot @ facing_direction(base), atol=1e-9)
            assert np.allclose(ground_normal(rotated), rot @ ground_normal(base), atol=1e-9)

    def test_scale_translation_invariance(self, rng):
        base = upright_skeleton()
        moved = upright_skeleton(offset=rng.normal(size=3) * 5, scale=3.7)
        assert np.allclose(facing_direction(moved), facing_direction(base), atol=1e-12)
        assert np.allclose(ground_normal(moved), ground_normal(base), atol=1e-12)

    def test_unit_norm(self, rng):
        for _ in range(5):
            frame = upright_skeleton(rotation=rotvec_to_matrix(rng.normal(size=3)))
            assert np.linalg.norm(facing_direction(frame)) == pytest.approx(1.0, abs=1e-12)
            assert np.linalg.norm(ground_normal(frame)) == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_torso(self):
        frame = upright_skeleton()
        collapsed = dict(frame.keypoints3d)
        collapsed["leftShoulder"] = collapsed["leftHip"]
        collapsed["rightShoulder"] = collapsed["rightHip"]
        with pytest.raises(InvalidInputError):
            facing_direction(HumanFrame(collapsed, {}, frame.valid))


class TestHandTrajectory:
    def make_evidence(self, num_frames=5, gap_frames=()):
        frames = []
        for t in range(num_frames):
            frame = upright_skeleton(offset=np.array([0.02 * t, 0.0, 0.0]))
            valid = dict(frame.valid)
            if t in gap_frames:
                valid["rightPalm"] = False
            frames.append(HumanFrame(frame.keypoints3d, {}, valid))
        return evidence_from_frames(frames, window=(0, num_frames - 1))

    def placed(self, ev, drift=np.zeros(3)):
        t = np.stack([np.array([0.0, 0.0, 200.0]) + drift * i for i in range(ev.num_frames)])
        return PlacedHuman(t, 100.0)

    def test_static_palm_constant(self):
        frames = [upright_skeleton()] * 4
        ev = evidence_from_frames(frames)
        traj = hand_trajectory(ev, self.placed(ev), "right")
        assert np.allclose(traj, traj[0])

    def test_translation_additivity(self):
        frames = [upright_skeleton()] * 3
        ev = evidence_from_frames(frames)
        base = hand_trajectory(ev, self.placed(ev), "right")
        shifted_placed = PlacedHuman(
            self.placed(ev).translations_cm + np.array([[0, 0, 0], [7.0, 0, 0], [0, 0, 0]]),
            100.0,
        )
        shifted = hand_trajectory(ev, shifted_placed, "right")
        assert np.allclose(shifted[1], base[1] + [7.0, 0, 0])
        assert np.allclose(shifted[0], base[0])

    def test_round_trip_matches_generator(self):
        ev = self.make_evidence()
        placed = self.placed(ev, drift=np.array([0.5, 0.0, 0.0]))
        traj = hand_trajectory(ev, placed, "right")
        for i, frame in enumerate(ev.frames):
            expected = 100.0 * frame.keypoints3d["rightPalm"] + placed.translations_cm[i]
            assert np.allclose(traj[i], expected, atol=1e-9)

    def test_short_gap_interpolated(self):
        ev = self.make_evidence(num_frames=6, gap_frames=(2, 3))
        traj = hand_trajectory(ev, self.placed(ev), "right")
        full = self.make_evidence(num_frames=6)
        expected = hand_trajectory(full, self.placed(full), "right")
        assert np.allclose(traj, expected, atol=1e-9)  # linear motion interpolates exactly

    def test_long_gap_raises(self):
        ev = self.make_evidence(num_frames=7, gap_frames=(2, 3, 4))
        with pytest.raises(TrajectoryGapError):
            hand_trajectory(ev, self.placed(ev), "right")

    def test_edge_gap_raises(self):
        ev = self.make_evidence(num_frames=5, gap_frames=(0,))
        with pytest.raises(TrajectoryGapError):
            hand_trajectory(ev, self.placed(ev), "right")

    def test_unknown_hand(self):
        ev = self.make_evidence()
        with pytest.raises(InvalidInputError):
            hand_trajectory(ev, self.placed(ev), "both")


def test_window_validation():
    with pytest.raises(InvalidInputError):
        HumanEvidence((upright_skeleton(),), (0, 3))


def test_placement_residual_non_increasing_with_frames():
    # Per-frame independence: adding frames never changes earlier residuals.
    t1 = [np.array([0.0, 0.0, 210.0])]
    t2 = t1 + [np.array([5.0, 1.0, 215.0])]
    f1 = [scaled_skeleton_frame(1.70, CAM, (100.0, t)) for t in t1]
    f2 = [scaled_skeleton_frame(1.70, CAM, (100.0, t)) for t in t2]
    p1 = solve_placement(evidence_from_frames(f1), CAM)
    p2 = solve_placement(evidence_from_frames(f2), CAM)
    assert p2.residuals[0] == pytest.approx(p1.residuals[0], abs=1e-12)
