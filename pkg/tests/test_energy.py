import numpy as np
import pytest

from hoifit.articulated import ObjectParams, pose_mesh
from hoifit.energy import (
    ContactAlignment,
    EnergyContext,
    ObjectiveWeights,
    contact_energy,
    evaluate_total,
    mask_energy,
    orientation_energy,
    regularizer_energy,
    total_energy,
)
from hoifit.errors import InvalidInputError
from hoifit.rendering import SilhouetteImage, SoftRasterSettings, render_silhouette
from hoifit.so3 import UPRIGHT_FACING, matrix_to_rotvec, rotvec_to_matrix

from conftest import assert_grad_close, fd_gradient


def perturbed(params, rotvec=None, **kw):
    fields = {
        "translation_cm": params.translation_cm,
        "rotation": rotvec_to_matrix(rotvec) if rotvec is not None else params.rotation,
        "size_cm": params.size_cm,
        "part_motion": params.part_motion,
        "active_part": params.active_part,
    }
    fields.update(kw)
    return ObjectParams(**fields)


@pytest.fixture
def gt_setup(door_scene):
    record = door_scene["record"]
    return {
        "model": door_scene["model"],
        "cam": record.camera,
        "masks": list(record.masks),
        "evidence": record.evidence,
        "placed": door_scene["placed"],
        "gt_params": record.ground_truth.to_params(),
        "settings": SoftRasterSettings(),
    }


class TestMaskEnergy:
    def test_zero_when_identical(self, gt_setup):
        s = gt_setup
        rendered = [
            render_silhouette(pose_mesh(s["model"], s["gt_params"], t), s["cam"], s["settings"])
            for t in range(s["gt_params"].num_frames)
        ]
        value, grads = mask_energy(s["model"], s["gt_params"], s["cam"], s["settings"], rendered)
        assert value == pytest.approx(0.0, abs=1e-18)
        for g in grads.values():
            assert np.allclose(g, 0.0, atol=1e-9)

    def test_all_ones_vs_all_zeros(self, gt_setup):
        # Rendering covers R pixels; a zero mask scores the per-frame coverage sum.
        s = gt_setup
        zeros = [SilhouetteImage(np.zeros((s["cam"].height, s["cam"].width)))] * s["gt_params"].num_frames
        value, _ = mask_energy(s["model"], s["gt_params"], s["cam"], s["settings"], zeros)
        rendered = [
            render_silhouette(pose_mesh(s["model"], s["gt_params"], t), s["cam"], s["settings"])
            for t in range(s["gt_params"].num_frames)
        ]
        expected = np.mean([(r.values**2).sum() for r in rendered])
        assert value == pytest.approx(expected, rel=1e-12)

    def test_resolution_mismatch_rejected(self, gt_setup):
        s = gt_setup
        bad = [SilhouetteImage(np.zeros((10, 10)))] * s["gt_params"].num_frames
        with pytest.raises(InvalidInputError):
            mask_energy(s["model"], s["gt_params"], s["cam"], s["settings"], bad)

    def test_gradient_matches_fd(self, gt_setup):
        s = gt_setup
        settings = SoftRasterSettings(blur_radius_px=5.0)
        params = perturbed(s["gt_params"])

        value, grads = mask_energy(s["model"], params, s["cam"], settings, s["masks"])

        def f_theta(th):
            return mask_energy(
                s["model"], perturbed(params, part_motion=th), s["cam"], settings, s["masks"]
            )[0]

        num = fd_gradient(f_theta, params.part_motion, h=1e-4)
        assert_grad_close(grads["part_motion"], num, rel=1e-2, abs_tol=1e-3)

        def f_trans(x):
            return mask_energy(
                s["model"], perturbed(params, translation_cm=x), s["cam"], settings, s["masks"]
            )[0]

        num = fd_gradient(f_trans, params.translation_cm, h=1e-4)
        assert_grad_close(grads["translation"], num, rel=1e-2, abs_tol=1e-3)


class TestOrientationEnergy:
    def directions_for(self, params, num_frames):
        front = params.rotation @ np.array([0.0, 0.0, -1.0])
        up = params.rotation @ np.array([0.0, 1.0, 0.0])
        return [(front, up)] * num_frames

    def test_zero_at_alignment(self, gt_setup):
        params = gt_setup["gt_params"]
        dirs = self.directions_for(params, params.num_frames)
        value, grad = orientation_energy(gt_setup["model"], params, dirs, (0, params.num_frames - 1))
        assert value == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(grad, 0.0, atol=1e-9)

    def test_orthogonal_facing_counts_one(self, gt_setup):
        params = gt_setup["gt_params"]
        front = params.rotation @ np.array([0.0, 0.0, -1.0])
        up = params.rotation @ np.array([0.0, 1.0, 0.0])
        ortho = np.cross(front, up)
        dirs = [(ortho, up)] * params.num_frames
        value, _ = orientation_energy(gt_setup["model"], params, dirs, (1, 1))
        assert value == pytest.approx(1.0, abs=1e-12)

    def test_gradient_matches_fd(self, gt_setup, rng):
        params = gt_setup["gt_params"]
        dirs = [
            (d / np.linalg.norm(d), g / np.linalg.norm(g))
            for d, g in rng.normal(size=(params.num_frames, 2, 3))
        ]
        window = (0, params.num_frames - 1)
        rotvec0 = matrix_to_rotvec(params.rotation) * 0.7  # keep |r| away from pi
        base = perturbed(params, rotvec=rotvec0)
        _, grad = orientation_energy(gt_setup["model"], base, dirs, window)

        def f(r):
            return orientation_energy(gt_setup["model"], perturbed(params, rotvec=r), dirs, window)[0]

        num = fd_gradient(f, rotvec0)
        assert_grad_close(grad, num, rel=1e-4)

    def test_zero_direction_rejected(self, gt_setup):
        params = gt_setup["gt_params"]
        dirs = [(np.zeros(3), np.array([0.0, 1.0, 0.0]))] * params.num_frames
        with pytest.raises(InvalidInputError):
            orientation_energy(gt_setup["model"], params, dirs, (0, 0))


class TestContactEnergy:
    def contact_curve(self, s, params):
        model = s["model"]
        gidx = model.contact_global_index(0, model.parts[0].contact_candidates[0])
        return np.stack(
            [pose_mesh(model, params, t).vertices[gidx] for t in range(params.num_frames)]
        )

    def test_zero_when_hand_rides_vertex(self, gt_setup):
        s = gt_setup
        params = s["gt_params"]
        curve = self.contact_curve(s, params)
        window = (0, params.num_frames - 1)
        value, _ = contact_energy(
            s["model"], params, curve, s["model"].parts[0].contact_candidates[0],
            ContactAlignment.identity(), window,
        )
        assert value == pytest.approx(0.0, abs=1e-16)

    def test_rigidly_moved_hand_matched_at_that_rotation(self, gt_setup, rng):
        s = gt_setup
        params = s["gt_params"]
        curve = self.contact_curve(s, params)
        r_star = rotvec_to_matrix(rng.normal(size=3))
        shifted = curve @ r_star.T + rng.normal(size=3) * 10.0
        window = (0, params.num_frames - 1)
        value, _ = contact_energy(
            s["model"], params, shifted, s["model"].parts[0].contact_candidates[0],
            ContactAlignment(r_star), window,
        )
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_static_hand_vs_rotating_door_chord_sum(self):
        # Door edge on a 30 cm arm swinging 90 degrees against a static hand:
        # with the identity curve rotation the energy is the sum of squared
        # chords from the start position (first-frame residual is zero).
        from conftest import make_box
        from hoifit.articulated import ArticulatedModel, JointSpec, MovablePart
        from hoifit.meshes import TriMesh

        base = make_box((0.0, 0.0, -0.25), (0.5, 0.5, 0.25))
        tip = np.array([[0.3, 0.0, 0.3], [0.3, 0.1, 0.3], [0.2, 0.0, 0.5]])
        part = TriMesh(tip, np.array([[0, 1, 2]]))
        joint = JointSpec("revolute", np.array([0.0, -1.0, 0.0]), np.array([0.0, 0.0, 0.3]), (0, 180))
        model = ArticulatedModel("arm", "test", base, (MovablePart(part, joint, (0,)),))
        # Size 100 -> the tip sits 30 cm from the hinge.
        angles = np.array([0.0, 30.0, 60.0, 90.0])
        params = ObjectParams(np.zeros(3), np.eye(3), np.full(3, 100.0), angles)
        tip0 = pose_mesh(model, params, 0).vertices[model.vertex_offset(0)]
        hand = np.tile(tip0, (4, 1))
        value, _ = contact_energy(model, params, hand, 0, ContactAlignment.identity(), (0, 3))
        radius = 30.0
        expected = sum(
            (2.0 * radius * np.sin(np.deg2rad(a) / 2.0)) ** 2 for a in angles
        )
        assert value == pytest.approx(expected, rel=1e-12)

    def test_short_window_rejected(self, gt_setup):
        s = gt_setup
        params = s["gt_params"]
        with pytest.raises(InvalidInputError):
            contact_energy(
                s["model"], params, np.zeros((1, 3)),
                s["model"].parts[0].contact_candidates[0], ContactAlignment.identity(), (1, 1),
            )

    def test_non_candidate_vertex_rejected(self, gt_setup):
        s = gt_setup
        params = s["gt_params"]
        with pytest.raises(InvalidInputError):
            contact_energy(
                s["model"], params, np.zeros((2, 3)), 2, ContactAlignment.identity(), (0, 1)
            )

    def test_gradients_match_fd(self, gt_setup, rng):
        s = gt_setup
        params = s["gt_params"]
        cv = s["model"].parts[0].contact_candidates[0]
        window = (0, params.num_frames - 1)
        hand = self.contact_curve(s, params) + rng.normal(size=(params.num_frames, 3)) * 3.0
        rc0 = rng.normal(size=3) * 0.2
        align = ContactAlignment(rotvec_to_matrix(rc0))
        _, grads = contact_energy(s["model"], params, hand, cv, align, window)

        def f_rc(r):
            return contact_energy(
                s["model"], params, hand, cv, ContactAlignment(rotvec_to_matrix(r)), window
            )[0]

        assert_grad_close(grads["contact_rotation"], fd_gradient(f_rc, rc0), rel=1e-4)

        def f_theta(th):
            return contact_energy(
                s["model"], perturbed(params, part_motion=th), hand, cv, align, window
            )[0]

        assert_grad_close(grads["part_motion"], fd_gradient(f_theta, params.part_motion), rel=1e-4)

    def test_invariant_under_rigid_motion_of_hand(self, gt_setup, rng):
        # Minimizing over the curve rotation makes the term depend only on
        # curve shape; moving the hand rigidly leaves the minimum unchanged.
        from scipy.optimize import minimize

        s = gt_setup
        params = s["gt_params"]
        cv = s["model"].parts[0].contact_candidates[0]
        window = (0, params.num_frames - 1)
        hand = self.contact_curve(s, params) + rng.normal(size=(params.num_frames, 3)) * 2.0

        def minimized(hand_curve):
            def f(r):
                value, grads = contact_energy(
                    s["model"], params, hand_curve, cv,
                    ContactAlignment(rotvec_to_matrix(r)), window,
                )
                return value, grads["contact_rotation"]

            best = min(
                (
                    minimize(f, x0, jac=True, method="BFGS", options={"gtol": 1e-12})
                    for x0 in (np.zeros(3), np.array([0.5, -0.3, 0.2]))
                ),
                key=lambda r: r.fun,
            )
            return best.fun

        base = minimized(hand)
        rot = rotvec_to_matrix(rng.normal(size=3))
        moved = hand @ rot.T + np.array([25.0, -10.0, 5.0])
        assert minimized(moved) == pytest.approx(base, abs=1e-5)


class TestRegularizers:
    def test_zero_case(self, gt_setup):
        s = gt_setup
        params = s["gt_params"]
        rendered = [
            render_silhouette(pose_mesh(s["model"], params, t), s["cam"], s["settings"])
            for t in range(params.num_frames)
        ]
        # Constant in-limits motion, upright pose, equal centroids/depths.
        flat = perturbed(params, part_motion=np.full(params.num_frames, 30.0))
        rendered_flat = [
            render_silhouette(pose_mesh(s["model"], flat, t), s["cam"], s["settings"])
            for t in range(flat.num_frames)
        ]
        window = s["evidence"].interaction_window
        roots = np.array(
            [
                (
                    s["placed"].world_keypoint(s["evidence"].frames[t], t, "leftHip")[2]
                    + s["placed"].world_keypoint(s["evidence"].frames[t], t, "rightHip")[2]
                )
                / 2.0
                for t in range(window[0], window[1] + 1)
            ]
        )
        centered = perturbed(
            flat,
            rotation=UPRIGHT_FACING,
            translation_cm=np.array(
                [flat.translation_cm[0], flat.translation_cm[1], roots.mean()]
            ),
        )
        rendered_c = [
            render_silhouette(pose_mesh(s["model"], centered, t), s["cam"], s["settings"])
            for t in range(centered.num_frames)
        ]
        value, _, raw = regularizer_energy(
            s["model"], centered, s["cam"], s["settings"], rendered_c,
            s["placed"], s["evidence"],
        )
        assert raw["center"] == pytest.approx(0.0, abs=1e-9)
        assert raw["limit"] == 0.0
        assert raw["smooth"] == 0.0
        assert raw["tilt"] == pytest.approx(0.0, abs=1e-18)
        # The synthetic skeleton drifts, so the depth term equals the window
        # variance of the root depth at its minimizing translation.
        assert raw["depth"] == pytest.approx(float(((roots - roots.mean()) ** 2).mean()), abs=1e-9)

    def test_smooth_definition(self, gt_setup):
        s = gt_setup
        params = perturbed(s["gt_params"], part_motion=np.array([0.0, 10.0, 0.0, 0.0]))
        _, _, raw = regularizer_energy(
            s["model"], params, s["cam"], s["settings"], s["masks"], s["placed"], s["evidence"]
        )
        assert raw["smooth"] == pytest.approx(200.0)

    def test_limit_overshoot(self, gt_setup):
        s = gt_setup
        hi = s["model"].parts[0].joint.limits[1]
        motion = np.full(s["gt_params"].num_frames, hi - 1.0)
        motion[1] = hi + 5.0
        params = perturbed(s["gt_params"], part_motion=motion)
        _, _, raw = regularizer_energy(
            s["model"], params, s["cam"], s["settings"], s["masks"], s["placed"], s["evidence"]
        )
        assert raw["limit"] == pytest.approx(25.0)

    def test_empty_gt_mask_flagged_and_skipped(self, gt_setup):
        s = gt_setup
        masks = list(s["masks"])
        masks[0] = SilhouetteImage(np.zeros_like(masks[0].values))
        ctx = EnergyContext(
            s["model"], s["cam"], s["settings"], len(masks),
            gt_masks=masks, evidence=s["evidence"], placed=s["placed"],
        )
        assert any("empty ground-truth mask" in f for f in ctx.flags)


class TestTotalEnergy:
    def args(self, s, weights, params=None):
        params = params or s["gt_params"]
        cv = s["model"].parts[0].contact_candidates[0]
        return (
            s["model"], params, s["cam"], s["settings"], s["masks"],
            s["evidence"], s["placed"], "right", cv, ContactAlignment.identity(), weights,
        )

    def test_all_zero_weights(self, gt_setup):
        weights = ObjectiveWeights(mask=0, human=0, hoi=0, reg=0)
        report = total_energy(*self.args(gt_setup, weights))
        assert report.total == 0.0
        for g in report.gradients.values():
            assert np.all(g == 0.0)

    def test_linearity_single_term(self, gt_setup):
        w1 = ObjectiveWeights(mask=0, human=0, hoi=1, reg=0)
        w2 = ObjectiveWeights(mask=0, human=0, hoi=2, reg=0)
        r1 = total_energy(*self.args(gt_setup, w1))
        r2 = total_energy(*self.args(gt_setup, w2))
        assert r2.total == pytest.approx(2.0 * r1.total, rel=1e-12, abs=1e-15)

    def test_decomposition_invariant(self, gt_setup, rng):
        weights = ObjectiveWeights()
        params = perturbed(
            gt_setup["gt_params"],
            part_motion=gt_setup["gt_params"].part_motion + rng.normal(0, 3, gt_setup["gt_params"].num_frames),
        )
        report = total_energy(*self.args(gt_setup, weights, params))
        assert report.total == pytest.approx(report.weighted_sum(), abs=1e-9)
        assert report.per_term["human"] > 0.0 or report.per_term["human"] == 0.0

    def test_full_gradient_matches_fd(self, gt_setup):
        s = gt_setup
        weights = ObjectiveWeights()
        settings = SoftRasterSettings(blur_radius_px=5.0)
        params = s["gt_params"]
        cv = s["model"].parts[0].contact_candidates[0]
        report = total_energy(
            s["model"], params, s["cam"], settings, s["masks"],
            s["evidence"], s["placed"], "right", cv, ContactAlignment.identity(), weights,
        )

        def f(th):
            rep = total_energy(
                s["model"], perturbed(params, part_motion=th), s["cam"], settings, s["masks"],
                s["evidence"], s["placed"], "right", cv, ContactAlignment.identity(), weights,
            )
            return rep.total

        num = fd_gradient(f, params.part_motion, h=1e-4)
        assert_grad_close(report.gradients["part_motion"], num, rel=1e-2, abs_tol=1e-3)

    def test_each_energy_nonnegative(self, gt_setup, rng):
        s = gt_setup
        params = perturbed(
            s["gt_params"],
            translation_cm=s["gt_params"].translation_cm + rng.normal(0, 5, 3),
        )
        report = total_energy(*self.args(s, ObjectiveWeights(), params))
        for key, value in report.per_term.items():
            assert value >= 0.0, key
