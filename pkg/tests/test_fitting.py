import numpy as np
import pytest

from hoifit.articulated import ObjectParams
from hoifit.camera import CameraIntrinsics
from hoifit.energy import EnergyContext, ObjectiveWeights
from hoifit.errors import EmptyMaskError, FitAbortedError, InvalidInputError
from hoifit.fitting import (
    AdamState,
    Candidate,
    adam_step,
    enumerate_candidates,
    fit_candidate,
    fit_video,
    initialize_params,
)
from hoifit.rendering import SilhouetteImage, SoftRasterSettings
from hoifit.so3 import UPRIGHT_FACING


class TestAdam:
    def test_zero_gradient_keeps_everything(self):
        state = AdamState.zeros(4)
        params = np.array([1.0, -2.0, 3.0, 0.0])
        new_state, new_params = adam_step(state, params, np.zeros(4))
        assert np.array_equal(new_params, params)
        assert np.all(new_state.first_moment == 0.0)
        assert np.all(new_state.second_moment == 0.0)
        assert new_state.step_count == 1

    def test_single_step_bias_corrected_update(self):
        # Hand-derived: m1 = 0.1 g, v1 = 0.001 g^2, m^ = g, v^ = g^2,
        # step = lr * g / (|g| + eps).
        for g in (0.35, -2.0, 1e-4):
            state = AdamState.zeros(1)
            _, new_params = adam_step(state, np.zeros(1), np.array([g]))
            expected = -0.05 * g / (abs(g) + 1e-8)
            assert new_params[0] == pytest.approx(expected, abs=1e-12)

    def test_two_runs_bit_identical(self, rng):
        grads = rng.normal(size=(50, 6))

        def run():
            state = AdamState.zeros(6)
            params = np.ones(6)
            for g in grads:
                state, params = adam_step(state, params, g)
            return params

        assert np.array_equal(run(), run())

    def test_learning_rate_schedule(self):
        state = AdamState.zeros(1)
        assert state.learning_rate(1) == 0.05
        assert state.learning_rate(150) == 0.05
        assert state.learning_rate(151) == 0.005
        assert state.learning_rate(200) == 0.005

    def test_non_finite_gradient_aborts(self):
        with pytest.raises(FitAbortedError):
            adam_step(AdamState.zeros(2), np.zeros(2), np.array([1.0, np.nan]))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            adam_step(AdamState.zeros(2), np.zeros(3), np.zeros(3))


class TestInitializeParams:
    def masks_with_square(self, size_px, cam, center=None):
        h, w = cam.height, cam.width
        cy, cx = center or (h // 2, w // 2)
        vals = np.zeros((h, w))
        half = size_px // 2
        vals[cy - half : cy + half, cx - half : cx + half] = 1.0
        return [SilhouetteImage(vals)]

    def test_centered_mask_on_principal_ray(self, door_scene):
        cam = door_scene["record"].camera
        model = door_scene["model"]
        masks = self.masks_with_square(30, cam)
        init = initialize_params(model, 0, cam, masks)
        ray = init.translation_cm / np.linalg.norm(init.translation_cm)
        assert np.allclose(ray, [0.0, 0.0, 1.0], atol=1e-2)

    def test_doubling_area_scales_depth(self, door_scene):
        cam = door_scene["record"].camera
        model = door_scene["model"]
        base = initialize_params(model, 0, cam, self.masks_with_square(24, cam))
        bigger = initialize_params(model, 0, cam, self.masks_with_square(34, cam))
        # 34/24 ~ sqrt(2): doubling the area scales depth by 1/sqrt(2).
        ratio = bigger.translation_cm[2] / base.translation_cm[2]
        assert ratio == pytest.approx(24 / 34, rel=0.02)

    def test_deterministic(self, door_scene):
        record = door_scene["record"]
        model = door_scene["model"]
        a = initialize_params(model, 0, record.camera, list(record.masks), record.evidence)
        b = initialize_params(model, 0, record.camera, list(record.masks), record.evidence)
        assert np.array_equal(a.translation_cm, b.translation_cm)
        assert np.array_equal(a.rotation, b.rotation)

    def test_upright_without_evidence(self, door_scene):
        record = door_scene["record"]
        init = initialize_params(door_scene["model"], 0, record.camera, list(record.masks))
        assert np.allclose(init.rotation, UPRIGHT_FACING)
        lo, hi = door_scene["model"].parts[0].joint.limits
        assert np.all(init.part_motion == (lo + hi) / 2.0)

    def test_empty_masks_rejected(self, door_scene):
        cam = door_scene["record"].camera
        empty = [SilhouetteImage(np.zeros((cam.height, cam.width)))]
        with pytest.raises(EmptyMaskError):
            initialize_params(door_scene["model"], 0, cam, empty)


class TestCandidates:
    def test_full_grid(self, door_scene):
        model = door_scene["model"]
        cands = enumerate_candidates([model], ["left", "right"], hoi_active=True)
        assert len(cands) == 2 * len(model.parts[0].contact_candidates)
        labels = {c.label() for c in cands}
        assert len(labels) == len(cands)

    def test_hoi_off_collapses(self, door_scene):
        model = door_scene["model"]
        cands = enumerate_candidates([model], ["left", "right"], hoi_active=False)
        assert len(cands) == 1


class TestFitCandidate:
    def test_zero_weights_leave_params(self, door_scene):
        record = door_scene["record"]
        ctx = EnergyContext(
            door_scene["model"], record.camera, SoftRasterSettings(), record.num_frames,
            gt_masks=list(record.masks), evidence=record.evidence, placed=door_scene["placed"],
        )
        init = record.ground_truth.to_params()
        weights = ObjectiveWeights(mask=0, human=0, hoi=0, reg=0)
        res = fit_candidate(ctx, Candidate("door-cabinet", "right", 5, 0), weights, init, iterations=12)
        assert len(res.trace) == 12
        assert np.allclose(res.params.translation_cm, init.translation_cm, atol=1e-12)
        assert np.allclose(res.params.part_motion, init.part_motion, atol=1e-12)

    def test_trace_has_exactly_iterations_entries(self, door_scene):
        record = door_scene["record"]
        ctx = EnergyContext(
            door_scene["model"], record.camera, SoftRasterSettings(), record.num_frames,
            gt_masks=list(record.masks), evidence=record.evidence, placed=door_scene["placed"],
        )
        init = record.ground_truth.to_params()
        res = fit_candidate(
            ctx, Candidate("door-cabinet", "right", 5, 0), ObjectiveWeights(), init, iterations=25
        )
        assert len(res.trace) == 25
        assert res.final_report is not None
        assert np.allclose(
            res.final_report.total, res.final_report.weighted_sum(), atol=1e-9
        )

    def test_rotation_stays_orthonormal(self, door_scene):
        record = door_scene["record"]
        ctx = EnergyContext(
            door_scene["model"], record.camera, SoftRasterSettings(), record.num_frames,
            gt_masks=list(record.masks), evidence=record.evidence, placed=door_scene["placed"],
        )
        init = record.ground_truth.to_params()
        res = fit_candidate(
            ctx, Candidate("door-cabinet", "left", 5, 0), ObjectiveWeights(), init, iterations=30
        )
        rot = res.params.rotation
        assert np.abs(rot @ rot.T - np.eye(3)).max() < 1e-6


class TestFitVideo:
    def run(self, door_scene, jobs=1, iterations=20, **kw):
        record = door_scene["record"]
        return fit_video(
            [door_scene["model"]],
            record.camera,
            list(record.masks),
            record.evidence,
            weights=kw.pop("weights", ObjectiveWeights()),
            iterations=iterations,
            jobs=jobs,
            placed=door_scene["placed"],
            **kw,
        )

    def test_single_model_best_selected(self, door_scene):
        result = self.run(door_scene)
        finals = [c.final_total for c in result.candidates]
        assert result.best_index == int(np.argmin(finals))
        assert result.best.final_total == min(finals)

    def test_parallelism_identical(self, door_scene):
        from hoifit.data import fit_result_to_dict

        a = self.run(door_scene, jobs=1)
        b = self.run(door_scene, jobs=2)
        assert fit_result_to_dict(a) == fit_result_to_dict(b)

    def test_no_models_rejected(self, door_scene):
        record = door_scene["record"]
        with pytest.raises(InvalidInputError):
            fit_video([], record.camera, list(record.masks), record.evidence)
