import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoifit.errors import InvalidInputError
from hoifit.metrics import (
    dimension_error,
    evaluate_fit,
    location_error,
    model_accuracy,
    orientation_error,
    part_motion_error,
)
from hoifit.so3 import rotvec_to_matrix


class TestOrientationError:
    def test_identical(self):
        rot = rotvec_to_matrix(np.array([0.4, -0.2, 0.9]))
        assert orientation_error(rot, rot) == pytest.approx(0.0, abs=1e-9)

    def test_thirty_degrees_any_axis(self, rng):
        for _ in range(5):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            base = rotvec_to_matrix(rng.normal(size=3))
            rot = rotvec_to_matrix(axis * np.deg2rad(30.0)) @ base
            assert orientation_error(rot, base) == pytest.approx(30.0, abs=1e-9)

    def test_antipodal(self):
        flip = rotvec_to_matrix(np.array([np.pi, 0.0, 0.0]))
        assert orientation_error(np.eye(3), flip) == pytest.approx(180.0, abs=1e-9)

    def test_rejects_non_rotation(self):
        with pytest.raises(InvalidInputError):
            orientation_error(np.eye(3) * 2.0, np.eye(3))


class TestLocationError:
    def test_same_point(self):
        x = np.array([1.0, 2.0, 3.0])
        assert location_error(x, x) == 0.0

    def test_pythagorean(self):
        assert location_error(np.array([3.0, 4.0, 0.0]), np.zeros(3)) == 5.0

    def test_dataset_average_magnitude(self):
        # Matches the reported all-category average location error.
        assert location_error(np.array([0.0, 0.0, 29.782]), np.zeros(3)) == pytest.approx(29.782)


class TestPartMotionError:
    def test_identical(self):
        seq = np.array([0.0, 10.0, 20.0])
        err, residuals = part_motion_error(seq, seq, "revolute")
        assert err == 0.0
        assert np.all(residuals == 0.0)

    def test_constant_offset(self):
        gt = np.array([5.0, 10.0, 15.0])
        err, _ = part_motion_error(gt + 5.0, gt, "revolute")
        assert err == 5.0

    def test_mean_of_residuals(self):
        err, residuals = part_motion_error(
            np.array([0.0, 10.0, 20.0]), np.zeros(3), "prismatic"
        )
        assert err == 10.0
        assert residuals.tolist() == [0.0, 10.0, 20.0]

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            part_motion_error(np.zeros(3), np.zeros(4), "revolute")

    def test_shuffle_invariance_of_mean(self, rng):
        est = rng.normal(size=8)
        gt = rng.normal(size=8)
        base, _ = part_motion_error(est, gt, "revolute")
        perm = rng.permutation(8)
        shuffled, _ = part_motion_error(est[perm], gt[perm], "revolute")
        assert shuffled == pytest.approx(base, abs=1e-12)


class TestDimensionError:
    def test_equal(self):
        d = np.array([10.0, 20.0, 30.0])
        assert dimension_error(d, d) == 0.0

    def test_mean_absolute(self):
        assert dimension_error(np.array([3.0, 6.0, 9.0]), np.zeros(3)) == 6.0

    def test_reported_average_magnitude(self):
        diffs = np.full(3, 13.729)
        assert dimension_error(diffs, np.zeros(3)) == pytest.approx(13.729)


class TestModelAccuracy:
    def test_all_correct(self):
        assert model_accuracy([("a", "a")] * 4) == 1.0

    def test_ten_of_eleven(self):
        pairs = [("m", "m")] * 10 + [("m", "x")]
        assert round(100 * model_accuracy(pairs), 2) == 90.91

    def test_five_of_seven(self):
        pairs = [("m", "m")] * 5 + [("m", "x")] * 2
        assert round(100 * model_accuracy(pairs), 2) == 71.43

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            model_accuracy([])


@given(
    st.lists(
        st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
            lambda v: np.linalg.norm(v) > 1e-2
        ),
        min_size=3,
        max_size=3,
    )
)
@settings(max_examples=30, deadline=None)
def test_orientation_error_metric_properties(vecs):
    mats = [rotvec_to_matrix(np.asarray(v)) for v in vecs]
    a, b, c = mats
    assert orientation_error(a, b) == pytest.approx(orientation_error(b, a), abs=1e-9)
    assert orientation_error(a, a) == pytest.approx(0.0, abs=1e-9)
    assert orientation_error(a, c) <= orientation_error(a, b) + orientation_error(b, c) + 1e-6


def test_evaluate_fit_bundles_everything(rng):
    rot = rotvec_to_matrix(rng.normal(size=3))
    report = evaluate_fit(
        rot, np.array([1.0, 2.0, 2.0]), np.array([10.0, 20.0]), np.array([30.0, 40.0, 50.0]),
        rot, np.zeros(3), np.array([12.0, 24.0]), np.array([33.0, 40.0, 50.0]),
        "revolute", model_pred="a", model_gt="a",
    )
    assert report.orientation_err_deg == pytest.approx(0.0, abs=1e-9)
    assert report.location_err_cm == pytest.approx(3.0)
    assert report.part_motion_err == pytest.approx(3.0)
    assert report.part_motion_unit == "deg"
    assert report.dimension_err_cm == pytest.approx(1.0)
    assert report.model_correct is True
    doc = report.to_dict()
    assert doc["modelCorrect"] is True
    assert len(doc["perFrameMotionResiduals"]) == 2
