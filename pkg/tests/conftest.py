import numpy as np
import pytest

from hoifit.articulated import ArticulatedModel, JointSpec, MovablePart, ObjectParams
from hoifit.camera import CameraIntrinsics
from hoifit.human import HumanFrame
from hoifit.meshes import TriMesh
from hoifit.so3 import UPRIGHT_FACING, rotvec_to_matrix


def fd_gradient(f, x, h=1e-5):
    """Central finite differences of a scalar function on a flat vector."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        grad.flat[i] = (f(xp) - f(xm)) / (2 * h)
    return grad


def assert_grad_close(analytic, numeric, rel=1e-4, abs_tol=1e-6):
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    scale = np.maximum(np.abs(numeric), np.abs(analytic))
    err = np.abs(analytic - numeric)
    ok = (err <= abs_tol) | (err <= rel * scale)
    assert ok.all(), (
        f"gradient mismatch at {np.nonzero(~ok)[0][:5]}: "
        f"analytic={analytic[~ok][:5]} numeric={numeric[~ok][:5]}"
    )


def make_box(center, half):
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float)
    verts = np.asarray(center, float) + signs * np.asarray(half, float)
    faces = np.array(
        [
            [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5],
            [0, 4, 5], [0, 5, 1], [2, 3, 7], [2, 7, 6],
            [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],
        ]
    )
    return TriMesh(verts, faces)


def random_articulated_model(rng, kind=None) -> ArticulatedModel:
    """Small random two-box model with the canonical normalization."""
    kind = kind or rng.choice(["revolute", "prismatic"])
    base = make_box((0.0, 0.0, -0.1), (0.5, 0.5, 0.4))
    part = make_box((0.1, -0.05, 0.4), (0.35, 0.4, 0.1))
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    origin = rng.uniform(-0.5, 0.5, size=3)
    joint = JointSpec(kind, axis, origin, (-40.0, 80.0) if kind == "revolute" else (-5.0, 25.0))
    return ArticulatedModel(
        f"random-{kind}", "test", base, (MovablePart(part, joint, (1, 5)),),
        nominal_size_cm=np.array([50.0, 45.0, 60.0]),
    )


def random_params(rng, num_frames=3) -> ObjectParams:
    rotvec = rng.normal(size=3)
    rotvec = rotvec / np.linalg.norm(rotvec) * rng.uniform(0.1, 2.4)
    return ObjectParams(
        translation_cm=rng.uniform(-30, 30, size=3) + np.array([0, 0, 180.0]),
        rotation=rotvec_to_matrix(rotvec),
        size_cm=rng.uniform(30, 80, size=3),
        part_motion=rng.uniform(0, 40, size=num_frames),
        active_part=0,
    )


def upright_skeleton(offset=np.zeros(3), scale=1.0, rotation=None):
    """Flat-footed skeleton, head up (+y), facing -z, in estimator-like units."""
    rot = np.eye(3) if rotation is None else np.asarray(rotation)

    def at(x, y, z):
        return rot @ (scale * np.array([x, y, z])) + offset

    kps = {
        "headTop": at(0.0, 1.70, 0.0),
        "leftShoulder": at(-0.18, 1.43, 0.0),
        "rightShoulder": at(0.18, 1.43, 0.0),
        "leftHip": at(-0.10, 0.95, 0.0),
        "rightHip": at(0.10, 0.95, 0.0),
        "leftAnkle": at(-0.09, 0.02, 0.0),
        "rightAnkle": at(0.09, 0.02, 0.0),
        "leftToe": at(-0.09, 0.02, -0.18),
        "rightToe": at(0.09, 0.02, -0.18),
        "leftHeel": at(-0.09, 0.0, 0.0),
        "rightHeel": at(0.09, 0.0, 0.0),
        "leftPalm": at(-0.26, 0.88, -0.06),
        "rightPalm": at(0.26, 0.88, -0.06),
    }
    return HumanFrame(kps, {}, {n: True for n in kps})


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def small_camera():
    return CameraIntrinsics(120.0, np.array([48.0, 48.0]), (96, 96))


@pytest.fixture(scope="session")
def door_scene(tmp_path_factory):
    """A small generated door scene shared by energy/fitting tests."""
    from hoifit.data import load_model_library, load_video_record
    from hoifit.human import solve_placement
    from hoifit.synthetic import SceneSpec, generate_scene

    root = tmp_path_factory.mktemp("door-scene")
    spec = SceneSpec("door", seed=5, num_frames=4, image_size=(96, 96), focal_px=86.0)
    video_dir = generate_scene(spec, root)
    library = load_model_library(root / "models")
    record = load_video_record(video_dir, library)
    placed = solve_placement(record.evidence, record.camera)
    return {
        "root": root,
        "spec": spec,
        "record": record,
        "model": library["door-cabinet"],
        "library": library,
        "placed": placed,
    }
