"""hoifit: fit pose, size and articulation of jointed objects to video evidence."""

from .articulated import (
    ArticulatedModel,
    JointSpec,
    MovablePart,
    ObjectParams,
    PoseJacobian,
    dimensions,
    pose_mesh,
    pose_mesh_jacobian,
    scale_joint,
)
from .camera import CameraIntrinsics, back_project, project_points
from .energy import (
    ContactAlignment,
    EnergyContext,
    EnergyReport,
    ObjectiveWeights,
    contact_energy,
    mask_energy,
    orientation_energy,
    regularizer_energy,
    total_energy,
)
from .errors import (
    BehindCameraError,
    DataFormatError,
    DegenerateScaleError,
    EmptyMaskError,
    FitAbortedError,
    FitFailedError,
    HoifitError,
    InvalidInputError,
    PlacementUnderconstrainedError,
    TrajectoryGapError,
)
from .fitting import (
    AdamState,
    Candidate,
    CandidateResult,
    FitResult,
    adam_step,
    fit_candidate,
    fit_video,
    initialize_params,
)
from .human import (
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
from .meshes import TriMesh, concat_meshes, read_obj, write_obj
from .metrics import (
    EvalReport,
    dimension_error,
    evaluate_fit,
    location_error,
    model_accuracy,
    orientation_error,
    part_motion_error,
)
from .rendering import (
    SilhouetteImage,
    SoftRasterSettings,
    mask_centroid,
    mask_iou,
    render_silhouette,
    render_silhouette_with_grad,
)
from .synthetic import NoiseLevels, SceneSpec, build_model, generate_scene, round_trip

__version__ = "0.1.0"
