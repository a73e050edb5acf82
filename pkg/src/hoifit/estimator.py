"""Scikit-learn style front door to the fitting pipeline.

The estimator wraps the candidate search behind ``fit`` with flat scalar
hyperparameters, so it plugs into get_params/set_params/clone tooling.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .articulated import ArticulatedModel, pose_mesh
from .config import RunConfig
from .data import VideoRecord
from .errors import InvalidInputError
from .fitting import fit_video
from .metrics import EvalReport, evaluate_fit
from .meshes import TriMesh


class ArticulatedObjectFitter(BaseEstimator):
    """Fits object pose, size and per-frame articulation to one video record.

    Parameters mirror :class:`hoifit.config.RunConfig`. After ``fit`` the
    result is exposed through ``result_``, ``best_params_`` and
    ``best_model_id_``.
    """

    def __init__(
        self,
        mask_weight: float = 1.0,
        human_weight: float = 1.0,
        hoi_weight: float = 10.0,
        reg_weight: float = 0.1,
        center_weight: float = 1.0,
        limit_weight: float = 1.0,
        depth_weight: float = 0.0001,
        tilt_weight: float = 1.0,
        smooth_weight: float = 0.01,
        sigma: float = 2e-5,
        blur_radius_px: float = 2.0,
        near_plane_cm: float = 1.0,
        iterations: int = 200,
        jobs: int = 1,
    ):
        self.mask_weight = mask_weight
        self.human_weight = human_weight
        self.hoi_weight = hoi_weight
        self.reg_weight = reg_weight
        self.center_weight = center_weight
        self.limit_weight = limit_weight
        self.depth_weight = depth_weight
        self.tilt_weight = tilt_weight
        self.smooth_weight = smooth_weight
        self.sigma = sigma
        self.blur_radius_px = blur_radius_px
        self.near_plane_cm = near_plane_cm
        self.iterations = iterations
        self.jobs = jobs

    @classmethod
    def from_config(cls, config: RunConfig) -> "ArticulatedObjectFitter":
        return cls(**config.to_dict())

    def run_config(self) -> RunConfig:
        return RunConfig(**self.get_params())

    def fit(self, record: VideoRecord, models: list[ArticulatedModel]):
        """Run the candidate grid on one video; returns self."""
        if not models:
            raise InvalidInputError("fit needs at least one articulated model")
        config = self.run_config()
        self.models_ = {m.model_id: m for m in models}
        self.record_ = record
        self.result_ = fit_video(
            models,
            record.camera,
            list(record.masks),
            record.evidence,
            weights=config.weights(),
            settings=config.raster_settings(),
            iterations=config.iterations,
            jobs=config.jobs,
            config=config.to_dict() | {"configHash": config.hash()},
        )
        best = self.result_.best
        self.best_params_ = best.params
        self.best_model_id_ = best.candidate.model_id
        return self

    def _check_fitted(self):
        if not hasattr(self, "result_"):
            raise InvalidInputError("call fit before using the fitted estimator")

    def predict(self, frame: int | None = None) -> TriMesh | list[TriMesh]:
        """World-space posed mesh(es) of the best candidate."""
        self._check_fitted()
        model = self.models_[self.best_model_id_]
        if frame is not None:
            return pose_mesh(model, self.best_params_, frame)
        return [pose_mesh(model, self.best_params_, t) for t in range(self.best_params_.num_frames)]

    def score(self, record=None) -> float:
        """Higher-is-better score: the negated best final objective."""
        self._check_fitted()
        return -float(self.result_.best.final_total)

    def evaluate(self) -> EvalReport:
        """Metrics against the record's ground truth annotation."""
        self._check_fitted()
        gt = self.record_.ground_truth
        if gt is None:
            raise InvalidInputError("the fitted record has no ground-truth annotation")
        gt_model = self.models_.get(gt.model_id)
        kind = (
            gt_model.parts[gt.active_part].joint.kind
            if gt_model is not None and gt_model.num_parts
            else "revolute"
        )
        best = self.result_.best
        return evaluate_fit(
            best.params.rotation,
            best.params.translation_cm,
            best.params.part_motion,
            best.params.size_cm,
            gt.rotation(),
            gt.translation_cm,
            np.asarray(gt.part_motion),
            gt.size_cm,
            kind,
            model_pred=best.candidate.model_id,
            model_gt=gt.model_id,
        )
