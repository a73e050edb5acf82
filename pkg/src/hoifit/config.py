"""Run configuration: one flat, human-readable JSON document for every knob.

Every run emits its resolved configuration (all defaults filled in) alongside
results, plus a short content hash for reproducibility checks.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .data import canonical_json, config_hash, load_json, save_json
from .energy import ObjectiveWeights
from .errors import DataFormatError
from .rendering import SoftRasterSettings


@dataclass(frozen=True)
class RunConfig:
    mask_weight: float = 1.0
    human_weight: float = 1.0
    hoi_weight: float = 10.0
    reg_weight: float = 0.1
    center_weight: float = 1.0
    limit_weight: float = 1.0
    depth_weight: float = 0.0001
    tilt_weight: float = 1.0
    smooth_weight: float = 0.01
    sigma: float = 2e-5
    blur_radius_px: float = 2.0
    near_plane_cm: float = 1.0
    iterations: int = 200
    jobs: int = 1

    def weights(self) -> ObjectiveWeights:
        return ObjectiveWeights(
            mask=self.mask_weight,
            human=self.human_weight,
            hoi=self.hoi_weight,
            reg=self.reg_weight,
            center=self.center_weight,
            limit=self.limit_weight,
            depth=self.depth_weight,
            tilt=self.tilt_weight,
            smooth=self.smooth_weight,
        )

    def raster_settings(self) -> SoftRasterSettings:
        return SoftRasterSettings(
            sigma=self.sigma,
            blur_radius_px=self.blur_radius_px,
            near_plane_cm=self.near_plane_cm,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        return config_hash(self.to_dict())

    def canonical(self) -> str:
        return canonical_json(self.to_dict())

    def save(self, path) -> None:
        save_json(path, self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise DataFormatError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_dict(load_json(path))
