"""Configuration models.

Both models are frozen pydantic models; invalid values raise
``pydantic.ValidationError`` on construction.
"""

import logging
import math
import os

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from omnitrack.errors import DomainError
from omnitrack.sphere_geom import ErpSize


logger = logging.getLogger(__name__)

RASTER_ENV = "OMNITRACK_RASTER"
DEFAULT_RASTER = ErpSize(1920, 960)


def default_contour_tol(width: int, height: int) -> int:
    """Contour matching tolerance: 0.8% of the image diagonal, rounded up."""
    return int(math.ceil(0.008 * math.hypot(width, height)))


def default_raster() -> ErpSize:
    """Evaluation raster from ``OMNITRACK_RASTER`` (``WxH``), else 1920x960."""
    value = os.environ.get(RASTER_ENV)
    if not value:
        return DEFAULT_RASTER
    try:
        return ErpSize.parse(value)
    except DomainError as e:
        raise DomainError(f"{RASTER_ENV} is malformed: {e}") from e


class SearchPolicy(BaseModel):
    """Sizing rule for the next search region and the local image."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    expand_factor: float = Field(default=2.0, ge=1.0)
    min_fov_deg: float = Field(default=30.0, gt=0.0)
    max_theta_deg: float = Field(default=360.0, gt=0.0, le=360.0)
    max_phi_deg: float = Field(default=180.0, gt=0.0, le=180.0)
    local_size: int = Field(default=512, ge=2)
    dilation_radius: Optional[int] = Field(default=None, ge=0)
    extended: bool = True


class EvalSettings(BaseModel):
    """Options of one-pass evaluation."""

    model_config = ConfigDict(frozen=True, extra="forbid", arbitrary_types_allowed=True)

    raster: ErpSize = Field(default_factory=default_raster)
    box_kind: Literal["bbox", "rbbox"] = "bbox"
    fov_kind: Literal["bfov", "rbfov"] = "bfov"
    masks: bool = False
    contour_tol: Optional[int] = Field(default=None, ge=0)
    angle_mode: Literal["geodesic", "literal"] = "geodesic"
    norm: Literal["gt"] = "gt"

    @field_validator("raster", mode="before")
    @classmethod
    def _parse_raster(cls, value):
        if isinstance(value, str):
            return ErpSize.parse(value)
        if isinstance(value, (tuple, list)) and len(value) == 2:
            return ErpSize(int(value[0]), int(value[1]))
        return value

    def resolved_contour_tol(self, size: ErpSize) -> int:
        if self.contour_tol is not None:
            return self.contour_tol
        return default_contour_tol(size.width, size.height)
