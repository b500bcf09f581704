"""Pinhole camera model shared by grasp estimation and scene generation.

Camera frame: x right, y down, z forward.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError

NEAR_PLANE = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ConfigError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ConfigError("principal point must lie inside the image")

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        try:
            return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                       int(d["width"]), int(d["height"]))
        except KeyError as exc:
            raise ConfigError(f"intrinsics missing field {exc.args[0]!r}") from exc

    @classmethod
    def from_json(cls, text: str) -> "CameraIntrinsics":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass(frozen=True, eq=False)
class Camera:
    """Intrinsics plus pose. ``rotation`` maps world vectors into the camera frame."""

    intrinsics: CameraIntrinsics
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        if R.shape != (3, 3) or not np.allclose(R @ R.T, np.eye(3), atol=1e-9):
            raise ConfigError("camera rotation must be orthonormal")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))

    @classmethod
    def look_at(cls, intrinsics: CameraIntrinsics, eye, target, up=(0.0, 0.0, 1.0)) -> "Camera":
        eye = np.asarray(eye, dtype=float)
        forward = np.asarray(target, dtype=float) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, up)
        if np.linalg.norm(right) < 1e-9:
            right = np.cross(forward, (1.0, 0.0, 0.0))
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        return cls(intrinsics, eye, np.stack([right, down, forward]))

    def to_camera(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        return (pts - self.position) @ self.rotation.T

    def to_dict(self) -> dict:
        return {"intrinsics": self.intrinsics.to_dict(),
                "position": self.position.tolist(),
                "rotation": self.rotation.tolist()}

    def __eq__(self, other):
        if not isinstance(other, Camera):
            return NotImplemented
        return (self.intrinsics == other.intrinsics
                and np.array_equal(self.position, other.position)
                and np.array_equal(self.rotation, other.rotation))


def project_camera_points(k: CameraIntrinsics, pts_cam: np.ndarray):
    """Project camera-frame points; returns ``(uv, in_front)``. Pixels behind the camera are NaN."""
    pts_cam = np.asarray(pts_cam, dtype=float).reshape(-1, 3)
    z = pts_cam[:, 2]
    in_front = z > NEAR_PLANE
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(in_front, k.fx * pts_cam[:, 0] / z + k.cx, np.nan)
        v = np.where(in_front, k.fy * pts_cam[:, 1] / z + k.cy, np.nan)
    return np.stack([u, v], axis=1), in_front


def project(camera: Camera, point):
    """Pixel ``(u, v)`` of a world point, or ``None`` when it is behind the camera."""
    uv, in_front = project_camera_points(camera.intrinsics, camera.to_camera(point))
    if not in_front[0]:
        return None
    return (float(uv[0, 0]), float(uv[0, 1]))
