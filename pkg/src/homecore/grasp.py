"""Grasp pose estimation from a depth image and per-object masks.

Pipeline: masked deprojection -> nearest object -> PCA oriented box -> top/front
approach decision. Camera frame is x right, y down, z forward; "up" is -y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .camera import CameraIntrinsics
from .errors import DegenerateCloud, DimensionMismatch, EmptyCloud, EmptyInput

UP = np.array([0.0, -1.0, 0.0])
JACOBI_TOL = 1e-12
RANK_TOL = 1e-12
TIE_TOL = 1e-9


class Approach(str, Enum):
    TOP = "top"
    FRONT = "front"


@dataclass(frozen=True, eq=False)
class OrientedBBox3:
    """PCA box. ``center`` is the point centroid; ``box_center`` the geometric middle.

    ``axes`` holds unit direction vectors as rows, ordered so ``extents``
    (full side lengths) are descending.
    """

    center: np.ndarray
    axes: np.ndarray
    extents: np.ndarray
    box_center: np.ndarray
    eigenvalues: np.ndarray

    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float)
        return self.box_center + (signs * (self.extents / 2)) @ self.axes

    def contains(self, points, tol: float = 1e-6) -> np.ndarray:
        local = (np.asarray(points, float).reshape(-1, 3) - self.box_center) @ self.axes.T
        return np.all(np.abs(local) <= self.extents / 2 + tol, axis=1)

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "box_center": self.box_center.tolist(),
                "axes": self.axes.tolist(), "extents": self.extents.tolist()}


@dataclass(frozen=True)
class GraspPose:
    position: tuple[float, float, float]
    yaw: float
    pitch: float
    approach: Approach

    def to_dict(self) -> dict:
        return {"approach": self.approach.value, "position": list(self.position),
                "yaw": self.yaw, "pitch": self.pitch}


@dataclass(frozen=True)
class GraspResult:
    pose: GraspPose
    bbox: OrientedBBox3
    object_index: int
    n_points: int

    def to_dict(self, with_bbox: bool = True) -> dict:
        out = self.pose.to_dict()
        out["object_index"] = self.object_index
        out["n_points"] = self.n_points
        if with_bbox:
            out["bbox"] = self.bbox.to_dict()
        return out


def deproject(depth: np.ndarray, mask: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """Back-project masked pixels with positive depth into camera-frame points."""
    depth = np.asarray(depth, dtype=float)
    mask = np.asarray(mask).astype(bool)
    if depth.shape != k.shape or mask.shape != k.shape:
        raise DimensionMismatch(
            f"depth {depth.shape} / mask {mask.shape} do not match intrinsics {k.shape}")
    valid = mask & (depth > 0) & np.isfinite(depth)
    v, u = np.nonzero(valid)
    if len(u) == 0:
        raise EmptyCloud("mask selects no pixel with valid depth")
    d = depth[v, u]
    return np.stack([(u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d], axis=1)


def closest_object(clouds) -> int:
    if len(clouds) == 0:
        raise EmptyInput("no point clouds given")
    dists = []
    for i, cloud in enumerate(clouds):
        cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
        if len(cloud) == 0:
            raise EmptyInput(f"point cloud {i} is empty", index=i)
        dists.append(np.linalg.norm(cloud.mean(axis=0)))
    return int(np.argmin(dists))


def jacobi_eigh(a: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = 64):
    """Cyclic Jacobi eigen-decomposition of a small symmetric matrix.

    Returns ``(eigenvalues, vectors)`` with eigenvectors as columns, unsorted.
    Sweeps until the off-diagonal Frobenius norm drops below ``tol``, then
    runs one more sweep to polish.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    polish = False
    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum(np.tril(a, -1) ** 2)) * 2)
        if off == 0.0 or (polish and off < tol):
            break
        if off < tol:
            polish = True
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                a[p, q] = a[q, p] = 0.0
                v = v @ rot
    return np.diag(a).copy(), v


def _sign_fixed(axis: np.ndarray) -> np.ndarray:
    return axis if axis[np.argmax(np.abs(axis))] > 0 else -axis


def _right_handed_frame(a1: np.ndarray, a2: np.ndarray) -> np.ndarray:
    a1 = _sign_fixed(a1 / np.linalg.norm(a1))
    a2 = a2 - (a2 @ a1) * a1
    a2 = _sign_fixed(a2 / np.linalg.norm(a2))
    return np.stack([a1, a2, np.cross(a1, a2)])


def pca_bbox(cloud) -> OrientedBBox3:
    pts = np.asarray(cloud, dtype=float).reshape(-1, 3)
    if len(pts) < 4:
        raise DegenerateCloud(f"need at least 4 points, got {len(pts)}")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered / len(pts)
    evals, evecs = jacobi_eigh(cov)
    order = np.argsort(-evals, kind="stable")
    evals = evals[order]
    if evals[0] <= 0 or evals[1] <= RANK_TOL * evals[0]:
        raise DegenerateCloud("point covariance has rank < 2")
    axes = _right_handed_frame(evecs[:, order[0]], evecs[:, order[1]])
    proj = centered @ axes.T
    extents = proj.max(axis=0) - proj.min(axis=0)
    perm = np.argsort(-extents, kind="stable")
    if not np.array_equal(perm, np.arange(3)):
        # variance order and span order disagree; span order wins
        axes = _right_handed_frame(axes[perm[0]], axes[perm[1]])
        evals = evals[perm]
        proj = centered @ axes.T
        extents = proj.max(axis=0) - proj.min(axis=0)
    mid = 0.5 * (proj.max(axis=0) + proj.min(axis=0))
    return OrientedBBox3(centroid, axes, extents, centroid + mid @ axes, evals)


def _horizontal_basis(up: np.ndarray):
    forward = np.array([0.0, 0.0, 1.0])
    forward = forward - (forward @ up) * up
    forward /= np.linalg.norm(forward)
    return forward, np.cross(forward, up)


def footprint_and_height(bbox: OrientedBBox3, up=UP) -> tuple[float, float, int]:
    """Largest horizontal box-edge extent, vertical extent, and the index of that edge."""
    up = np.asarray(up, float) / np.linalg.norm(up)
    vertical = np.abs(bbox.axes @ up)
    height = float(np.sum(bbox.extents * vertical))
    horizontal = bbox.extents * np.sqrt(np.clip(1.0 - vertical ** 2, 0.0, 1.0))
    i = int(np.argmax(horizontal))
    return float(horizontal[i]), height, i


def decide_grasp(bbox: OrientedBBox3, up=UP) -> GraspPose:
    up = np.asarray(up, float) / np.linalg.norm(up)
    forward, right = _horizontal_basis(up)
    width, height, major = footprint_and_height(bbox, up)
    offset = bbox.box_center - bbox.center
    if width >= height - TIE_TOL:
        # straight down onto the top face, fingers closing across the major footprint edge
        lift = offset @ up + height / 2
        position = bbox.center + lift * up
        d = bbox.axes[major] - (bbox.axes[major] @ up) * up
        yaw = math.atan2(d @ right, d @ forward)
        if yaw <= -math.pi / 2:
            yaw += math.pi
        elif yaw > math.pi / 2:
            yaw -= math.pi
        return GraspPose(tuple(float(c) for c in position), yaw, math.pi / 2, Approach.TOP)
    toward = -bbox.center - (-bbox.center @ up) * up
    norm = np.linalg.norm(toward)
    toward = toward / norm if norm > 1e-12 else -forward
    half_depth = float(np.sum(bbox.extents / 2 * np.abs(bbox.axes @ toward)))
    position = bbox.center + (offset @ toward + half_depth) * toward
    yaw = math.atan2(-toward @ right, -toward @ forward)
    return GraspPose(tuple(float(c) for c in position), yaw, 0.0, Approach.FRONT)


def estimate_grasp(depth: np.ndarray, masks, k: CameraIntrinsics) -> GraspResult:
    clouds, indices = [], []
    for i, mask in enumerate(masks):
        try:
            clouds.append(deproject(depth, mask, k))
        except EmptyCloud:
            continue
        indices.append(i)
    if not clouds:
        raise EmptyCloud("no mask yields a point with valid depth", masks=len(masks))
    chosen = closest_object(clouds)
    index = indices[chosen]
    try:
        bbox = pca_bbox(clouds[chosen])
    except DegenerateCloud as exc:
        raise DegenerateCloud(f"mask {index}: {exc}", mask_index=index) from exc
    return GraspResult(decide_grasp(bbox), bbox, index, len(clouds[chosen]))
