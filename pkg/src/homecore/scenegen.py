"""Domain-randomized synthetic scenes with automatic detection labels.

Each sample draws its own RNG stream from ``(seed, index)``, so samples can be
generated in any order or in parallel with identical results. Labels use the
normalized ``class_id cx cy w h`` line format.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull

from .camera import NEAR_PLANE, Camera, CameraIntrinsics, project, project_camera_points
from .errors import ConfigError, InfeasibleConfig, IoError
from .formats import ppm_bytes

__all__ = [
    "ObjectModel", "ScenePose", "SceneConfig", "SceneSample", "Annotation",
    "sample_scene", "annotate", "annotated", "render_preview", "visible_fraction",
    "generate_dataset", "project",
    "sample_seed", "cuboid", "render_box_depth", "format_labels",
]

LABEL_DIGITS = 6


def cuboid(sx: float, sy: float, sz: float, base_at_zero: bool = True) -> np.ndarray:
    z0 = 0.0 if base_at_zero else -sz / 2
    return np.array([[x, y, z] for x in (-sx / 2, sx / 2) for y in (-sy / 2, sy / 2)
                     for z in (z0, z0 + sz)], dtype=float)


@dataclass(frozen=True, eq=False)
class ObjectModel:
    class_id: int
    class_name: str
    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        if len(v) < 4 or np.linalg.matrix_rank(v - v.mean(axis=0), tol=1e-9) < 3:
            raise ConfigError(f"model {self.class_name!r} needs >= 4 non-coplanar vertices")
        object.__setattr__(self, "vertices", v)

    @cached_property
    def halfspaces(self) -> np.ndarray:
        """Hull facets as rows ``(nx, ny, nz, d)`` with ``n.x + d <= 0`` inside."""
        return ConvexHull(self.vertices).equations

    def to_dict(self) -> dict:
        return {"class_id": self.class_id, "class_name": self.class_name,
                "vertices": self.vertices.tolist()}


def _rot_z(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class ScenePose:
    model: ObjectModel
    position: tuple[float, float, float]
    yaw: float

    def world_vertices(self) -> np.ndarray:
        return self.model.vertices @ _rot_z(self.yaw).T + np.asarray(self.position)

    def world_halfspaces(self) -> np.ndarray:
        eq = self.model.halfspaces
        normals = eq[:, :3] @ _rot_z(self.yaw).T
        offsets = eq[:, 3] - normals @ np.asarray(self.position)
        return np.column_stack([normals, offsets])

    def to_dict(self) -> dict:
        return {"class_id": self.model.class_id, "class_name": self.model.class_name,
                "position": list(self.position), "yaw": self.yaw}

    def __eq__(self, other):
        if not isinstance(other, ScenePose):
            return NotImplemented
        return (self.model.class_id == other.model.class_id
                and self.position == other.position and self.yaw == other.yaw)


def default_catalog() -> tuple[ObjectModel, ...]:
    sizes = [("cup", (0.08, 0.08, 0.10)), ("bottle", (0.07, 0.07, 0.25)),
             ("cereal_box", (0.20, 0.07, 0.30)), ("book", (0.22, 0.15, 0.04)),
             ("bowl", (0.16, 0.16, 0.07)), ("can", (0.066, 0.066, 0.12))]
    return tuple(ObjectModel(i, name, cuboid(*dims)) for i, (name, dims) in enumerate(sizes))


def _pair(value, name) -> tuple[float, float]:
    lo, hi = (value, value) if isinstance(value, (int, float)) else tuple(value)
    if lo > hi:
        raise ConfigError(f"{name}: min {lo} exceeds max {hi}")
    return (lo, hi)


@dataclass(frozen=True, eq=False)
class SceneConfig:
    room: tuple[float, float] = (4.0, 4.0)
    catalog: tuple[ObjectModel, ...] = field(default_factory=default_catalog)
    objects_per_scene: tuple[int, int] = (1, 6)
    min_spacing: float = 0.3
    support_height: tuple[float, float] = (0.0, 0.0)
    camera_distance: tuple[float, float] = (1.5, 3.0)
    camera_height: tuple[float, float] = (1.0, 1.8)
    camera_pitch: tuple[float, float] = (-0.05, 0.05)
    light_intensity: tuple[float, float] = (0.3, 1.0)
    light_azimuth: tuple[float, float] = (-math.pi, math.pi)
    light_elevation: tuple[float, float] = (0.2, 1.4)
    light_temperature: tuple[float, float] = (2700.0, 6500.0)
    backgrounds: tuple[int, ...] = tuple(range(10))
    intrinsics: CameraIntrinsics = field(
        default_factory=lambda: CameraIntrinsics(525.0, 525.0, 319.5, 239.5, 640, 480))
    visibility_threshold: float = 0.25
    seed: int = 0

    def __post_init__(self):
        for name in ("support_height", "camera_distance", "camera_height", "camera_pitch",
                     "light_intensity", "light_azimuth", "light_elevation", "light_temperature"):
            object.__setattr__(self, name, _pair(getattr(self, name), name))
        lo, hi = _pair(self.objects_per_scene, "objects_per_scene")
        object.__setattr__(self, "objects_per_scene", (int(lo), int(hi)))
        if lo < 0:
            raise ConfigError("objects_per_scene must be nonnegative")
        if hi > 0 and not self.catalog:
            raise ConfigError("catalog is empty")
        if len({m.class_id for m in self.catalog}) != len(self.catalog):
            raise ConfigError("class_id values in the catalog must be unique")
        if not self.backgrounds:
            raise ConfigError("backgrounds must be nonempty")
        if min(self.room) <= 0:
            raise ConfigError("room extents must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        d = dict(d)
        kwargs = {}
        if "catalog" in d:
            models = []
            for entry in d.pop("catalog"):
                verts = entry.get("vertices")
                if verts is None:
                    verts = cuboid(*entry["size"])
                models.append(ObjectModel(int(entry["class_id"]), str(entry["class_name"]), verts))
            kwargs["catalog"] = tuple(models)
        if "intrinsics" in d:
            kwargs["intrinsics"] = CameraIntrinsics.from_dict(d.pop("intrinsics"))
        if "backgrounds" in d:
            kwargs["backgrounds"] = tuple(int(b) for b in d.pop("backgrounds"))
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scene config fields: {sorted(unknown)}")
        for key, value in d.items():
            kwargs[key] = tuple(value) if isinstance(value, list) else value
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if name == "catalog":
                value = [m.to_dict() for m in value]
            elif name == "intrinsics":
                value = value.to_dict()
            elif isinstance(value, tuple):
                value = list(value)
            out[name] = value
        return out


@dataclass(frozen=True)
class Annotation:
    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    def line(self) -> str:
        return f"{self.class_id} {self.cx:.{LABEL_DIGITS}f} {self.cy:.{LABEL_DIGITS}f} " \
               f"{self.w:.{LABEL_DIGITS}f} {self.h:.{LABEL_DIGITS}f}"


@dataclass(frozen=True, eq=False)
class SceneSample:
    index: int
    seed: int
    poses: tuple[ScenePose, ...]
    camera: Camera
    light: dict
    background: int
    annotations: tuple[Annotation, ...] = ()

    def __eq__(self, other):
        if not isinstance(other, SceneSample):
            return NotImplemented
        return (self.index == other.index and self.seed == other.seed
                and self.poses == other.poses and self.camera == other.camera
                and self.light == other.light and self.background == other.background
                and self.annotations == other.annotations)

    def to_dict(self) -> dict:
        return {"index": self.index, "seed": self.seed,
                "objects": [p.to_dict() for p in self.poses],
                "camera": {"position": self.camera.position.tolist(),
                           "rotation": self.camera.rotation.tolist()},
                "light": self.light, "background": self.background,
                "annotations": [a.line() for a in self.annotations]}


def sample_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def _pitch(delta: float) -> np.ndarray:
    c, s = math.cos(delta), math.sin(delta)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def sample_scene(config: SceneConfig, index: int) -> SceneSample:
    """Randomized object layout, camera, lighting and background; no labels yet."""
    seed = sample_seed(config.seed, index)
    rng = np.random.default_rng(seed)
    lo, hi = config.objects_per_scene
    count = int(rng.integers(lo, hi + 1))
    spacing2 = config.min_spacing ** 2
    poses: list[ScenePose] = []
    placed: list[np.ndarray] = []
    for _ in range(count):
        model = config.catalog[int(rng.integers(len(config.catalog)))]
        yaw = float(rng.uniform(-math.pi, math.pi))
        for _ in range(100):
            p = np.array([rng.uniform(0.0, config.room[0]), rng.uniform(0.0, config.room[1]),
                          rng.uniform(*config.support_height)])
            if all(float(np.sum((p - q) ** 2)) >= spacing2 for q in placed):
                placed.append(p)
                poses.append(ScenePose(model, tuple(float(c) for c in p), yaw))
                break
    if len(poses) < lo:
        raise InfeasibleConfig(
            f"placed {len(poses)} objects but objects_per_scene requires at least {lo} "
            f"with spacing {config.min_spacing} m", index=index)
    if placed:
        target = np.mean(placed, axis=0)
    else:
        target = np.array([config.room[0] / 2, config.room[1] / 2, config.support_height[0]])
    azimuth = rng.uniform(-math.pi, math.pi)
    distance = rng.uniform(*config.camera_distance)
    eye = np.array([target[0] + distance * math.cos(azimuth),
                    target[1] + distance * math.sin(azimuth),
                    rng.uniform(*config.camera_height)])
    camera = Camera.look_at(config.intrinsics, eye, target)
    camera = Camera(config.intrinsics, camera.position,
                    _pitch(rng.uniform(*config.camera_pitch)) @ camera.rotation)
    light = {"intensity": float(rng.uniform(*config.light_intensity)),
             "azimuth": float(rng.uniform(*config.light_azimuth)),
             "elevation": float(rng.uniform(*config.light_elevation)),
             "temperature": float(rng.uniform(*config.light_temperature))}
    background = int(config.backgrounds[int(rng.integers(len(config.backgrounds)))])
    return SceneSample(index, seed, tuple(poses), camera, light, background)


# --------------------------------------------------------------------------- annotation


def _camera_halfspaces(camera: Camera, pose: ScenePose) -> np.ndarray:
    hw = pose.world_halfspaces()
    normals = hw[:, :3] @ camera.rotation.T
    offsets = hw[:, 3] + hw[:, :3] @ camera.position
    return np.column_stack([normals, offsets])


def _rays_blocked(points: np.ndarray, halfspaces: np.ndarray, eps: float = 1e-9) -> np.ndarray:
    """For rays from the camera origin to ``points``: does the segment cross the hull first?"""
    a = points @ halfspaces[:, :3].T
    b = halfspaces[:, 3]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -b / a
    enter = np.where(a < 0, t, -np.inf).max(axis=1)
    exit_ = np.where(a > 0, t, np.inf).min(axis=1)
    parallel_out = np.any((a == 0) & (b > 0), axis=1)
    enter = np.maximum(enter, 0.0)
    exit_ = np.minimum(exit_, 1.0)
    return ~parallel_out & (exit_ - enter > eps) & (enter < 1.0 - eps)


def _clipped_camera_points(pts_cam: np.ndarray) -> np.ndarray:
    """Camera-frame points of the hull cut by the near plane."""
    front = pts_cam[:, 2] > NEAR_PLANE
    if front.all():
        return pts_cam
    a, b = pts_cam[front], pts_cam[~front]
    if len(a) == 0:
        return a
    pa = a[:, None, :]
    pb = b[None, :, :]
    t = (pa[..., 2] - 2 * NEAR_PLANE) / (pa[..., 2] - pb[..., 2])
    cut = pa + t[..., None] * (pb - pa)
    return np.vstack([a, cut.reshape(-1, 3)])


def _object_extent(k: CameraIntrinsics, pts_cam: np.ndarray):
    """Clipped pixel box ``(u0, v0, u1, v1)`` or ``None``."""
    pts = _clipped_camera_points(pts_cam)
    if len(pts) == 0:
        return None
    uv, _ = project_camera_points(k, pts)
    u0 = min(max(float(uv[:, 0].min()), 0.0), k.width)
    u1 = min(max(float(uv[:, 0].max()), 0.0), k.width)
    v0 = min(max(float(uv[:, 1].min()), 0.0), k.height)
    v1 = min(max(float(uv[:, 1].max()), 0.0), k.height)
    if u1 <= u0 or v1 <= v0:
        return None
    return u0, v0, u1, v1


def visible_fraction(sample: SceneSample, i: int) -> float:
    """Share of the object's vertex rays that land in the image unoccluded by other objects."""
    camera = sample.camera
    k = camera.intrinsics
    pts = camera.to_camera(sample.poses[i].world_vertices())
    uv, front = project_camera_points(k, pts)
    ok = front & (uv[:, 0] >= 0) & (uv[:, 0] < k.width) & (uv[:, 1] >= 0) & (uv[:, 1] < k.height)
    for j, other in enumerate(sample.poses):
        if j == i or not ok.any():
            continue
        ok[ok] &= ~_rays_blocked(pts[ok], _camera_halfspaces(camera, other))
    return float(ok.sum()) / len(pts)


def annotate(sample: SceneSample, visibility_threshold: float = 0.25) -> list[Annotation]:
    k = sample.camera.intrinsics
    out = []
    for i, pose in enumerate(sample.poses):
        pts = sample.camera.to_camera(pose.world_vertices())
        if not (pts[:, 2] > NEAR_PLANE).any():
            continue
        if visible_fraction(sample, i) < visibility_threshold:
            continue
        box = _object_extent(k, pts)
        if box is None:
            continue
        u0, v0, u1, v1 = box
        out.append(Annotation(pose.model.class_id, (u0 + u1) / 2 / k.width,
                              (v0 + v1) / 2 / k.height, (u1 - u0) / k.width, (v1 - v0) / k.height))
    return out


def annotated(sample: SceneSample, config: SceneConfig) -> SceneSample:
    labels = tuple(annotate(sample, config.visibility_threshold))
    return SceneSample(sample.index, sample.seed, sample.poses, sample.camera,
                       sample.light, sample.background, labels)


def format_labels(annotations) -> str:
    return "".join(a.line() + "\n" for a in annotations)


# --------------------------------------------------------------------------- preview raster


def _palette(key: int, salt: int) -> tuple[int, int, int]:
    rng = np.random.default_rng([salt, key])
    return tuple(int(c) for c in rng.integers(40, 216, size=3))


def _convex_hull_2d(pts: np.ndarray) -> np.ndarray:
    pts = sorted(set(map(tuple, pts.tolist())))
    if len(pts) <= 2:
        return np.array(pts)

    def half(points):
        chain = []
        for p in points:
            while len(chain) >= 2 and ((chain[-1][0] - chain[-2][0]) * (p[1] - chain[-2][1])
                                       - (chain[-1][1] - chain[-2][1]) * (p[0] - chain[-2][0])) <= 0:
                chain.pop()
            chain.append(p)
        return chain

    lower, upper = half(pts), half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def render_preview(sample: SceneSample) -> np.ndarray:
    """Flat-shaded painter's-algorithm raster of the projected object hulls."""
    k = sample.camera.intrinsics
    image = np.empty((k.height, k.width, 3), dtype=np.uint8)
    image[:] = _palette(sample.background, 7919)
    order = []
    for pose in sample.poses:
        pts = sample.camera.to_camera(pose.world_vertices())
        order.append((float(pts[:, 2].mean()), pose, pts))
    for _, pose, pts in sorted(order, key=lambda item: -item[0]):
        clipped = _clipped_camera_points(pts)
        if len(clipped) == 0:
            continue
        uv, _ = project_camera_points(k, clipped)
        hull = _convex_hull_2d(uv)
        if len(hull) < 3:
            continue
        u0 = max(int(math.floor(hull[:, 0].min())), 0)
        u1 = min(int(math.ceil(hull[:, 0].max())), k.width)
        v0 = max(int(math.floor(hull[:, 1].min())), 0)
        v1 = min(int(math.ceil(hull[:, 1].max())), k.height)
        if u1 <= u0 or v1 <= v0:
            continue
        gu, gv = np.meshgrid(np.arange(u0, u1) + 0.5, np.arange(v0, v1) + 0.5)
        inside = np.ones(gu.shape, dtype=bool)
        for (x0, y0), (x1, y1) in zip(hull, np.roll(hull, -1, axis=0)):
            inside &= (x1 - x0) * (gv - y0) - (y1 - y0) * (gu - x0) >= 0
        image[v0:v1, u0:u1][inside] = _palette(pose.model.class_id, 104729)
    return image


# --------------------------------------------------------------------------- datasets


def _write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _produce(config: SceneConfig, index: int, out: Path, previews: bool) -> dict:
    sample = annotated(sample_scene(config, index), config)
    name = f"{index:06d}"
    label_path = out / "labels" / f"{name}.txt"
    entry = {"index": index, "seed": sample.seed, "label": f"labels/{name}.txt",
             "objects": len(sample.poses), "annotations": len(sample.annotations),
             "background": sample.background, "light": sample.light,
             "camera_position": sample.camera.position.tolist()}
    try:
        if not label_path.exists():
            _write_atomic(label_path, format_labels(sample.annotations).encode())
        if previews:
            preview_path = out / "previews" / f"{name}.ppm"
            entry["preview"] = f"previews/{name}.ppm"
            if not preview_path.exists():
                _write_atomic(preview_path, ppm_bytes(render_preview(sample)))
    except OSError as exc:
        raise IoError(f"cannot write sample {index}: {exc}", path=str(label_path)) from exc
    return entry


def _produce_chunk(args) -> list[dict]:
    config, indices, out, previews = args
    return [_produce(config, i, Path(out), previews) for i in indices]


def generate_dataset(config: SceneConfig, n: int, out_dir, previews: bool = False,
                     jobs: int = 1) -> dict:
    """Write ``n`` label files plus ``manifest.json``; existing samples are kept."""
    out = Path(out_dir)
    try:
        (out / "labels").mkdir(parents=True, exist_ok=True)
        if previews:
            (out / "previews").mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise IoError(f"output directory {out} is not writable: {exc}", path=str(out)) from exc

    if jobs <= 1:
        entries = [_produce(config, i, out, previews) for i in range(n)]
    else:
        chunk = max(1, math.ceil(n / (jobs * 4)))
        tasks = [(config, range(s, min(n, s + chunk)), str(out), previews) for s in range(0, n, chunk)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = [e for part in pool.map(_produce_chunk, tasks) for e in part]

    manifest = {"generator": "homecore.scenegen", "count": n, "seed": config.seed,
                "label_format": "class_id cx cy w h (normalized)",
                "human_annotation": False,
                "config": config.to_dict(), "samples": entries}
    try:
        _write_atomic(out / "manifest.json", (json.dumps(manifest, indent=1) + "\n").encode())
    except OSError as exc:
        raise IoError(f"cannot write manifest: {exc}", path=str(out / "manifest.json")) from exc
    return manifest


# --------------------------------------------------------------------------- depth rendering


def render_box_depth(intrinsics: CameraIntrinsics, boxes) -> tuple[np.ndarray, np.ndarray]:
    """Ray-cast camera-frame boxes ``(center, rotation, size)`` into a z-depth image.

    Returns ``(depth, labels)``; ``labels`` holds the index of the visible box
    per pixel or -1. Pixel ``(u, v)`` samples the ray through its integer
    coordinates, which is exactly what deprojection inverts.
    """
    k = intrinsics
    u, v = np.meshgrid(np.arange(k.width, dtype=float), np.arange(k.height, dtype=float))
    rays = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], axis=-1).reshape(-1, 3)
    depth = np.full(len(rays), np.inf)
    labels = np.full(len(rays), -1, dtype=int)
    for i, (center, rotation, size) in enumerate(boxes):
        R = np.asarray(rotation, float)
        half = np.asarray(size, float) / 2
        origin = -np.asarray(center, float) @ R
        d = rays @ R
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-half - origin) / d
            t2 = (half - origin) / d
        t1 = np.where(np.isnan(t1), -np.inf, t1)
        t2 = np.where(np.isnan(t2), np.inf, t2)
        near = np.minimum(t1, t2).max(axis=1)
        far = np.maximum(t1, t2).min(axis=1)
        hit = (near <= far) & (near > 0)
        closer = hit & (near < depth)
        depth[closer] = near[closer]
        labels[closer] = i
    depth[~np.isfinite(depth)] = 0.0
    return depth.reshape(k.height, k.width), labels.reshape(k.height, k.width)
