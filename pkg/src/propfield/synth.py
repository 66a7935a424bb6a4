"""Deterministic synthetic capture bundles with analytic oracles.

Scenes are unions of posed primitives (boxes, spheres, cylinders) with a
material, color, shell thickness, and density per part. Depth maps come
from exact ray casting, the point cloud either from back-projecting depth
pixels (the realistic default: reconstruction clouds are unprojected
depth) or from uniform-area surface sampling (for analytic mass checks),
and feature maps are one-hot part embeddings plus optional seeded noise.

Ground truth is exact by construction: per-point part labels, analytic
shell mass sum(area * thickness * density), and a ray-cast visibility
oracle that shares no data with the stored depth maps.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .bundle import CameraPose, CaptureBundle, Intrinsics, PointCloud, ViewRecord
from .geometry import project_points
from .grounding import MaterialDictionary, MaterialEntry

BACKGROUND_COLOR = (245, 245, 245)
PALETTE = [
    (220, 40, 40),
    (40, 200, 40),
    (40, 60, 220),
    (230, 200, 30),
    (180, 40, 200),
    (40, 210, 210),
    (240, 130, 30),
    (120, 120, 120),
]


@dataclass
class Part:
    """One primitive: `size` is (sx, sy, sz) for boxes, (r,) for spheres,
    (r, height) for cylinders (axis z in the local frame)."""

    kind: str
    size: tuple
    material: str
    density: float
    thickness_m: float
    color: tuple[int, int, int] | None = None
    rotation: np.ndarray = None
    translation: np.ndarray = None
    extra_properties: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("box", "sphere", "cylinder"):
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        self.rotation = np.eye(3) if self.rotation is None else np.asarray(self.rotation, dtype=np.float64)
        self.translation = (
            np.zeros(3) if self.translation is None else np.asarray(self.translation, dtype=np.float64)
        )

    @property
    def area(self) -> float:
        if self.kind == "box":
            sx, sy, sz = self.size
            return 2.0 * (sx * sy + sy * sz + sz * sx)
        if self.kind == "sphere":
            return 4.0 * math.pi * self.size[0] ** 2
        r, h = self.size
        return 2.0 * math.pi * r * h + 2.0 * math.pi * r * r

    @property
    def mass(self) -> float:
        return self.area * self.thickness_m * self.density


@dataclass
class CameraRing:
    count: int
    radius: float | None = None  # None = auto from scene extent
    elevation_deg: float = 25.0


@dataclass
class SyntheticScene:
    parts: list[Part]
    rings: list[CameraRing]
    image_size: tuple[int, int] = (96, 96)  # (H, W)
    feature_size: tuple[int, int] = (32, 32)
    feature_dim: int = 16
    n_points: int = 4000
    cloud_mode: str = "backproject"  # or "surface"
    feature_noise: float = 0.0
    depth_noise: float = 0.0
    seed: int = 0
    world_scale: float = 1.0  # bundle coordinates = metric * world_scale
    scene_id: str = "synthetic"

    def __post_init__(self):
        if not self.parts:
            raise ValueError("scene needs at least one part")
        if sum(r.count for r in self.rings) < 1:
            raise ValueError("scene needs at least one camera")
        if self.cloud_mode not in ("backproject", "surface"):
            raise ValueError(f"unknown cloud mode {self.cloud_mode!r}")
        if self.feature_dim < len(self.parts):
            raise ValueError(
                f"feature_dim {self.feature_dim} cannot one-hot {len(self.parts)} parts"
            )


@dataclass
class GroundTruth:
    mass_kg: float
    part_ids: np.ndarray
    part_areas: list[float]
    palette: dict[str, tuple[int, int, int]]
    part_embeddings: np.ndarray
    center: np.ndarray


def _part_colors(scene: SyntheticScene) -> list[tuple[int, int, int]]:
    colors = []
    for i, part in enumerate(scene.parts):
        colors.append(part.color if part.color is not None else PALETTE[i % len(PALETTE)])
    return colors


def _pack_primitives(scene: SyntheticScene, coordinate_scale: float):
    p = len(scene.parts)
    types = np.empty(p, dtype=np.int64)
    params = np.zeros((p, 3), dtype=np.float64)
    rots = np.empty((p, 3, 3), dtype=np.float64)
    trans = np.empty((p, 3), dtype=np.float64)
    for i, part in enumerate(scene.parts):
        rots[i] = part.rotation
        trans[i] = part.translation * coordinate_scale
        if part.kind == "box":
            types[i] = 0
            params[i] = np.asarray(part.size, dtype=np.float64) * (coordinate_scale / 2.0)
        elif part.kind == "sphere":
            types[i] = 1
            params[i, 0] = part.size[0] * coordinate_scale
        else:
            types[i] = 2
            params[i, 0] = part.size[0] * coordinate_scale
            params[i, 1] = part.size[1] * coordinate_scale / 2.0
    return types, params, rots, trans


def _scene_bounds(scene: SyntheticScene) -> tuple[np.ndarray, np.ndarray]:
    """Loose metric AABB over all parts (via per-part bounding radius)."""
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    for part in scene.parts:
        if part.kind == "box":
            r = 0.5 * float(np.linalg.norm(part.size))
        elif part.kind == "sphere":
            r = float(part.size[0])
        else:
            r = float(np.hypot(part.size[0], part.size[1] / 2.0))
        lo = np.minimum(lo, part.translation - r)
        hi = np.maximum(hi, part.translation + r)
    return lo, hi


def _look_at_pose(center: np.ndarray, eye: np.ndarray) -> CameraPose:
    forward = center - eye
    forward = forward / np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    if abs(forward @ up) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    x_cam = np.cross(forward, up)
    x_cam /= np.linalg.norm(x_cam)
    y_cam = np.cross(forward, x_cam)
    rotation = np.stack([x_cam, y_cam, forward])
    return CameraPose(rotation=rotation, translation=-rotation @ eye)


def _camera_poses(scene: SyntheticScene) -> list[CameraPose]:
    lo, hi = _scene_bounds(scene)
    center = (lo + hi) / 2.0
    half_diag = 0.5 * float(np.linalg.norm(hi - lo))
    poses = []
    for ring in scene.rings:
        radius = ring.radius if ring.radius is not None else max(2.8 * half_diag, 1e-3)
        elev = math.radians(ring.elevation_deg)
        for i in range(ring.count):
            phi = 2.0 * math.pi * i / ring.count
            eye = center + radius * np.array(
                [math.cos(phi) * math.cos(elev), math.sin(phi) * math.cos(elev), math.sin(elev)]
            )
            poses.append(_look_at_pose(center, eye))
    return poses


def _pixel_rays(intr: Intrinsics, pose: CameraPose, us, vs):
    """World-frame unit rays through the given image coordinates.

    Returns (origins, dirs, dir_z): `dir_z` is the camera-frame z component
    of each unit ray, converting Euclidean hit distance to z-depth.
    """
    x = (us - intr.cx) / intr.fx
    y = (vs - intr.cy) / intr.fy
    d_cam = np.stack([x, y, np.ones_like(x)], axis=1)
    d_cam /= np.linalg.norm(d_cam, axis=1, keepdims=True)
    dirs = d_cam @ pose.rotation  # R^T d
    center = pose.center
    origins = np.broadcast_to(center, dirs.shape).copy()
    return origins, dirs, d_cam[:, 2]


def _render_view(scene, prims, intr, pose, colors, rng):
    h, w = scene.image_size
    ix, iy = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    us = ix.ravel()
    vs = iy.ravel()
    origins, dirs, dir_z = _pixel_rays(intr, pose, us, vs)
    t, part = kernels.raycast(origins, dirs, *prims)

    hit = np.isfinite(t)
    depth = np.where(hit, t * dir_z, 0.0).astype(np.float32).reshape(h, w)
    if scene.depth_noise > 0:
        factor = 1.0 + scene.depth_noise * rng.standard_normal(depth.shape)
        depth = np.where(depth > 0, depth * factor, 0.0).astype(np.float32)

    image = np.empty((h * w, 3), dtype=np.uint8)
    image[:] = BACKGROUND_COLOR
    part_flat = part.copy()
    for i, color in enumerate(colors):
        image[part_flat == i] = color
    image = image.reshape(h, w, 3)

    hf, wf = scene.feature_size
    fx_img = (np.arange(wf, dtype=np.float64) + 0.5) * (w / wf) - 0.5
    fy_img = (np.arange(hf, dtype=np.float64) + 0.5) * (h / hf) - 0.5
    gx, gy = np.meshgrid(fx_img, fy_img)
    f_origins, f_dirs, _ = _pixel_rays(intr, pose, gx.ravel(), gy.ravel())
    _, f_part = kernels.raycast(f_origins, f_dirs, *prims)
    fmap = np.zeros((hf * wf, scene.feature_dim), dtype=np.float64)
    rows = np.flatnonzero(f_part >= 0)
    fmap[rows, f_part[rows]] = 1.0
    if scene.feature_noise > 0:
        fmap += scene.feature_noise * rng.standard_normal(fmap.shape)
    fmap = fmap.reshape(hf, wf, scene.feature_dim).astype(np.float32)

    return image, depth, fmap, part_flat.reshape(h, w)


def _sample_surface(scene: SyntheticScene, rng) -> tuple[np.ndarray, np.ndarray]:
    """Uniform-by-area random sampling over all part surfaces (metric)."""
    areas = np.array([p.area for p in scene.parts])
    weights = areas / areas.sum()
    counts = np.floor(weights * scene.n_points).astype(np.int64)
    short = scene.n_points - counts.sum()
    if short > 0:
        frac = weights * scene.n_points - counts
        counts[np.argsort(-frac)[:short]] += 1

    points = []
    ids = []
    for idx, (part, count) in enumerate(zip(scene.parts, counts)):
        if count == 0:
            continue
        local = _sample_part_surface(part, int(count), rng)
        points.append(local @ part.rotation.T + part.translation)
        ids.append(np.full(int(count), idx, dtype=np.int64))
    return np.concatenate(points), np.concatenate(ids)


def _sample_part_surface(part: Part, count: int, rng) -> np.ndarray:
    if part.kind == "sphere":
        v = rng.standard_normal((count, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return v * part.size[0]
    if part.kind == "box":
        sx, sy, sz = part.size
        face_areas = np.array([sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy])
        face = rng.choice(6, size=count, p=face_areas / face_areas.sum())
        u = rng.uniform(-0.5, 0.5, size=count)
        v = rng.uniform(-0.5, 0.5, size=count)
        pts = np.empty((count, 3))
        for f in range(6):
            rows = face == f
            axis = f // 2
            sign = 1.0 if f % 2 == 0 else -1.0
            other = [a for a in range(3) if a != axis]
            size = np.array([sx, sy, sz])
            pts[rows, axis] = sign * size[axis] / 2.0
            pts[rows, other[0]] = u[rows] * size[other[0]]
            pts[rows, other[1]] = v[rows] * size[other[1]]
        return pts
    r, height = part.size
    side_area = 2.0 * math.pi * r * height
    cap_area = math.pi * r * r
    total = side_area + 2 * cap_area
    kind = rng.choice(3, size=count, p=[side_area / total, cap_area / total, cap_area / total])
    pts = np.empty((count, 3))
    phi = rng.uniform(0.0, 2.0 * math.pi, size=count)
    side = kind == 0
    pts[side, 0] = r * np.cos(phi[side])
    pts[side, 1] = r * np.sin(phi[side])
    pts[side, 2] = rng.uniform(-height / 2.0, height / 2.0, size=int(side.sum()))
    for cap, sign in ((1, 1.0), (2, -1.0)):
        rows = kind == cap
        rad = r * np.sqrt(rng.uniform(0.0, 1.0, size=int(rows.sum())))
        pts[rows, 0] = rad * np.cos(phi[rows])
        pts[rows, 1] = rad * np.sin(phi[rows])
        pts[rows, 2] = sign * height / 2.0
    return pts


def build_materials(scene: SyntheticScene) -> MaterialDictionary:
    entries = {}
    for part in scene.parts:
        if part.material in entries:
            continue
        props = {"density": (part.density, part.density)}
        for name, value in part.extra_properties.items():
            lo, hi = (value if isinstance(value, (tuple, list)) else (value, value))
            props[name] = (float(lo), float(hi))
        entries[part.material] = MaterialEntry(
            name=part.material, properties=props, thickness_m=part.thickness_m
        )
    return MaterialDictionary(entries=list(entries.values()), source="file")


def palette_of(scene: SyntheticScene) -> dict[str, tuple[int, int, int]]:
    """Material name -> representative color (first part of that material)."""
    colors = _part_colors(scene)
    palette = {}
    for part, color in zip(scene.parts, colors):
        palette.setdefault(part.material, color)
    return palette


def generate(scene: SyntheticScene) -> tuple[CaptureBundle, GroundTruth]:
    """Render a scene into a capture bundle plus exact ground truth.

    The bundle lives in `world_scale` x metric coordinates (mimicking a
    reconstruction with unknown scale); reference poses stay metric, so
    similarity alignment against them recovers 1 / world_scale. Ground
    truth (mass, labels) is metric.
    """
    rng = np.random.default_rng(scene.seed)
    ws = scene.world_scale
    h, w = scene.image_size
    intr = Intrinsics(fx=float(w), fy=float(w), cx=w / 2.0, cy=h / 2.0)

    metric_poses = _camera_poses(scene)
    scaled_poses = [
        CameraPose(rotation=p.rotation, translation=p.translation * ws) for p in metric_poses
    ]
    prims = _pack_primitives(scene, coordinate_scale=ws)
    colors = _part_colors(scene)

    views = []
    pixel_parts = []
    for pose in scaled_poses:
        image, depth, fmap, part_map = _render_view(scene, prims, intr, pose, colors, rng)
        views.append(
            ViewRecord(image=image, depth=depth, camera=pose, intrinsics=intr, feature_map=fmap)
        )
        pixel_parts.append(part_map)

    if scene.cloud_mode == "surface":
        metric_pts, part_ids = _sample_surface(scene, rng)
        positions = metric_pts * ws
    else:
        chunks = []
        id_chunks = []
        for view, part_map in zip(views, pixel_parts):
            iy, ix = np.nonzero(view.depth > 0)
            z = view.depth[iy, ix].astype(np.float64)
            pix = np.stack([ix.astype(np.float64), iy.astype(np.float64)], axis=1)
            cam = np.stack(
                [(pix[:, 0] - intr.cx) / intr.fx * z, (pix[:, 1] - intr.cy) / intr.fy * z, z],
                axis=1,
            )
            world = (cam - view.camera.translation) @ view.camera.rotation
            chunks.append(world)
            id_chunks.append(part_map[iy, ix])
        positions = np.concatenate(chunks)
        part_ids = np.concatenate(id_chunks).astype(np.int64)
        if positions.shape[0] > scene.n_points:
            pick = np.sort(rng.choice(positions.shape[0], size=scene.n_points, replace=False))
            positions = positions[pick]
            part_ids = part_ids[pick]

    point_colors = np.empty((positions.shape[0], 3), dtype=np.uint8)
    for i, color in enumerate(colors):
        point_colors[part_ids == i] = color

    bundle = CaptureBundle(
        views=views,
        point_cloud=PointCloud(positions=positions.astype(np.float32), colors=point_colors),
        reference_poses=metric_poses,
        material_dictionary=build_materials(scene),
        scene_id=scene.scene_id,
        gt_mass_kg=float(sum(p.mass for p in scene.parts)),
    )

    embeddings = np.zeros((len(scene.parts), scene.feature_dim))
    embeddings[np.arange(len(scene.parts)), np.arange(len(scene.parts))] = 1.0
    lo, hi = _scene_bounds(scene)
    gt = GroundTruth(
        mass_kg=bundle.gt_mass_kg,
        part_ids=part_ids,
        part_areas=[p.area for p in scene.parts],
        palette=palette_of(scene),
        part_embeddings=embeddings,
        center=(lo + hi) / 2.0,
    )
    return bundle, gt


def visibility_oracle(scene: SyntheticScene, points, view: ViewRecord, eps: float = 0.0) -> np.ndarray:
    """Exact ray-cast visibility of `points` in `view`, bundle coordinates.

    Casts an analytic ray through the nearest pixel center of each point's
    projection (the same pixel-center geometry the depth maps were rendered
    at) and compares the point's z-depth against the float32-quantized hit
    depth. Never reads any stored depth map.
    """
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    intr = view.intrinsics
    pixels, z = project_points(p, view.camera, view.intrinsics)
    h, w = view.image_hw
    iu = np.rint(pixels[:, 0])
    iv = np.rint(pixels[:, 1])
    ok = (z > 0) & (iu >= 0) & (iu < w) & (iv >= 0) & (iv < h)

    out = np.zeros(p.shape[0], dtype=np.bool_)
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        return out
    prims = _pack_primitives(scene, coordinate_scale=scene.world_scale)
    origins, dirs, dir_z = _pixel_rays(intr, view.camera, iu[idx], iv[idx])
    t, _ = kernels.raycast(origins, dirs, *prims)
    hit = np.isfinite(t)
    stored = np.where(hit, t * dir_z, 0.0).astype(np.float32).astype(np.float64)
    out[idx] = (stored > 0.0) & (z[idx] <= stored + eps)
    return out


def preset_scene(name: str, **overrides) -> SyntheticScene:
    """Ready-made scenes: 'box', 'sphere', 'table', 'boxes' (two disjoint)."""
    presets = {
        "box": lambda: SyntheticScene(
            parts=[
                Part(kind="box", size=(1.0, 1.0, 1.0), material="pine_wood",
                     density=500.0, thickness_m=0.01)
            ],
            rings=[CameraRing(count=8)],
        ),
        "sphere": lambda: SyntheticScene(
            parts=[
                Part(kind="sphere", size=(0.5,), material="steel",
                     density=7800.0, thickness_m=0.002)
            ],
            rings=[CameraRing(count=8)],
        ),
        "table": lambda: SyntheticScene(
            parts=_table_parts(),
            rings=[CameraRing(count=8, elevation_deg=30.0), CameraRing(count=8, elevation_deg=-25.0)],
        ),
        "boxes": lambda: SyntheticScene(
            parts=[
                Part(kind="box", size=(1.0, 1.0, 1.0), material="pine_wood",
                     density=500.0, thickness_m=0.01,
                     translation=np.array([-2.0, 0.0, 0.0])),
                Part(kind="box", size=(1.0, 1.0, 1.0), material="oak_wood",
                     density=700.0, thickness_m=0.01,
                     translation=np.array([2.0, 0.0, 0.0])),
            ],
            rings=[CameraRing(count=10, elevation_deg=20.0)],
        ),
    }
    if name not in presets:
        raise ValueError(f"unknown preset {name!r}; options: {sorted(presets)}")
    scene = presets[name]()
    for key, value in overrides.items():
        if not hasattr(scene, key):
            raise ValueError(f"unknown scene option {key!r}")
        setattr(scene, key, value)
    scene.__post_init__()
    return scene


def _table_parts() -> list[Part]:
    top = Part(
        kind="box", size=(1.0, 0.7, 0.05), material="oak_wood", density=700.0,
        thickness_m=0.02, translation=np.array([0.0, 0.0, 0.725]),
    )
    legs = [
        Part(
            kind="cylinder", size=(0.03, 0.7), material="steel", density=7800.0,
            thickness_m=0.002, translation=np.array([x, y, 0.35]),
        )
        for x in (-0.42, 0.42)
        for y in (-0.28, 0.28)
    ]
    return [top] + legs
