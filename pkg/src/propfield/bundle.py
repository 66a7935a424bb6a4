"""Capture bundles: posed multi-view images, depths, feature maps, a point cloud.

On disk a bundle is a directory:

    manifest            JSON: views (ordered), intrinsics, poses, blob paths, meta
    views/<i>/image.png
    views/<i>/depth.f32     z-depth along the camera axis, meters, 0 = invalid
    views/<i>/feat.f32      per-view feature map at encoder-native resolution
    cloud.ply               binary PLY positions (+ optional colors)
    materials.json          optional material dictionary
    ref_poses.json          optional metric reference poses for scale alignment

View order in the manifest is authoritative and preserved on load. Feature
maps are stored at their native resolution and bilinearly resampled to
image coordinates on access.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import tensorio
from .errors import BundleLoadError, BundleStructureError, BundleValidationError
from .grounding import MaterialDictionary, load_materials, save_materials
from .kernels import bilinear_gather
from .ply import read_ply, write_ply

ROTATION_TOL = 1e-6
MANIFEST_NAME = "manifest"


@dataclass(eq=False)
class CameraPose:
    """World-to-camera rigid pose: x_cam = rotation @ x_world + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise BundleStructureError(
                f"pose needs (3,3) rotation and (3,) translation, got "
                f"{self.rotation.shape} / {self.translation.shape}"
            )
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > ROTATION_TOL:
            raise BundleValidationError(f"rotation is not orthonormal (|R R^T - I| = {err:.2e})")
        det = np.linalg.det(self.rotation)
        if abs(det - 1.0) > ROTATION_TOL:
            raise BundleValidationError(f"rotation determinant {det} != 1")

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def __eq__(self, other):
        return (
            isinstance(other, CameraPose)
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )


@dataclass(eq=False)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        vals = (self.fx, self.fy, self.cx, self.cy)
        if not all(np.isfinite(v) and v > 0 for v in vals):
            raise BundleValidationError(f"intrinsics must be positive, got {vals}")

    def __eq__(self, other):
        return isinstance(other, Intrinsics) and (self.fx, self.fy, self.cx, self.cy) == (
            other.fx,
            other.fy,
            other.cx,
            other.cy,
        )


@dataclass(eq=False)
class ViewRecord:
    """One posed capture: image, z-depth map, camera, per-view feature map."""

    image: np.ndarray
    depth: np.ndarray
    camera: CameraPose
    intrinsics: Intrinsics
    feature_map: np.ndarray

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.uint8)
        self.depth = np.asarray(self.depth, dtype=np.float32)
        self.feature_map = np.asarray(self.feature_map, dtype=np.float32)
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise BundleStructureError(f"image must be (H, W, 3) uint8, got {self.image.shape}")
        if self.depth.shape != self.image.shape[:2]:
            raise BundleStructureError(
                f"depth shape {self.depth.shape} does not match image {self.image.shape[:2]}"
            )
        if self.feature_map.ndim != 3:
            raise BundleStructureError(
                f"feature map must be (Hf, Wf, D), got {self.feature_map.shape}"
            )
        if np.any(self.depth < 0):
            raise BundleValidationError("depth map has negative entries")

    @property
    def image_hw(self) -> tuple[int, int]:
        return self.image.shape[0], self.image.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.feature_map.shape[2]

    def sample_features(self, pixels) -> np.ndarray:
        """Bilinearly sample the feature map at image-space pixel coordinates.

        The native (Hf, Wf) grid is treated as a resampled version of the
        (H, W) image: pixel (u, v) maps to feature coordinates
        ((u + 0.5) * Wf / W - 0.5, (v + 0.5) * Hf / H - 0.5), clamped at
        the borders.
        """
        pix = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
        h, w = self.image_hw
        hf, wf, _ = self.feature_map.shape
        fu = (pix[:, 0] + 0.5) * (wf / w) - 0.5
        fv = (pix[:, 1] + 0.5) * (hf / h) - 0.5
        return bilinear_gather(self.feature_map, fu, fv)

    def __eq__(self, other):
        return (
            isinstance(other, ViewRecord)
            and np.array_equal(self.image, other.image)
            and np.array_equal(self.depth, other.depth)
            and np.array_equal(self.feature_map, other.feature_map)
            and self.camera == other.camera
            and self.intrinsics == other.intrinsics
        )


@dataclass(eq=False)
class PointCloud:
    positions: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float32)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise BundleStructureError(f"positions must be (N, 3), got {self.positions.shape}")
        if self.positions.shape[0] < 1:
            raise BundleValidationError("point cloud is empty")
        if not np.isfinite(self.positions).all():
            raise BundleValidationError("point cloud has non-finite coordinates")
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.uint8)
            if self.colors.shape != self.positions.shape:
                raise BundleStructureError(
                    f"colors shape {self.colors.shape} does not match positions"
                )

    def __len__(self):
        return self.positions.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PointCloud) or not np.array_equal(self.positions, other.positions):
            return False
        if (self.colors is None) != (other.colors is None):
            return False
        return self.colors is None or np.array_equal(self.colors, other.colors)


@dataclass(eq=False)
class CaptureBundle:
    views: list[ViewRecord]
    point_cloud: PointCloud
    reference_poses: list[CameraPose] | None = None
    material_dictionary: MaterialDictionary | None = None
    scene_id: str = "scene"
    gt_mass_kg: float | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.views:
            raise BundleValidationError("bundle must contain at least one view")
        dims = {v.feature_dim for v in self.views}
        if len(dims) > 1:
            raise BundleStructureError(f"feature dimension differs across views: {sorted(dims)}")
        if self.reference_poses is not None and len(self.reference_poses) != len(self.views):
            raise BundleStructureError(
                f"{len(self.reference_poses)} reference poses for {len(self.views)} views"
            )

    @property
    def feature_dim(self) -> int:
        return self.views[0].feature_dim

    def camera_centers(self) -> np.ndarray:
        return np.stack([v.camera.center for v in self.views])

    def bbox_diagonal(self) -> float:
        p = self.point_cloud.positions
        return float(np.linalg.norm(p.max(axis=0) - p.min(axis=0)))

    def __eq__(self, other):
        if not isinstance(other, CaptureBundle):
            return False
        if len(self.views) != len(other.views) or self.views != other.views:
            return False
        if self.point_cloud != other.point_cloud:
            return False
        if self.reference_poses != other.reference_poses:
            return False
        if self.scene_id != other.scene_id or self.gt_mass_kg != other.gt_mass_kg:
            return False
        return _materials_equal(self.material_dictionary, other.material_dictionary)


def _materials_equal(a, b):
    if (a is None) != (b is None):
        return False
    if a is None:
        return True
    if a.source != b.source or len(a) != len(b):
        return False
    return all(
        ea.name == eb.name and ea.thickness_m == eb.thickness_m and ea.properties == eb.properties
        for ea, eb in zip(a.entries, b.entries)
    )


def _pose_to_json(pose: CameraPose) -> dict:
    return {
        "rotation": [float(x) for x in pose.rotation.reshape(-1)],
        "translation": [float(x) for x in pose.translation],
    }


def _pose_from_json(doc, where: str) -> CameraPose:
    try:
        rot = np.array(doc["rotation"], dtype=np.float64).reshape(3, 3)
        trans = np.array(doc["translation"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleStructureError(f"malformed pose in {where}: {exc}") from exc
    return CameraPose(rotation=rot, translation=trans)


def save_bundle(bundle: CaptureBundle, path) -> None:
    """Write a bundle directory; tensors round-trip bit-exactly.

    Optional fields (materials, reference poses, ground-truth mass) are
    simply omitted from the manifest when absent.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    views_doc = []
    for i, view in enumerate(bundle.views):
        vdir = root / "views" / str(i)
        vdir.mkdir(parents=True, exist_ok=True)
        Image.fromarray(view.image, mode="RGB").save(vdir / "image.png")
        tensorio.write_tensor(vdir / "depth.f32", view.depth)
        tensorio.write_tensor(vdir / "feat.f32", view.feature_map)
        intr = view.intrinsics
        views_doc.append(
            {
                "image": f"views/{i}/image.png",
                "depth": f"views/{i}/depth.f32",
                "features": f"views/{i}/feat.f32",
                "intrinsics": {"fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy},
                "pose": _pose_to_json(view.camera),
            }
        )

    write_ply(root / "cloud.ply", bundle.point_cloud.positions, bundle.point_cloud.colors)

    manifest = {
        "format_version": 1,
        "scene_id": bundle.scene_id,
        "depth_unit": "m",
        "views": views_doc,
        "cloud": "cloud.ply",
    }
    if bundle.gt_mass_kg is not None:
        manifest["gt_mass_kg"] = float(bundle.gt_mass_kg)
    if bundle.material_dictionary is not None:
        save_materials(root / "materials.json", bundle.material_dictionary)
        manifest["materials"] = "materials.json"
    if bundle.reference_poses is not None:
        doc = [_pose_to_json(p) for p in bundle.reference_poses]
        (root / "ref_poses.json").write_text(json.dumps(doc, indent=1) + "\n")
        manifest["reference_poses"] = "ref_poses.json"

    (root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1) + "\n")


def load_bundle(path, view_limit: int | None = None) -> CaptureBundle:
    """Load and fully validate a bundle directory.

    Args:
        path: Bundle directory containing a `manifest` file.
        view_limit: Optionally load only the first N views (capture-budget
            experiments); blobs of skipped views are never read.
    """
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    try:
        manifest = json.loads(manifest_path.read_text())
    except OSError as exc:
        raise BundleLoadError(f"missing manifest: {manifest_path}") from exc
    except json.JSONDecodeError as exc:
        raise BundleStructureError(f"manifest is not valid JSON: {exc}") from exc

    views_doc = manifest.get("views")
    if not isinstance(views_doc, list) or not views_doc:
        raise BundleValidationError(f"manifest lists no views: {manifest_path}")
    if view_limit is not None:
        views_doc = views_doc[: max(1, view_limit)]

    views = []
    for i, doc in enumerate(views_doc):
        img_path = root / doc["image"]
        try:
            with Image.open(img_path) as img:
                image = np.asarray(img.convert("RGB"))
        except OSError as exc:
            raise BundleLoadError(f"missing image: {img_path}") from exc
        depth = tensorio.read_tensor(root / doc["depth"])
        if depth.ndim != 2:
            raise BundleStructureError(f"depth blob for view {i} has rank {depth.ndim}, expected 2")
        feat = tensorio.read_tensor(root / doc["features"])
        if feat.ndim != 3:
            raise BundleStructureError(f"feature blob for view {i} has rank {feat.ndim}, expected 3")
        intr_doc = doc.get("intrinsics") or {}
        try:
            intr = Intrinsics(
                fx=float(intr_doc["fx"]),
                fy=float(intr_doc["fy"]),
                cx=float(intr_doc["cx"]),
                cy=float(intr_doc["cy"]),
            )
        except KeyError as exc:
            raise BundleStructureError(f"view {i} is missing intrinsics {exc}") from exc
        pose = _pose_from_json(doc.get("pose") or {}, f"view {i}")
        views.append(
            ViewRecord(image=image, depth=depth, camera=pose, intrinsics=intr, feature_map=feat)
        )

    cloud_rel = manifest.get("cloud", "cloud.ply")
    positions, colors, _ = read_ply(root / cloud_rel)
    cloud = PointCloud(positions=positions, colors=colors)

    materials = None
    if "materials" in manifest:
        materials = load_materials(root / manifest["materials"])

    ref_poses = None
    if "reference_poses" in manifest:
        ref_path = root / manifest["reference_poses"]
        try:
            docs = json.loads(ref_path.read_text())
        except OSError as exc:
            raise BundleLoadError(f"missing reference poses: {ref_path}") from exc
        ref_poses = [_pose_from_json(d, f"reference pose {j}") for j, d in enumerate(docs)]
        if view_limit is not None:
            ref_poses = ref_poses[: max(1, view_limit)]

    return CaptureBundle(
        views=views,
        point_cloud=cloud,
        reference_poses=ref_poses,
        material_dictionary=materials,
        scene_id=manifest.get("scene_id", "scene"),
        gt_mass_kg=manifest.get("gt_mass_kg"),
    )
