"""Camera projection, depth-tested visibility, normals, and metric alignment."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .bundle import CameraPose, CaptureBundle, Intrinsics, PointCloud, ViewRecord
from .errors import BundleValidationError, DegenerateGeometryError, PropfieldError

DEFAULT_EPSILON_FRACTION = 0.01
_DEGENERATE_EIG_RATIO = 1e-10


class BehindCamera(PropfieldError):
    """The point has non-positive depth in the camera frame."""


@dataclass(eq=False)
class Sim3Transform:
    """Similarity transform x' = scale * rotation @ x + translation."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if not np.isfinite(self.scale) or self.scale <= 0:
            raise BundleValidationError(f"similarity scale must be positive, got {self.scale}")
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-6:
            raise BundleValidationError(f"similarity rotation not orthonormal ({err:.2e})")

    @classmethod
    def identity(cls) -> "Sim3Transform":
        return cls(scale=1.0, rotation=np.eye(3), translation=np.zeros(3))

    def apply(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return self.scale * (p @ self.rotation.T) + self.translation


def project_points(points, camera: CameraPose, intrinsics: Intrinsics):
    """Pinhole-project world points into one view.

    Returns (pixels, depths): (N, 2) pixel coordinates and (N,) camera-frame
    z-depths. Depths <= 0 mean the point is behind the camera; the pixel
    values for those rows are meaningless and must be masked by the caller.
    """
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    cam = p @ camera.rotation.T + camera.translation
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intrinsics.fx * cam[:, 0] / z + intrinsics.cx
        v = intrinsics.fy * cam[:, 1] / z + intrinsics.cy
    return np.stack([u, v], axis=1), z


def project_point(x, view: ViewRecord):
    """Project a single world point; raises :class:`BehindCamera` if z <= 0."""
    pixels, z = project_points(np.asarray(x, dtype=np.float64)[None, :], view.camera, view.intrinsics)
    if z[0] <= 0:
        raise BehindCamera(f"point {x} has camera depth {z[0]}")
    return pixels[0], float(z[0])


def unproject(pixels, depths, camera: CameraPose, intrinsics: Intrinsics) -> np.ndarray:
    """Inverse of :func:`project_points` for positive depths."""
    pix = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    z = np.asarray(depths, dtype=np.float64)
    cam = np.stack(
        [(pix[:, 0] - intrinsics.cx) / intrinsics.fx * z,
         (pix[:, 1] - intrinsics.cy) / intrinsics.fy * z,
         z],
        axis=1,
    )
    return (cam - camera.translation) @ camera.rotation


def default_epsilon(positions) -> float:
    """Depth tolerance used when none is configured: 1% of the bbox diagonal."""
    p = np.asarray(positions, dtype=np.float64)
    return DEFAULT_EPSILON_FRACTION * float(np.linalg.norm(p.max(axis=0) - p.min(axis=0)))


def visibility_mask(points, views: list[ViewRecord], epsilon: float) -> np.ndarray:
    """Depth-tested visibility of each point in each view, shape (N, |views|).

    A point is visible when it projects in front of the camera onto an
    in-bounds pixel whose stored depth is valid (> 0) and its projected
    depth is at most the stored depth plus `epsilon`. Depth lookup is
    nearest-pixel: bilinear interpolation across occlusion edges would
    fabricate depths.
    """
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    mask = np.zeros((p.shape[0], len(views)), dtype=np.bool_)
    for j, view in enumerate(views):
        pixels, z = project_points(p, view.camera, view.intrinsics)
        mask[:, j] = kernels.visible_in_view(pixels[:, 0], pixels[:, 1], z, view.depth, epsilon)
    return mask


def estimate_normals(positions, k: int, camera_centers):
    """Per-point unit normals from k-NN covariance, oriented toward the cameras.

    Args:
        positions: (N, 3) point coordinates.
        k: Neighborhood size (>= 3, includes the query point itself).
        camera_centers: (V, 3) camera centers; normals are flipped so that
            n . (mean_center - p) >= 0.

    Returns:
        (normals, degenerate): unit normals (N, 3) and a bool flag per point
        marking neighborhoods of rank < 2, whose normal falls back to the
        view direction.
    """
    p = np.asarray(positions, dtype=np.float64)
    n = p.shape[0]
    if k < 3:
        raise ValueError(f"normal estimation needs k >= 3, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds point count {n}")

    tree = cKDTree(p)
    _, neighbors = tree.query(p, k=k)
    if k == 1:
        neighbors = neighbors[:, None]
    cov = kernels.neighborhood_covariances(p, neighbors.astype(np.int64))
    eigvals, eigvecs = np.linalg.eigh(cov)
    normals = np.ascontiguousarray(eigvecs[:, :, 0])

    centroid = np.asarray(camera_centers, dtype=np.float64).mean(axis=0)
    to_cam = centroid - p
    degenerate = eigvals[:, 1] <= _DEGENERATE_EIG_RATIO * np.maximum(eigvals[:, 2], 1e-300)
    if degenerate.any():
        fallback = to_cam[degenerate]
        norms = np.linalg.norm(fallback, axis=1, keepdims=True)
        normals[degenerate] = fallback / np.maximum(norms, 1e-30)

    flip = np.einsum("ij,ij->i", normals, to_cam) < 0
    normals[flip] *= -1.0
    normals /= np.maximum(np.linalg.norm(normals, axis=1, keepdims=True), 1e-30)
    return normals, degenerate


def sim3_align(source_poses: list[CameraPose], reference_poses: list[CameraPose]) -> Sim3Transform:
    """Closed-form similarity aligning source camera centers to reference centers.

    Only the centers enter the fit; that is sufficient to recover the metric
    scale, which is what the downstream integration consumes.
    """
    if len(source_poses) != len(reference_poses):
        raise ValueError(
            f"pose lists differ in length: {len(source_poses)} vs {len(reference_poses)}"
        )
    if len(source_poses) < 3:
        raise ValueError(f"similarity alignment needs >= 3 pose pairs, got {len(source_poses)}")

    src = np.stack([p.center for p in source_poses])
    ref = np.stack([p.center for p in reference_poses])
    mu_s = src.mean(axis=0)
    mu_r = ref.mean(axis=0)
    x = src - mu_s
    y = ref - mu_r

    cov = (y.T @ x) / src.shape[0]
    u, d, vt = np.linalg.svd(cov)
    if d[0] <= 0 or d[1] <= _DEGENERATE_EIG_RATIO * d[0]:
        raise DegenerateGeometryError(
            "camera centers are collinear or coincident; similarity is not determined"
        )
    s = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2, 2] = -1.0
    rotation = u @ s @ vt
    var = (x * x).sum() / src.shape[0]
    scale = float(np.trace(np.diag(d) @ s) / var)
    translation = mu_r - scale * rotation @ mu_s
    return Sim3Transform(scale=scale, rotation=rotation, translation=translation)


def apply_scale(bundle: CaptureBundle, transform: Sim3Transform) -> CaptureBundle:
    """Map a bundle through a similarity transform, keeping it self-consistent.

    Point positions, camera poses, and depth maps move together, so pixel
    projections are unchanged and projected depths scale exactly with the
    transform; re-run visibility with a scaled epsilon to reproduce masks.
    """
    s, r, t = transform.scale, transform.rotation, transform.translation
    positions = transform.apply(bundle.point_cloud.positions).astype(np.float32)
    cloud = PointCloud(positions=positions, colors=bundle.point_cloud.colors)

    views = []
    for view in bundle.views:
        rot = view.camera.rotation @ r.T
        trans = s * view.camera.translation - rot @ t
        views.append(
            ViewRecord(
                image=view.image,
                depth=(view.depth * np.float32(s)),
                camera=CameraPose(rotation=rot, translation=trans),
                intrinsics=view.intrinsics,
                feature_map=view.feature_map,
            )
        )
    return CaptureBundle(
        views=views,
        point_cloud=cloud,
        reference_poses=bundle.reference_poses,
        material_dictionary=bundle.material_dictionary,
        scene_id=bundle.scene_id,
        gt_mass_kg=bundle.gt_mass_kg,
        extras=dict(bundle.extras),
    )
