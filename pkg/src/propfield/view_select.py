"""Normal- and depth-aware view importance scoring with top-k retention.

Close, front-facing views carry the most usable texture; distant or
grazing views mostly add noise. Each visible (point, view) pair gets
s_total = s_dist * s_angle and only the best k views per point are kept
for patch embedding.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .bundle import ViewRecord
from .geometry import project_points
from .sampling import SourcePointSet

UNIT_TOL = 1e-4


@dataclass
class ViewScore:
    point_index: int
    view_index: int
    z: float
    s_dist: float
    s_angle: float
    s_total: float
    pixel: tuple[float, float]


def distance_score(z: float) -> float:
    """1 / (1 + z): higher for closer views (better texture resolution)."""
    if z <= 0:
        raise ValueError(f"distance score needs z > 0, got {z}")
    return 1.0 / (1.0 + z)


def angle_score(view_dir, normal) -> float:
    """max(0, v . (-n)) for unit camera-to-point direction and outward normal."""
    v = np.asarray(view_dir, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    for name, vec in (("view_dir", v), ("normal", n)):
        length = np.linalg.norm(vec)
        if abs(length - 1.0) > UNIT_TOL:
            warnings.warn(f"{name} is not unit length ({length:.6f}); normalizing")
            vec /= max(length, 1e-30)
    return float(max(0.0, v @ -n))


def score_views(source: SourcePointSet, views: list[ViewRecord], visibility: np.ndarray):
    """Batched scores for all (source point, view) pairs.

    Returns (s_total, s_angle, z, pixels): (S, V) score and depth arrays
    plus the (S, V, 2) projected pixels. Invisible pairs hold zero score.
    """
    if source.normals is None:
        raise ValueError("source set has no normals; run normal estimation first")
    s_count = len(source)
    v_count = len(views)
    s_total = np.zeros((s_count, v_count))
    s_angle_all = np.zeros((s_count, v_count))
    z_all = np.zeros((s_count, v_count))
    pixels_all = np.zeros((s_count, v_count, 2))

    for j, view in enumerate(views):
        pixels, z = project_points(source.positions, view.camera, view.intrinsics)
        center = view.camera.center
        to_point = source.positions - center
        dist = np.linalg.norm(to_point, axis=1, keepdims=True)
        v_dir = to_point / np.maximum(dist, 1e-30)
        s_angle = np.maximum(0.0, np.einsum("ij,ij->i", v_dir, -source.normals))
        with np.errstate(divide="ignore", invalid="ignore"):
            s_dist = 1.0 / (1.0 + z)
        vis = visibility[:, j] & (z > 0)
        s_total[:, j] = np.where(vis, s_dist * s_angle, 0.0)
        s_angle_all[:, j] = s_angle
        z_all[:, j] = z
        pixels_all[:, j] = pixels
    return s_total, s_angle_all, z_all, pixels_all


def rank_views(
    source: SourcePointSet,
    views: list[ViewRecord],
    visibility: np.ndarray,
    k: int,
) -> list[list[ViewScore]]:
    """Retain the top-k visible views per source point by s_total.

    Ties break toward the lower view index; the ordering is deterministic.
    Points visible nowhere get an empty list and are flagged on the source
    set (they later receive properties purely through densification).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    s_total, s_angle_all, z_all, pixels_all = score_views(source, views, visibility)

    rankings: list[list[ViewScore]] = []
    zero_visible = np.zeros(len(source), dtype=np.bool_)
    for i in range(len(source)):
        vis = np.flatnonzero(visibility[i] & (z_all[i] > 0))
        if vis.size == 0:
            zero_visible[i] = True
            rankings.append([])
            continue
        ranked = sorted(vis, key=lambda j: (-s_total[i, j], j))[:k]
        entries = []
        for j in ranked:
            z = float(z_all[i, j])
            entries.append(
                ViewScore(
                    point_index=i,
                    view_index=int(j),
                    z=z,
                    s_dist=float(1.0 / (1.0 + z)),
                    s_angle=float(s_angle_all[i, j]),
                    s_total=float(s_total[i, j]),
                    pixel=(float(pixels_all[i, j, 0]), float(pixels_all[i, j, 1])),
                )
            )
        rankings.append(entries)
    source.flags["zero_visible"] = zero_visible
    return rankings
