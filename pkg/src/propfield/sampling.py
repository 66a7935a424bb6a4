"""Adaptive voxel downsampling to a scale-independent set of anchor points.

The voxel edge is tied to the cloud's bounding volume and a target anchor
count, so shape-similar clouds produce the same number of anchors no
matter their physical size. Each occupied voxel contributes the original
point nearest its centroid, keeping anchors index-aligned with the cloud.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels

OUTLIER_FRACTION = 0.005


@dataclass
class SamplingConfig:
    n_target: int = 150
    min_points_per_voxel: int = 1

    def __post_init__(self):
        if self.n_target < 1:
            raise ValueError(f"n_target must be >= 1, got {self.n_target}")


@dataclass
class SourcePointSet:
    """Sparse anchor points carrying the expensive per-point state.

    `indices` point into the originating cloud. Normals, aggregated
    geometric features, fused semantic embeddings, and material
    probabilities are attached by later stages.
    """

    indices: np.ndarray
    positions: np.ndarray
    voxel_size: float
    volume_fallback: bool = False
    normals: np.ndarray | None = None
    features: np.ndarray | None = None
    fused: np.ndarray | None = None
    fused_mask: np.ndarray | None = None
    probabilities: np.ndarray | None = None
    flags: dict = field(default_factory=dict)

    def __len__(self):
        return self.indices.shape[0]


def adaptive_voxel_size(bbox_volume: float, n_target: int, diagonal: float = 0.0):
    """Voxel edge length decoupling anchor count from object scale.

    Returns (edge, fell_back). A degenerate (zero or non-finite) bounding
    volume falls back to diagonal / cbrt(n_target).
    """
    if n_target < 1:
        raise ValueError(f"n_target must be >= 1, got {n_target}")
    if bbox_volume > 0 and np.isfinite(bbox_volume):
        return float(np.cbrt(bbox_volume / n_target)), False
    return float(diagonal / np.cbrt(n_target)), True


def _trimmed_bbox(positions):
    """Axis-aligned bbox after dropping the farthest 0.5% of points.

    Guards the voxel-size estimate against reconstruction flyers. Clouds
    too small for 0.5% to reach one whole point are kept as-is.
    """
    n_drop = int(positions.shape[0] * OUTLIER_FRACTION)
    if n_drop == 0:
        return positions.min(axis=0), positions.max(axis=0)
    centroid = positions.mean(axis=0)
    dist = np.linalg.norm(positions - centroid, axis=1)
    keep_idx = np.argpartition(dist, positions.shape[0] - n_drop)[: positions.shape[0] - n_drop]
    trimmed = positions[keep_idx]
    return trimmed.min(axis=0), trimmed.max(axis=0)


def downsample(positions, config: SamplingConfig) -> SourcePointSet:
    """Voxel-downsample a cloud to roughly `config.n_target` anchors.

    Every anchor is an original cloud point (the one nearest its voxel's
    centroid; ties keep the lowest index). All points participate in the
    binning; only the bbox estimate ignores far outliers. If pathological
    geometry makes the formula overshoot the 2 * n_target bound, the voxel
    edge is doubled until the bound holds; the effective edge is reported
    in the result for the coverage guarantee (every cloud point lies
    within sqrt(3) * voxel_size of some anchor).
    """
    p = np.asarray(positions, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] < 1:
        raise ValueError(f"need a non-empty (N, 3) cloud, got shape {p.shape}")

    lo, hi = _trimmed_bbox(p)
    extent = hi - lo
    volume = float(extent[0] * extent[1] * extent[2])
    diagonal = float(np.linalg.norm(extent))
    edge, fell_back = adaptive_voxel_size(volume, config.n_target, diagonal)
    if edge <= 0:  # single point or fully degenerate cloud
        return SourcePointSet(
            indices=np.array([0], dtype=np.int64),
            positions=p[:1].copy(),
            voxel_size=0.0,
            volume_fallback=True,
        )

    limit = 2 * config.n_target
    while True:
        cell = np.floor((p - lo) / edge).astype(np.int64)
        # Points inside the trimmed bbox clamp onto its grid (so the exact
        # bbox maximum does not open a fresh voxel); flyers keep raw indices.
        n_bins = np.maximum(1, np.ceil(extent / edge)).astype(np.int64)
        for ax in range(3):
            inside = (p[:, ax] >= lo[ax]) & (p[:, ax] <= hi[ax])
            cell[inside, ax] = np.clip(cell[inside, ax], 0, n_bins[ax] - 1)
        cell -= cell.min(axis=0)
        spans = cell.max(axis=0) + 1
        codes = (cell[:, 0] * spans[1] + cell[:, 1]) * spans[2] + cell[:, 2]

        order = np.argsort(codes, kind="stable").astype(np.int64)
        codes_sorted = codes[order]
        n_occupied = 1 + int(np.count_nonzero(np.diff(codes_sorted)))
        if n_occupied <= limit:
            break
        edge *= 2.0

    reps = kernels.voxel_representatives(codes_sorted, order, p)

    if config.min_points_per_voxel > 1:
        counts = np.bincount(np.searchsorted(np.unique(codes_sorted), codes_sorted))
        keep = counts >= config.min_points_per_voxel
        if keep.any():  # never filter down to an empty anchor set
            reps = reps[keep]

    reps = np.sort(reps)
    return SourcePointSet(
        indices=reps,
        positions=p[reps].copy(),
        voxel_size=float(edge),
        volume_fallback=fell_back,
    )
