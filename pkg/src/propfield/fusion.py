"""Semantic feature construction: geometric feature lifting, multi-scale
patch planning, single-global-batch encoding, and per-point fusion.

The expensive external encoder is called exactly once per batch chunk; all
planning and averaging around it is vectorized and pure. Fusion averages
per view over the patch scales, then across the retained views, then
renormalizes — in that order.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .bundle import ViewRecord
from .errors import StageError
from .geometry import project_points
from .sampling import SourcePointSet
from .view_select import ViewScore

DEFAULT_MAX_BATCH = 1024


@dataclass
class SemanticPointCloud:
    """Full cloud with lifted geometric features and visibility bookkeeping."""

    positions: np.ndarray
    features: np.ndarray
    visible_counts: np.ndarray
    visibility: np.ndarray

    def __len__(self):
        return self.positions.shape[0]

    @property
    def featureless(self) -> np.ndarray:
        """Points visible in no view; they carry no geometric feature."""
        return self.visible_counts == 0


@dataclass
class PatchRequest:
    point_index: int
    view_index: int
    scale: int
    center: tuple[float, float]
    x0: int
    y0: int
    width: int
    height: int
    rank_weight: float


@dataclass
class FusedFeatures:
    """Per-source-point fused embeddings f(s); `mask` marks points that
    received at least one patch."""

    vectors: np.ndarray
    contributions: np.ndarray
    mask: np.ndarray


def aggregate_geometric_features(positions, views: list[ViewRecord], visibility) -> SemanticPointCloud:
    """Lift per-view feature maps to 3D by visibility-masked averaging.

    Every point's feature is the mean of the bilinearly sampled feature-map
    vectors over its visible views. Points visible nowhere keep a zero
    vector and are flagged via `featureless`.
    """
    p = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    n = p.shape[0]
    dim = views[0].feature_dim
    accum = np.zeros((n, dim), dtype=np.float64)
    counts = np.zeros(n, dtype=np.int64)

    for j, view in enumerate(views):
        rows = np.flatnonzero(visibility[:, j])
        if rows.size == 0:
            continue
        pixels, _ = project_points(p[rows], view.camera, view.intrinsics)
        h, w = view.image_hw
        hf, wf, _ = view.feature_map.shape
        fu = (pixels[:, 0] + 0.5) * (wf / w) - 0.5
        fv = (pixels[:, 1] + 0.5) * (hf / h) - 0.5
        kernels.accumulate_features(view.feature_map, fu, fv, rows.astype(np.int64), accum, counts)

    nonzero = counts > 0
    accum[nonzero] /= counts[nonzero, None]
    return SemanticPointCloud(
        positions=p, features=accum, visible_counts=counts, visibility=np.asarray(visibility)
    )


def _clamp_window(center: float, scale: int, limit: int) -> tuple[int, int]:
    """Place a `scale`-wide window inside [0, limit): shift, never pad."""
    size = min(scale, limit)
    lo = int(np.rint(center)) - size // 2
    lo = max(0, min(lo, limit - size))
    return lo, size


def plan_patches(
    source: SourcePointSet,
    rankings: list[list[ViewScore]],
    scales: list[int],
    views: list[ViewRecord],
) -> list[PatchRequest]:
    """One patch request per (source point, retained view, scale).

    Windows are clamped fully inside the image (shifted at borders rather
    than padded, so no fabricated pixels enter the embeddings). Requests
    are emitted point-major, then view, then scale — downstream fusion
    relies on this grouping.
    """
    requests = []
    for entries in rankings:
        for entry in entries:
            h, w = views[entry.view_index].image_hw
            for scale in scales:
                x0, width = _clamp_window(entry.pixel[0], int(scale), w)
                y0, height = _clamp_window(entry.pixel[1], int(scale), h)
                requests.append(
                    PatchRequest(
                        point_index=entry.point_index,
                        view_index=entry.view_index,
                        scale=int(scale),
                        center=entry.pixel,
                        x0=x0,
                        y0=y0,
                        width=width,
                        height=height,
                        rank_weight=entry.s_total,
                    )
                )
    return requests


def extract_patch(views: list[ViewRecord], req: PatchRequest) -> np.ndarray:
    return views[req.view_index].image[req.y0 : req.y0 + req.height, req.x0 : req.x0 + req.width]


def encode_global_batch(
    requests: list[PatchRequest],
    views: list[ViewRecord],
    provider,
    max_batch: int = DEFAULT_MAX_BATCH,
) -> np.ndarray:
    """Embed all planned patches through the provider in batch chunks.

    The provider sees at most ceil(len(requests) / max_batch) calls — one
    for the common case — and the output row order matches the request
    order exactly. Zero requests means zero provider calls.
    """
    if max_batch < 1:
        raise ValueError(f"max_batch must be >= 1, got {max_batch}")
    chunks = []
    by_request = hasattr(provider, "embed_requests")
    for start in range(0, len(requests), max_batch):
        span = requests[start : start + max_batch]
        try:
            if by_request:
                chunk = provider.embed_requests(span)
            else:
                chunk = provider.embed([extract_patch(views, r) for r in span])
        except Exception as exc:
            raise StageError(
                "fusion", f"patch embedding failed for requests [{start}, {start + len(span)}): {exc}"
            ) from exc
        chunk = np.asarray(chunk, dtype=np.float32)
        if chunk.shape[0] != len(span):
            raise StageError(
                "fusion",
                f"provider returned {chunk.shape[0]} embeddings for {len(span)} patches",
            )
        chunks.append(chunk)
    if not chunks:
        return np.zeros((0, 0), dtype=np.float32)
    return np.concatenate(chunks, axis=0)


def fuse(source_count: int, embeddings: np.ndarray, requests: list[PatchRequest]) -> FusedFeatures:
    """Average embeddings per view over scales, then across views, and
    renormalize to unit length.

    The two-level order matters when views contribute unequal scale
    counts; it is applied exactly, not as one flat mean. Points with no
    requests keep a zero vector with `mask` False.
    """
    dim = embeddings.shape[1] if embeddings.size else 0
    vectors = np.zeros((source_count, dim), dtype=np.float64)
    contributions = np.zeros(source_count, dtype=np.int64)
    mask = np.zeros(source_count, dtype=np.bool_)

    # Requests arrive grouped point-major then view; walk the runs.
    m = len(requests)
    i = 0
    while i < m:
        point = requests[i].point_index
        view_means = []
        while i < m and requests[i].point_index == point:
            view = requests[i].view_index
            j = i
            while j < m and requests[j].point_index == point and requests[j].view_index == view:
                j += 1
            view_means.append(embeddings[i:j].astype(np.float64).mean(axis=0))
            contributions[point] += j - i
            i = j
        f = np.stack(view_means).mean(axis=0)
        norm = np.linalg.norm(f)
        if norm > 0:
            f = f / norm
        vectors[point] = f
        mask[point] = True
    return FusedFeatures(vectors=vectors, contributions=contributions, mask=mask)
