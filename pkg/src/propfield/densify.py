"""Densification: spread anchor material probabilities to the full cloud.

Neighbors are found in geometric-feature space, not Euclidean space —
points of the same object part cluster in feature space even when they
are far apart spatially, so interpolation respects part boundaries. Only
the short per-material probability vectors are interpolated, never the
high-dimensional embeddings.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import MaterialError
from .grounding import MaterialDictionary, regress_with_weights
from .ply import write_ply


@dataclass
class PropertyField:
    """Dense per-point material probabilities and property values."""

    positions: np.ndarray
    probabilities: np.ndarray
    dominant: np.ndarray
    properties: dict[str, np.ndarray]
    material_names: list[str]
    normals: np.ndarray | None = None
    flags: dict = field(default_factory=dict)

    def __len__(self):
        return self.positions.shape[0]


def dino_knn_interpolate(query_features, source_features, source_probs, k: int) -> np.ndarray:
    """Interpolate probability vectors from the k nearest anchors in feature space.

    Neighbor weights are the cosine similarities clamped at zero and
    renormalized; if every clamped weight vanishes the k neighbors are
    averaged uniformly. The result is always a convex combination, so rows
    sum to one.

    Args:
        query_features: (Q, D) geometric features; rows must be non-degenerate
            (an error lists any all-zero rows).
        source_features: (S, D) anchor features.
        source_probs: (S, K) anchor probability vectors.
        k: Neighbor count, at most S.

    Returns:
        (Q, K) interpolated probability vectors.
    """
    q = np.atleast_2d(np.asarray(query_features, dtype=np.float64))
    s = np.atleast_2d(np.asarray(source_features, dtype=np.float64))
    probs = np.atleast_2d(np.asarray(source_probs, dtype=np.float64))
    if k < 1 or k > s.shape[0]:
        raise ValueError(f"k={k} outside 1..{s.shape[0]}")

    q_norms = np.linalg.norm(q, axis=1)
    missing = np.flatnonzero(q_norms == 0)
    if missing.size:
        raise MaterialError(f"query features missing for indices {missing[:10].tolist()}")

    s_unit = s / np.maximum(np.linalg.norm(s, axis=1, keepdims=True), 1e-30)
    sims = (q / q_norms[:, None]) @ s_unit.T

    if k < s.shape[0]:
        part = np.argpartition(-sims, k - 1, axis=1)[:, :k]
        # Deterministic neighbor order: by descending similarity, index tie-break.
        row = np.arange(q.shape[0])[:, None]
        order = np.lexsort((part, -sims[row, part]), axis=1)
        neighbors = part[row, order]
    else:
        neighbors = np.argsort(-sims, kind="stable", axis=1)
    neighbor_sims = sims[np.arange(q.shape[0])[:, None], neighbors]

    weights = np.maximum(neighbor_sims, 0.0)
    totals = weights.sum(axis=1)
    flat = totals <= 0
    if flat.any():
        weights[flat] = 1.0
        totals[flat] = k
    weights /= totals[:, None]

    return np.einsum("qk,qkm->qm", weights, probs[neighbors])


def euclidean_knn_interpolate(query_positions, source_positions, source_probs, k: int) -> np.ndarray:
    """Plain spatial k-NN reference path (inverse-distance weights).

    Kept as the naive comparison baseline for the feature-space route; it
    blurs across part boundaries whenever parts interleave spatially.
    """
    q = np.atleast_2d(np.asarray(query_positions, dtype=np.float64))
    s = np.atleast_2d(np.asarray(source_positions, dtype=np.float64))
    probs = np.atleast_2d(np.asarray(source_probs, dtype=np.float64))
    if k < 1 or k > s.shape[0]:
        raise ValueError(f"k={k} outside 1..{s.shape[0]}")

    d2 = ((q[:, None, :] - s[None, :, :]) ** 2).sum(axis=2)
    if k < s.shape[0]:
        neighbors = np.argpartition(d2, k - 1, axis=1)[:, :k]
    else:
        neighbors = np.argsort(d2, kind="stable", axis=1)
    nd = np.sqrt(d2[np.arange(q.shape[0])[:, None], neighbors])
    weights = 1.0 / np.maximum(nd, 1e-12)
    weights /= weights.sum(axis=1, keepdims=True)
    return np.einsum("qk,qkm->qm", weights, probs[neighbors])


def densify_field(
    semantic_cloud,
    source,
    dictionary: MaterialDictionary,
    k: int,
    normals=None,
) -> PropertyField:
    """Build the dense property field from grounded anchors.

    Points with geometric features interpolate in feature space; the rare
    featureless points (visible in no view, or whose visible samples all
    landed on empty feature cells) copy the probabilities of their nearest
    Euclidean neighbor that has a feature, and are flagged. Property
    values follow from the interpolated weights applied to the dictionary
    values; ranged values yield (N, 2) low/high columns.
    """
    if source.probabilities is None:
        raise ValueError("source set has no material probabilities; ground it first")
    n = len(semantic_cloud)
    k = min(k, len(source))

    feature_norms = np.linalg.norm(semantic_cloud.features, axis=1)
    featureless = semantic_cloud.featureless | (feature_norms == 0)
    probs = np.zeros((n, len(dictionary)), dtype=np.float64)
    featured = np.flatnonzero(~featureless)
    if featured.size:
        probs[featured] = dino_knn_interpolate(
            semantic_cloud.features[featured], source.features, source.probabilities, k
        )
    orphan = np.flatnonzero(featureless)
    if orphan.size:
        if featured.size == 0:
            raise MaterialError("no point in the cloud has a geometric feature")
        tree = cKDTree(semantic_cloud.positions[featured])
        _, nn = tree.query(semantic_cloud.positions[orphan], k=1)
        probs[orphan] = probs[featured[nn]]

    properties = {}
    for prop in dictionary.property_names:
        lo_hi = dictionary.property_values(prop)
        if np.all(lo_hi[:, 0] == lo_hi[:, 1]):
            properties[prop] = regress_with_weights(probs, lo_hi[:, 0])
        else:
            properties[prop] = regress_with_weights(probs, lo_hi)

    return PropertyField(
        positions=semantic_cloud.positions,
        probabilities=probs,
        dominant=np.argmax(probs, axis=1),
        properties=properties,
        material_names=dictionary.names,
        normals=normals,
        flags={"featureless": featureless},
    )


def export_field_ply(path, fld: PropertyField) -> None:
    """Write the field as PLY: dominant material index + property scalars.

    Ranged properties export their midpoint column. Any PLY viewer can
    colorize by these per-vertex scalars.
    """
    extra = {"material": fld.dominant.astype(np.int32)}
    for prop, values in fld.properties.items():
        col = values if values.ndim == 1 else values.mean(axis=1)
        extra[prop] = col.astype(np.float32)
    write_ply(path, fld.positions, colors=None, extra=extra)
