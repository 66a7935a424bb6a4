"""Pure-numpy kernel implementations.

These are the reference semantics; the numba twins in
:mod:`propfield.kernels.numba_impl` replicate the operation order so both
backends agree to float rounding.
"""

import numpy as np

# Minimum ray parameter accepted as a hit; rejects self-intersection at the origin.
RAY_T_MIN = 1e-9


def visible_in_view(u, v, z, depth_map, eps):
    """Depth-test projected points against one view's stored depth map.

    A point passes when it lies in front of the camera, its nearest pixel
    is inside the image, that pixel holds a valid (positive) depth, and the
    projected depth is within `eps` of the stored depth.

    Args:
        u, v: Projected pixel coordinates, shape (N,).
        z: Camera-frame depth per point, shape (N,).
        depth_map: (H, W) float32 depth image, 0 marking invalid pixels.
        eps: Depth tolerance in the same unit as `z`.

    Returns:
        Boolean visibility per point, shape (N,).
    """
    h, w = depth_map.shape
    iu = np.rint(u).astype(np.int64)
    iv = np.rint(v).astype(np.int64)
    ok = (z > 0.0) & (iu >= 0) & (iu < w) & (iv >= 0) & (iv < h)
    out = np.zeros(u.shape[0], dtype=np.bool_)
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        return out
    stored = depth_map[iv[idx], iu[idx]].astype(np.float64)
    out[idx] = (stored > 0.0) & (z[idx] <= stored + eps)
    return out


def bilinear_gather(fmap, fu, fv):
    """Sample a (H, W, D) map at continuous coordinates with border clamping.

    Returns float64 samples of shape (M, D).
    """
    h, w, _ = fmap.shape
    x = np.clip(fu, 0.0, w - 1.0)
    y = np.clip(fv, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = (x - x0)[:, None]
    wy = (y - y0)[:, None]
    f00 = fmap[y0, x0].astype(np.float64)
    f01 = fmap[y0, x1].astype(np.float64)
    f10 = fmap[y1, x0].astype(np.float64)
    f11 = fmap[y1, x1].astype(np.float64)
    return (
        f00 * ((1.0 - wy) * (1.0 - wx))
        + f01 * ((1.0 - wy) * wx)
        + f10 * (wy * (1.0 - wx))
        + f11 * (wy * wx)
    )


def accumulate_features(fmap, fu, fv, rows, accum, counts):
    """Bilinear-sample one view and add the samples into per-point accumulators.

    `rows` are unique point indices receiving the M samples; `accum` (N, D)
    and `counts` (N,) are updated in place.
    """
    sampled = bilinear_gather(fmap, fu, fv)
    accum[rows] += sampled
    counts[rows] += 1


def voxel_representatives(codes_sorted, order, positions):
    """Pick one representative point per voxel: nearest to the voxel centroid.

    Args:
        codes_sorted: Voxel codes sorted ascending, shape (N,).
        order: Original point index for each sorted slot (stable sort order).
        positions: (N_total, 3) float64 point coordinates.

    Returns:
        int64 array of representative original indices, one per distinct
        code, in ascending code order. Distance ties resolve to the lowest
        original index (stable sort guarantees ascending order in a voxel).
    """
    n = codes_sorted.shape[0]
    starts = np.flatnonzero(np.diff(codes_sorted)) + 1
    starts = np.concatenate(([0], starts))
    counts = np.diff(np.concatenate((starts, [n])))

    pts = positions[order]
    sums = np.add.reduceat(pts, starts, axis=0)
    centroids = sums / counts[:, None]

    seg_of = np.repeat(np.arange(starts.shape[0]), counts)
    d = pts - centroids[seg_of]
    dist2 = (d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]) + d[:, 2] * d[:, 2]
    best = np.minimum.reduceat(dist2, starts)
    is_best = dist2 == best[seg_of]
    # First best slot in each segment; slots within a segment keep ascending
    # original index, so this is the deterministic tie-break.
    slot = np.arange(n)
    first_best = np.full(starts.shape[0], n, dtype=np.int64)
    np.minimum.at(first_best, seg_of[is_best], slot[is_best])
    return order[first_best]


def neighborhood_covariances(positions, neighbors):
    """Mean-centered 3x3 covariance of each point's neighborhood.

    Args:
        positions: (N, 3) float64.
        neighbors: (M, k) int64 neighbor indices (may include the point itself).

    Returns:
        (M, 3, 3) float64 covariance matrices (divided by k).
    """
    p = positions[neighbors]
    mu = p.sum(axis=1) / p.shape[1]
    d = p - mu[:, None, :]
    return np.einsum("nki,nkj->nij", d, d) / p.shape[1]


def _box_hits(o, d, half):
    m = o.shape[0]
    t_lo = np.full(m, -np.inf)
    t_hi = np.full(m, np.inf)
    miss = np.zeros(m, dtype=np.bool_)
    for ax in range(3):
        oa = o[:, ax]
        da = d[:, ax]
        h = half[ax]
        par = da == 0.0
        miss |= par & (np.abs(oa) > h)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / da
            t1 = (-h - oa) * inv
            t2 = (h - oa) * inv
        tn = np.where(par, -np.inf, np.minimum(t1, t2))
        tf = np.where(par, np.inf, np.maximum(t1, t2))
        t_lo = np.maximum(t_lo, tn)
        t_hi = np.minimum(t_hi, tf)
    hit = ~miss & (t_hi >= t_lo) & (t_hi > RAY_T_MIN)
    t = np.where(t_lo > RAY_T_MIN, t_lo, t_hi)
    return np.where(hit, t, np.inf)


def _sphere_hits(o, d, r):
    b = o[:, 0] * d[:, 0] + o[:, 1] * d[:, 1] + o[:, 2] * d[:, 2]
    c = (o[:, 0] * o[:, 0] + o[:, 1] * o[:, 1] + o[:, 2] * o[:, 2]) - r * r
    disc = b * b - c
    safe = np.maximum(disc, 0.0)
    root = np.sqrt(safe)
    t_near = -b - root
    t_far = -b + root
    t = np.where(t_near > RAY_T_MIN, t_near, t_far)
    hit = (disc >= 0.0) & (t > RAY_T_MIN)
    return np.where(hit, t, np.inf)


def _cylinder_hits(o, d, r, hz):
    m = o.shape[0]
    best = np.full(m, np.inf)

    a = d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]
    b = o[:, 0] * d[:, 0] + o[:, 1] * d[:, 1]
    c = (o[:, 0] * o[:, 0] + o[:, 1] * o[:, 1]) - r * r
    disc = b * b - a * c
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.sqrt(np.maximum(disc, 0.0))
        t1 = (-b - root) / a
        t2 = (-b + root) / a
    side_ok = (a > 0.0) & (disc >= 0.0)
    for t_side in (t1, t2):
        zhit = o[:, 2] + t_side * d[:, 2]
        ok = side_ok & (t_side > RAY_T_MIN) & (np.abs(zhit) <= hz)
        best = np.where(ok & (t_side < best), t_side, best)

    dz = d[:, 2]
    cap_ok = dz != 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        for zcap in (-hz, hz):
            t_cap = (zcap - o[:, 2]) / dz
            x = o[:, 0] + t_cap * d[:, 0]
            y = o[:, 1] + t_cap * d[:, 1]
            ok = cap_ok & (t_cap > RAY_T_MIN) & (x * x + y * y <= r * r)
            best = np.where(ok & (t_cap < best), t_cap, best)
    return best


def raycast(origins, dirs, prim_types, prim_params, prim_rots, prim_trans):
    """Closest-hit ray cast against a list of posed primitives.

    Args:
        origins: (M, 3) ray origins, world frame.
        dirs: (M, 3) unit ray directions, world frame.
        prim_types: (P,) int64; 0 = box, 1 = sphere, 2 = cylinder.
        prim_params: (P, 3) float64; box half-extents, (r, 0, 0) for
            spheres, (r, half_height, 0) for cylinders.
        prim_rots: (P, 3, 3) local-to-world rotations.
        prim_trans: (P, 3) local-to-world translations.

    Returns:
        (t, prim): hit distances (inf for misses) and the index of the hit
        primitive (-1 for misses). Distance ties keep the earlier primitive.
    """
    m = origins.shape[0]
    best_t = np.full(m, np.inf)
    best_p = np.full(m, -1, dtype=np.int64)
    for p in range(prim_types.shape[0]):
        rot = prim_rots[p]
        o = (origins - prim_trans[p]) @ rot
        d = dirs @ rot
        kind = prim_types[p]
        if kind == 0:
            t = _box_hits(o, d, prim_params[p])
        elif kind == 1:
            t = _sphere_hits(o, d, prim_params[p, 0])
        else:
            t = _cylinder_hits(o, d, prim_params[p, 0], prim_params[p, 1])
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_p = np.where(closer, p, best_p)
    return best_t, best_p
