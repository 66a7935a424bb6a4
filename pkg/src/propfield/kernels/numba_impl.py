"""Numba builds of the hot kernels.

Operation order mirrors :mod:`propfield.kernels.numpy_impl` so both
backends agree to float rounding. `fastmath` stays off for that reason.
"""

import math

import numpy as np
from numba import njit

RAY_T_MIN = 1e-9


@njit(cache=True)
def visible_in_view(u, v, z, depth_map, eps):
    h, w = depth_map.shape
    n = u.shape[0]
    iu = np.rint(u)
    iv = np.rint(v)
    out = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        if z[i] <= 0.0:
            continue
        x = int(iu[i])
        y = int(iv[i])
        if x < 0 or x >= w or y < 0 or y >= h:
            continue
        stored = float(depth_map[y, x])
        if stored > 0.0 and z[i] <= stored + eps:
            out[i] = True
    return out


@njit(cache=True)
def bilinear_gather(fmap, fu, fv):
    h, w, dim = fmap.shape
    m = fu.shape[0]
    out = np.empty((m, dim), dtype=np.float64)
    for i in range(m):
        x = min(max(fu[i], 0.0), w - 1.0)
        y = min(max(fv[i], 0.0), h - 1.0)
        x0 = int(math.floor(x))
        y0 = int(math.floor(y))
        x1 = min(x0 + 1, w - 1)
        y1 = min(y0 + 1, h - 1)
        wx = x - x0
        wy = y - y0
        w00 = (1.0 - wy) * (1.0 - wx)
        w01 = (1.0 - wy) * wx
        w10 = wy * (1.0 - wx)
        w11 = wy * wx
        for d in range(dim):
            out[i, d] = (
                fmap[y0, x0, d] * w00
                + fmap[y0, x1, d] * w01
                + fmap[y1, x0, d] * w10
                + fmap[y1, x1, d] * w11
            )
    return out


@njit(cache=True)
def accumulate_features(fmap, fu, fv, rows, accum, counts):
    h, w, dim = fmap.shape
    m = fu.shape[0]
    for i in range(m):
        x = min(max(fu[i], 0.0), w - 1.0)
        y = min(max(fv[i], 0.0), h - 1.0)
        x0 = int(math.floor(x))
        y0 = int(math.floor(y))
        x1 = min(x0 + 1, w - 1)
        y1 = min(y0 + 1, h - 1)
        wx = x - x0
        wy = y - y0
        w00 = (1.0 - wy) * (1.0 - wx)
        w01 = (1.0 - wy) * wx
        w10 = wy * (1.0 - wx)
        w11 = wy * wx
        r = rows[i]
        for d in range(dim):
            val = (
                fmap[y0, x0, d] * w00
                + fmap[y0, x1, d] * w01
                + fmap[y1, x0, d] * w10
                + fmap[y1, x1, d] * w11
            )
            accum[r, d] = accum[r, d] + val
        counts[r] += 1


@njit(cache=True)
def voxel_representatives(codes_sorted, order, positions):
    n = codes_sorted.shape[0]
    n_seg = 1
    for i in range(1, n):
        if codes_sorted[i] != codes_sorted[i - 1]:
            n_seg += 1

    reps = np.empty(n_seg, dtype=np.int64)
    seg = 0
    start = 0
    while start < n:
        end = start + 1
        while end < n and codes_sorted[end] == codes_sorted[start]:
            end += 1
        cx = 0.0
        cy = 0.0
        cz = 0.0
        for i in range(start, end):
            p = order[i]
            cx += positions[p, 0]
            cy += positions[p, 1]
            cz += positions[p, 2]
        cnt = float(end - start)
        cx /= cnt
        cy /= cnt
        cz /= cnt
        best = np.inf
        best_idx = order[start]
        for i in range(start, end):
            p = order[i]
            dx = positions[p, 0] - cx
            dy = positions[p, 1] - cy
            dz = positions[p, 2] - cz
            d2 = (dx * dx + dy * dy) + dz * dz
            if d2 < best:
                best = d2
                best_idx = p
        reps[seg] = best_idx
        seg += 1
        start = end
    return reps


@njit(cache=True)
def neighborhood_covariances(positions, neighbors):
    m, k = neighbors.shape
    out = np.zeros((m, 3, 3), dtype=np.float64)
    for i in range(m):
        mx = 0.0
        my = 0.0
        mz = 0.0
        for j in range(k):
            p = neighbors[i, j]
            mx += positions[p, 0]
            my += positions[p, 1]
            mz += positions[p, 2]
        mx /= k
        my /= k
        mz /= k
        for j in range(k):
            p = neighbors[i, j]
            dx = positions[p, 0] - mx
            dy = positions[p, 1] - my
            dz = positions[p, 2] - mz
            out[i, 0, 0] += dx * dx
            out[i, 0, 1] += dx * dy
            out[i, 0, 2] += dx * dz
            out[i, 1, 1] += dy * dy
            out[i, 1, 2] += dy * dz
            out[i, 2, 2] += dz * dz
        out[i, 1, 0] = out[i, 0, 1]
        out[i, 2, 0] = out[i, 0, 2]
        out[i, 2, 1] = out[i, 1, 2]
        for a in range(3):
            for b in range(3):
                out[i, a, b] /= k
    return out


@njit(cache=True, inline="always")
def _box_hit(ox, oy, oz, dx, dy, dz, hx, hy, hz):
    t_lo = -np.inf
    t_hi = np.inf
    for ax in range(3):
        if ax == 0:
            oa, da, h = ox, dx, hx
        elif ax == 1:
            oa, da, h = oy, dy, hy
        else:
            oa, da, h = oz, dz, hz
        if da == 0.0:
            if abs(oa) > h:
                return np.inf
        else:
            inv = 1.0 / da
            t1 = (-h - oa) * inv
            t2 = (h - oa) * inv
            tn = min(t1, t2)
            tf = max(t1, t2)
            t_lo = max(t_lo, tn)
            t_hi = min(t_hi, tf)
    if t_hi < t_lo or t_hi <= RAY_T_MIN:
        return np.inf
    if t_lo > RAY_T_MIN:
        return t_lo
    return t_hi


@njit(cache=True, inline="always")
def _sphere_hit(ox, oy, oz, dx, dy, dz, r):
    b = ox * dx + oy * dy + oz * dz
    c = (ox * ox + oy * oy + oz * oz) - r * r
    disc = b * b - c
    if disc < 0.0:
        return np.inf
    root = math.sqrt(max(disc, 0.0))
    t_near = -b - root
    t_far = -b + root
    t = t_near if t_near > RAY_T_MIN else t_far
    if t > RAY_T_MIN:
        return t
    return np.inf


@njit(cache=True, inline="always")
def _cylinder_hit(ox, oy, oz, dx, dy, dz, r, hz):
    best = np.inf
    a = dx * dx + dy * dy
    b = ox * dx + oy * dy
    c = (ox * ox + oy * oy) - r * r
    disc = b * b - a * c
    if a > 0.0 and disc >= 0.0:
        root = math.sqrt(max(disc, 0.0))
        for sign in range(2):
            t_side = (-b - root) / a if sign == 0 else (-b + root) / a
            zhit = oz + t_side * dz
            if t_side > RAY_T_MIN and abs(zhit) <= hz and t_side < best:
                best = t_side
    if dz != 0.0:
        for sign in range(2):
            zcap = -hz if sign == 0 else hz
            t_cap = (zcap - oz) / dz
            x = ox + t_cap * dx
            y = oy + t_cap * dy
            if t_cap > RAY_T_MIN and x * x + y * y <= r * r and t_cap < best:
                best = t_cap
    return best


@njit(cache=True)
def raycast(origins, dirs, prim_types, prim_params, prim_rots, prim_trans):
    m = origins.shape[0]
    n_prim = prim_types.shape[0]
    best_t = np.full(m, np.inf)
    best_p = np.full(m, -1, dtype=np.int64)
    for i in range(m):
        for p in range(n_prim):
            rot = prim_rots[p]
            wx = origins[i, 0] - prim_trans[p, 0]
            wy = origins[i, 1] - prim_trans[p, 1]
            wz = origins[i, 2] - prim_trans[p, 2]
            ox = wx * rot[0, 0] + wy * rot[1, 0] + wz * rot[2, 0]
            oy = wx * rot[0, 1] + wy * rot[1, 1] + wz * rot[2, 1]
            oz = wx * rot[0, 2] + wy * rot[1, 2] + wz * rot[2, 2]
            dx = dirs[i, 0] * rot[0, 0] + dirs[i, 1] * rot[1, 0] + dirs[i, 2] * rot[2, 0]
            dy = dirs[i, 0] * rot[0, 1] + dirs[i, 1] * rot[1, 1] + dirs[i, 2] * rot[2, 1]
            dz = dirs[i, 0] * rot[0, 2] + dirs[i, 1] * rot[1, 2] + dirs[i, 2] * rot[2, 2]
            kind = prim_types[p]
            if kind == 0:
                t = _box_hit(ox, oy, oz, dx, dy, dz, prim_params[p, 0], prim_params[p, 1], prim_params[p, 2])
            elif kind == 1:
                t = _sphere_hit(ox, oy, oz, dx, dy, dz, prim_params[p, 0])
            else:
                t = _cylinder_hit(ox, oy, oz, dx, dy, dz, prim_params[p, 0], prim_params[p, 1])
            if t < best_t[i]:
                best_t[i] = t
                best_p[i] = p
    return best_t, best_p


def warmup():
    """Compile every kernel on tiny inputs (one-time JIT cost)."""
    depth = np.ones((4, 4), dtype=np.float32)
    u = np.array([1.0, 2.0])
    z = np.array([0.5, 0.5])
    visible_in_view(u, u, z, depth, 0.0)

    fmap = np.ones((4, 4, 2), dtype=np.float32)
    bilinear_gather(fmap, u, u)
    accum = np.zeros((3, 2))
    counts = np.zeros(3, dtype=np.int64)
    accumulate_features(fmap, u, u, np.array([0, 1], dtype=np.int64), accum, counts)

    pos = np.random.default_rng(0).normal(size=(8, 3))
    codes = np.array([0, 0, 1, 1, 2, 2, 2, 3], dtype=np.int64)
    order = np.arange(8, dtype=np.int64)
    voxel_representatives(codes, order, pos)
    neighborhood_covariances(pos, np.stack([order[:4]] * 3, axis=1))

    origins = np.zeros((2, 3))
    dirs = np.tile(np.array([0.0, 0.0, 1.0]), (2, 1))
    types = np.array([0, 1, 2], dtype=np.int64)
    params = np.array([[1.0, 1.0, 1.0], [0.5, 0.0, 0.0], [0.5, 1.0, 0.0]])
    rots = np.stack([np.eye(3)] * 3)
    trans = np.tile(np.array([0.0, 0.0, 5.0]), (3, 1))
    raycast(origins, dirs, types, params, rots, trans)
