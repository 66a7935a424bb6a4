"""Latency benchmarking: per-stage percentiles, the naive dense-fusion
comparison, and the numba-vs-numpy kernel microbenchmark."""

import time

import numpy as np

from . import fusion as fusion_mod
from . import kernels
from .geometry import project_points
from .pipeline import STAGES, RunConfig, run_pipeline


def _percentiles(values):
    arr = np.asarray(values, dtype=np.float64)
    return {
        "median_s": float(np.median(arr)),
        "p95_s": float(np.percentile(arr, 95)),
        "mean_s": float(arr.mean()),
        "runs": int(arr.size),
    }


def bench_bundles(
    bundles,
    config: RunConfig,
    provider_for,
    repeats: int = 3,
    naive: bool = False,
) -> dict:
    """Run the pipeline repeatedly over each bundle and aggregate stage times.

    Args:
        bundles: Bundle directory paths or loaded bundles.
        config: Pipeline configuration shared by all runs.
        provider_for: Callable bundle_or_path -> provider (providers may be
            scene-specific, e.g. palette-based).
        repeats: Runs per bundle; medians and p95s aggregate over all runs.
        naive: Also run the dense single-scale baseline (every cloud point,
            every visible view) and report patch-count and wall-time ratios.

    Returns:
        Dict with per-stage stats, per-bundle rows, and optionally the
        naive comparison.
    """
    stage_samples = {stage: [] for stage in STAGES}
    total_samples = []
    rows = []
    naive_rows = []

    for item in bundles:
        provider = provider_for(item)
        for rep in range(repeats):
            capture: dict = {}
            report, _ = run_pipeline(item, config, provider, capture=capture)
            for stage in STAGES:
                stage_samples[stage].append(report.timings.stage_total(stage))
            total_samples.append(report.timings.total)
            if rep == 0:
                rows.append(
                    {
                        "scene_id": report.scene_id,
                        "points": report.point_count,
                        "views": len(capture["bundle"].views),
                        "source_points": report.source_count,
                        "patch_requests": report.request_count,
                        "naive_patches": report.naive_patch_count,
                        "stage_totals": {s: report.timings.stage_total(s) for s in STAGES},
                    }
                )
                if naive:
                    naive_rows.append(
                        _naive_comparison(capture, config, provider, report)
                    )

    result = {
        "config": config.to_json_dict(),
        "stages": {stage: _percentiles(stage_samples[stage]) for stage in STAGES},
        "total": _percentiles(total_samples),
        "bundles": rows,
    }
    if naive:
        result["naive"] = naive_rows
    return result


def _naive_comparison(capture, config, provider, report) -> dict:
    """Time the dense baseline: one mid-scale patch per visible (point, view)."""
    bundle = capture["bundle"]
    visibility = capture["visibility"]
    scale = int(sorted(config.scales)[len(config.scales) // 2])

    start = time.perf_counter()
    count = 0
    for j, view in enumerate(bundle.views):
        rows = np.flatnonzero(visibility[:, j])
        if rows.size == 0:
            continue
        pixels, _ = project_points(
            bundle.point_cloud.positions[rows].astype(np.float64), view.camera, view.intrinsics
        )
        h, w = view.image_hw
        for start_row in range(0, rows.size, config.max_batch):
            chunk = range(start_row, min(start_row + config.max_batch, rows.size))
            patches = []
            for i in chunk:
                x0, width = fusion_mod._clamp_window(pixels[i, 0], scale, w)
                y0, height = fusion_mod._clamp_window(pixels[i, 1], scale, h)
                patches.append(view.image[y0 : y0 + height, x0 : x0 + width])
            provider.embed(patches)
            count += len(patches)
    naive_wall = time.perf_counter() - start

    optimized_wall = report.timings.fusion.get("patch_embedding", 0.0) + report.timings.fusion.get(
        "patch_planning", 0.0
    )
    return {
        "scene_id": report.scene_id,
        "naive_patches": count,
        "optimized_patches": report.request_count,
        "patch_ratio": count / max(report.request_count, 1),
        "naive_wall_s": naive_wall,
        "optimized_wall_s": optimized_wall,
        "wall_ratio": naive_wall / max(optimized_wall, 1e-9),
    }


def _kernel_cases(rng):
    n = 200_000
    depth = rng.uniform(0.5, 3.0, size=(128, 128)).astype(np.float32)
    u = rng.uniform(-5.0, 132.0, size=n)
    v = rng.uniform(-5.0, 132.0, size=n)
    z = rng.uniform(0.1, 4.0, size=n)

    fmap = rng.standard_normal((64, 64, 32)).astype(np.float32)
    fu = rng.uniform(0.0, 63.0, size=n)
    fv = rng.uniform(0.0, 63.0, size=n)

    pos = rng.standard_normal((50_000, 3))
    neighbors = rng.integers(0, 50_000, size=(50_000, 16)).astype(np.int64)

    codes = rng.integers(0, 4000, size=n)
    order = np.argsort(codes, kind="stable").astype(np.int64)
    codes_sorted = codes[order]
    vox_pos = rng.standard_normal((n, 3))

    origins = np.zeros((50_000, 3))
    origins[:, 2] = -5.0
    dirs = rng.standard_normal((50_000, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    types = np.array([0, 1, 2], dtype=np.int64)
    params = np.array([[0.5, 0.5, 0.5], [0.6, 0.0, 0.0], [0.4, 0.5, 0.0]])
    rots = np.stack([np.eye(3)] * 3)
    trans = np.array([[0.0, 0.0, 0.0], [1.5, 0.0, 0.0], [-1.5, 0.0, 0.0]])

    return {
        "visible_in_view": (u, v, z, depth, 0.01),
        "bilinear_gather": (fmap, fu, fv),
        "neighborhood_covariances": (pos, neighbors),
        "voxel_representatives": (codes_sorted, order, vox_pos),
        "raycast": (origins, dirs, types, params, rots, trans),
    }


def bench_kernels(repeats: int = 5, seed: int = 0) -> dict:
    """Time each hot kernel on both backends; reports medians and speedups.

    The numba backend is warmed (JIT compiled) before timing so first-call
    compilation does not pollute the numbers.
    """
    rng = np.random.default_rng(seed)
    cases = _kernel_cases(rng)
    backends = kernels.available_backends()
    previous = kernels.active_backend()

    results: dict = {"backends": backends, "kernels": {}}
    try:
        for name, args in cases.items():
            row = {}
            for backend in backends:
                impl = kernels.get_impl(backend)
                fn = getattr(impl, name)
                fn(*args)  # warmup / JIT
                times = []
                for _ in range(repeats):
                    start = time.perf_counter()
                    fn(*args)
                    times.append(time.perf_counter() - start)
                row[backend] = float(np.median(times))
            if "numba" in row and row["numba"] > 0:
                row["speedup"] = row["numpy"] / row["numba"]
            results["kernels"][name] = row
    finally:
        kernels.set_backend(previous)
    return results
