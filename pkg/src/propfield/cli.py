"""Command-line driver: synth, run, eval, bench, export-field.

Exit codes: 0 success, 2 validation/configuration problem, 3 stage failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import synth as synth_mod
from .bundle import load_bundle, save_bundle
from .densify import export_field_ply
from .errors import ConfigError, PropfieldError, StageError
from .grounding import load_materials
from .metrics import evaluate
from .pipeline import RunConfig, run_pipeline
from .providers import (
    AnalyticPartProvider,
    FileBackedProvider,
    MeanColorProvider,
    save_embeddings,
)


def _add_provider_args(parser):
    parser.add_argument(
        "--provider",
        choices=["mean-color", "analytic", "file"],
        default="mean-color",
        help="patch embedding provider (default: mean-color)",
    )
    parser.add_argument(
        "--embeddings", help="precomputed embedding store prefix (for --provider file)"
    )


def _add_config_args(parser):
    parser.add_argument("--config", help="JSON file of run-config values; flags override it")
    parser.add_argument("--n-target", type=int)
    parser.add_argument("--k-views", type=int)
    parser.add_argument("--scales", help="comma-separated patch sizes in px, e.g. 20,40,60")
    parser.add_argument("--temperature", type=float)
    parser.add_argument("--lambda", dest="lam", type=float)
    parser.add_argument("--knn-k", type=int)
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--max-batch", type=int)
    parser.add_argument("--view-limit", type=int)


def _build_config(args) -> RunConfig:
    values = {}
    if args.config:
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        if "lambda" in values:
            values["lam"] = values.pop("lambda")
    for key in ("n_target", "k_views", "temperature", "lam", "knn_k", "epsilon", "max_batch", "view_limit"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if args.scales is not None:
        values["scales"] = tuple(int(s) for s in str(args.scales).replace(" ", "").split(","))
    elif "scales" in values:
        values["scales"] = tuple(values["scales"])
    return RunConfig(**values)


def _make_provider(args, bundle_path):
    if args.provider == "mean-color":
        return MeanColorProvider()
    if args.provider == "file":
        if not args.embeddings:
            raise ConfigError("--provider file requires --embeddings PREFIX")
        return FileBackedProvider.load(args.embeddings)
    palette_path = Path(bundle_path) / "palette.json"
    try:
        doc = json.loads(palette_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(
            f"--provider analytic needs a palette sidecar at {palette_path}"
        ) from exc
    palette = {name: tuple(rgb) for name, rgb in doc.items()}
    return AnalyticPartProvider(palette)


def _cmd_synth(args) -> int:
    overrides = {}
    if args.points is not None:
        overrides["n_points"] = args.points
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.world_scale is not None:
        overrides["world_scale"] = args.world_scale
    if args.cloud_mode is not None:
        overrides["cloud_mode"] = args.cloud_mode
    if args.feature_noise is not None:
        overrides["feature_noise"] = args.feature_noise
    if args.depth_noise is not None:
        overrides["depth_noise"] = args.depth_noise
    if args.image_size is not None:
        h, w = (int(x) for x in args.image_size.lower().split("x"))
        overrides["image_size"] = (h, w)
    if args.scene_id is not None:
        overrides["scene_id"] = args.scene_id

    scene = synth_mod.preset_scene(args.preset, **overrides)
    if args.views is not None:
        scene.rings = _redistribute_views(scene.rings, args.views)

    bundle, _ = synth_mod.generate(scene)
    save_bundle(bundle, args.out)
    palette = {name: list(rgb) for name, rgb in synth_mod.palette_of(scene).items()}
    (Path(args.out) / "palette.json").write_text(json.dumps(palette, indent=1) + "\n")
    print(
        f"wrote {args.out}: {len(bundle.views)} views, {len(bundle.point_cloud)} points, "
        f"gt mass {bundle.gt_mass_kg:.3f} kg"
    )
    return 0


def _redistribute_views(rings, total: int):
    counts = [max(1, round(total * r.count / sum(x.count for x in rings))) for r in rings]
    while sum(counts) > total and max(counts) > 1:
        counts[int(np.argmax(counts))] -= 1
    while sum(counts) < total:
        counts[int(np.argmin(counts))] += 1
    return [
        synth_mod.CameraRing(count=c, radius=r.radius, elevation_deg=r.elevation_deg)
        for c, r in zip(counts, rings)
    ]


def _cmd_run(args) -> int:
    config = _build_config(args)
    provider = _make_provider(args, args.bundle)
    dictionary = load_materials(args.materials) if args.materials else None

    bundle = args.bundle
    if args.no_scale:
        bundle = load_bundle(args.bundle, view_limit=config.view_limit)
        bundle.reference_poses = None

    capture: dict = {}
    report, fld = run_pipeline(bundle, config, provider, dictionary=dictionary, capture=capture)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_json_dict(), indent=1) + "\n")
    if not args.no_field:
        export_field_ply(out / "field.ply", fld)
    if args.save_patch_plan:
        _write_patch_plan(args.save_patch_plan, capture["requests"])
    if args.save_embeddings:
        text = {
            name: capture["text_embeddings"][i]
            for i, name in enumerate(report.material_names)
        }
        save_embeddings(args.save_embeddings, capture["requests"], capture["embeddings"], text)

    est = report.estimate
    print(f"scene {report.scene_id}: mass {est.mass_kg:.3f} kg "
          f"[{est.mass_range[0]:.3f}, {est.mass_range[1]:.3f}]")
    for stage in ("ingest", "fusion", "inference"):
        print(f"  {stage:>9}: {report.timings.stage_total(stage):.3f}s")
    print(f"  report: {out / 'report.json'}")
    return 0


def _write_patch_plan(path, requests) -> None:
    doc = {
        "requests": [
            {
                "point": r.point_index,
                "view": r.view_index,
                "scale": r.scale,
                "x0": r.x0,
                "y0": r.y0,
                "width": r.width,
                "height": r.height,
            }
            for r in requests
        ]
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def _cmd_eval(args) -> int:
    rows = []
    if args.pairs:
        doc = json.loads(Path(args.pairs).read_text())
        for item in doc:
            rows.append((item["scene"], float(item["predicted_kg"]), float(item["truth_kg"])))
    elif args.reports:
        for report_path in sorted(Path(args.reports).glob("**/report.json")):
            doc = json.loads(report_path.read_text())
            if doc.get("gt_mass_kg") is None:
                continue
            rows.append((doc["scene_id"], doc["estimate"]["mass_kg"], doc["gt_mass_kg"]))
    if not rows:
        raise ConfigError("no (predicted, truth) pairs found")

    result = evaluate([(p, t) for _, p, t in rows])
    print(f"{'scene':<24} {'predicted':>12} {'truth':>12}")
    for scene, p, t in rows:
        print(f"{scene:<24} {p:>12.3f} {t:>12.3f}")
    print(
        f"ADE {result.ade:.3f} | ALDE {result.alde:.3f} | "
        f"APE {result.ape:.3f} | MnRE {result.mnre:.3f}"
    )
    if args.out:
        doc = result.to_json_dict()
        doc["rows"] = [{"scene": s, "predicted_kg": p, "truth_kg": t} for s, p, t in rows]
        Path(args.out).write_text(json.dumps(doc, indent=1) + "\n")
    return 0


def _cmd_bench(args) -> int:
    config = _build_config(args)
    result = {}
    if args.bundles:
        result = bench_mod.bench_bundles(
            args.bundles,
            config,
            provider_for=lambda p: _make_provider(args, p),
            repeats=args.repeats,
            naive=args.naive,
        )
        print(f"{'stage':<12} {'median':>10} {'p95':>10}")
        for stage, stats in result["stages"].items():
            print(f"{stage:<12} {stats['median_s']:>9.3f}s {stats['p95_s']:>9.3f}s")
        tot = result["total"]
        print(f"{'total':<12} {tot['median_s']:>9.3f}s {tot['p95_s']:>9.3f}s")
        for row in result.get("naive", []):
            print(
                f"naive vs optimized [{row['scene_id']}]: patches {row['naive_patches']} -> "
                f"{row['optimized_patches']} ({row['patch_ratio']:.1f}x), "
                f"wall {row['naive_wall_s']:.3f}s -> {row['optimized_wall_s']:.3f}s"
            )
    if args.kernels:
        kr = bench_mod.bench_kernels(repeats=args.repeats)
        result["kernel_bench"] = kr
        print(f"{'kernel':<28} " + " ".join(f"{b:>12}" for b in kr["backends"]) + "  speedup")
        for name, row in kr["kernels"].items():
            cols = " ".join(f"{row[b] * 1e3:>10.2f}ms" for b in kr["backends"])
            speed = f"{row.get('speedup', float('nan')):.1f}x" if "speedup" in row else "-"
            print(f"{name:<28} {cols}  {speed}")
    if not args.bundles and not args.kernels:
        raise ConfigError("bench needs bundle paths and/or --kernels")
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=1) + "\n")
    return 0


def _cmd_export_field(args) -> int:
    config = _build_config(args)
    provider = _make_provider(args, args.bundle)
    dictionary = load_materials(args.materials) if args.materials else None
    _, fld = run_pipeline(args.bundle, config, provider, dictionary=dictionary)
    export_field_ply(args.out, fld)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="propfield",
        description="Multi-view physical property fields: per-point materials and object mass.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic capture bundle")
    p.add_argument("--preset", default="table", help="box | sphere | table | boxes")
    p.add_argument("--out", required=True)
    p.add_argument("--views", type=int, help="total camera count across rings")
    p.add_argument("--points", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--world-scale", type=float)
    p.add_argument("--cloud-mode", choices=["backproject", "surface"])
    p.add_argument("--feature-noise", type=float)
    p.add_argument("--depth-noise", type=float)
    p.add_argument("--image-size", help="HxW, e.g. 96x96")
    p.add_argument("--scene-id")
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("run", help="run the pipeline over a bundle directory")
    p.add_argument("bundle")
    p.add_argument("--out", required=True, help="output directory for report.json / field.ply")
    p.add_argument("--materials", help="material dictionary (overrides the bundle's)")
    p.add_argument("--no-field", action="store_true", help="skip the PLY field export")
    p.add_argument("--no-scale", action="store_true", help="skip metric alignment (ablation)")
    p.add_argument("--save-patch-plan", help="write planned patch windows as JSON")
    p.add_argument("--save-embeddings", help="write an embedding store (prefix) for replay")
    _add_provider_args(p)
    _add_config_args(p)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("eval", help="mass-accuracy metrics over predictions")
    p.add_argument("--pairs", help="JSON list of {scene, predicted_kg, truth_kg}")
    p.add_argument("--reports", help="directory tree of report.json files")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("bench", help="latency benchmark (stages, naive path, kernels)")
    p.add_argument("bundles", nargs="*")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--naive", action="store_true", help="also run the dense baseline")
    p.add_argument("--kernels", action="store_true", help="numba vs numpy kernel microbench")
    p.add_argument("--out")
    _add_provider_args(p)
    _add_config_args(p)
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("export-field", help="run the pipeline and export only the field PLY")
    p.add_argument("bundle")
    p.add_argument("--out", required=True)
    p.add_argument("--materials")
    _add_provider_args(p)
    _add_config_args(p)
    p.set_defaults(fn=_cmd_export_field)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (PropfieldError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
