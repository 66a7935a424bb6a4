"""End-to-end pipeline: bundle in, property field + object estimate out.

Three timed stages mirror the architecture: ingest (load, metric scale,
visibility, geometric-feature lifting), semantic fusion (normals,
sampling, view ranking, patch embedding), and physical inference
(grounding, densification, integration). Material dictionary loading is
kept off the critical path: it only depends on the 2D captures, so a
deployment runs it concurrently with ingest.
"""

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fusion as fusion_mod
from . import geometry, grounding, sampling, view_select
from .bundle import CaptureBundle, load_bundle
from .densify import PropertyField, densify_field
from .errors import ConfigError, StageError
from .integrate import IntegrationConfig, ObjectEstimate, integrate_mass

NORMALS_K = 16


@dataclass
class RunConfig:
    """Pipeline knobs; defaults are the reference operating point."""

    n_target: int = 150
    k_views: int = 3
    scales: tuple = (20, 40, 60)
    temperature: float = 0.1
    lam: float = 0.6
    knn_k: int = 5
    epsilon: float | None = None  # None -> 1% of the metric bbox diagonal
    max_batch: int = 1024
    view_limit: int | None = None

    def __post_init__(self):
        positives = {
            "n_target": self.n_target,
            "k_views": self.k_views,
            "temperature": self.temperature,
            "lam": self.lam,
            "knn_k": self.knn_k,
            "max_batch": self.max_batch,
        }
        for name, value in positives.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if not self.scales or any(s < 1 for s in self.scales):
            raise ConfigError(f"scales must be positive pixel sizes, got {self.scales}")
        if self.epsilon is not None and self.epsilon < 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.view_limit is not None and self.view_limit < 1:
            raise ConfigError(f"view_limit must be >= 1, got {self.view_limit}")

    def to_json_dict(self) -> dict:
        return {
            "n_target": self.n_target,
            "k_views": self.k_views,
            "scales": list(self.scales),
            "temperature": self.temperature,
            "lambda": self.lam,
            "knn_k": self.knn_k,
            "epsilon": self.epsilon,
            "max_batch": self.max_batch,
            "view_limit": self.view_limit,
        }


STAGES = ("ingest", "fusion", "inference")


@dataclass
class StageTimings:
    ingest: dict[str, float] = field(default_factory=dict)
    fusion: dict[str, float] = field(default_factory=dict)
    inference: dict[str, float] = field(default_factory=dict)
    wall_s: float = 0.0

    def stage_total(self, stage: str) -> float:
        return sum(getattr(self, stage).values())

    @property
    def total(self) -> float:
        return sum(self.stage_total(s) for s in STAGES)

    def to_json_dict(self) -> dict:
        doc = {s: dict(getattr(self, s)) for s in STAGES}
        doc["stage_totals"] = {s: self.stage_total(s) for s in STAGES}
        doc["total_s"] = self.total
        doc["wall_s"] = self.wall_s
        return doc


@dataclass
class PropertyReport:
    scene_id: str
    estimate: ObjectEstimate
    timings: StageTimings
    config: RunConfig
    point_count: int
    source_count: int
    request_count: int
    naive_patch_count: int
    alignment_scale: float | None
    material_names: list[str]
    dominant_counts: dict[str, int]
    zero_visible_sources: int
    featureless_points: int
    gt_mass_kg: float | None

    def to_json_dict(self, include_timings: bool = True) -> dict:
        doc = {
            "scene_id": self.scene_id,
            "estimate": self.estimate.to_json_dict(),
            "config": self.config.to_json_dict(),
            "point_count": self.point_count,
            "source_count": self.source_count,
            "request_count": self.request_count,
            "naive_patch_count": self.naive_patch_count,
            "alignment_scale": self.alignment_scale,
            "material_names": self.material_names,
            "dominant_counts": self.dominant_counts,
            "zero_visible_sources": self.zero_visible_sources,
            "featureless_points": self.featureless_points,
            "gt_mass_kg": self.gt_mass_kg,
        }
        if include_timings:
            doc["timings"] = self.timings.to_json_dict()
        return doc


class _StageClock:
    def __init__(self):
        self.timings = StageTimings()

    def run(self, stage: str, step: str, fn):
        start = time.perf_counter()
        try:
            result = fn()
        except (StageError, ConfigError):
            raise
        except Exception as exc:
            raise StageError(stage, f"{step}: {exc}") from exc
        getattr(self.timings, stage)[step] = time.perf_counter() - start
        return result


def run_pipeline(
    bundle: CaptureBundle | str | Path,
    config: RunConfig,
    provider,
    dictionary: grounding.MaterialDictionary | None = None,
    capture: dict | None = None,
) -> tuple[PropertyReport, PropertyField]:
    """Run the full pipeline over a bundle (object or directory path).

    Outputs are deterministic for fixed inputs, config, and provider;
    timings are the only varying report content.

    Args:
        bundle: Loaded bundle or a bundle directory path.
        config: Pipeline knobs.
        provider: Patch-embedding provider.
        dictionary: Material dictionary; defaults to the bundle's own.
        capture: Optional dict that receives intermediates (visibility,
            source set, requests, embeddings) for tooling and tests.

    Raises:
        ConfigError: Missing provider or material dictionary, detected
            before any compute.
        StageError: A stage failed; the stage name rides on the exception.
    """
    wall_start = time.perf_counter()
    if provider is None:
        raise ConfigError("no patch-embedding provider configured")
    if isinstance(bundle, (str, Path)) and dictionary is None:
        # Cheap pre-read of the manifest so a missing dictionary fails fast.
        manifest_path = Path(bundle) / "manifest"
        try:
            has_materials = "materials" in json.loads(manifest_path.read_text())
        except (OSError, json.JSONDecodeError):
            has_materials = False
        if not has_materials:
            raise ConfigError("no material dictionary: bundle has none and none was passed")

    clock = _StageClock()

    # Stage 1: ingest.
    if isinstance(bundle, (str, Path)):
        bundle = clock.run(
            "ingest", "load", lambda: load_bundle(bundle, view_limit=config.view_limit)
        )
    elif config.view_limit is not None and config.view_limit < len(bundle.views):
        views = bundle.views[: config.view_limit]
        refs = bundle.reference_poses[: config.view_limit] if bundle.reference_poses else None
        bundle = CaptureBundle(
            views=views,
            point_cloud=bundle.point_cloud,
            reference_poses=refs,
            material_dictionary=bundle.material_dictionary,
            scene_id=bundle.scene_id,
            gt_mass_kg=bundle.gt_mass_kg,
        )

    dictionary = dictionary or bundle.material_dictionary
    if dictionary is None:
        raise ConfigError("no material dictionary: bundle has none and none was passed")

    alignment_scale = None
    if bundle.reference_poses is not None:
        def _align(b=bundle):
            transform = geometry.sim3_align([v.camera for v in b.views], b.reference_poses)
            return geometry.apply_scale(b, transform), transform.scale

        bundle, alignment_scale = clock.run("ingest", "scale", _align)

    positions = bundle.point_cloud.positions.astype(np.float64)
    epsilon = config.epsilon if config.epsilon is not None else geometry.default_epsilon(positions)
    visibility = clock.run(
        "ingest", "visibility", lambda: geometry.visibility_mask(positions, bundle.views, epsilon)
    )
    semantic = clock.run(
        "ingest",
        "dino_aggregation",
        lambda: fusion_mod.aggregate_geometric_features(positions, bundle.views, visibility),
    )

    # Stage 2: semantic fusion.
    normals, _ = clock.run(
        "fusion",
        "normals",
        lambda: geometry.estimate_normals(
            positions, min(NORMALS_K, len(positions)), bundle.camera_centers()
        ),
    )
    source = clock.run(
        "fusion",
        "adaptive_sampling",
        lambda: sampling.downsample(positions, sampling.SamplingConfig(n_target=config.n_target)),
    )
    source.normals = normals[source.indices]
    source.features = semantic.features[source.indices]
    rankings = clock.run(
        "fusion",
        "view_ranking",
        lambda: view_select.rank_views(
            source, bundle.views, visibility[source.indices], config.k_views
        ),
    )
    requests = clock.run(
        "fusion",
        "patch_planning",
        lambda: fusion_mod.plan_patches(source, rankings, list(config.scales), bundle.views),
    )
    embeddings = clock.run(
        "fusion",
        "patch_embedding",
        lambda: fusion_mod.encode_global_batch(
            requests, bundle.views, provider, max_batch=config.max_batch
        ),
    )
    fused = clock.run(
        "fusion", "fusion", lambda: fusion_mod.fuse(len(source), embeddings, requests)
    )
    source.fused = fused.vectors
    source.fused_mask = fused.mask

    # Stage 3: physical inference.
    def _ground():
        text = dictionary.text_embeddings(provider)
        sims = grounding.material_similarity(fused.vectors[fused.mask], text)
        probs = grounding.softmax_weights(sims, config.temperature)
        full = np.zeros((len(source), len(dictionary)))
        full[fused.mask] = probs
        return full

    probs = clock.run("inference", "grounding", _ground)
    source.probabilities = probs

    anchors = np.flatnonzero(fused.mask)
    if anchors.size == 0:
        raise StageError("inference", "no source point received a fused embedding")
    anchor_set = sampling.SourcePointSet(
        indices=source.indices[anchors],
        positions=source.positions[anchors],
        voxel_size=source.voxel_size,
        features=source.features[anchors],
        probabilities=probs[anchors],
    )

    fld = clock.run(
        "inference",
        "densification",
        lambda: densify_field(
            semantic, anchor_set, dictionary, config.knn_k, normals=normals
        ),
    )
    estimate = clock.run(
        "inference",
        "integration",
        lambda: integrate_mass(
            fld,
            dictionary,
            IntegrationConfig(lam=config.lam, scale_factor=1.0, temperature=config.temperature),
        ),
    )

    dominant_counts = {
        name: int((fld.dominant == i).sum()) for i, name in enumerate(dictionary.names)
    }
    if capture is not None:
        capture.update(
            bundle=bundle,
            visibility=visibility,
            semantic=semantic,
            source=source,
            rankings=rankings,
            requests=requests,
            embeddings=embeddings,
            fused=fused,
            text_embeddings=dictionary.text_embeddings(provider),
        )
    clock.timings.wall_s = time.perf_counter() - wall_start
    report = PropertyReport(
        scene_id=bundle.scene_id,
        estimate=estimate,
        timings=clock.timings,
        config=config,
        point_count=len(bundle.point_cloud),
        source_count=len(source),
        request_count=len(requests),
        naive_patch_count=int(visibility.sum()),
        alignment_scale=alignment_scale,
        material_names=dictionary.names,
        dominant_counts=dominant_counts,
        zero_visible_sources=int(source.flags.get("zero_visible", np.zeros(0, bool)).sum()),
        featureless_points=int(fld.flags["featureless"].sum()),
        gt_mass_kg=bundle.gt_mass_kg,
    )
    return report, fld
