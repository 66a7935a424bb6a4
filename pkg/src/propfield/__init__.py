"""propfield: per-point material fields and object mass from posed multi-view captures.

The pipeline lifts per-view geometric features onto a reconstruction
point cloud, grounds a sparse set of anchor points against a material
dictionary through patch embeddings, densifies the material probabilities
in feature space, and integrates thickness-aware surface voxels into an
object-level mass estimate — with per-stage latency accounting throughout.
"""

from .bundle import (
    CameraPose,
    CaptureBundle,
    Intrinsics,
    PointCloud,
    ViewRecord,
    load_bundle,
    save_bundle,
)
from .densify import PropertyField, densify_field, dino_knn_interpolate, export_field_ply
from .errors import (
    BundleLoadError,
    BundleStructureError,
    BundleValidationError,
    ConfigError,
    DegenerateGeometryError,
    MaterialError,
    PropfieldError,
    StageError,
)
from .fusion import (
    FusedFeatures,
    PatchRequest,
    SemanticPointCloud,
    aggregate_geometric_features,
    encode_global_batch,
    fuse,
    plan_patches,
)
from .geometry import (
    BehindCamera,
    Sim3Transform,
    apply_scale,
    estimate_normals,
    project_point,
    project_points,
    sim3_align,
    unproject,
    visibility_mask,
)
from .grounding import (
    MaterialDictionary,
    MaterialEntry,
    kernel_regress,
    load_materials,
    material_similarity,
    parse_materials,
    save_materials,
    softmax_weights,
)
from .integrate import IntegrationConfig, ObjectEstimate, adaptive_voxel_side, integrate_mass
from .metrics import MassEval, evaluate
from .pipeline import PropertyReport, RunConfig, StageTimings, run_pipeline
from .providers import AnalyticPartProvider, FileBackedProvider, MeanColorProvider
from .sampling import SamplingConfig, SourcePointSet, adaptive_voxel_size, downsample
from .view_select import ViewScore, angle_score, distance_score, rank_views

__version__ = "0.1.0"
