import numpy as np
import pytest

from propfield import kernels, synth
from propfield.bundle import CameraPose, CaptureBundle, Intrinsics, PointCloud, ViewRecord
from propfield.synth import CameraRing, Part, SyntheticScene

DATA_DIR = __file__.rsplit("/", 1)[0] + "/data"


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    kernels.warmup()


@pytest.fixture(scope="session")
def box_scene():
    return synth.preset_scene("box", n_points=4000, cloud_mode="surface", seed=11)


@pytest.fixture(scope="session")
def box_bundle(box_scene):
    return synth.generate(box_scene)


@pytest.fixture(scope="session")
def table_scene():
    scene = synth.preset_scene("table", n_points=3505, seed=5)
    scene.rings = [
        CameraRing(count=15, elevation_deg=30.0),
        CameraRing(count=15, elevation_deg=-25.0),
    ]
    return scene


@pytest.fixture(scope="session")
def table_bundle(table_scene):
    return synth.generate(table_scene)


def occlusion_scene(seed: int) -> SyntheticScene:
    """Two primitives with mutual occlusion from a camera ring."""
    rng = np.random.default_rng(seed)
    offset = rng.uniform(0.9, 1.3)
    return SyntheticScene(
        parts=[
            Part(
                kind="box",
                size=(0.8, 0.8, 0.8),
                material="a",
                density=500.0,
                thickness_m=0.01,
            ),
            Part(
                kind="sphere",
                size=(0.45,),
                material="b",
                density=900.0,
                thickness_m=0.005,
                translation=np.array([offset, 0.15, 0.1]),
            ),
        ],
        rings=[CameraRing(count=6, elevation_deg=20.0)],
        n_points=1500,
        image_size=(80, 80),
        seed=seed,
    )


def simple_view(
    w=64,
    h=64,
    fx=100.0,
    fy=100.0,
    cx=None,
    cy=None,
    depth_value=2.0,
    feature_size=(8, 8),
    feature_dim=4,
) -> ViewRecord:
    """Identity-pose view with a constant depth plane."""
    return ViewRecord(
        image=np.zeros((h, w, 3), dtype=np.uint8),
        depth=np.full((h, w), depth_value, dtype=np.float32),
        camera=CameraPose(rotation=np.eye(3), translation=np.zeros(3)),
        intrinsics=Intrinsics(fx=fx, fy=fy, cx=cx if cx is not None else w / 2, cy=cy if cy is not None else h / 2),
        feature_map=np.zeros((*feature_size, feature_dim), dtype=np.float32),
    )


def random_bundle(seed: int, n_views=3, n_points=50, with_optionals=True) -> CaptureBundle:
    """Small randomized but valid bundle for round-trip tests."""
    rng = np.random.default_rng(seed)
    views = []
    h, w = int(rng.integers(8, 24)), int(rng.integers(8, 24))
    hf, wf = int(rng.integers(4, 12)), int(rng.integers(4, 12))
    dim = int(rng.integers(2, 9))
    for _ in range(n_views):
        angle = rng.uniform(0, 2 * np.pi)
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        k = np.array(
            [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
        )
        rot = np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)
        views.append(
            ViewRecord(
                image=rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8),
                depth=rng.uniform(0, 5, size=(h, w)).astype(np.float32),
                camera=CameraPose(rotation=rot, translation=rng.standard_normal(3)),
                intrinsics=Intrinsics(
                    fx=float(rng.uniform(10, 200)),
                    fy=float(rng.uniform(10, 200)),
                    cx=float(rng.uniform(1, w)),
                    cy=float(rng.uniform(1, h)),
                ),
                feature_map=rng.standard_normal((hf, wf, dim)).astype(np.float32),
            )
        )
    cloud = PointCloud(
        positions=rng.standard_normal((n_points, 3)).astype(np.float32),
        colors=rng.integers(0, 256, size=(n_points, 3), dtype=np.uint8) if rng.random() < 0.5 else None,
    )
    materials = None
    ref_poses = None
    gt_mass = None
    if with_optionals and rng.random() < 0.7:
        from propfield.grounding import MaterialDictionary, MaterialEntry

        materials = MaterialDictionary(
            entries=[
                MaterialEntry(
                    name="wood", properties={"density": (500.0, 700.0)}, thickness_m=0.02
                ),
                MaterialEntry(name="steel", properties={"density": (7800.0, 7800.0)}, thickness_m=0.001),
            ],
            source="file",
        )
    if with_optionals and rng.random() < 0.7:
        ref_poses = [v.camera for v in views]
    if with_optionals and rng.random() < 0.5:
        gt_mass = float(rng.uniform(0.1, 50))
    return CaptureBundle(
        views=views,
        point_cloud=cloud,
        reference_poses=ref_poses,
        material_dictionary=materials,
        scene_id=f"random-{seed}",
        gt_mass_kg=gt_mass,
    )


def random_rotation(rng) -> np.ndarray:
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w_, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w_ * z), 2 * (x * z + w_ * y)],
            [2 * (x * y + w_ * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w_ * x)],
            [2 * (x * z - w_ * y), 2 * (y * z + w_ * x), 1 - 2 * (x * x + y * y)],
        ]
    )
